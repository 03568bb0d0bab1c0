#include <doctest.h>

#include "nfl/objective.hpp"
#include "nfl/synthesis.hpp"
#include "support.hpp"

using namespace nfl;

namespace {

StateBox<double> unit_box(Index n) {
  return StateBox<double>::symmetric(Vecd::Constant(n, 1.0));
}

// Assembles a random penalty context (Q, UbarL, Y) around a network.
TrainingObjective random_objective(std::mt19937_64& rng, const NnController<double>& nn,
                                   const StateBox<double>& box, double eta1, double rho,
                                   bool with_y) {
  TrainingObjective obj;
  obj.eta1 = eta1;
  obj.rho = rho;
  obj.sector = sector_bounds(nn, box);
  const Index nx = nn.input_dim();
  const Index nu = nn.output_dim();
  const Index nphi = nn.phi_dim();
  Matd q1 = test::random_matrix(rng, nx, nx);
  q1 = q1 * q1.transpose() + Matd::Identity(nx, nx);
  Vecd q2 = Vecd::Ones(nphi) + 0.4 * Vecd::Random(nphi);
  obj.Qblk = make_q_block(q1, q2);
  obj.UbarL = test::random_matrix(rng, nu + nphi, nx + nphi);
  if (with_y) obj.Y = test::random_matrix(rng, nu + nphi, nx + nphi);
  if (eta1 != 0.0) {
    obj.demos.X = test::random_matrix(rng, nx, 40);
    obj.demos.U = test::random_matrix(rng, nu, 40);
  }
  return obj;
}

}  // namespace

TEST_CASE("constant objective has zero gradient") {
  std::mt19937_64 rng(1);
  const auto nn = test::random_network(rng, {2, 3, 1});
  TrainingObjective obj;  // all terms switched off
  CHECK(obj.value(nn) == 0.0);
  for (const auto& g : obj.gradient(nn)) CHECK(g.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("imitation loss gradient matches central finite differences") {
  std::mt19937_64 rng(2);
  const auto plant = test::random_plant(rng, 2, 1, 0.8);
  const auto box = unit_box(2);
  const auto nn = test::random_network(rng, {2, 4, 1}, 0.8);
  const Matd k = dlqr_gain(plant.A, plant.B, Matd::Identity(2, 2), Matd::Identity(1, 1));
  TrainingObjective obj;
  obj.eta1 = 1.0;
  obj.demos = generate_expert_demos(plant, box, GainExpert{-k}, 60, 7);
  const auto analytic = obj.gradient(nn);
  const auto fd =
      test::fd_gradient(nn, [&](const NnController<double>& w) { return obj.value(w); }, 1e-6);
  CHECK(test::rel_gradient_error(analytic, fd) < 1e-5);
}

TEST_CASE("penalty gradient matches central finite differences") {
  std::mt19937_64 rng(3);
  const auto box = unit_box(2);
  const auto nn = test::random_network(rng, {2, 3, 2, 1}, 0.6);
  const auto obj = random_objective(rng, nn, box, 0.0, 7.5, false);
  const auto analytic = obj.gradient(nn);
  const auto fd =
      test::fd_gradient(nn, [&](const NnController<double>& w) { return obj.value(w); }, 1e-6);
  CHECK(test::rel_gradient_error(analytic, fd) < 1e-5);
}

TEST_CASE("multiplier trace-term gradient matches central finite differences") {
  std::mt19937_64 rng(4);
  const auto box = unit_box(3);
  const auto nn = test::random_network(rng, {3, 4, 2}, 0.6);
  auto obj = random_objective(rng, nn, box, 0.0, 0.0, true);
  const auto analytic = obj.gradient(nn);
  const auto fd =
      test::fd_gradient(nn, [&](const NnController<double>& w) { return obj.value(w); }, 1e-6);
  CHECK(test::rel_gradient_error(analytic, fd) < 1e-5);
}

TEST_CASE("full augmented objective gradient on random small networks") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 6; ++trial) {
    const std::vector<Index> arch =
        trial % 2 == 0 ? std::vector<Index>{2, 3, 1} : std::vector<Index>{3, 4, 3, 2};
    const auto nn = test::random_network(rng, arch, 0.7);
    const auto box = unit_box(arch.front());
    const auto obj = random_objective(rng, nn, box, 2.0, 11.0, true);
    const auto analytic = obj.gradient(nn);
    const auto fd =
        test::fd_gradient(nn, [&](const NnController<double>& w) { return obj.value(w); }, 1e-6);
    CHECK(test::rel_gradient_error(analytic, fd) < 1e-4);
  }
}

TEST_CASE("Adam drives a small imitation problem toward the expert") {
  std::mt19937_64 rng(6);
  const auto plant = test::random_plant(rng, 2, 1, 0.7);
  const auto box = unit_box(2);
  auto nn = init_controller<double>({2, 8, 1}, 3);
  const Matd k = dlqr_gain(plant.A, plant.B, Matd::Identity(2, 2), Matd::Identity(1, 1));
  TrainingObjective obj;
  obj.eta1 = 1.0;
  obj.demos = generate_expert_demos(plant, box, GainExpert{-k}, 200, 11);
  const double before = obj.value(nn);
  AdamOptions adam;
  adam.epochs = 400;
  const double after = adam_minimize(nn, obj, adam);
  CHECK(after < 0.2 * before);
}

TEST_CASE("augmented Lagrangian value: spec edge cases and a hand-computed instance") {
  std::mt19937_64 rng(7);
  const auto plant = test::random_plant(rng, 1, 1, 0.5);
  const auto box = unit_box(1);
  const auto data = collect(plant, box, 8, UniformExcitation{}, 3);
  const auto nn = test::random_network(rng, {1, 1, 1}, 0.5);
  const auto sector = sector_bounds(nn, box);
  const auto nt = loop_transform(interconnection(nn), sector);
  const DataOperators ops = DataOperators::from(data);
  Demos demos;
  demos.X = test::random_matrix(rng, 1, 30);
  demos.U = test::random_matrix(rng, 1, 30);

  // Exact equality, Y = 0, eta2 = 0: value reduces to eta1 * loss.
  const Matd q1 = Matd::Identity(1, 1);
  const Vecd q2 = Vecd::Ones(1);
  Matd top(2, 1);
  top << nt.pi_x * q1, q1;
  const Matd l1 = ops.pinv * top;
  Matd top2 = Matd::Zero(2, 1);
  top2.topRows(1) = nt.pi_z * q2.asDiagonal();
  const Matd l2 = ops.pinv * top2;
  const Matd l3 = nt.nu_x * q1;
  const Matd l4 = nt.nu_z * q2.asDiagonal();
  const Matd y0 = Matd::Zero(2, 2);
  const double val = augmented_lagrangian_value(nn, sector, demos, data, q1, q2, l1, l2, l3, l4,
                                                y0, 3.0, 0.0, 50.0);
  CHECK(val == doctest::Approx(3.0 * imitation_loss(nn, demos)).epsilon(1e-10));

  // Q1 = I contributes nothing through the log det term even when eta2 != 0.
  const double val2 = augmented_lagrangian_value(nn, sector, demos, data, q1, q2, l1, l2, l3, l4,
                                                 y0, 3.0, 25.0, 50.0);
  CHECK(val2 == doctest::Approx(val).epsilon(1e-10));

  // Hand-expanded scalar instance with every term active.
  const Matd q1b = Matd::Constant(1, 1, 2.0);
  const Vecd q2b = Vecd::Constant(1, 0.5);
  const Matd l1b = Matd::Constant(8, 1, 0.1);
  const Matd l2b = Matd::Constant(8, 1, -0.05);
  const Matd l3b = Matd::Constant(1, 1, 0.3);
  const Matd l4b = Matd::Constant(1, 1, -0.2);
  Matd yb(2, 2);
  yb << 0.4, -1.0, 0.7, 0.2;
  const double eta1 = 2.0, eta2 = 5.0, rho = 9.0;

  Matd r(2, 2);
  r(0, 0) = nt.pi_x(0, 0) * 2.0 - (data.U0 * l1b)(0, 0);
  r(0, 1) = nt.pi_z(0, 0) * 0.5 - (data.U0 * l2b)(0, 0);
  r(1, 0) = nt.nu_x(0, 0) * 2.0 - l3b(0, 0);
  r(1, 1) = nt.nu_z(0, 0) * 0.5 - l4b(0, 0);
  double expect = eta1 * imitation_loss(nn, demos) - eta2 * std::log(2.0);
  expect += yb(0, 0) * r(0, 0) + yb(0, 1) * r(0, 1) + yb(1, 0) * r(1, 0) + yb(1, 1) * r(1, 1);
  expect += 0.5 * rho *
            (r(0, 0) * r(0, 0) + r(0, 1) * r(0, 1) + r(1, 0) * r(1, 0) + r(1, 1) * r(1, 1));
  const double got = augmented_lagrangian_value(nn, sector, demos, data, q1b, q2b, l1b, l2b, l3b,
                                                l4b, yb, eta1, eta2, rho);
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));

  // Non-positive-definite Q1 is a domain error.
  CHECK_THROWS_AS(augmented_lagrangian_value(nn, sector, demos, data, -q1b, q2b, l1b, l2b, l3b,
                                             l4b, yb, eta1, eta2, rho),
                  DomainError);
}
