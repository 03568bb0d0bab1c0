#include <doctest.h>

#include <cmath>

#include "nfl/sector.hpp"
#include "support.hpp"

using namespace nfl;

namespace {

StateBox<double> unit_box(Index n) {
  return StateBox<double>::symmetric(Vecd::Constant(n, 1.0));
}

}  // namespace

TEST_CASE("pre-activation bounds: zero first layer collapses to [0, 0]") {
  NnController<double> nn;
  nn.weights.push_back(Matd::Zero(3, 2));
  nn.weights.push_back(Matd::Ones(1, 3));
  const auto [lo, hi] = preactivation_bounds(nn, unit_box(2));
  CHECK(lo.cwiseAbs().maxCoeff() == 0.0);
  CHECK(hi.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pre-activation bounds: hand interval arithmetic") {
  NnController<double> nn;
  Matd w1(1, 2);
  w1 << 1.0, 1.0;
  nn.weights.push_back(w1);
  nn.weights.push_back(Matd::Ones(1, 1));
  const auto [lo, hi] = preactivation_bounds(nn, unit_box(2));
  CHECK(lo[0] == doctest::Approx(-2.0));
  CHECK(hi[0] == doctest::Approx(2.0));
}

TEST_CASE("pre-activation bounds are sound under Monte Carlo sampling") {
  std::mt19937_64 rng(17);
  const auto nn = test::random_network(rng, {3, 6, 5, 2}, 1.5);
  const auto box = StateBox<double>::symmetric((Vecd(3) << 1.0, 2.0, 0.5).finished());
  const auto [lo, hi] = preactivation_bounds(nn, box);
  CHECK((lo.array() <= 0.0).all());
  CHECK((hi.array() >= 0.0).all());
  for (int s = 0; s < 10000; ++s) {
    const Vecd x = box.sample(rng);
    const auto fp = forward(nn, x);
    CHECK((fp.nu.array() >= lo.array() - 1e-12).all());
    CHECK((fp.nu.array() <= hi.array() + 1e-12).all());
  }
}

TEST_CASE("tanh sector: symmetric, degenerate, and asymmetric intervals") {
  {
    const auto [a, b] = tanh_sector(-1.0, 1.0);
    CHECK(a == doctest::Approx(std::tanh(1.0)).epsilon(1e-12));  // 0.76159...
    CHECK(b == 1.0);
  }
  {
    const auto [a, b] = tanh_sector(0.0, 0.0);
    CHECK(a == 1.0);
    CHECK(b == 1.0);
  }
  {
    const auto [a, b] = tanh_sector(-2.0, 1.0);
    CHECK(a == doctest::Approx(std::tanh(2.0) / 2.0).epsilon(1e-12));
    CHECK(b == 1.0);
  }
  CHECK_THROWS_AS(tanh_sector(0.5, 1.0), InvalidInterval);
}

TEST_CASE("tanh sector inequality holds on a dense grid") {
  for (const auto& [lo, hi] : std::vector<std::pair<double, double>>{
           {-1.0, 1.0}, {-2.0, 1.0}, {-0.3, 2.5}, {-4.0, 0.1}}) {
    const auto [alpha, beta] = tanh_sector(lo, hi);
    for (int i = 0; i <= 2000; ++i) {
      const double nu = lo + (hi - lo) * i / 2000.0;
      const double phi = std::tanh(nu);
      CHECK((phi - alpha * nu) * (beta * nu - phi) >= -1e-12);
    }
  }
}

TEST_CASE("stacked sector QC: zero multiplier, hand value, Monte Carlo nonnegativity") {
  SectorBounds<double> sb;
  sb.nu_lo = Vecd::Constant(1, -1.0);
  sb.nu_hi = Vecd::Constant(1, 1.0);
  sb.alpha = Vecd::Constant(1, 1.0);
  sb.beta = Vecd::Constant(1, 1.0);
  CHECK(stacked_sector_qc(sb, Vecd::Zero(1)).cwiseAbs().maxCoeff() == 0.0);

  const Matd m = stacked_sector_qc(sb, Vecd::Ones(1));
  Matd expect(2, 2);
  expect << -2.0, 2.0, 2.0, -2.0;
  CHECK(m.isApprox(expect));
  CHECK_THROWS_AS(stacked_sector_qc(sb, Vecd::Constant(1, -0.1)), InvalidMultiplier);

  // Random multipliers and sampled (nu, tanh(nu)) pairs stay nonnegative.
  std::mt19937_64 rng(23);
  NnController<double> nn = test::random_network(rng, {2, 4, 3, 1}, 1.2);
  const auto sbr = sector_bounds(nn, unit_box(2));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    Vecd lambda(sbr.nphi());
    for (Index j = 0; j < lambda.size(); ++j) lambda[j] = unif(rng);
    const Matd qc = stacked_sector_qc(sbr, lambda);
    for (int s = 0; s < 250; ++s) {
      Vecd nu(sbr.nphi());
      for (Index j = 0; j < nu.size(); ++j)
        nu[j] = sbr.nu_lo[j] + (sbr.nu_hi[j] - sbr.nu_lo[j]) * unif(rng);
      Vecd z(2 * sbr.nphi());
      z << nu, nu.array().tanh().matrix();
      CHECK(z.dot(qc * z) >= -1e-10);
    }
  }
}

TEST_CASE("loop transform: the already-normalized sector is a fixed point") {
  std::mt19937_64 rng(31);
  const auto nn = test::random_network(rng, {3, 4, 4, 2});
  const auto N = interconnection(nn);
  SectorBounds<double> sb;
  sb.nu_lo = Vecd::Constant(8, -1.0);
  sb.nu_hi = Vecd::Constant(8, 1.0);
  sb.alpha = Vecd::Constant(8, -1.0);
  sb.beta = Vecd::Constant(8, 1.0);
  const auto nt = loop_transform(N, sb);
  CHECK(nt.pi_x.isApprox(N.pi_x, 0));
  CHECK(nt.pi_z.isApprox(N.pi_w, 0));
  CHECK(nt.nu_x.isApprox(N.nu_x, 0));
  CHECK(nt.nu_z.isApprox(N.nu_w, 0));
}

TEST_CASE("loop transform: scalar one-layer hand computation") {
  // w1 = 1, w2 = 2, sector [0.5, 1]: C1 = 0.5, C2 = 1.5, C3 = C4 = 0,
  // so Nt = [[1.5, 0.5], [1, 0]].
  NnController<double> nn;
  nn.weights.push_back(Matd::Constant(1, 1, 1.0));
  nn.weights.push_back(Matd::Constant(1, 1, 2.0));
  SectorBounds<double> sb;
  sb.nu_lo = Vecd::Constant(1, -1.0);
  sb.nu_hi = Vecd::Constant(1, 1.0);
  sb.alpha = Vecd::Constant(1, 0.5);
  sb.beta = Vecd::Constant(1, 1.0);
  const auto nt = loop_transform(interconnection(nn), sb);
  CHECK(nt.pi_x(0, 0) == doctest::Approx(1.5));
  CHECK(nt.pi_z(0, 0) == doctest::Approx(0.5));
  CHECK(nt.nu_x(0, 0) == doctest::Approx(1.0));
  CHECK(nt.nu_z(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("loop transform preserves the loop behavior") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 5; ++trial) {
    const auto nn = test::random_network(rng, {3, 5, 4, 2}, 1.0);
    const auto box = unit_box(3);
    const auto sb = sector_bounds(nn, box);
    const auto nt = loop_transform(interconnection(nn), sb);
    for (int s = 0; s < 1000; ++s) {
      const Vecd x = box.sample(rng);
      const auto orig = forward(nn, x);
      const auto trans = transformed_forward(nt, sb, x);
      CHECK((orig.u - trans.u).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((orig.nu - trans.nu).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((orig.omega - trans.omega).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("normalized activation lies in the [-1, 1] sector on the bounded interval") {
  // Sector [-1, 1] means |z_j| <= |nu_j| on the interval, i.e. the quadratic
  // form nu'Lam nu - z'Lam z stays nonnegative.
  std::mt19937_64 rng(41);
  const auto nn = test::random_network(rng, {2, 5, 3, 1}, 1.4);
  const auto sb = sector_bounds(nn, unit_box(2));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int s = 0; s < 5000; ++s) {
    Vecd nu(sb.nphi());
    for (Index j = 0; j < nu.size(); ++j)
      nu[j] = sb.nu_lo[j] + (sb.nu_hi[j] - sb.nu_lo[j]) * unif(rng);
    const Vecd z = normalized_activation(sb, nu);
    CHECK((z.cwiseAbs().array() <= nu.cwiseAbs().array() + 1e-10).all());
  }
}

TEST_CASE("transform guard rejects a malformed interconnection") {
  Interconnection<double> N;
  N.pi_x = Matd::Zero(1, 1);
  N.pi_w = Matd::Ones(1, 1);
  N.nu_x = Matd::Ones(1, 1);
  N.nu_w = Matd::Ones(1, 1) * 2.0;  // cannot come from a feed-forward net
  SectorBounds<double> sb;
  sb.nu_lo = Vecd::Constant(1, -1.0);
  sb.nu_hi = Vecd::Constant(1, 1.0);
  sb.alpha = Vecd::Constant(1, 0.0);
  sb.beta = Vecd::Constant(1, 1.0);
  // C4 = 1 makes I - C4 singular.
  CHECK_THROWS_AS(loop_transform(N, sb), SingularTransform);
}
