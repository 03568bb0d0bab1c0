#include <doctest.h>

#include "nfl/certify.hpp"
#include "support.hpp"

using namespace nfl;

namespace {

StateBox<double> unit_box(Index n) {
  return StateBox<double>::symmetric(Vecd::Constant(n, 1.0));
}

PlantModel<double> scalar_plant(double a, double b) {
  PlantModel<double> plant;
  plant.A = Matd::Constant(1, 1, a);
  plant.B = Matd::Constant(1, 1, b);
  return plant;
}

}  // namespace

TEST_CASE("scalar contraction loop: data-driven and model-based both certify") {
  const auto plant = scalar_plant(0.5, 1.0);
  const auto box = unit_box(1);
  const auto data = collect(plant, box, 10, UniformExcitation{}, 4);
  REQUIRE(data.pe_ok);
  std::mt19937_64 rng(2);
  const auto nn = test::random_network(rng, {1, 2, 1}, 0.02);

  const auto dd = verify_fixed_controller(nn, data, box);
  REQUIRE(dd.status == CertifyStatus::Certified);
  const auto& cert = *dd.certificate;
  CHECK(cert.eq_residual < 1e-7);
  CHECK(cert.margin >= cert.margin_target - 1e-8);
  CHECK((data.X0 * cert.L1 - cert.Q1).cwiseAbs().maxCoeff() < 1e-7);
  CHECK((data.X0 * cert.L2).cwiseAbs().maxCoeff() < 1e-7);

  const auto mb = verify_model_based(plant, nn, box);
  CHECK(mb.status == CertifyStatus::Certified);

  // Monte Carlo soundness against the hidden plant.
  const auto rep = test::check_certificate_soundness(cert, data, plant, nn, box, 200, 99);
  CHECK(rep.ok());

  // Data-representation identities against the hidden plant.
  const Matd acl = plant.A + plant.B * cert.nt.pi_x;
  CHECK((data.X1 * cert.L1 * cert.Q1.inverse() - acl).norm() < 1e-6);
  const Matd bcl = plant.B * cert.nt.pi_z;
  CHECK((data.X1 * cert.L2 * Matd(cert.q2.cwiseInverse().asDiagonal()) - bcl).norm() < 1e-6);
}

TEST_CASE("uncontrollable unstable scalar plant is infeasible") {
  const auto plant = scalar_plant(2.0, 0.0);
  const auto box = unit_box(1);
  const auto data = collect(plant, box, 10, UniformExcitation{}, 4);
  REQUIRE(data.pe_ok);
  std::mt19937_64 rng(2);
  const auto nn = test::random_network(rng, {1, 2, 1}, 0.02);
  const auto dd = verify_fixed_controller(nn, data, box);
  CHECK(dd.status == CertifyStatus::Infeasible);
  const auto mb = verify_model_based(plant, nn, box);
  CHECK(mb.status == CertifyStatus::Infeasible);
}

TEST_CASE("model oracle: deadbeat plant with zero-ish controller is feasible") {
  PlantModel<double> plant;
  plant.A = Matd::Zero(2, 2);
  plant.B = Matd::Identity(2, 2);
  std::mt19937_64 rng(8);
  const auto nn = test::random_network(rng, {2, 3, 2}, 1e-3);
  const auto mb = verify_model_based(plant, nn, unit_box(2));
  REQUIRE(mb.status == CertifyStatus::Certified);
  const auto rep =
      test::check_model_certificate_soundness(*mb.certificate, plant, nn, unit_box(2), 100, 5);
  CHECK(rep.ok());
}

TEST_CASE("model oracle: unstable autonomous loop is infeasible") {
  const auto plant = scalar_plant(1.5, 1.0);
  std::mt19937_64 rng(8);
  const auto nn = test::random_network(rng, {1, 2, 1}, 1e-4);
  const auto mb = verify_model_based(plant, nn, unit_box(1));
  CHECK(mb.status == CertifyStatus::Infeasible);
}

TEST_CASE("model-based and data-driven verification agree on random small loops") {
  std::mt19937_64 rng(77);
  int checked = 0;
  for (int trial = 0; trial < 8; ++trial) {
    const bool stable = trial % 2 == 0;
    const auto plant = test::random_plant(rng, 2, 1, stable ? 0.6 : 1.3);
    const auto box = unit_box(2);
    const auto data = collect(plant, box, 12, UniformExcitation{}, 500 + trial);
    REQUIRE(data.pe_ok);
    const auto nn = test::random_network(rng, {2, 3, 1}, 0.05);

    const auto mb = verify_model_based(plant, nn, box);
    const auto dd = verify_fixed_controller(nn, data, box);
    if (mb.status == CertifyStatus::SolverError || dd.status == CertifyStatus::SolverError)
      continue;
    CHECK((mb.status == CertifyStatus::Certified) == (dd.status == CertifyStatus::Certified));
    ++checked;
  }
  CHECK(checked >= 6);
}

TEST_CASE("Schur equivalence at a certificate point: transformed matrix is negative definite") {
  const auto plant = scalar_plant(0.5, 1.0);
  const auto box = unit_box(1);
  const auto data = collect(plant, box, 10, UniformExcitation{}, 4);
  std::mt19937_64 rng(2);
  const auto nn = test::random_network(rng, {1, 2, 1}, 0.05);
  const auto dd = verify_fixed_controller(nn, data, box);
  REQUIRE(dd.status == CertifyStatus::Certified);
  const auto& cert = *dd.certificate;

  // Substitute P = Q1^{-1}, Lambda = Q2^{-1} into the transformed condition.
  VarSpace space;
  const auto pv = space.add_symmetric(1);
  const auto lv = space.add_diagonal(2);
  Vecd x(space.size());
  pv.set(x, cert.Q1.inverse());
  lv.set(x, cert.q2.cwiseInverse());
  const Matd m19 = transformed_stability_matrix(plant, cert.nt, pv.expr(), lv.expr()).eval(x);
  CHECK(Eigen::SelfAdjointEigenSolver<Matd>(m19, Eigen::EigenvaluesOnly)
            .eigenvalues()
            .maxCoeff() < 0.0);

  // And the stability LMI at the same point is positive definite.
  const Matd m20 = dd_lmi_value(data, cert.Q1, cert.q2, cert.L1, cert.L2, cert.L3, cert.L4);
  CHECK(Eigen::SelfAdjointEigenSolver<Matd>(m20, Eigen::EigenvaluesOnly)
            .eigenvalues()
            .minCoeff() > 0.0);
}

TEST_CASE("ROA ellipsoid recovery and slice boundaries") {
  StabilityCertificate cert;
  cert.Q1 = Matd::Identity(2, 2);
  auto roa = roa_from_certificate(cert);
  CHECK(roa.P.isIdentity(1e-12));
  CHECK(roa.log_det_q1 == doctest::Approx(0.0));

  cert.Q1 = Matd::Zero(2, 2);
  cert.Q1(0, 0) = 4.0;
  cert.Q1(1, 1) = 1.0;
  roa = roa_from_certificate(cert);
  CHECK(roa.P(0, 0) == doctest::Approx(0.25));
  CHECK(roa.P(1, 1) == doctest::Approx(1.0));
  const Matd pts = roa_slice_boundary(roa, 0, 1, 64);
  CHECK(pts.col(0).cwiseAbs().maxCoeff() == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(pts.col(1).cwiseAbs().maxCoeff() == doctest::Approx(1.0).epsilon(1e-3));

  cert.Q1(1, 1) = 0.0;  // singular
  CHECK_THROWS_AS(roa_from_certificate(cert), IllConditionedCertificate);
}

TEST_CASE("maximizing log det never loses to the feasibility-only solve") {
  const auto plant = scalar_plant(0.4, 0.8);
  const auto box = unit_box(1);
  const auto data = collect(plant, box, 12, UniformExcitation{}, 21);
  std::mt19937_64 rng(31);
  const auto nn = test::random_network(rng, {1, 3, 1}, 0.05);

  CertifyOptions feas_only;
  feas_only.roa_weight = 0.0;
  const auto feas = verify_fixed_controller(nn, data, box, feas_only);
  const auto maxed = verify_fixed_controller(nn, data, box);
  REQUIRE(feas.status == CertifyStatus::Certified);
  REQUIRE(maxed.status == CertifyStatus::Certified);
  CHECK(maxed.certificate->log_det_q1 >= feas.certificate->log_det_q1 - 1e-6);
}

TEST_CASE("Lyapunov decrease holds from every sampled ellipsoid state") {
  const auto plant = scalar_plant(0.7, 1.0);
  const auto box = unit_box(1);
  const auto data = collect(plant, box, 14, GaussianExcitation{0.7}, 6);
  std::mt19937_64 rng(12);
  const auto nn = test::random_network(rng, {1, 4, 1}, 0.05);
  const auto dd = verify_fixed_controller(nn, data, box);
  REQUIRE(dd.status == CertifyStatus::Certified);
  const auto rep =
      test::check_certificate_soundness(*dd.certificate, data, plant, nn, box, 1000, 2024);
  CHECK(rep.lmi_ok);
  CHECK(rep.state_blocks_ok);
  CHECK(rep.decrease_violations == 0);
  CHECK(rep.trajectories == 1000);
}
