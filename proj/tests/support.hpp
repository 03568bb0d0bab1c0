#pragma once

// Shared test oracles. Several of these deliberately use the true plant
// matrices; the library paths under test never see them.

#include <functional>
#include <random>
#include <vector>

#include "nfl/certify.hpp"
#include "nfl/experiment.hpp"
#include "nfl/lmi.hpp"
#include "nfl/network.hpp"
#include "nfl/plant.hpp"
#include "nfl/sector.hpp"

namespace nfl::test {

inline Matd random_matrix(std::mt19937_64& rng, Index r, Index c, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Matd m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = dist(rng);
  return m;
}

inline NnController<double> random_network(std::mt19937_64& rng, const std::vector<Index>& sizes,
                                           double scale = 1.0) {
  NnController<double> nn;
  for (size_t i = 0; i + 1 < sizes.size(); ++i)
    nn.weights.push_back(random_matrix(rng, sizes[i + 1], sizes[i], scale));
  return nn;
}

/// Spectral radius of a square matrix.
inline double spectral_radius(const Matd& a) {
  return Eigen::EigenSolver<Matd>(a, false).eigenvalues().cwiseAbs().maxCoeff();
}

/// Random plant with the state matrix rescaled to a prescribed spectral
/// radius; B kept well-conditioned so the pair is controllable almost surely.
inline PlantModel<double> random_plant(std::mt19937_64& rng, Index nx, Index nu, double radius) {
  PlantModel<double> plant;
  plant.A = random_matrix(rng, nx, nx);
  const double r = spectral_radius(plant.A);
  if (r > 1e-12) plant.A *= radius / r;
  plant.B = random_matrix(rng, nx, nu);
  while (plant.B.norm() < 0.3) plant.B = random_matrix(rng, nx, nu);
  plant.dt = 0.02;
  return plant;
}

/// Linearization of the controller at the origin (tanh slope one).
inline Matd linearized_gain(const NnController<double>& nn) {
  Matd g = nn.weights[0];
  for (size_t i = 1; i < nn.weights.size(); ++i) g = nn.weights[i] * g;
  return g;
}

/// Central finite differences through an arbitrary scalar functional of the
/// weights.
inline std::vector<Matd> fd_gradient(const NnController<double>& nn,
                                     const std::function<double(const NnController<double>&)>& f,
                                     double h = 1e-6) {
  std::vector<Matd> grads;
  NnController<double> work = nn;
  for (size_t li = 0; li < nn.weights.size(); ++li) {
    Matd g(nn.weights[li].rows(), nn.weights[li].cols());
    for (Index r = 0; r < g.rows(); ++r)
      for (Index c = 0; c < g.cols(); ++c) {
        const double orig = work.weights[li](r, c);
        work.weights[li](r, c) = orig + h;
        const double fp = f(work);
        work.weights[li](r, c) = orig - h;
        const double fm = f(work);
        work.weights[li](r, c) = orig;
        g(r, c) = (fp - fm) / (2.0 * h);
      }
    grads.push_back(std::move(g));
  }
  return grads;
}

inline double rel_gradient_error(const std::vector<Matd>& a, const std::vector<Matd>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]).squaredNorm();
    na += a[i].squaredNorm();
    nb += b[i].squaredNorm();
  }
  return std::sqrt(diff) / std::max({1e-12, std::sqrt(na), std::sqrt(nb)});
}

/// Uniform sample inside the ellipsoid {x : x'Px <= 1}.
inline Vecd sample_in_ellipsoid(std::mt19937_64& rng, const Matd& p) {
  const Index n = p.rows();
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vecd u(n);
  for (Index i = 0; i < n; ++i) u[i] = gauss(rng);
  u.normalize();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  u *= std::pow(unif(rng), 1.0 / double(n));
  Eigen::SelfAdjointEigenSolver<Matd> eig(p);
  return eig.eigenvectors() * eig.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() *
         eig.eigenvectors().transpose() * u;
}

struct SoundnessReport {
  double lmi_min_eig = 0.0;
  bool lmi_ok = false;
  bool state_blocks_ok = false;
  int decrease_violations = 0;
  int trajectories = 0;
  bool ok() const { return lmi_ok && state_blocks_ok && decrease_violations == 0; }
};

/// Monte Carlo certificate soundness: stability LMI margin, state-constraint
/// blocks, and strict Lyapunov decrease along true-plant rollouts started
/// inside E(P).
inline SoundnessReport check_certificate_soundness(const StabilityCertificate& cert,
                                                   const ExperimentData<double>& data,
                                                   const PlantModel<double>& plant,
                                                   const NnController<double>& nn,
                                                   const StateBox<double>& box, int n_samples,
                                                   std::uint64_t seed, Index max_steps = 5000) {
  SoundnessReport rep;
  const Matd lmi =
      dd_lmi_value(data, cert.Q1, cert.q2, cert.L1, cert.L2, cert.L3, cert.L4);
  rep.lmi_min_eig =
      Eigen::SelfAdjointEigenSolver<Matd>(lmi, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  rep.lmi_ok = rep.lmi_min_eig >= cert.margin_target - 1e-8;

  const Matd p = RoaEllipsoid(roa_from_certificate(cert)).P;
  rep.state_blocks_ok = true;
  for (Index i = 0; i < box.H.rows(); ++i) {
    const Matd blk = state_constraint_value_p(p, box, i);
    const double lmin = Eigen::SelfAdjointEigenSolver<Matd>(blk, Eigen::EigenvaluesOnly)
                            .eigenvalues()
                            .minCoeff();
    if (lmin < -1e-8) rep.state_blocks_ok = false;
  }

  std::mt19937_64 rng(seed);
  for (int s = 0; s < n_samples; ++s) {
    Vecd x = sample_in_ellipsoid(rng, p);
    ++rep.trajectories;
    double v = x.dot(p * x);
    for (Index k = 0; k < max_steps && x.norm() > 1e-6; ++k) {
      x = plant.A * x + plant.B * evaluate(nn, x);
      const double vn = x.dot(p * x);
      if (!(vn < v)) {
        ++rep.decrease_violations;
        break;
      }
      v = vn;
    }
  }
  return rep;
}

/// Model-certificate counterpart: stability matrix strictly negative, state
/// blocks PSD, Lyapunov decrease inside E(P).
inline SoundnessReport check_model_certificate_soundness(
    const ModelCertificate& cert, const PlantModel<double>& plant,
    const NnController<double>& nn, const StateBox<double>& box, int n_samples,
    std::uint64_t seed, Index max_steps = 5000) {
  SoundnessReport rep;
  VarSpace space;
  const auto pv = space.add_symmetric(plant.nx());
  const auto lv = space.add_diagonal(nn.phi_dim());
  Vecd x(space.size());
  pv.set(x, cert.P);
  lv.set(x, cert.lambda);
  const SectorBounds<double> sector = sector_bounds(nn, box);
  const Matd m =
      model_stability_matrix(plant, interconnection(nn), sector, pv.expr(), lv.expr()).eval(x);
  rep.lmi_min_eig =
      -Eigen::SelfAdjointEigenSolver<Matd>(m, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  rep.lmi_ok = rep.lmi_min_eig > 0.0;

  rep.state_blocks_ok = true;
  for (Index i = 0; i < box.H.rows(); ++i) {
    const Matd blk = state_constraint_value_p(cert.P, box, i);
    const double lmin = Eigen::SelfAdjointEigenSolver<Matd>(blk, Eigen::EigenvaluesOnly)
                            .eigenvalues()
                            .minCoeff();
    if (lmin < -1e-8) rep.state_blocks_ok = false;
  }

  std::mt19937_64 rng(seed);
  for (int s = 0; s < n_samples; ++s) {
    Vecd xs = sample_in_ellipsoid(rng, cert.P);
    ++rep.trajectories;
    double v = xs.dot(cert.P * xs);
    for (Index k = 0; k < max_steps && xs.norm() > 1e-6; ++k) {
      xs = plant.A * xs + plant.B * evaluate(nn, xs);
      const double vn = xs.dot(cert.P * xs);
      if (!(vn < v)) {
        ++rep.decrease_violations;
        break;
      }
      v = vn;
    }
  }
  return rep;
}

}  // namespace nfl::test
