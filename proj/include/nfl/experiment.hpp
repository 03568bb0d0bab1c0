#pragma once

#include <cstdint>
#include <random>
#include <variant>

#include "nfl/plant.hpp"
#include "nfl/types.hpp"

namespace nfl {

/// One open-loop experiment: inputs, states, and successor states, column j
/// holding sample j. pe_ok caches the persistency-of-excitation rank check.
template <typename Scalar = double>
struct ExperimentData {
  Mat<Scalar> U0;  // n_u x T
  Mat<Scalar> X0;  // n_x x T
  Mat<Scalar> X1;  // n_x x T
  bool pe_ok = false;

  Index T() const { return U0.cols(); }
  Index nu() const { return U0.rows(); }
  Index nx() const { return X0.rows(); }

  void validate() const {
    if (U0.cols() != X0.cols() || U0.cols() != X1.cols())
      throw InvalidDimensions("U0, X0, X1 must have identical column counts");
    if (X0.rows() != X1.rows()) throw InvalidDimensions("X0, X1 must have identical row counts");
    if (U0.size() == 0 || X0.size() == 0) throw InvalidDimensions("experiment data is empty");
  }
};

struct UniformExcitation {
  double lo = -1.0;
  double hi = 1.0;
};
struct GaussianExcitation {
  double sigma = 1.0;
};
using ExcitationSpec = std::variant<UniformExcitation, GaussianExcitation>;

/// Shortest admissible experiment, T >= (n_u + 1) n_x + n_u.
inline Index minimum_experiment_length(Index nx, Index nu) { return (nu + 1) * nx + nu; }

/// Numerical rank test of [U0; X0]: true iff n_u + n_x singular values exceed
/// tol times the largest one.
template <typename Scalar>
bool check_rank_condition(const ExperimentData<Scalar>& data, double tol = 1e-9) {
  data.validate();
  Mat<Scalar> stacked(data.nu() + data.nx(), data.T());
  stacked << data.U0, data.X0;
  Eigen::JacobiSVD<Mat<Scalar>> svd(stacked);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] <= Scalar(0)) return false;
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv[i] > tol * sv[0]) ++rank;
  return rank == data.nu() + data.nx();
}

/// Runs one seeded experiment: x(0) uniform in the box, inputs drawn from the
/// excitation spec, successors produced by the exact plant map. pe_ok is
/// evaluated before returning; a false value is reported, not thrown, so the
/// caller can retry with another seed.
template <typename Scalar>
ExperimentData<Scalar> collect(const PlantModel<Scalar>& plant, const StateBox<Scalar>& box,
                               Index T, const ExcitationSpec& excitation, std::uint64_t seed,
                               double rank_tol = 1e-9) {
  plant.validate();
  const Index t_min = minimum_experiment_length(plant.nx(), plant.nu());
  if (T < t_min)
    throw DataTooShort("experiment length " + std::to_string(T) +
                       " below the persistency bound T >= (n_u+1)n_x+n_u = " +
                       std::to_string(t_min));
  if (box.dim() != plant.nx()) throw InvalidDimensions("box dimension != n_x");

  std::mt19937_64 rng(seed);
  Mat<Scalar> inputs(plant.nu(), T);
  if (std::holds_alternative<UniformExcitation>(excitation)) {
    const auto& e = std::get<UniformExcitation>(excitation);
    std::uniform_real_distribution<double> dist(e.lo, e.hi);
    for (Index j = 0; j < T; ++j)
      for (Index i = 0; i < plant.nu(); ++i) inputs(i, j) = Scalar(dist(rng));
  } else {
    const auto& e = std::get<GaussianExcitation>(excitation);
    std::normal_distribution<double> dist(0.0, e.sigma);
    for (Index j = 0; j < T; ++j)
      for (Index i = 0; i < plant.nu(); ++i) inputs(i, j) = Scalar(dist(rng));
  }

  const Vec<Scalar> x0 = box.sample(rng);
  const Mat<Scalar> traj = simulate_open_loop(plant, x0, inputs);

  ExperimentData<Scalar> data;
  data.U0 = inputs;
  data.X0 = traj.leftCols(T);
  data.X1 = traj.rightCols(T);
  data.pe_ok = check_rank_condition(data, rank_tol);
  return data;
}

}  // namespace nfl
