#pragma once

#include <cmath>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "nfl/network.hpp"
#include "nfl/types.hpp"

namespace nfl {

/// Discrete-time LTI plant x(k+1) = A x(k) + B u(k).
///
/// Held only by the simulation / oracle side of the toolkit; the design and
/// verification paths never read A or B.
template <typename Scalar = double>
struct PlantModel {
  Mat<Scalar> A;     // n_x x n_x
  Mat<Scalar> B;     // n_x x n_u
  Scalar dt{1};      // sampling period [s]; metadata only

  Index nx() const { return A.rows(); }
  Index nu() const { return B.cols(); }

  void validate() const {
    if (A.rows() != A.cols()) throw InvalidDimensions("plant A must be square");
    if (B.rows() != A.rows()) throw InvalidDimensions("plant B row count must match A");
    if (A.rows() < 1 || B.cols() < 1) throw InvalidDimensions("plant needs n_x >= 1 and n_u >= 1");
  }
};

/// Axis-aligned state constraint set containing the origin in its interior,
/// together with the polytopic form {x : -xbar <= H x <= xbar} used by the
/// state-constraint LMI.
template <typename Scalar = double>
struct StateBox {
  Vec<Scalar> lower;
  Vec<Scalar> upper;
  Mat<Scalar> H;
  Vec<Scalar> xbar;

  Index dim() const { return lower.size(); }

  /// Default construction: H = I and xbar_i = min(|lower_i|, upper_i), so the
  /// polytope is the largest symmetric box inside [lower, upper].
  static StateBox from_bounds(const Vec<Scalar>& lo, const Vec<Scalar>& hi) {
    if (lo.size() != hi.size()) throw InvalidDimensions("box bounds must have equal length");
    for (Index i = 0; i < lo.size(); ++i) {
      if (!(lo[i] < Scalar(0) && Scalar(0) < hi[i]))
        throw InvalidInterval("state box must contain the origin in its interior");
    }
    StateBox box;
    box.lower = lo;
    box.upper = hi;
    box.H = Mat<Scalar>::Identity(lo.size(), lo.size());
    box.xbar = lo.cwiseAbs().cwiseMin(hi);
    return box;
  }

  static StateBox symmetric(const Vec<Scalar>& half_width) {
    return from_bounds((-half_width).eval(), half_width);
  }

  bool contains(const Vec<Scalar>& x) const {
    return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
  }

  template <typename Rng>
  Vec<Scalar> sample(Rng& rng) const {
    Vec<Scalar> x(dim());
    for (Index i = 0; i < dim(); ++i) {
      std::uniform_real_distribution<double> dist(double(lower[i]), double(upper[i]));
      x[i] = Scalar(dist(rng));
    }
    return x;
  }
};

/// Rolls the plant forward under a fixed input sequence.
/// Returns the n_x x (T+1) state trajectory with trajectory.col(0) = x0.
template <typename Scalar>
Mat<Scalar> simulate_open_loop(const PlantModel<Scalar>& plant, const Arg<Vec<Scalar>>& x0,
                               const Arg<Mat<Scalar>>& inputs) {
  plant.validate();
  if (x0.size() != plant.nx()) throw InvalidDimensions("initial state dimension mismatch");
  if (inputs.rows() != plant.nu()) throw InvalidDimensions("input dimension mismatch");
  if (inputs.cols() < 1) throw InvalidDimensions("need at least one input sample");
  const Index T = inputs.cols();
  Mat<Scalar> traj(plant.nx(), T + 1);
  traj.col(0) = x0;
  for (Index k = 0; k < T; ++k)
    traj.col(k + 1) = plant.A * traj.col(k) + plant.B * inputs.col(k);
  return traj;
}

/// Closed-loop rollout record: states, the NN control inputs that produced
/// them, and the per-step state norm for reporting.
template <typename Scalar = double>
struct ClosedLoopRollout {
  Mat<Scalar> states;   // n_x x (steps+1)
  Mat<Scalar> inputs;   // n_u x steps
  Vec<Scalar> norms;    // |x(k)|_2, length steps+1
};

template <typename Scalar>
ClosedLoopRollout<Scalar> simulate_closed_loop(const PlantModel<Scalar>& plant,
                                               const NnController<Scalar>& nn,
                                               const Arg<Vec<Scalar>>& x0, Index steps) {
  plant.validate();
  nn.validate();
  if (nn.input_dim() != plant.nx()) throw InvalidDimensions("controller input width != n_x");
  if (nn.output_dim() != plant.nu()) throw InvalidDimensions("controller output width != n_u");
  if (x0.size() != plant.nx()) throw InvalidDimensions("initial state dimension mismatch");

  ClosedLoopRollout<Scalar> out;
  out.states.resize(plant.nx(), steps + 1);
  out.inputs.resize(plant.nu(), steps);
  out.norms.resize(steps + 1);
  out.states.col(0) = x0;
  out.norms[0] = x0.norm();
  for (Index k = 0; k < steps; ++k) {
    const Vec<Scalar> u = evaluate(nn, Vec<Scalar>(out.states.col(k)));
    out.inputs.col(k) = u;
    out.states.col(k + 1) = plant.A * out.states.col(k) + plant.B * u;
    if (!out.states.col(k + 1).allFinite()) throw Diverged(k + 1);
    out.norms[k + 1] = out.states.col(k + 1).norm();
  }
  return out;
}

/// Linear bicycle model of vehicle lateral error dynamics, discretized with a
/// zero-order hold at dt. States are [e, e_dot, e_theta, e_theta_dot] (lateral
/// offset and heading error relative to the lane), input is the front steering
/// angle. Constants are a documented stand-in: mass 1575 kg, yaw inertia
/// 2875 kg m^2, axle distances 1.2 / 1.6 m, cornering stiffnesses 19000 /
/// 33000 N/rad, longitudinal speed 15 m/s.
inline PlantModel<double> vehicle_lateral_plant(double dt = 0.02) {
  const double m = 1575.0;
  const double iz = 2875.0;
  const double lf = 1.2;
  const double lr = 1.6;
  const double cf = 19000.0;
  const double cr = 33000.0;
  const double vx = 15.0;

  Matd Ac = Matd::Zero(4, 4);
  Ac(0, 1) = 1.0;
  Ac(1, 1) = -(2 * cf + 2 * cr) / (m * vx);
  Ac(1, 2) = (2 * cf + 2 * cr) / m;
  Ac(1, 3) = (-2 * cf * lf + 2 * cr * lr) / (m * vx);
  Ac(2, 3) = 1.0;
  Ac(3, 1) = -(2 * cf * lf - 2 * cr * lr) / (iz * vx);
  Ac(3, 2) = (2 * cf * lf - 2 * cr * lr) / iz;
  Ac(3, 3) = -(2 * cf * lf * lf + 2 * cr * lr * lr) / (iz * vx);

  Vecd Bc(4);
  Bc << 0.0, 2 * cf / m, 0.0, 2 * cf * lf / iz;

  // ZOH discretization via the augmented matrix exponential; Ac has zero
  // columns, so the (Ad - I) inv(Ac) shortcut does not apply.
  Matd aug = Matd::Zero(5, 5);
  aug.topLeftCorner(4, 4) = Ac;
  aug.topRightCorner(4, 1) = Bc;
  Matd expm = (aug * dt).exp();

  PlantModel<double> plant;
  plant.A = expm.topLeftCorner(4, 4);
  plant.B = expm.topRightCorner(4, 1);
  plant.dt = dt;
  return plant;
}

/// State box used by the vehicle scenario.
inline StateBox<double> vehicle_state_box() {
  Vecd lo(4), hi(4);
  lo << -2, -5, -1, -5;
  hi << 2, 5, 1, 5;
  return StateBox<double>::from_bounds(lo, hi);
}

}  // namespace nfl
