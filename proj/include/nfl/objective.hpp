#pragma once

#include <vector>

#include "nfl/experiment.hpp"
#include "nfl/network.hpp"
#include "nfl/sector.hpp"
#include "nfl/types.hpp"

namespace nfl {

/// Expert demonstration set; column j of X pairs with column j of U.
struct Demos {
  Matd X;
  Matd U;

  Index count() const { return X.cols(); }
};

/// Mean squared prediction error of the controller over the demonstrations.
double imitation_loss(const NnController<double>& nn, const Demos& demos);

/// blkdiag(Q1, diag(q2)).
Matd make_q_block(const Matd& q1, const Vecd& q2);

/// The product Ubar L = [[U0 L1, U0 L2],[L3, L4]].
Matd ubar_l_product(const ExperimentData<double>& data, const Matd& l1, const Matd& l2,
                    const Matd& l3, const Matd& l4);

/// Differentiable training objective of the controller weights:
///   eta1 * imitation_loss + tr(Y'(f(N)Q - UbarL)) + rho/2 |f(N)Q - UbarL|_F^2,
/// with the sector matrices frozen (they are refreshed once per outer
/// iteration, not inside the weight update). Any term can be switched off by
/// zeroing its coefficient / leaving its data empty.
struct TrainingObjective {
  double eta1 = 0.0;
  double rho = 0.0;
  Demos demos;
  Matd Y;      // empty means zero multiplier
  Matd UbarL;  // empty means no penalty coupling
  Matd Qblk;
  SectorBounds<double> sector;

  bool has_penalty_terms() const { return UbarL.size() > 0; }

  double value(const NnController<double>& nn) const;
  /// Reverse-mode gradient with respect to every weight matrix.
  std::vector<Matd> gradient(const NnController<double>& nn) const;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int epochs = 200;
};

/// Full-batch Adam on the controller weights; returns the final objective
/// value. Throws NumericalFailure if the objective or gradient goes
/// non-finite.
double adam_minimize(NnController<double>& nn, const TrainingObjective& obj,
                     const AdamOptions& opts);

}  // namespace nfl
