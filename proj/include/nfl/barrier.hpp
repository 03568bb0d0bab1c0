#pragma once

#include <string>
#include <vector>

#include "nfl/linform.hpp"
#include "nfl/types.hpp"

namespace nfl {

/// One semidefinite constraint F(x) = F0 + sum_i x_i A_i >= 0 with the
/// per-variable coefficient matrices stored sparsely. A positive
/// logdet_weight adds -logdet_weight * logdet(F(x)) to the objective, which
/// is how the region-of-attraction volume term enters.
struct LmiBlock {
  struct Entry {
    int r, c;
    double v;
  };

  Matd F0;
  std::vector<std::pair<int, std::vector<Entry>>> coeffs;  // sorted by variable id
  double logdet_weight = 0.0;

  Index dim() const { return F0.rows(); }
  Matd eval(const Vecd& x) const;
  /// Directional matrix sum_i dx_i A_i.
  Matd direction(const Vecd& dx) const;

  static LmiBlock compile(const AffineMatrix& m, double logdet_weight = 0.0);
};

/// minimize 0.5 x'Hq x + c'x - sum_j w_j logdet F_j(x)
/// s.t.     F_j(x) >= 0 for every block.
///
/// quad_reg adds a tiny Tikhonov term 0.5*reg*|x|^2 so that the centering
/// subproblems stay coercive along flat feasible rays.
struct ConicProblem {
  int n = 0;
  Matd Hq;  // empty means no quadratic part
  Vecd c;   // empty means zero
  std::vector<LmiBlock> blocks;
  double quad_reg = 1e-10;
};

enum class SolveStatus { Optimal, Infeasible, IterationLimit, NumericalError };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::IterationLimit: return "iteration_limit";
    default: return "numerical_error";
  }
}

struct SolveOptions {
  double gap_tol = 1e-8;
  double t0 = 1.0;
  double mu = 20.0;
  double newton_tol = 1e-10;  // on squared Newton decrement / 2
  int max_newton_per_stage = 80;
  int max_stages = 48;
  int verbose = 0;
};

struct SolveResult {
  SolveStatus status = SolveStatus::NumericalError;
  Vecd x;
  double objective = 0.0;
  double gap = 0.0;
  double phase1_s = 0.0;
  int newton_steps = 0;
  std::string message;

  bool feasible_point() const {
    return status == SolveStatus::Optimal || status == SolveStatus::IterationLimit;
  }
};

/// Log-det barrier path-following solver. Runs a phase-1 minimum-shift solve
/// unless the warm start is already strictly feasible, then follows the
/// central path of the given objective.
SolveResult solve_conic(const ConicProblem& prob, const SolveOptions& opts = {},
                        const Vecd* warm = nullptr);

}  // namespace nfl
