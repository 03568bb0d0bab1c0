#pragma once

#include <vector>

#include "nfl/experiment.hpp"
#include "nfl/linform.hpp"
#include "nfl/plant.hpp"
#include "nfl/sector.hpp"
#include "nfl/types.hpp"

namespace nfl {

/// Pseudo-inverse machinery shared by everything that replaces plant matrices
/// with data: for persistently exciting data [U0; X0] has full row rank, so
/// L -> ([U0; X0] L, X1 L) factors through the min-norm right inverse.
struct DataOperators {
  Matd stack;  // [U0; X0], (n_u+n_x) x T
  Matd pinv;   // min-norm right inverse, T x (n_u+n_x)
  Matd r_map;  // X1 * pinv, n_x x (n_u+n_x)

  static DataOperators from(const ExperimentData<double>& data);
};

/// The data-driven stability LMI (a 2(n_x+n_phi) block matrix)
///   [ Q1       0       (X1 L1)'  L3' ]
///   [ 0        Q2      (X1 L2)'  L4' ]
///   [ X1 L1    X1 L2   Q1        0   ]
///   [ L3       L4      0         Q2  ]  - margin I  >= 0
/// assembled over whatever affine expressions the caller supplies for the
/// sub-blocks, so the same builder serves the full and the reduced
/// parameterizations.
AffineMatrix dd_stability_lmi(const AffineMatrix& q1, const AffineMatrix& q2,
                              const AffineMatrix& x1l1, const AffineMatrix& x1l2,
                              const AffineMatrix& l3, const AffineMatrix& l4, double margin);

/// Full decision-variable set of the data-driven conditions.
struct DdVariables {
  VarSpace space;
  VarSpace::SymVar Q1;
  VarSpace::DiagVar Q2;
  VarSpace::MatVar L1, L2, L3, L4;
};

DdVariables make_dd_variables(Index nx, Index nphi, Index T);

/// Spec-facing assembly of the stability LMI over the full variable set.
/// Throws NotPersistentlyExciting when the data fails the rank condition.
AffineMatrix assemble_dd_lmi(const ExperimentData<double>& data, Index nphi, double margin,
                             const DdVariables& vars);

/// Linear equality fragments of the data-driven conditions, expressed as
/// affine residual matrices that a feasible point must zero out.
struct EqualityFragments {
  AffineMatrix nq_minus_ul;  // Nt Q - Ubar L
  AffineMatrix q_minus_xl;   // [I 0] Q - Xbar L
};

EqualityFragments assemble_equality_constraints(const TransformedInterconnection<double>& nt,
                                                const ExperimentData<double>& data,
                                                const DdVariables& vars);

/// State-constraint blocks, one (1+n_x) square matrix per row of H.
/// P-parameterized form [[xbar_i^2, h_i],[h_i', P]] ...
std::vector<AffineMatrix> state_constraint_lmi_p(const AffineMatrix& p,
                                                 const StateBox<double>& box);
/// ... and the congruence-transformed Q1 form [[xbar_i^2, h_i Q1],[Q1 h_i', Q1]].
std::vector<AffineMatrix> state_constraint_lmi_q(const AffineMatrix& q1,
                                                 const StateBox<double>& box);

/// Model-based stability matrix of the untransformed condition (must be
/// negative definite), affine in (P, Lambda):
///   Rv' [[A'PA - P, A'PB],[B'PA, B'PB]] Rv + Rphi' SectorQC(Lambda) Rphi.
AffineMatrix model_stability_matrix(const PlantModel<double>& plant,
                                    const Interconnection<double>& N,
                                    const SectorBounds<double>& sb, const AffineMatrix& p,
                                    const AffineMatrix& lambda);

/// Transformed-loop variant with the normalized sector, used by the
/// Schur-equivalence checks.
AffineMatrix transformed_stability_matrix(const PlantModel<double>& plant,
                                          const TransformedInterconnection<double>& nt,
                                          const AffineMatrix& p, const AffineMatrix& lambda);

/// Numeric evaluation of the stability LMI at a concrete point.
Matd dd_lmi_value(const ExperimentData<double>& data, const Matd& q1, const Vecd& q2_diag,
                  const Matd& l1, const Matd& l2, const Matd& l3, const Matd& l4);

/// Numeric state-constraint block for row i of H.
Matd state_constraint_value_p(const Matd& p, const StateBox<double>& box, Index row);

/// Numeric equality residual f(N) Q - Ubar L of a concrete point.
Matd equality_residual(const TransformedInterconnection<double>& nt,
                       const ExperimentData<double>& data, const Matd& q1, const Vecd& q2_diag,
                       const Matd& l1, const Matd& l2, const Matd& l3, const Matd& l4);

/// Adds shift * I to the diagonal of a square affine matrix.
void shift_diagonal(AffineMatrix& m, double shift);

/// Objective fragments: tr(Y' R) with R affine, and (w/2) |R|_F^2.
void add_linear_trace(Vecd& c, double& obj0, const Matd& y, const AffineMatrix& r);
void add_quadratic_frobenius(Matd& h, Vecd& c, double& obj0, double w, const AffineMatrix& r);

}  // namespace nfl
