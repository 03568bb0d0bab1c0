#pragma once

#include <optional>
#include <string>

#include "nfl/barrier.hpp"
#include "nfl/experiment.hpp"
#include "nfl/lmi.hpp"
#include "nfl/network.hpp"
#include "nfl/sector.hpp"
#include "nfl/types.hpp"

namespace nfl {

/// Solution of the data-driven stability SDP. Q1 = P^{-1}, Q2 = Lambda^{-1}
/// (diagonal, stored as its diagonal), L the data-selection blocks.
struct StabilityCertificate {
  Matd Q1;
  Vecd q2;
  Matd L1, L2, L3, L4;
  double eq_residual = 0.0;    // |f(N) Q - Ubar L|_F at the solution
  double margin = 0.0;         // smallest eigenvalue of the stability LMI
  double margin_target = 0.0;  // configured shift the LMI was solved with
  double log_det_q1 = 0.0;
  std::string solver_status;
  SectorBounds<double> sector;
  TransformedInterconnection<double> nt;
};

struct RoaEllipsoid {
  Matd P;
  double log_det_q1 = 0.0;
};

enum class CertifyStatus { Certified, Infeasible, SolverError };

struct VerifyOutcome {
  CertifyStatus status = CertifyStatus::SolverError;
  std::optional<StabilityCertificate> certificate;
  std::string message;
};

/// Feasible point of the model-based stability condition (testing oracle).
struct ModelCertificate {
  Matd P;
  Vecd lambda;
};

struct ModelVerifyOutcome {
  CertifyStatus status = CertifyStatus::SolverError;
  std::optional<ModelCertificate> certificate;
  std::string message;
};

struct CertifyOptions {
  double margin_scale = 1e-6;  // stability margin = margin_scale * (1 + |X1|_F)
  double q2_cap = 1e8;         // upper bound on Q2 / multiplier entries
  double lambda_floor = 1e-8;  // model-based oracle keeps lambda strictly positive
  double roa_weight = 1.0;     // weight on log det Q1; zero means feasibility only
  SolveOptions solver;
};

/// Scale-aware strictness shift used in place of the open condition "> 0".
double dd_margin(const ExperimentData<double>& data, double margin_scale);

/// Solves the data-driven stability SDP with the interconnection fixed
/// (equalities hard), maximizing log det Q1. The loop transformation and the
/// IBP sector bounds are recomputed from the controller and box.
VerifyOutcome verify_fixed_controller(const NnController<double>& nn,
                                      const ExperimentData<double>& data,
                                      const StateBox<double>& box,
                                      const CertifyOptions& opts = {});

/// Model-based feasibility oracle: solves the original stability condition in
/// (P, Lambda) with the untransformed sector. Requires the true plant; used
/// only to cross-check data-driven results in tests.
ModelVerifyOutcome verify_model_based(const PlantModel<double>& plant,
                                      const NnController<double>& nn,
                                      const StateBox<double>& box,
                                      const CertifyOptions& opts = {});

/// P = Q1^{-1} through a symmetric eigendecomposition.
RoaEllipsoid roa_from_certificate(const StabilityCertificate& cert);

/// Boundary points of the {x_i, x_j} coordinate slice of E(P) (other
/// coordinates zero), as a count x 2 matrix for plotting.
Matd roa_slice_boundary(const RoaEllipsoid& roa, Index di, Index dj, Index count = 256);

/// One (Q, L) update of the augmented-Lagrangian algorithms: minimize
///   -eta2 logdet Q1 + tr(Y'(f(N)Q - Ubar L)) + rho/2 |f(N)Q - Ubar L|_F^2
/// subject to the stability LMI, the state-constraint blocks, and the
/// always-hard data equality, with f(N) frozen at nt.
struct QlUpdateResult {
  SolveStatus status = SolveStatus::NumericalError;
  Matd Q1;
  Vecd q2;
  Matd L1, L2, L3, L4;
  double log_det_q1 = 0.0;
  Matd residual;  // f(N) Q - Ubar L at the solution
  Vecd x;         // raw solver point, reusable as a warm start
  std::string message;
};

QlUpdateResult solve_ql_update(const TransformedInterconnection<double>& nt,
                               const ExperimentData<double>& data, const StateBox<double>& box,
                               const Matd& y, double rho, double eta2,
                               const CertifyOptions& opts, const Vecd* warm = nullptr);

}  // namespace nfl
