#pragma once

#include <optional>
#include <vector>

#include "nfl/certify.hpp"
#include "nfl/objective.hpp"

namespace nfl {

struct FinetuneConfig {
  double eta2 = 100.0;
  double eta3 = 0.01;
  double rho = 1000.0;
  double sigma = 0.005;        // outer threshold on the squared residual norm
  double sigma_prime = 1e-4;   // inner threshold on |N_f|_F^2
  int max_outer = 15;
  int max_inner = 200;
  CertifyOptions certify;
};

/// One inner linearized step: minimizes
///   eta3 |N_f|_F^2 + tr(Y'(fhat Q - UbarL)) + rho/2 |fhat Q - UbarL|_F^2
/// over the structurally legal weight perturbations, where fhat is the
/// first-order expansion of the loop transformation at the current weights
/// with the sector and C blocks frozen there. An unconstrained strictly
/// convex QP, solved in closed form.
struct InnerStep {
  std::vector<Matd> delta;  // one increment per weight matrix
  double nf_sq = 0.0;       // |N_f|_F^2 of the step
  double qp_objective = 0.0;
};

InnerStep linearized_inner_step(const NnController<double>& nn,
                                const SectorBounds<double>& sector, const Matd& q_blk,
                                const Matd& ubar_l, const Matd& y, double rho, double eta3);

enum class FinetuneStatus {
  AlreadyStable,
  Certified,
  SdpInfeasible,
  InnerLoopStalled,
  NotConverged,
  SolverError
};

struct FinetuneIterRecord {
  int outer = 0;
  std::vector<double> nf_norms;       // |N_f|_F per inner iteration
  std::vector<double> qp_objectives;  // QP optimal values per inner iteration
  double residual_sq = 0.0;
  double log_det_q1 = 0.0;
  double y_norm = 0.0;
  std::string sdp_status;
  double wall_s = 0.0;
};

struct FinetuneResult {
  FinetuneStatus status = FinetuneStatus::NotConverged;
  bool already_stable = false;
  NnController<double> nn_tuned;
  double total_delta = 0.0;  // |Nbar - N|_F
  std::optional<StabilityCertificate> certificate;
  int outer_iters = 0;
  int sdp_failure_iter = -1;
  std::vector<FinetuneIterRecord> history;
};

/// Verify-then-adapt loop for an existing controller: early-out when the
/// loop already certifies; otherwise alternate the inner linearized QP walk
/// on the weights with the (Q, L) SDP and multiplier updates until the
/// residual converges and the tuned controller verifies.
FinetuneResult finetune(const NnController<double>& nn, const ExperimentData<double>& data,
                        const StateBox<double>& box, const FinetuneConfig& cfg);

}  // namespace nfl
