#pragma once

#include <functional>
#include <optional>
#include <variant>

#include "nfl/certify.hpp"
#include "nfl/lqr.hpp"
#include "nfl/objective.hpp"

namespace nfl {

/// Expert law: either discrete LQR weights (resolved against the true plant
/// by the demonstration oracle) or an explicit linear gain with u = K x.
struct LqrExpert {
  Matd Q;
  Matd R;
};
struct GainExpert {
  Matd K;
};
using ExpertSpec = std::variant<LqrExpert, GainExpert>;

/// Resolves the expert to a linear gain (u = K x). LQR experts go through the
/// Riccati solver, so this is the only place the synthesis pipeline touches
/// the true plant.
Matd expert_gain(const PlantModel<double>& plant, const ExpertSpec& spec);

/// Samples `count` states uniformly in the box and labels them with the
/// expert action u = K x. Deterministic for a fixed seed.
Demos generate_expert_demos(const PlantModel<double>& plant, const StateBox<double>& box,
                            const ExpertSpec& spec, Index count, std::uint64_t seed);

struct SynthesisConfig {
  double eta1 = 100.0;
  double eta2 = 100.0;
  double rho = 1000.0;
  double sigma = 0.005;  // threshold on the squared residual norm
  int max_outer = 20;
  AdamOptions adam;
  std::uint64_t seed = 1;
  CertifyOptions certify;
};

struct SynthesisIterRecord {
  int k = 0;
  double pred_loss = 0.0;
  double log_det_q1 = 0.0;
  double residual_norm = 0.0;
  double residual_sq = 0.0;
  double y_norm = 0.0;
  std::string sdp_status;
  double wall_s = 0.0;
};

struct SynthesisTrace {
  std::vector<SynthesisIterRecord> iters;
};

enum class SynthesisStatus { Converged, NotConverged, SdpInfeasible };

struct SynthesisResult {
  SynthesisStatus status = SynthesisStatus::NotConverged;
  int sdp_failure_iter = -1;
  NnController<double> nn;
  std::optional<StabilityCertificate> certificate;
  SynthesisTrace trace;
};

/// Test hook observing each multiplier update.
using MultiplierObserver =
    std::function<void(int k, const Matd& y_prev, const Matd& y_next, const Matd& residual)>;

/// Full augmented-Lagrangian value
///   eta1 L(N) - eta2 logdet(Q1) + tr(Y'(f(N)Q - UbarL)) + rho/2 |f(N)Q - UbarL|_F^2
/// with the sector frozen at `sector`. Throws DomainError when Q1 is not
/// positive definite.
double augmented_lagrangian_value(const NnController<double>& nn,
                                  const SectorBounds<double>& sector, const Demos& demos,
                                  const ExperimentData<double>& data, const Matd& q1,
                                  const Vecd& q2, const Matd& l1, const Matd& l2, const Matd& l3,
                                  const Matd& l4, const Matd& y, double eta1, double eta2,
                                  double rho);

/// Iterative design loop: alternates weight training against the augmented
/// Lagrangian, the (Q, L) stability SDP, and the multiplier update, until the
/// squared equality residual drops below sigma and the final controller
/// passes data-driven verification.
///
/// Demonstrations come in resolved form so the routine itself never sees the
/// plant.
SynthesisResult synthesize(const ExperimentData<double>& data, const StateBox<double>& box,
                           const std::vector<Index>& hidden_sizes, const Demos& demos,
                           const SynthesisConfig& cfg,
                           const MultiplierObserver& observer = nullptr);

}  // namespace nfl
