#include "nfl/synthesis.hpp"

#include <chrono>
#include <cmath>

namespace nfl {

Matd expert_gain(const PlantModel<double>& plant, const ExpertSpec& spec) {
  if (std::holds_alternative<GainExpert>(spec)) {
    const Matd& k = std::get<GainExpert>(spec).K;
    if (k.rows() != plant.nu() || k.cols() != plant.nx())
      throw InvalidDimensions("expert gain dimensions do not match the plant");
    return k;
  }
  const auto& lqr = std::get<LqrExpert>(spec);
  return -dlqr_gain(plant.A, plant.B, lqr.Q, lqr.R);
}

Demos generate_expert_demos(const PlantModel<double>& plant, const StateBox<double>& box,
                            const ExpertSpec& spec, Index count, std::uint64_t seed) {
  const Matd k = expert_gain(plant, spec);
  std::mt19937_64 rng(seed);
  Demos demos;
  demos.X.resize(box.dim(), count);
  for (Index j = 0; j < count; ++j) demos.X.col(j) = box.sample(rng);
  demos.U = k * demos.X;
  return demos;
}

double augmented_lagrangian_value(const NnController<double>& nn,
                                  const SectorBounds<double>& sector, const Demos& demos,
                                  const ExperimentData<double>& data, const Matd& q1,
                                  const Vecd& q2, const Matd& l1, const Matd& l2, const Matd& l3,
                                  const Matd& l4, const Matd& y, double eta1, double eta2,
                                  double rho) {
  Eigen::LLT<Matd> llt(q1);
  if (llt.info() != Eigen::Success) throw DomainError("Q1 must be positive definite");
  double log_det = 0.0;
  for (Index i = 0; i < q1.rows(); ++i) log_det += 2.0 * std::log(llt.matrixLLT()(i, i));

  const TransformedInterconnection<double> nt = loop_transform(interconnection(nn), sector);
  const Matd r = nt.dense() * make_q_block(q1, q2) - ubar_l_product(data, l1, l2, l3, l4);
  return eta1 * imitation_loss(nn, demos) - eta2 * log_det + (y.array() * r.array()).sum() +
         0.5 * rho * r.squaredNorm();
}

namespace {

struct QlState {
  Matd Q1;
  Vecd q2;
  Matd L1, L2, L3, L4;
  double log_det_q1 = 0.0;
  Matd residual;
};

QlState fallback_ql_state(const TransformedInterconnection<double>& nt,
                          const ExperimentData<double>& data) {
  // Q = I and L the least-squares fit of the hard data equality; the bottom
  // blocks zero their residual rows exactly.
  const DataOperators ops = DataOperators::from(data);
  const Index nx = data.nx();
  const Index nphi = nt.nphi();
  QlState st;
  st.Q1 = Matd::Identity(nx, nx);
  st.q2 = Vecd::Ones(nphi);
  Matd rhs = Matd::Zero(data.nu() + nx, nx);
  rhs.bottomRows(nx).setIdentity();
  st.L1 = ops.pinv * rhs;
  st.L2 = Matd::Zero(data.T(), nphi);
  st.L3 = nt.nu_x;
  st.L4 = nt.nu_z;
  st.log_det_q1 = 0.0;
  st.residual = equality_residual(nt, data, st.Q1, st.q2, st.L1, st.L2, st.L3, st.L4);
  return st;
}

}  // namespace

SynthesisResult synthesize(const ExperimentData<double>& data, const StateBox<double>& box,
                           const std::vector<Index>& hidden_sizes, const Demos& demos,
                           const SynthesisConfig& cfg, const MultiplierObserver& observer) {
  if (!data.pe_ok)
    throw NotPersistentlyExciting("data fails the rank condition; collect richer data");
  if (box.dim() != data.nx()) throw InvalidDimensions("box dimension != n_x");

  std::vector<Index> sizes;
  sizes.push_back(data.nx());
  sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
  sizes.push_back(data.nu());

  SynthesisResult out;
  out.nn = init_controller<double>(sizes, cfg.seed);

  const Index nu = data.nu();
  const Index nphi = out.nn.phi_dim();
  Matd y = Matd::Zero(nu + nphi, data.nx() + nphi);

  SectorBounds<double> sector = sector_bounds(out.nn, box);
  TransformedInterconnection<double> nt = loop_transform(interconnection(out.nn), sector);

  // Initialization: one penalty-relaxed SDP gives (Q, L); if even that fails,
  // fall back to Q = I with a least-squares L.
  QlState ql;
  Vecd warm;
  {
    const QlUpdateResult init =
        solve_ql_update(nt, data, box, y, cfg.rho, cfg.eta2, cfg.certify);
    if (init.status == SolveStatus::Optimal || init.status == SolveStatus::IterationLimit) {
      ql = QlState{init.Q1, init.q2, init.L1, init.L2, init.L3, init.L4, init.log_det_q1,
                   init.residual};
      warm = init.x;
    } else {
      ql = fallback_ql_state(nt, data);
    }
  }
  double residual_sq = ql.residual.squaredNorm();

  const auto record = [&](int k, double wall_s, const std::string& status) {
    SynthesisIterRecord rec;
    rec.k = k;
    rec.pred_loss = imitation_loss(out.nn, demos);
    rec.log_det_q1 = ql.log_det_q1;
    rec.residual_norm = std::sqrt(residual_sq);
    rec.residual_sq = residual_sq;
    rec.y_norm = y.norm();
    rec.sdp_status = status;
    rec.wall_s = wall_s;
    out.trace.iters.push_back(rec);
  };

  for (int k = 0; k < cfg.max_outer; ++k) {
    if (residual_sq <= cfg.sigma) {
      VerifyOutcome v = verify_fixed_controller(out.nn, data, box, cfg.certify);
      if (v.status == CertifyStatus::Certified) {
        out.status = SynthesisStatus::Converged;
        out.certificate = std::move(v.certificate);
        return out;
      }
      // Residual small but the controller does not verify yet: keep
      // iterating while budget remains.
    }

    const auto tic = std::chrono::steady_clock::now();

    // Weight update against the augmented Lagrangian with (Q, L, Y) frozen;
    // the sector is refreshed once per outer iteration.
    sector = sector_bounds(out.nn, box);
    TrainingObjective obj;
    obj.eta1 = cfg.eta1;
    obj.rho = cfg.rho;
    obj.demos = demos;
    obj.Y = y;
    obj.UbarL = ubar_l_product(data, ql.L1, ql.L2, ql.L3, ql.L4);
    obj.Qblk = make_q_block(ql.Q1, ql.q2);
    obj.sector = sector;
    adam_minimize(out.nn, obj, cfg.adam);

    // (Q, L) update by the stability SDP with f(N) frozen.
    nt = loop_transform(interconnection(out.nn), sector);
    const QlUpdateResult upd = solve_ql_update(nt, data, box, y, cfg.rho, cfg.eta2, cfg.certify,
                                               warm.size() ? &warm : nullptr);
    if (!(upd.status == SolveStatus::Optimal || upd.status == SolveStatus::IterationLimit)) {
      out.status = SynthesisStatus::SdpInfeasible;
      out.sdp_failure_iter = k;
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
      record(k, wall, to_string(upd.status));
      return out;
    }
    ql = QlState{upd.Q1, upd.q2, upd.L1, upd.L2, upd.L3, upd.L4, upd.log_det_q1, upd.residual};
    warm = upd.x;

    // Multiplier ascent on the equality residual.
    const Matd y_next = y + cfg.rho * ql.residual;
    if (observer) observer(k, y, y_next, ql.residual);
    y = y_next;
    residual_sq = ql.residual.squaredNorm();

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
    record(k, wall, upd.message.empty() ? to_string(upd.status) : upd.message);
  }

  if (residual_sq <= cfg.sigma) {
    VerifyOutcome v = verify_fixed_controller(out.nn, data, box, cfg.certify);
    if (v.status == CertifyStatus::Certified) {
      out.status = SynthesisStatus::Converged;
      out.certificate = std::move(v.certificate);
      return out;
    }
  }
  out.status = SynthesisStatus::NotConverged;
  return out;
}

}  // namespace nfl
