#include "nfl/finetune.hpp"

#include <chrono>
#include <cmath>

namespace nfl {

namespace {

// Frozen transform context at the linearization point.
struct TransformContext {
  Interconnection<double> N;
  Vecd dp, dm;
  Matd c2, c3;
  Matd k;  // (I - C4)^{-1}
  TransformedInterconnection<double> nt;
};

TransformContext make_context(const NnController<double>& nn, const SectorBounds<double>& sb) {
  TransformContext ctx;
  ctx.N = interconnection(nn);
  ctx.dp = sb.d_plus();
  ctx.dm = sb.d_minus();
  ctx.c2 = ctx.N.pi_w * ctx.dp.asDiagonal();
  ctx.c3 = ctx.N.nu_w * ctx.dm.asDiagonal();
  const Matd c4 = ctx.N.nu_w * ctx.dp.asDiagonal();
  ctx.k = detail::inverse_i_minus_c4(c4);
  ctx.nt.nu_x = ctx.k * ctx.N.nu_x;
  ctx.nt.nu_z = ctx.k * ctx.c3;
  ctx.nt.pi_x = ctx.N.pi_x + ctx.c2 * ctx.nt.nu_x;
  ctx.nt.pi_z = ctx.N.pi_w * ctx.dm.asDiagonal() + ctx.c2 * ctx.nt.nu_z;
  return ctx;
}

// Differential of the transform at the context point in the direction of a
// single weight-entry perturbation, as the four Nt blocks.
struct NtDirection {
  Matd pi_x, pi_z, nu_x, nu_z;
};

NtDirection transform_differential(const TransformContext& ctx, Index layer, Index r, Index c,
                                   Index layer_count, const std::vector<Index>& offs) {
  const Index nu = ctx.nt.nu_out();
  const Index nx = ctx.nt.nx();
  const Index nphi = ctx.nt.nphi();
  NtDirection d;
  d.pi_x = Matd::Zero(nu, nx);
  d.pi_z = Matd::Zero(nu, nphi);
  d.nu_x = Matd::Zero(nphi, nx);
  d.nu_z = Matd::Zero(nphi, nphi);

  if (layer == 0) {
    // Entry of W^1 inside nu_x: dNt_nux = K dNu_x, dNt_pix = C2 dNt_nux.
    const Index gr = r;  // first block row
    d.nu_x.col(c) += ctx.k.col(gr);
    d.pi_x.col(c) += ctx.c2 * ctx.k.col(gr);
  } else if (layer < layer_count) {
    // Entry of a mid weight inside nu_w at block (layer, layer-1):
    // dC3 = dm[gc] E, dC4 = dp[gc] E, dK = K dC4 K.
    const Index gr = offs[layer] + r;
    const Index gc = offs[layer - 1] + c;
    const Vecd kcol = ctx.k.col(gr);
    d.nu_x += ctx.dp[gc] * kcol * ctx.nt.nu_x.row(gc);
    d.nu_z += ctx.dp[gc] * kcol * ctx.nt.nu_z.row(gc);
    d.nu_z.col(gc) += ctx.dm[gc] * kcol;
    d.pi_x = ctx.c2 * d.nu_x;
    d.pi_z = ctx.c2 * d.nu_z;
  } else {
    // Entry of W^{l+1} inside pi_w: dC1 = dm[gc] E, dC2 = dp[gc] E.
    const Index gc = offs[layer - 1] + c;
    d.pi_x.row(r) += ctx.dp[gc] * ctx.nt.nu_x.row(gc);
    d.pi_z.row(r) += ctx.dp[gc] * ctx.nt.nu_z.row(gc);
    d.pi_z(r, gc) += ctx.dm[gc];
  }
  return d;
}

Matd dense_direction(const NtDirection& d) {
  Matd m(d.pi_x.rows() + d.nu_x.rows(), d.pi_x.cols() + d.pi_z.cols());
  m << d.pi_x, d.pi_z, d.nu_x, d.nu_z;
  return m;
}

}  // namespace

InnerStep linearized_inner_step(const NnController<double>& nn,
                                const SectorBounds<double>& sector, const Matd& q_blk,
                                const Matd& ubar_l, const Matd& y, double rho, double eta3) {
  nn.validate();
  if (eta3 <= 0.0) throw InvalidMultiplier("eta3 must be positive");
  const TransformContext ctx = make_context(nn, sector);
  const Index l = nn.hidden_count();

  std::vector<Index> offs(std::max<Index>(l, 1) + 1, 0);
  for (Index i = 0; i < l; ++i) offs[i + 1] = offs[i] + nn.weights[i].rows();

  Index n_w = 0;
  for (const auto& w : nn.weights) n_w += w.size();

  const Index rdim = (ctx.nt.nu_out() + ctx.nt.nphi()) * (ctx.nt.nx() + ctx.nt.nphi());
  Matd m(rdim, n_w);
  Index col = 0;
  for (Index layer = 0; layer < Index(nn.weights.size()); ++layer) {
    const Matd& w = nn.weights[layer];
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) {
        const Matd dir = dense_direction(transform_differential(ctx, layer, r, c, l, offs)) * q_blk;
        m.col(col++) = Eigen::Map<const Vecd>(dir.data(), dir.size());
      }
  }

  const Matd r0m = ctx.nt.dense() * q_blk - ubar_l;
  const Vecd r0 = Eigen::Map<const Vecd>(r0m.data(), r0m.size());
  const Vecd yv = Eigen::Map<const Vecd>(y.data(), y.size());

  Matd normal = rho * (m.transpose() * m);
  normal.diagonal().array() += 2.0 * eta3;
  const Vecd rhs = -(m.transpose() * (yv + rho * r0));
  Eigen::LDLT<Matd> ldlt(normal);
  if (ldlt.info() != Eigen::Success) throw SolverFailure("inner QP normal equations failed");
  const Vecd wsol = ldlt.solve(rhs);
  if (!wsol.allFinite()) throw SolverFailure("inner QP produced non-finite step");

  InnerStep step;
  step.nf_sq = wsol.squaredNorm();
  const Vecd rlin = r0 + m * wsol;
  step.qp_objective = eta3 * step.nf_sq + yv.dot(rlin) + 0.5 * rho * rlin.squaredNorm();
  col = 0;
  for (const auto& w : nn.weights) {
    Matd dw(w.rows(), w.cols());
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) dw(r, c) = wsol[col++];
    step.delta.push_back(std::move(dw));
  }
  return step;
}

FinetuneResult finetune(const NnController<double>& nn, const ExperimentData<double>& data,
                        const StateBox<double>& box, const FinetuneConfig& cfg) {
  if (!data.pe_ok)
    throw NotPersistentlyExciting("data fails the rank condition; collect richer data");
  nn.validate();

  FinetuneResult out;
  out.nn_tuned = nn;

  // Step one: plain data-driven verification of the given controller.
  {
    VerifyOutcome v = verify_fixed_controller(nn, data, box, cfg.certify);
    if (v.status == CertifyStatus::Certified) {
      out.status = FinetuneStatus::AlreadyStable;
      out.already_stable = true;
      out.total_delta = 0.0;
      out.certificate = std::move(v.certificate);
      return out;
    }
    if (v.status == CertifyStatus::SolverError) {
      out.status = FinetuneStatus::SolverError;
      return out;
    }
  }

  const Index nphi = nn.phi_dim();
  Matd y = Matd::Zero(data.nu() + nphi, data.nx() + nphi);

  SectorBounds<double> sector = sector_bounds(out.nn_tuned, box);
  TransformedInterconnection<double> nt = loop_transform(interconnection(out.nn_tuned), sector);

  Matd q1, l1, l2, l3, l4;
  Vecd q2;
  double log_det_q1 = 0.0;
  Vecd warm;
  {
    const QlUpdateResult init = solve_ql_update(nt, data, box, y, cfg.rho, cfg.eta2, cfg.certify);
    if (!(init.status == SolveStatus::Optimal || init.status == SolveStatus::IterationLimit)) {
      out.status = FinetuneStatus::SdpInfeasible;
      out.sdp_failure_iter = 0;
      return out;
    }
    q1 = init.Q1;
    q2 = init.q2;
    l1 = init.L1;
    l2 = init.L2;
    l3 = init.L3;
    l4 = init.L4;
    log_det_q1 = init.log_det_q1;
    warm = init.x;
  }
  double residual_sq =
      equality_residual(nt, data, q1, q2, l1, l2, l3, l4).squaredNorm();

  const auto total_delta = [&] {
    double acc = 0.0;
    for (size_t i = 0; i < nn.weights.size(); ++i)
      acc += (out.nn_tuned.weights[i] - nn.weights[i]).squaredNorm();
    return std::sqrt(acc);
  };

  for (int k = 0; k < cfg.max_outer; ++k) {
    out.outer_iters = k;
    if (residual_sq <= cfg.sigma) {
      VerifyOutcome v = verify_fixed_controller(out.nn_tuned, data, box, cfg.certify);
      if (v.status == CertifyStatus::Certified) {
        out.status = FinetuneStatus::Certified;
        out.total_delta = total_delta();
        out.certificate = std::move(v.certificate);
        return out;
      }
    }

    const auto tic = std::chrono::steady_clock::now();
    FinetuneIterRecord rec;
    rec.outer = k;

    // Inner linearized walk on the weights with (Q, L, Y) frozen. The step
    // condition is evaluated after the first solve, and the sector and the
    // frozen transform context are refreshed at every inner iterate.
    const Matd q_blk = make_q_block(q1, q2);
    const Matd ubar_l = ubar_l_product(data, l1, l2, l3, l4);
    bool inner_converged = false;
    for (int i = 0; i < cfg.max_inner; ++i) {
      sector = sector_bounds(out.nn_tuned, box);
      const InnerStep step =
          linearized_inner_step(out.nn_tuned, sector, q_blk, ubar_l, y, cfg.rho, cfg.eta3);
      for (size_t wi = 0; wi < out.nn_tuned.weights.size(); ++wi)
        out.nn_tuned.weights[wi] += step.delta[wi];
      rec.nf_norms.push_back(std::sqrt(step.nf_sq));
      rec.qp_objectives.push_back(step.qp_objective);
      if (step.nf_sq <= cfg.sigma_prime) {
        inner_converged = true;
        break;
      }
    }
    if (!inner_converged) {
      out.status = FinetuneStatus::InnerLoopStalled;
      out.total_delta = total_delta();
      out.history.push_back(std::move(rec));
      return out;
    }

    // Outer (Q, L) update at the tuned weights, then the multiplier step.
    sector = sector_bounds(out.nn_tuned, box);
    nt = loop_transform(interconnection(out.nn_tuned), sector);
    const QlUpdateResult upd = solve_ql_update(nt, data, box, y, cfg.rho, cfg.eta2, cfg.certify,
                                               warm.size() ? &warm : nullptr);
    if (!(upd.status == SolveStatus::Optimal || upd.status == SolveStatus::IterationLimit)) {
      out.status = FinetuneStatus::SdpInfeasible;
      out.sdp_failure_iter = k;
      out.total_delta = total_delta();
      out.history.push_back(std::move(rec));
      return out;
    }
    q1 = upd.Q1;
    q2 = upd.q2;
    l1 = upd.L1;
    l2 = upd.L2;
    l3 = upd.L3;
    l4 = upd.L4;
    log_det_q1 = upd.log_det_q1;
    warm = upd.x;
    y += cfg.rho * upd.residual;
    residual_sq = upd.residual.squaredNorm();

    rec.residual_sq = residual_sq;
    rec.log_det_q1 = log_det_q1;
    rec.y_norm = y.norm();
    rec.sdp_status = to_string(upd.status);
    rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
    out.history.push_back(std::move(rec));
    out.outer_iters = k + 1;
  }

  if (residual_sq <= cfg.sigma) {
    VerifyOutcome v = verify_fixed_controller(out.nn_tuned, data, box, cfg.certify);
    if (v.status == CertifyStatus::Certified) {
      out.status = FinetuneStatus::Certified;
      out.total_delta = total_delta();
      out.certificate = std::move(v.certificate);
      return out;
    }
  }
  out.status = FinetuneStatus::NotConverged;
  out.total_delta = total_delta();
  return out;
}

}  // namespace nfl
