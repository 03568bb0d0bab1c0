#include "nfl/certify.hpp"

#include <cmath>

namespace nfl {

double dd_margin(const ExperimentData<double>& data, double margin_scale) {
  return margin_scale * (1.0 + data.X1.norm());
}

namespace {

double log_det_spd(const Matd& m) {
  Eigen::LLT<Matd> llt(m);
  if (llt.info() != Eigen::Success) throw NumericalFailure("matrix is not positive definite");
  double ld = 0.0;
  for (Index i = 0; i < m.rows(); ++i) ld += std::log(llt.matrixLLT()(i, i));
  return 2.0 * ld;
}

void append_cap_blocks(ConicProblem& prob, const VarSpace::DiagVar& var, double cap) {
  for (Index j = 0; j < var.d; ++j) {
    LmiBlock blk;
    blk.F0 = Matd::Constant(1, 1, cap);
    blk.coeffs.emplace_back(var.index(j), std::vector<LmiBlock::Entry>{{0, 0, -1.0}});
    prob.blocks.push_back(std::move(blk));
  }
}

void append_floor_blocks(ConicProblem& prob, const VarSpace::DiagVar& var, double floor) {
  for (Index j = 0; j < var.d; ++j) {
    LmiBlock blk;
    blk.F0 = Matd::Constant(1, 1, -floor);
    blk.coeffs.emplace_back(var.index(j), std::vector<LmiBlock::Entry>{{0, 0, 1.0}});
    prob.blocks.push_back(std::move(blk));
  }
}

struct RecoveredL {
  Matd L1, L2, L3, L4;
};

// Min-norm selection matrices reproducing the required data products exactly:
// [U0; X0] L1 = [Ntpix Q1; Q1] and [U0; X0] L2 = [Ntpiz Q2; 0].
RecoveredL recover_l(const TransformedInterconnection<double>& nt, const DataOperators& ops,
                     const Matd& q1, const Vecd& q2) {
  const Index nx = q1.rows();
  const Index nphi = q2.size();
  RecoveredL l;
  Matd top(ops.pinv.cols(), nx);
  top << nt.pi_x * q1, q1;
  l.L1 = ops.pinv * top;
  Matd top2 = Matd::Zero(ops.pinv.cols(), nphi);
  top2.topRows(nt.nu_out()) = nt.pi_z * q2.asDiagonal();
  l.L2 = ops.pinv * top2;
  l.L3 = nt.nu_x * q1;
  l.L4 = nt.nu_z * q2.asDiagonal();
  return l;
}

}  // namespace

VerifyOutcome verify_fixed_controller(const NnController<double>& nn,
                                      const ExperimentData<double>& data,
                                      const StateBox<double>& box, const CertifyOptions& opts) {
  if (!data.pe_ok)
    throw NotPersistentlyExciting("data fails the rank condition; collect richer data");
  nn.validate();
  if (nn.input_dim() != data.nx()) throw InvalidDimensions("controller input width != n_x");
  if (nn.output_dim() != data.nu()) throw InvalidDimensions("controller output width != n_u");

  const SectorBounds<double> sector = sector_bounds(nn, box);
  const TransformedInterconnection<double> nt = loop_transform(interconnection(nn), sector);
  const DataOperators ops = DataOperators::from(data);
  const double margin = dd_margin(data, opts.margin_scale);
  const Index nx = data.nx();
  const Index nphi = nt.nphi();

  VarSpace space;
  const auto q1v = space.add_symmetric(nx);
  const auto q2v = space.add_diagonal(nphi);

  const AffineMatrix q1e = q1v.expr();
  const AffineMatrix q2e = q2v.expr();
  // The hard equalities pin every L block to (Q1, Q2); substitute them.
  const AffineMatrix x1l1 = ops.r_map * AffineMatrix::vstack(nt.pi_x * q1e, q1e);
  const AffineMatrix x1l2 = ops.r_map.leftCols(data.nu()) * (nt.pi_z * q2e);
  const AffineMatrix l3 = nt.nu_x * q1e;
  const AffineMatrix l4 = nt.nu_z * q2e;

  ConicProblem prob;
  prob.n = space.size();
  prob.blocks.push_back(LmiBlock::compile(q1e, opts.roa_weight));  // maximize log det Q1
  prob.blocks.push_back(LmiBlock::compile(dd_stability_lmi(q1e, q2e, x1l1, x1l2, l3, l4, margin)));
  for (auto& blk : state_constraint_lmi_q(q1e, box)) prob.blocks.push_back(LmiBlock::compile(blk));
  append_cap_blocks(prob, q2v, opts.q2_cap);

  const SolveResult res = solve_conic(prob, opts.solver);

  VerifyOutcome out;
  out.message = res.message;
  if (res.status == SolveStatus::Infeasible) {
    out.status = CertifyStatus::Infeasible;
    out.message = "no certificate found (stability SDP infeasible)";
    return out;
  }
  if (!res.feasible_point()) {
    out.status = CertifyStatus::SolverError;
    return out;
  }

  StabilityCertificate cert;
  cert.Q1 = q1v.value(res.x);
  cert.q2 = q2v.value(res.x);
  const RecoveredL l = recover_l(nt, ops, cert.Q1, cert.q2);
  cert.L1 = l.L1;
  cert.L2 = l.L2;
  cert.L3 = l.L3;
  cert.L4 = l.L4;
  cert.eq_residual =
      equality_residual(nt, data, cert.Q1, cert.q2, cert.L1, cert.L2, cert.L3, cert.L4).norm();
  const Matd lmi = dd_lmi_value(data, cert.Q1, cert.q2, cert.L1, cert.L2, cert.L3, cert.L4);
  cert.margin =
      Eigen::SelfAdjointEigenSolver<Matd>(lmi, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  cert.margin_target = margin;
  cert.log_det_q1 = log_det_spd(cert.Q1);
  cert.solver_status = to_string(res.status);
  cert.sector = sector;
  cert.nt = nt;

  out.status = CertifyStatus::Certified;
  out.certificate = std::move(cert);
  return out;
}

ModelVerifyOutcome verify_model_based(const PlantModel<double>& plant,
                                      const NnController<double>& nn,
                                      const StateBox<double>& box, const CertifyOptions& opts) {
  plant.validate();
  nn.validate();
  if (nn.input_dim() != plant.nx() || nn.output_dim() != plant.nu())
    throw InvalidDimensions("controller does not match plant dimensions");

  const SectorBounds<double> sector = sector_bounds(nn, box);
  const Interconnection<double> N = interconnection(nn);
  const Index nx = plant.nx();
  const Index nphi = N.nphi();
  const double margin = opts.margin_scale * (1.0 + plant.A.norm() + plant.B.norm());

  VarSpace space;
  const auto pv = space.add_symmetric(nx);
  const auto lv = space.add_diagonal(nphi);

  const AffineMatrix pe = pv.expr();
  const AffineMatrix le = lv.expr();

  // Feasibility is conic in (P, lambda): scaling up a strictly feasible point
  // preserves every constraint, so P >= I is a valid normalization.
  AffineMatrix stab = model_stability_matrix(plant, N, sector, pe, le) * (-1.0);
  shift_diagonal(stab, -margin);
  AffineMatrix pfloor = pe;
  shift_diagonal(pfloor, -1.0);

  ConicProblem prob;
  prob.n = space.size();
  prob.blocks.push_back(LmiBlock::compile(stab));
  prob.blocks.push_back(LmiBlock::compile(pfloor));
  for (auto& blk : state_constraint_lmi_p(pe, box)) prob.blocks.push_back(LmiBlock::compile(blk));
  append_floor_blocks(prob, lv, opts.lambda_floor);
  append_cap_blocks(prob, lv, opts.q2_cap);

  // Gentle pull toward a large ellipsoid: minimize tr(P).
  prob.c = Vecd::Zero(prob.n);
  for (Index i = 0; i < nx; ++i) prob.c[pv.index(i, i)] = 1.0;

  const SolveResult res = solve_conic(prob, opts.solver);

  ModelVerifyOutcome out;
  out.message = res.message;
  if (res.status == SolveStatus::Infeasible) {
    out.status = CertifyStatus::Infeasible;
    out.message = "no certificate found (model-based condition infeasible)";
    return out;
  }
  if (!res.feasible_point()) {
    out.status = CertifyStatus::SolverError;
    return out;
  }
  out.status = CertifyStatus::Certified;
  out.certificate = ModelCertificate{pv.value(res.x), lv.value(res.x)};
  return out;
}

RoaEllipsoid roa_from_certificate(const StabilityCertificate& cert) {
  Eigen::SelfAdjointEigenSolver<Matd> eig(cert.Q1);
  if (eig.info() != Eigen::Success) throw IllConditionedCertificate("Q1 eigendecomposition failed");
  const Vecd ev = eig.eigenvalues();
  if (ev.minCoeff() <= 0.0 || ev.minCoeff() < 1e-14 * ev.maxCoeff())
    throw IllConditionedCertificate("Q1 is numerically singular");
  RoaEllipsoid roa;
  roa.P = eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  roa.log_det_q1 = ev.array().log().sum();
  return roa;
}

Matd roa_slice_boundary(const RoaEllipsoid& roa, Index di, Index dj, Index count) {
  if (di == dj || di < 0 || dj < 0 || di >= roa.P.rows() || dj >= roa.P.rows())
    throw InvalidDimensions("slice dimensions out of range");
  Eigen::Matrix2d psub;
  psub << roa.P(di, di), roa.P(di, dj), roa.P(dj, di), roa.P(dj, dj);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(psub);
  const Eigen::Matrix2d inv_sqrt = eig.eigenvectors() *
                                   eig.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() *
                                   eig.eigenvectors().transpose();
  Matd pts(count, 2);
  for (Index k = 0; k < count; ++k) {
    const double th = 2.0 * M_PI * double(k) / double(count);
    const Eigen::Vector2d p = inv_sqrt * Eigen::Vector2d(std::cos(th), std::sin(th));
    pts(k, 0) = p[0];
    pts(k, 1) = p[1];
  }
  return pts;
}

QlUpdateResult solve_ql_update(const TransformedInterconnection<double>& nt,
                               const ExperimentData<double>& data, const StateBox<double>& box,
                               const Matd& y, double rho, double eta2,
                               const CertifyOptions& opts, const Vecd* warm) {
  const DataOperators ops = DataOperators::from(data);
  const double margin = dd_margin(data, opts.margin_scale);
  const Index nx = data.nx();
  const Index nu = data.nu();
  const Index nphi = nt.nphi();

  VarSpace space;
  const auto q1v = space.add_symmetric(nx);
  const auto q2v = space.add_diagonal(nphi);
  const auto y1v = space.add_matrix(nu, nx);    // U0 L1
  const auto y2v = space.add_matrix(nu, nphi);  // U0 L2
  const auto l3v = space.add_matrix(nphi, nx);
  const auto l4v = space.add_matrix(nphi, nphi);

  const AffineMatrix q1e = q1v.expr();
  const AffineMatrix q2e = q2v.expr();
  // The hard equality [I 0] Q = Xbar L identifies the X0-image of L1 with Q1
  // and zeroes the X0-image of L2, leaving only the U0-images free.
  const AffineMatrix x1l1 = ops.r_map * AffineMatrix::vstack(y1v.expr(), q1e);
  const AffineMatrix x1l2 = ops.r_map.leftCols(nu) * y2v.expr();

  ConicProblem prob;
  prob.n = space.size();
  prob.blocks.push_back(LmiBlock::compile(q1e, eta2));
  prob.blocks.push_back(LmiBlock::compile(
      dd_stability_lmi(q1e, q2e, x1l1, x1l2, l3v.expr(), l4v.expr(), margin)));
  for (auto& blk : state_constraint_lmi_q(q1e, box)) prob.blocks.push_back(LmiBlock::compile(blk));
  append_cap_blocks(prob, q2v, opts.q2_cap);

  // Residual f(N) Q - Ubar L in the reduced variables.
  AffineMatrix resid(nu + nphi, nx + nphi);
  {
    const AffineMatrix top_l = nt.pi_x * q1e + y1v.expr() * (-1.0);
    const AffineMatrix top_r = nt.pi_z * q2e + y2v.expr() * (-1.0);
    const AffineMatrix bot_l = nt.nu_x * q1e + l3v.expr() * (-1.0);
    const AffineMatrix bot_r = nt.nu_z * q2e + l4v.expr() * (-1.0);
    resid.set_block(0, 0, top_l);
    resid.set_block(0, nx, top_r);
    resid.set_block(nu, 0, bot_l);
    resid.set_block(nu, nx, bot_r);
  }
  prob.Hq = Matd::Zero(prob.n, prob.n);
  prob.c = Vecd::Zero(prob.n);
  double obj0 = 0.0;
  add_linear_trace(prob.c, obj0, y, resid);
  add_quadratic_frobenius(prob.Hq, prob.c, obj0, rho, resid);

  const SolveResult res = solve_conic(prob, opts.solver, warm);

  QlUpdateResult out;
  out.status = res.status;
  out.message = res.message;
  if (!res.feasible_point()) return out;

  out.Q1 = q1v.value(res.x);
  out.q2 = q2v.value(res.x);
  const RecoveredL l = [&] {
    RecoveredL rl;
    Matd top(nu + nx, nx);
    top << y1v.value(res.x), out.Q1;
    rl.L1 = ops.pinv * top;
    Matd top2 = Matd::Zero(nu + nx, nphi);
    top2.topRows(nu) = y2v.value(res.x);
    rl.L2 = ops.pinv * top2;
    rl.L3 = l3v.value(res.x);
    rl.L4 = l4v.value(res.x);
    return rl;
  }();
  out.L1 = l.L1;
  out.L2 = l.L2;
  out.L3 = l.L3;
  out.L4 = l.L4;
  out.log_det_q1 = log_det_spd(out.Q1);
  out.residual = equality_residual(nt, data, out.Q1, out.q2, out.L1, out.L2, out.L3, out.L4);
  out.x = res.x;
  return out;
}

}  // namespace nfl
