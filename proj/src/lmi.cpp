#include "nfl/lmi.hpp"

namespace nfl {

DataOperators DataOperators::from(const ExperimentData<double>& data) {
  data.validate();
  DataOperators ops;
  ops.stack.resize(data.nu() + data.nx(), data.T());
  ops.stack << data.U0, data.X0;
  Eigen::CompleteOrthogonalDecomposition<Matd> cod(ops.stack);
  ops.pinv = cod.pseudoInverse();
  ops.r_map = data.X1 * ops.pinv;
  return ops;
}

AffineMatrix dd_stability_lmi(const AffineMatrix& q1, const AffineMatrix& q2,
                              const AffineMatrix& x1l1, const AffineMatrix& x1l2,
                              const AffineMatrix& l3, const AffineMatrix& l4, double margin) {
  const Index nx = q1.rows();
  const Index nphi = q2.rows();
  const Index dim = 2 * (nx + nphi);
  AffineMatrix m(dim, dim);
  const Index r1 = 0, r2 = nx, r3 = nx + nphi, r4 = 2 * nx + nphi;
  m.set_block(r1, r1, q1);
  m.set_block(r2, r2, q2);
  m.set_block(r3, r3, q1);
  m.set_block(r4, r4, q2);
  m.set_block(r3, r1, x1l1);
  m.set_block(r1, r3, x1l1.transpose());
  m.set_block(r3, r2, x1l2);
  m.set_block(r2, r3, x1l2.transpose());
  m.set_block(r4, r1, l3);
  m.set_block(r1, r4, l3.transpose());
  m.set_block(r4, r2, l4);
  m.set_block(r2, r4, l4.transpose());
  shift_diagonal(m, -margin);
  return m;
}

DdVariables make_dd_variables(Index nx, Index nphi, Index T) {
  DdVariables v;
  v.Q1 = v.space.add_symmetric(nx);
  v.Q2 = v.space.add_diagonal(nphi);
  v.L1 = v.space.add_matrix(T, nx);
  v.L2 = v.space.add_matrix(T, nphi);
  v.L3 = v.space.add_matrix(nphi, nx);
  v.L4 = v.space.add_matrix(nphi, nphi);
  return v;
}

AffineMatrix assemble_dd_lmi(const ExperimentData<double>& data, Index nphi, double margin,
                             const DdVariables& vars) {
  if (!data.pe_ok)
    throw NotPersistentlyExciting("data fails the rank condition; collect richer data");
  const AffineMatrix x1l1 = data.X1 * vars.L1.expr();
  const AffineMatrix x1l2 = data.X1 * vars.L2.expr();
  return dd_stability_lmi(vars.Q1.expr(), vars.Q2.expr(), x1l1, x1l2, vars.L3.expr(),
                          vars.L4.expr(), margin);
}

EqualityFragments assemble_equality_constraints(const TransformedInterconnection<double>& nt,
                                                const ExperimentData<double>& data,
                                                const DdVariables& vars) {
  const Index nx = data.nx();
  const Index nu = data.nu();
  const Index nphi = nt.nphi();
  const Index T = data.T();
  if (nt.nx() != nx) throw InvalidDimensions("interconnection state width != data n_x");
  if (nt.nu_out() != nu) throw InvalidDimensions("interconnection output width != data n_u");

  // Q = blkdiag(Q1, Q2), L = [[L1, L2],[L3, L4]].
  AffineMatrix q(nx + nphi, nx + nphi);
  q.set_block(0, 0, vars.Q1.expr());
  q.set_block(nx, nx, vars.Q2.expr());
  AffineMatrix l(T + nphi, nx + nphi);
  l.set_block(0, 0, vars.L1.expr());
  l.set_block(0, nx, vars.L2.expr());
  l.set_block(T, 0, vars.L3.expr());
  l.set_block(T, nx, vars.L4.expr());

  Matd ubar = Matd::Zero(nu + nphi, T + nphi);
  ubar.topLeftCorner(nu, T) = data.U0;
  ubar.bottomRightCorner(nphi, nphi).setIdentity();
  Matd xbar = Matd::Zero(nx, T + nphi);
  xbar.leftCols(T) = data.X0;

  EqualityFragments frags;
  frags.nq_minus_ul = nt.dense() * q + (ubar * l) * (-1.0);
  Matd eye0 = Matd::Zero(nx, nx + nphi);
  eye0.leftCols(nx).setIdentity();
  frags.q_minus_xl = eye0 * q + (xbar * l) * (-1.0);
  return frags;
}

std::vector<AffineMatrix> state_constraint_lmi_p(const AffineMatrix& p,
                                                 const StateBox<double>& box) {
  const Index nx = p.rows();
  std::vector<AffineMatrix> blocks;
  for (Index i = 0; i < box.H.rows(); ++i) {
    AffineMatrix b(1 + nx, 1 + nx);
    b(0, 0) = LinForm(box.xbar[i] * box.xbar[i]);
    for (Index j = 0; j < nx; ++j) {
      b(0, 1 + j) = LinForm(box.H(i, j));
      b(1 + j, 0) = LinForm(box.H(i, j));
    }
    for (Index r = 0; r < nx; ++r)
      for (Index c = 0; c < nx; ++c) b(1 + r, 1 + c) = p(r, c);
    blocks.push_back(std::move(b));
  }
  return blocks;
}

std::vector<AffineMatrix> state_constraint_lmi_q(const AffineMatrix& q1,
                                                 const StateBox<double>& box) {
  const Index nx = q1.rows();
  std::vector<AffineMatrix> blocks;
  for (Index i = 0; i < box.H.rows(); ++i) {
    const Matd h = box.H.row(i);
    const AffineMatrix hq = h * q1;  // 1 x n_x
    AffineMatrix b(1 + nx, 1 + nx);
    b(0, 0) = LinForm(box.xbar[i] * box.xbar[i]);
    for (Index j = 0; j < nx; ++j) {
      b(0, 1 + j) = hq(0, j);
      b(1 + j, 0) = hq(0, j);
    }
    for (Index r = 0; r < nx; ++r)
      for (Index c = 0; c < nx; ++c) b(1 + r, 1 + c) = q1(r, c);
    blocks.push_back(std::move(b));
  }
  return blocks;
}

namespace {

// [[A'PA - P, A'PB],[B'PA, B'PB]] as [A B]' P [A B] - blkdiag(P, 0).
AffineMatrix lyapunov_middle(const PlantModel<double>& plant, const AffineMatrix& p) {
  const Index nx = plant.nx();
  const Index nu = plant.nu();
  Matd ab(nx, nx + nu);
  ab << plant.A, plant.B;
  AffineMatrix m = ab.transpose() * (p * ab);
  for (Index i = 0; i < nx; ++i)
    for (Index j = 0; j < nx; ++j) m(i, j) += p(i, j) * (-1.0);
  return m;
}

}  // namespace

AffineMatrix model_stability_matrix(const PlantModel<double>& plant,
                                    const Interconnection<double>& N,
                                    const SectorBounds<double>& sb, const AffineMatrix& p,
                                    const AffineMatrix& lambda) {
  const Index nx = plant.nx();
  const Index nu = plant.nu();
  const Index nphi = N.nphi();

  Matd rv(nx + nu, nx + nphi);
  rv << Matd::Identity(nx, nx), Matd::Zero(nx, nphi), N.pi_x, N.pi_w;
  Matd rphi(2 * nphi, nx + nphi);
  rphi << N.nu_x, N.nu_w, Matd::Zero(nphi, nx), Matd::Identity(nphi, nphi);

  // Sector QC matrix of Lemma-1 form, affine in lambda.
  AffineMatrix qc(2 * nphi, 2 * nphi);
  for (Index j = 0; j < nphi; ++j) {
    const LinForm lj = lambda(j, j);
    qc(j, j) = lj * (-2.0 * sb.alpha[j] * sb.beta[j]);
    qc(j, nphi + j) = lj * (sb.alpha[j] + sb.beta[j]);
    qc(nphi + j, j) = qc(j, nphi + j);
    qc(nphi + j, nphi + j) = lj * (-2.0);
  }

  AffineMatrix m = rv.transpose() * (lyapunov_middle(plant, p) * rv);
  m.add_in_place(rphi.transpose() * (qc * rphi));
  return m;
}

AffineMatrix transformed_stability_matrix(const PlantModel<double>& plant,
                                          const TransformedInterconnection<double>& nt,
                                          const AffineMatrix& p, const AffineMatrix& lambda) {
  const Index nx = plant.nx();
  const Index nu = plant.nu();
  const Index nphi = nt.nphi();

  Matd rv(nx + nu, nx + nphi);
  rv << Matd::Identity(nx, nx), Matd::Zero(nx, nphi), nt.pi_x, nt.pi_z;
  Matd rphi(2 * nphi, nx + nphi);
  rphi << nt.nu_x, nt.nu_z, Matd::Zero(nphi, nx), Matd::Identity(nphi, nphi);

  AffineMatrix qc(2 * nphi, 2 * nphi);
  for (Index j = 0; j < nphi; ++j) {
    qc(j, j) = lambda(j, j);
    qc(nphi + j, nphi + j) = lambda(j, j) * (-1.0);
  }

  AffineMatrix m = rv.transpose() * (lyapunov_middle(plant, p) * rv);
  m.add_in_place(rphi.transpose() * (qc * rphi));
  return m;
}

Matd dd_lmi_value(const ExperimentData<double>& data, const Matd& q1, const Vecd& q2_diag,
                  const Matd& l1, const Matd& l2, const Matd& l3, const Matd& l4) {
  const Index nx = q1.rows();
  const Index nphi = q2_diag.size();
  Matd m = Matd::Zero(2 * (nx + nphi), 2 * (nx + nphi));
  const Matd x1l1 = data.X1 * l1;
  const Matd x1l2 = data.X1 * l2;
  const Index r2 = nx, r3 = nx + nphi, r4 = 2 * nx + nphi;
  m.block(0, 0, nx, nx) = q1;
  m.block(r2, r2, nphi, nphi) = Matd(q2_diag.asDiagonal());
  m.block(r3, r3, nx, nx) = q1;
  m.block(r4, r4, nphi, nphi) = Matd(q2_diag.asDiagonal());
  m.block(r3, 0, nx, nx) = x1l1;
  m.block(0, r3, nx, nx) = x1l1.transpose();
  m.block(r3, r2, nx, nphi) = x1l2;
  m.block(r2, r3, nphi, nx) = x1l2.transpose();
  m.block(r4, 0, nphi, nx) = l3;
  m.block(0, r4, nx, nphi) = l3.transpose();
  m.block(r4, r2, nphi, nphi) = l4;
  m.block(r2, r4, nphi, nphi) = l4.transpose();
  return m;
}

Matd state_constraint_value_p(const Matd& p, const StateBox<double>& box, Index row) {
  const Index nx = p.rows();
  Matd b(1 + nx, 1 + nx);
  b(0, 0) = box.xbar[row] * box.xbar[row];
  b.block(0, 1, 1, nx) = box.H.row(row);
  b.block(1, 0, nx, 1) = box.H.row(row).transpose();
  b.block(1, 1, nx, nx) = p;
  return b;
}

Matd equality_residual(const TransformedInterconnection<double>& nt,
                       const ExperimentData<double>& data, const Matd& q1, const Vecd& q2_diag,
                       const Matd& l1, const Matd& l2, const Matd& l3, const Matd& l4) {
  const Index nx = q1.rows();
  const Index nphi = q2_diag.size();
  Matd q = Matd::Zero(nx + nphi, nx + nphi);
  q.topLeftCorner(nx, nx) = q1;
  q.bottomRightCorner(nphi, nphi) = Matd(q2_diag.asDiagonal());
  Matd ul(data.nu() + nphi, nx + nphi);
  ul.topLeftCorner(data.nu(), nx) = data.U0 * l1;
  ul.topRightCorner(data.nu(), nphi) = data.U0 * l2;
  ul.bottomLeftCorner(nphi, nx) = l3;
  ul.bottomRightCorner(nphi, nphi) = l4;
  return nt.dense() * q - ul;
}

void shift_diagonal(AffineMatrix& m, double shift) {
  for (Index i = 0; i < m.rows(); ++i) m(i, i) += LinForm(shift);
}

void add_linear_trace(Vecd& c, double& obj0, const Matd& y, const AffineMatrix& r) {
  for (Index i = 0; i < r.rows(); ++i)
    for (Index j = 0; j < r.cols(); ++j) {
      const double w = y(i, j);
      if (w == 0.0) continue;
      const LinForm& f = r(i, j);
      obj0 += w * f.c0;
      for (const auto& [var, coeff] : f.terms) c[var] += w * coeff;
    }
}

void add_quadratic_frobenius(Matd& h, Vecd& c, double& obj0, double w, const AffineMatrix& r) {
  for (Index i = 0; i < r.rows(); ++i)
    for (Index j = 0; j < r.cols(); ++j) {
      const LinForm& f = r(i, j);
      if (f.is_zero()) continue;
      obj0 += 0.5 * w * f.c0 * f.c0;
      for (const auto& [va, ca] : f.terms) {
        c[va] += w * f.c0 * ca;
        for (const auto& [vb, cb] : f.terms) h(va, vb) += w * ca * cb;
      }
    }
}

}  // namespace nfl
