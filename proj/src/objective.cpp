#include "nfl/objective.hpp"

#include <cmath>

namespace nfl {

double imitation_loss(const NnController<double>& nn, const Demos& demos) {
  if (demos.count() == 0) return 0.0;
  double acc = 0.0;
  for (Index j = 0; j < demos.count(); ++j)
    acc += (evaluate(nn, Vecd(demos.X.col(j))) - demos.U.col(j)).squaredNorm();
  return acc / double(demos.count());
}

Matd make_q_block(const Matd& q1, const Vecd& q2) {
  const Index nx = q1.rows();
  const Index nphi = q2.size();
  Matd q = Matd::Zero(nx + nphi, nx + nphi);
  q.topLeftCorner(nx, nx) = q1;
  q.bottomRightCorner(nphi, nphi) = Matd(q2.asDiagonal());
  return q;
}

Matd ubar_l_product(const ExperimentData<double>& data, const Matd& l1, const Matd& l2,
                    const Matd& l3, const Matd& l4) {
  const Index nu = data.nu();
  const Index nphi = l3.rows();
  Matd ul(nu + nphi, l1.cols() + l2.cols());
  ul.topLeftCorner(nu, l1.cols()) = data.U0 * l1;
  ul.topRightCorner(nu, l2.cols()) = data.U0 * l2;
  ul.bottomLeftCorner(nphi, l3.cols()) = l3;
  ul.bottomRightCorner(nphi, l4.cols()) = l4;
  return ul;
}

double TrainingObjective::value(const NnController<double>& nn) const {
  double v = 0.0;
  if (eta1 != 0.0) v += eta1 * imitation_loss(nn, demos);
  if (has_penalty_terms()) {
    const TransformedInterconnection<double> nt = loop_transform(interconnection(nn), sector);
    const Matd r = nt.dense() * Qblk - UbarL;
    if (Y.size() > 0) v += (Y.array() * r.array()).sum();
    if (rho != 0.0) v += 0.5 * rho * r.squaredNorm();
  }
  if (!std::isfinite(v)) throw NumericalFailure("objective value is not finite");
  return v;
}

namespace {

// Adds the adjoint of the loop transformation: given dJ/dNt blocks, pushes
// gradient into the weight matrices through
//   Nt_nux = K nu_x, Nt_nuz = K C3, Nt_pix = pi_x + C2 Nt_nux,
//   Nt_piz = C1 + C2 Nt_nuz, K = (I - C4)^{-1}.
void accumulate_transform_adjoint(const NnController<double>& nn,
                                  const SectorBounds<double>& sector, const Matd& g_pix,
                                  const Matd& g_piz, const Matd& g_nux, const Matd& g_nuz,
                                  std::vector<Matd>& grads) {
  const Interconnection<double> N = interconnection(nn);
  const Vecd dp = sector.d_plus();
  const Vecd dm = sector.d_minus();
  const Matd c2 = N.pi_w * dp.asDiagonal();
  const Matd c3 = N.nu_w * dm.asDiagonal();
  const Matd c4 = N.nu_w * dp.asDiagonal();
  const Matd k = detail::inverse_i_minus_c4(c4);
  const Matd nt_nux = k * N.nu_x;
  const Matd nt_nuz = k * c3;

  const Matd g_c2 = g_pix * nt_nux.transpose() + g_piz * nt_nuz.transpose();
  const Matd g_m = c2.transpose() * g_pix + g_nux;  // adjoint of Nt_nux
  const Matd g_s = c2.transpose() * g_piz + g_nuz;  // adjoint of Nt_nuz
  const Matd g_nu_x = k.transpose() * g_m;
  const Matd g_c3 = k.transpose() * g_s;
  const Matd g_k = g_m * N.nu_x.transpose() + g_s * c3.transpose();
  const Matd g_c4 = k.transpose() * g_k * k.transpose();
  const Matd g_pi_w = g_piz * dm.asDiagonal() + g_c2 * dp.asDiagonal();
  const Matd g_nu_w = g_c3 * dm.asDiagonal() + g_c4 * dp.asDiagonal();

  // Slice the block adjoints back to the legal weight positions.
  const Index l = nn.hidden_count();
  if (l == 0) {
    grads[0] += g_pix;
    return;
  }
  std::vector<Index> offs(l + 1, 0);
  for (Index i = 0; i < l; ++i) offs[i + 1] = offs[i] + nn.weights[i].rows();
  grads[0] += g_nu_x.topRows(nn.weights[0].rows());
  for (Index i = 1; i < l; ++i)
    grads[i] += g_nu_w.block(offs[i], offs[i - 1], nn.weights[i].rows(), nn.weights[i].cols());
  grads[l] += g_pi_w.rightCols(nn.weights[l].cols());
}

void accumulate_imitation_gradient(const NnController<double>& nn, const Demos& demos,
                                   double eta1, std::vector<Matd>& grads) {
  const Index m = demos.count();
  if (m == 0) return;
  const Index l = nn.hidden_count();
  const double scale = 2.0 * eta1 / double(m);
  std::vector<Vecd> omegas(l + 1);
  std::vector<Vecd> nus(l);
  for (Index j = 0; j < m; ++j) {
    omegas[0] = demos.X.col(j);
    for (Index i = 0; i < l; ++i) {
      nus[i] = nn.weights[i] * omegas[i];
      omegas[i + 1] = nus[i].array().tanh();
    }
    const Vecd u = nn.weights[l] * omegas[l];
    Vecd delta = scale * (u - demos.U.col(j));
    for (Index i = l; i >= 0; --i) {
      grads[i] += delta * omegas[i].transpose();
      if (i == 0) break;
      Vecd back = nn.weights[i].transpose() * delta;
      delta = back.array() * (1.0 - omegas[i].array().square());
    }
  }
}

}  // namespace

std::vector<Matd> TrainingObjective::gradient(const NnController<double>& nn) const {
  nn.validate();
  std::vector<Matd> grads;
  grads.reserve(nn.weights.size());
  for (const auto& w : nn.weights) grads.push_back(Matd::Zero(w.rows(), w.cols()));

  if (eta1 != 0.0) accumulate_imitation_gradient(nn, demos, eta1, grads);

  if (has_penalty_terms()) {
    const TransformedInterconnection<double> nt = loop_transform(interconnection(nn), sector);
    // d/dNt of tr(Y'(Nt Q - UbarL)) + rho/2 |Nt Q - UbarL|^2 = (Y + rho R) Q.
    Matd g_nt = Matd::Zero(nt.nu_out() + nt.nphi(), nt.nx() + nt.nphi());
    if (Y.size() > 0) g_nt += Y;
    if (rho != 0.0) g_nt += rho * (nt.dense() * Qblk - UbarL);
    g_nt = g_nt * Qblk;  // Qblk symmetric
    const Index nu = nt.nu_out();
    const Index nx = nt.nx();
    const Index nphi = nt.nphi();
    accumulate_transform_adjoint(nn, sector, g_nt.topLeftCorner(nu, nx),
                                 g_nt.topRightCorner(nu, nphi), g_nt.bottomLeftCorner(nphi, nx),
                                 g_nt.bottomRightCorner(nphi, nphi), grads);
  }

  for (const auto& g : grads)
    if (!g.allFinite()) throw NumericalFailure("objective gradient is not finite");
  return grads;
}

double adam_minimize(NnController<double>& nn, const TrainingObjective& obj,
                     const AdamOptions& opts) {
  std::vector<Matd> m, v;
  for (const auto& w : nn.weights) {
    m.push_back(Matd::Zero(w.rows(), w.cols()));
    v.push_back(Matd::Zero(w.rows(), w.cols()));
  }
  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    const std::vector<Matd> g = obj.gradient(nn);
    const double bc1 = 1.0 - std::pow(opts.beta1, epoch);
    const double bc2 = 1.0 - std::pow(opts.beta2, epoch);
    for (size_t i = 0; i < nn.weights.size(); ++i) {
      m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * g[i];
      v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * g[i].cwiseProduct(g[i]);
      const Matd mhat = m[i] / bc1;
      const Matd vhat = v[i] / bc2;
      nn.weights[i] -= opts.lr * (mhat.array() / (vhat.array().sqrt() + opts.eps)).matrix();
    }
  }
  return obj.value(nn);
}

}  // namespace nfl
