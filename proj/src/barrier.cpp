#include "nfl/barrier.hpp"

#include <cmath>
#include <limits>
#include <map>

namespace nfl {

Matd LmiBlock::eval(const Vecd& x) const {
  Matd f = F0;
  for (const auto& [var, entries] : coeffs) {
    const double xv = x[var];
    if (xv == 0.0) continue;
    for (const auto& e : entries) f(e.r, e.c) += xv * e.v;
  }
  return f;
}

Matd LmiBlock::direction(const Vecd& dx) const {
  Matd d = Matd::Zero(dim(), dim());
  for (const auto& [var, entries] : coeffs) {
    const double xv = dx[var];
    if (xv == 0.0) continue;
    for (const auto& e : entries) d(e.r, e.c) += xv * e.v;
  }
  return d;
}

LmiBlock LmiBlock::compile(const AffineMatrix& m, double logdet_weight) {
  if (m.rows() != m.cols()) throw InvalidDimensions("LMI block must be square");
  LmiBlock blk;
  blk.F0 = Matd::Zero(m.rows(), m.cols());
  blk.logdet_weight = logdet_weight;
  std::map<int, std::vector<Entry>> by_var;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) {
      const LinForm& f = m(i, j);
      blk.F0(i, j) = f.c0;
      for (const auto& [var, coeff] : f.terms)
        by_var[var].push_back(Entry{int(i), int(j), coeff});
    }
  blk.F0 = 0.5 * (blk.F0 + blk.F0.transpose()).eval();
  blk.coeffs.assign(by_var.begin(), by_var.end());
  return blk;
}

namespace {

struct BlockState {
  Matd F;
  Matd Finv;
  double logdet = 0.0;
};

// Cholesky-based PD test; fills logdet and inverse on success.
bool factor_block(const Matd& f, BlockState& st, bool need_inverse) {
  Eigen::LLT<Matd> llt(f);
  if (llt.info() != Eigen::Success) return false;
  const Matd& l = llt.matrixLLT();
  double ld = 0.0;
  for (Index i = 0; i < l.rows(); ++i) {
    const double d = l(i, i);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    ld += std::log(d);
  }
  st.F = f;
  st.logdet = 2.0 * ld;
  if (need_inverse) st.Finv = llt.solve(Matd::Identity(f.rows(), f.cols()));
  return true;
}

bool eval_all(const std::vector<LmiBlock>& blocks, const Vecd& x, std::vector<BlockState>& states,
              bool need_inverse) {
  states.resize(blocks.size());
  for (size_t j = 0; j < blocks.size(); ++j)
    if (!factor_block(blocks[j].eval(x), states[j], need_inverse)) return false;
  return true;
}

double quad_value(const ConicProblem& p, const Vecd& x) {
  double v = 0.5 * p.quad_reg * x.squaredNorm();
  if (p.c.size() > 0) v += p.c.dot(x);
  if (p.Hq.size() > 0) v += 0.5 * x.dot(p.Hq * x);
  return v;
}

// psi_t(x) = t * quad(x) - sum_j (1 + t w_j) logdet F_j(x)
double merged_value(const ConicProblem& p, double t, const Vecd& x,
                    const std::vector<BlockState>& states) {
  double v = t * quad_value(p, x);
  for (size_t j = 0; j < p.blocks.size(); ++j)
    v -= (1.0 + t * p.blocks[j].logdet_weight) * states[j].logdet;
  return v;
}

struct NewtonReport {
  bool centered = false;
  bool stalled = false;
  int steps = 0;
};

// Newton centering of psi_t from a strictly feasible x (updated in place).
NewtonReport center(const ConicProblem& p, double t, Vecd& x, std::vector<BlockState>& states,
                    const SolveOptions& opts) {
  const int n = p.n;
  NewtonReport rep;
  for (int it = 0; it < opts.max_newton_per_stage; ++it) {
    Vecd g = t * (p.quad_reg * x);
    if (p.c.size() > 0) g += t * p.c;
    if (p.Hq.size() > 0) g += t * (p.Hq * x);
    Matd h = Matd::Zero(n, n);
    h.diagonal().setConstant(t * p.quad_reg);
    if (p.Hq.size() > 0) h += t * p.Hq;

    for (size_t bj = 0; bj < p.blocks.size(); ++bj) {
      const LmiBlock& blk = p.blocks[bj];
      const Matd& finv = states[bj].Finv;
      const double kappa = 1.0 + t * blk.logdet_weight;
      const size_t nv = blk.coeffs.size();
      for (size_t a = 0; a < nv; ++a) {
        const auto& [va, ea] = blk.coeffs[a];
        double gln = 0.0;
        for (const auto& e : ea) gln += e.v * finv(e.r, e.c);
        g[va] -= kappa * gln;
        for (size_t b = a; b < nv; ++b) {
          const auto& [vb, eb] = blk.coeffs[b];
          double acc = 0.0;
          for (const auto& e1 : ea)
            for (const auto& e2 : eb) acc += e1.v * e2.v * finv(e1.r, e2.c) * finv(e2.r, e1.c);
          h(va, vb) += kappa * acc;
          if (va != vb) h(vb, va) += kappa * acc;
        }
      }
    }

    // Factor the Newton system, escalating a ridge if needed.
    Vecd dx;
    double ridge = 0.0;
    const double hscale = std::max(1.0, h.diagonal().maxCoeff());
    for (int attempt = 0;; ++attempt) {
      Eigen::LDLT<Matd> ldlt(h);
      if (ldlt.info() == Eigen::Success) {
        dx = ldlt.solve(-g);
        if (dx.allFinite()) break;
      }
      if (attempt >= 6) {
        rep.stalled = true;
        return rep;
      }
      ridge = (ridge == 0.0) ? 1e-13 * hscale : ridge * 100.0;
      h.diagonal().array() += ridge;
    }

    const double decrement2 = -g.dot(dx);
    if (!(decrement2 > 2.0 * opts.newton_tol)) {
      rep.centered = true;
      return rep;
    }

    // Backtracking line search on psi_t with feasibility screening.
    std::vector<Matd> dirs(p.blocks.size());
    for (size_t bj = 0; bj < p.blocks.size(); ++bj) dirs[bj] = p.blocks[bj].direction(dx);
    const double psi0 = merged_value(p, t, x, states);
    double alpha = 1.0;
    bool accepted = false;
    std::vector<BlockState> trial(p.blocks.size());
    while (alpha > 1e-13) {
      bool ok = true;
      for (size_t bj = 0; bj < p.blocks.size() && ok; ++bj)
        ok = factor_block(states[bj].F + alpha * dirs[bj], trial[bj], false);
      if (ok) {
        const Vecd xt = x + alpha * dx;
        const double psit = merged_value(p, t, xt, trial);
        if (psit <= psi0 - 0.25 * alpha * decrement2) {
          x = xt;
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    ++rep.steps;
    if (!accepted) {
      rep.stalled = true;
      return rep;
    }
    if (!eval_all(p.blocks, x, states, true)) {
      rep.stalled = true;
      return rep;
    }
  }
  return rep;
}

double total_barrier_dim(const ConicProblem& p) {
  double m = 0;
  for (const auto& b : p.blocks) m += double(b.dim());
  return m;
}

double objective_value(const ConicProblem& p, const Vecd& x,
                       const std::vector<BlockState>& states) {
  double v = quad_value(p, x);
  for (size_t j = 0; j < p.blocks.size(); ++j)
    v -= p.blocks[j].logdet_weight * states[j].logdet;
  return v;
}

// Minimum-shift feasibility phase: minimize s subject to F_j(x) + s I >= 0.
// Returns a strictly feasible x, or reports certified infeasibility.
struct Phase1Result {
  bool feasible = false;
  bool certified_infeasible = false;
  Vecd x;
  double s = 0.0;
  int newton_steps = 0;
};

Phase1Result phase1(const ConicProblem& p, const SolveOptions& opts, const Vecd& x_init) {
  ConicProblem shadow;
  const int n = p.n;
  shadow.n = n + 1;
  shadow.c = Vecd::Zero(n + 1);
  shadow.c[n] = 1.0;
  shadow.quad_reg = p.quad_reg;

  double worst = 0.0;
  for (const auto& blk : p.blocks) {
    LmiBlock sb = blk;
    sb.logdet_weight = 0.0;
    std::vector<LmiBlock::Entry> shift;
    for (Index i = 0; i < blk.dim(); ++i) shift.push_back({int(i), int(i), 1.0});
    sb.coeffs.emplace_back(n, std::move(shift));
    shadow.blocks.push_back(std::move(sb));
    const Matd f = blk.eval(x_init);
    const double lmin = Eigen::SelfAdjointEigenSolver<Matd>(f, Eigen::EigenvaluesOnly)
                            .eigenvalues()
                            .minCoeff();
    worst = std::max(worst, -lmin);
  }
  const double s0 = worst + 0.1 * (1.0 + worst);
  const double cap = 2.0 * s0 + 10.0;
  LmiBlock capblk;
  capblk.F0 = Matd::Constant(1, 1, cap);
  capblk.coeffs.emplace_back(n, std::vector<LmiBlock::Entry>{{0, 0, -1.0}});
  shadow.blocks.push_back(std::move(capblk));

  Vecd x(n + 1);
  x.head(n) = x_init;
  x[n] = s0;

  Phase1Result res;
  std::vector<BlockState> states;
  if (!eval_all(shadow.blocks, x, states, true)) return res;

  const double m_total = total_barrier_dim(shadow);
  double t = opts.t0;
  for (int stage = 0; stage < opts.max_stages; ++stage) {
    NewtonReport rep = center(shadow, t, x, states, opts);
    res.newton_steps += rep.steps;
    const double s = x[n];
    if (s < 0.0) {
      res.feasible = true;
      res.x = x.head(n);
      res.s = s;
      return res;
    }
    const double gap = m_total / t;
    if (s - gap > 0.0) {
      res.certified_infeasible = true;
      res.s = s;
      return res;
    }
    if (rep.stalled) {
      res.s = s;
      return res;
    }
    t *= opts.mu;
  }
  res.s = x[n];
  return res;
}

}  // namespace

SolveResult solve_conic(const ConicProblem& prob, const SolveOptions& opts, const Vecd* warm) {
  SolveResult out;
  if (prob.n <= 0) {
    out.message = "empty problem";
    return out;
  }

  Vecd x = Vecd::Zero(prob.n);
  std::vector<BlockState> states;
  bool have_interior = false;
  if (warm && warm->size() == prob.n) {
    x = *warm;
    have_interior = eval_all(prob.blocks, x, states, true);
  }
  if (!have_interior) {
    const Vecd x_init = (warm && warm->size() == prob.n) ? *warm : Vecd::Zero(prob.n);
    Phase1Result ph1 = phase1(prob, opts, x_init);
    out.newton_steps += ph1.newton_steps;
    out.phase1_s = ph1.s;
    if (ph1.certified_infeasible) {
      out.status = SolveStatus::Infeasible;
      out.message = "phase 1 shift bounded away from zero";
      return out;
    }
    if (!ph1.feasible) {
      out.status = SolveStatus::NumericalError;
      out.message = "phase 1 stalled before reaching the interior";
      return out;
    }
    x = ph1.x;
    if (!eval_all(prob.blocks, x, states, true)) {
      out.status = SolveStatus::NumericalError;
      out.message = "phase 1 point lost feasibility";
      return out;
    }
  }

  const double m_total = total_barrier_dim(prob);
  double t = opts.t0;
  bool reached_gap = false;
  for (int stage = 0; stage < opts.max_stages; ++stage) {
    NewtonReport rep = center(prob, t, x, states, opts);
    out.newton_steps += rep.steps;
    if (rep.stalled && !rep.centered) break;
    if (m_total / t <= opts.gap_tol) {
      reached_gap = true;
      break;
    }
    t *= opts.mu;
  }

  out.x = x;
  out.gap = m_total / t;
  out.objective = objective_value(prob, x, states);
  out.status = reached_gap ? SolveStatus::Optimal : SolveStatus::IterationLimit;
  if (!reached_gap) out.message = "stopped before reaching target gap";
  return out;
}

}  // namespace nfl
