#pragma once

#include "nfl/plant.hpp"
#include "nfl/types.hpp"

namespace nfl {

/// Solves the discrete algebraic Riccati equation by iterating the Riccati
/// difference equation to a fixed point. Throws ExpertSynthesisFailed when the
/// iteration does not settle (unstabilizable pair or diverging cost).
template <typename Scalar>
Mat<Scalar> solve_dare(const Mat<Scalar>& A, const Mat<Scalar>& B, const Arg<Mat<Scalar>>& Q,
                       const Arg<Mat<Scalar>>& R, int max_iter = 100000, double tol = 1e-13) {
  const Index n = A.rows();
  if (B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != B.cols() ||
      R.cols() != B.cols())
    throw InvalidDimensions("DARE dimension mismatch");
  Mat<Scalar> P = Q;
  for (int it = 0; it < max_iter; ++it) {
    const Mat<Scalar> btp = B.transpose() * P;
    const Mat<Scalar> gain = (R + btp * B).ldlt().solve(btp * A);
    // Joseph-form update keeps the iterate symmetric positive semidefinite.
    const Mat<Scalar> acl = A - B * gain;
    Mat<Scalar> next = acl.transpose() * P * acl + gain.transpose() * R * gain + Q;
    next = Scalar(0.5) * (next + next.transpose()).eval();
    const double delta = double((next - P).template lpNorm<Eigen::Infinity>());
    P = next;
    if (!P.allFinite())
      throw ExpertSynthesisFailed("Riccati iteration diverged (unstabilizable pair?)");
    if (delta <= tol * (1.0 + double(P.template lpNorm<Eigen::Infinity>()))) return P;
  }
  throw ExpertSynthesisFailed("Riccati iteration did not converge");
}

/// Discrete LQR gain K with u = -K x stabilizing, K = (R + B'PB)^{-1} B'PA.
template <typename Scalar>
Mat<Scalar> dlqr_gain(const Mat<Scalar>& A, const Mat<Scalar>& B, const Arg<Mat<Scalar>>& Q,
                      const Arg<Mat<Scalar>>& R) {
  const Mat<Scalar> P = solve_dare(A, B, Q, R);
  const Mat<Scalar> btp = B.transpose() * P;
  return (R + btp * B).ldlt().solve(btp * A);
}

}  // namespace nfl
