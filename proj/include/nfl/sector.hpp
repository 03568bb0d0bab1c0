#pragma once

#include <cmath>
#include <utility>

#include "nfl/network.hpp"
#include "nfl/plant.hpp"
#include "nfl/types.hpp"

namespace nfl {

/// Per-coordinate pre-activation intervals [nu_lo, nu_hi] over a state box and
/// the local tanh sector [alpha, beta] valid on them. Always nu_lo <= 0 <=
/// nu_hi and 0 < alpha <= beta = 1.
template <typename Scalar = double>
struct SectorBounds {
  Vec<Scalar> nu_lo;
  Vec<Scalar> nu_hi;
  Vec<Scalar> alpha;
  Vec<Scalar> beta;

  Index nphi() const { return nu_lo.size(); }

  /// (alpha + beta) / 2, the sector midline slope.
  Vec<Scalar> d_plus() const { return (alpha + beta) / Scalar(2); }
  /// (beta - alpha) / 2, the sector half-width.
  Vec<Scalar> d_minus() const { return (beta - alpha) / Scalar(2); }
};

/// Interval bound propagation through the hidden layers: each layer maps the
/// incoming box through W by sign-splitting, then through tanh monotonically.
/// Returns stacked (nu_lo, nu_hi) of length n_phi; sound but conservative.
template <typename Scalar>
std::pair<Vec<Scalar>, Vec<Scalar>> preactivation_bounds(const NnController<Scalar>& nn,
                                                         const StateBox<Scalar>& box) {
  nn.validate();
  if (box.dim() != nn.input_dim()) throw InvalidDimensions("box dimension != controller input");
  const Index nphi = nn.phi_dim();
  Vec<Scalar> lo = box.lower, hi = box.upper;
  Vec<Scalar> nu_lo(nphi), nu_hi(nphi);
  Index off = 0;
  for (Index i = 0; i + 1 < Index(nn.weights.size()); ++i) {
    const Mat<Scalar>& w = nn.weights[i];
    const Mat<Scalar> wp = w.cwiseMax(Scalar(0));
    const Mat<Scalar> wm = w.cwiseMin(Scalar(0));
    Vec<Scalar> l = wp * lo + wm * hi;
    Vec<Scalar> h = wp * hi + wm * lo;
    nu_lo.segment(off, l.size()) = l;
    nu_hi.segment(off, h.size()) = h;
    off += l.size();
    lo = l.array().tanh();
    hi = h.array().tanh();
  }
  return {nu_lo, nu_hi};
}

/// Local sector for tanh on [lo, hi] with 0 inside: beta = 1 and alpha the
/// secant slope at the endpoint of larger magnitude (tanh's secant slope is
/// even and decreasing in |nu|, so that is the tightest slope valid on the
/// whole interval). A zero endpoint contributes slope 1.
template <typename Scalar>
std::pair<Scalar, Scalar> tanh_sector(Scalar lo, Scalar hi) {
  if (!(lo <= Scalar(0) && Scalar(0) <= hi))
    throw InvalidInterval("pre-activation interval must contain 0");
  auto secant = [](Scalar t) {
    return t > Scalar(0) ? Scalar(std::tanh(double(t)) / double(t)) : Scalar(1);
  };
  const Scalar alpha = std::min(secant(-lo), secant(hi));
  return {alpha, Scalar(1)};
}

/// IBP bounds plus per-coordinate tanh sectors in one call.
template <typename Scalar>
SectorBounds<Scalar> sector_bounds(const NnController<Scalar>& nn, const StateBox<Scalar>& box) {
  auto [nu_lo, nu_hi] = preactivation_bounds(nn, box);
  SectorBounds<Scalar> sb;
  sb.nu_lo = nu_lo;
  sb.nu_hi = nu_hi;
  sb.alpha.resize(nu_lo.size());
  sb.beta.resize(nu_lo.size());
  for (Index j = 0; j < nu_lo.size(); ++j) {
    auto [a, b] = tanh_sector(nu_lo[j], nu_hi[j]);
    sb.alpha[j] = a;
    sb.beta[j] = b;
  }
  return sb;
}

/// Stacked sector quadratic constraint: the 2 n_phi square matrix
///   [ -2 A B Lam   (A+B) Lam ]
///   [ (A+B) Lam    -2 Lam    ]
/// whose quadratic form is nonnegative on every (nu, tanh(nu)) pair with nu in
/// the bounds, for any multiplier lambda >= 0.
template <typename Scalar>
Mat<Scalar> stacked_sector_qc(const SectorBounds<Scalar>& sb, const Arg<Vec<Scalar>>& lambda) {
  if (lambda.size() != sb.nphi()) throw InvalidDimensions("multiplier length != n_phi");
  if ((lambda.array() < Scalar(0)).any())
    throw InvalidMultiplier("sector multiplier must be componentwise nonnegative");
  const Index n = sb.nphi();
  Mat<Scalar> m = Mat<Scalar>::Zero(2 * n, 2 * n);
  const Vec<Scalar> ab = sb.alpha.cwiseProduct(sb.beta).cwiseProduct(lambda);
  const Vec<Scalar> apb = (sb.alpha + sb.beta).cwiseProduct(lambda);
  m.topLeftCorner(n, n).diagonal() = Scalar(-2) * ab;
  m.topRightCorner(n, n).diagonal() = apb;
  m.bottomLeftCorner(n, n).diagonal() = apb;
  m.bottomRightCorner(n, n).diagonal() = Scalar(-2) * lambda;
  return m;
}

/// Loop-transformed interconnection: [pi; nu_phi] = Nt [x; z_phi] with the
/// internal nonlinearity normalized into the sector [-1, 1].
template <typename Scalar = double>
struct TransformedInterconnection {
  Mat<Scalar> pi_x;  // n_u  x n_x
  Mat<Scalar> pi_z;  // n_u  x n_phi
  Mat<Scalar> nu_x;  // n_phi x n_x
  Mat<Scalar> nu_z;  // n_phi x n_phi

  Index nx() const { return pi_x.cols(); }
  Index nu_out() const { return pi_x.rows(); }
  Index nphi() const { return nu_x.rows(); }

  Mat<Scalar> dense() const {
    Mat<Scalar> n(nu_out() + nphi(), nx() + nphi());
    n << pi_x, pi_z, nu_x, nu_z;
    return n;
  }
};

namespace detail {

/// (I - C4)^{-1} with C4 = nu_w * diag(d_plus). C4 inherits the strict block
/// lower triangularity of nu_w, so I - C4 is unit triangular; a failed LU is a
/// malformed input, not a numerical accident.
template <typename Scalar>
Mat<Scalar> inverse_i_minus_c4(const Mat<Scalar>& c4) {
  const Index n = c4.rows();
  Eigen::FullPivLU<Mat<Scalar>> lu(Mat<Scalar>::Identity(n, n) - c4);
  if (!lu.isInvertible()) throw SingularTransform("I - C4 is singular");
  return lu.inverse();
}

}  // namespace detail

/// Loop transformation N -> Nt with
///   C1 = pi_w (B-A)/2,  C2 = pi_w (A+B)/2,  C3 = nu_w (B-A)/2,  C4 = nu_w (A+B)/2,
///   Nt = [ pi_x + C2 (I-C4)^{-1} nu_x    C1 + C2 (I-C4)^{-1} C3 ]
///        [       (I-C4)^{-1} nu_x             (I-C4)^{-1} C3    ].
template <typename Scalar>
TransformedInterconnection<Scalar> loop_transform(const Interconnection<Scalar>& N,
                                                  const SectorBounds<Scalar>& sb) {
  if (sb.nphi() != N.nphi()) throw InvalidDimensions("sector bounds length != n_phi");
  const Vec<Scalar> dp = sb.d_plus();
  const Vec<Scalar> dm = sb.d_minus();
  const Mat<Scalar> c1 = N.pi_w * dm.asDiagonal();
  const Mat<Scalar> c2 = N.pi_w * dp.asDiagonal();
  const Mat<Scalar> c3 = N.nu_w * dm.asDiagonal();
  const Mat<Scalar> c4 = N.nu_w * dp.asDiagonal();
  const Mat<Scalar> k = detail::inverse_i_minus_c4(c4);

  TransformedInterconnection<Scalar> nt;
  nt.nu_x = k * N.nu_x;
  nt.nu_z = k * c3;
  nt.pi_x = N.pi_x + c2 * nt.nu_x;
  nt.pi_z = c1 + c2 * nt.nu_z;
  return nt;
}

/// Normalized nonlinearity z = phi_tilde(nu) = inv(D-) (tanh(nu) - D+ nu),
/// with the convention z_j = 0 on coordinates whose sector has zero width.
template <typename Scalar>
Vec<Scalar> normalized_activation(const SectorBounds<Scalar>& sb, const Vec<Scalar>& nu) {
  const Vec<Scalar> dp = sb.d_plus();
  const Vec<Scalar> dm = sb.d_minus();
  Vec<Scalar> z(nu.size());
  for (Index j = 0; j < nu.size(); ++j) {
    const Scalar w = dm[j];
    z[j] = w > Scalar(0) ? (std::tanh(double(nu[j])) - dp[j] * nu[j]) / w : Scalar(0);
  }
  return z;
}

/// Evaluates the transformed system at x by walking the layer partition (nu_z
/// is strictly block lower triangular, so each nu_j depends only on earlier
/// z entries). Used to check behavioral equivalence against `forward`.
template <typename Scalar>
ForwardPass<Scalar> transformed_forward(const TransformedInterconnection<Scalar>& nt,
                                        const SectorBounds<Scalar>& sb, const Vec<Scalar>& x) {
  const Index nphi = nt.nphi();
  const Vec<Scalar> dp = sb.d_plus();
  const Vec<Scalar> dm = sb.d_minus();
  Vec<Scalar> nu(nphi), z(nphi);
  const Vec<Scalar> nu_from_x = nt.nu_x * x;
  for (Index j = 0; j < nphi; ++j) {
    Scalar acc = nu_from_x[j];
    for (Index i = 0; i < j; ++i) acc += nt.nu_z(j, i) * z[i];
    nu[j] = acc;
    z[j] = dm[j] > Scalar(0)
               ? (Scalar(std::tanh(double(nu[j]))) - dp[j] * nu[j]) / dm[j]
               : Scalar(0);
  }
  ForwardPass<Scalar> fp;
  fp.nu = nu;
  fp.omega = dm.cwiseProduct(z) + dp.cwiseProduct(nu);
  fp.u = nt.pi_x * x + nt.pi_z * z;
  return fp;
}

}  // namespace nfl
