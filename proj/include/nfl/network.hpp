#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "nfl/types.hpp"

namespace nfl {

/// Feed-forward fully connected tanh controller u = pi(x).
///
/// Biases are not represented at all, so pi(0) = 0 holds structurally and the
/// origin stays an equilibrium of the closed loop.
template <typename Scalar = double>
struct NnController {
  std::vector<Mat<Scalar>> weights;  // W^1 .. W^{l+1}

  Index input_dim() const { return weights.front().cols(); }
  Index output_dim() const { return weights.back().rows(); }
  /// Number of hidden layers l.
  Index hidden_count() const { return Index(weights.size()) - 1; }
  /// Total hidden width n_phi = sum of hidden layer sizes.
  Index phi_dim() const {
    Index n = 0;
    for (Index i = 0; i + 1 < Index(weights.size()); ++i) n += weights[i].rows();
    return n;
  }

  /// [n_0 = n_x, n_1, ..., n_l, n_{l+1} = n_u]
  std::vector<Index> layer_sizes() const {
    std::vector<Index> sizes;
    sizes.push_back(input_dim());
    for (const auto& w : weights) sizes.push_back(w.rows());
    return sizes;
  }

  void validate() const {
    if (weights.empty()) throw InvalidDimensions("controller needs at least one weight matrix");
    for (size_t i = 0; i + 1 < weights.size(); ++i) {
      if (weights[i + 1].cols() != weights[i].rows())
        throw InvalidDimensions("weight dimensions do not chain");
    }
  }
};

/// Seeded weight initialization, uniform in +-1/sqrt(fan_in) per layer.
/// `sizes` is the full layer-size list [n_x, hidden..., n_u].
template <typename Scalar = double>
NnController<Scalar> init_controller(const std::vector<Index>& sizes, std::uint64_t seed) {
  if (sizes.size() < 2) throw InvalidDimensions("need input and output sizes");
  std::mt19937_64 rng(seed);
  NnController<Scalar> nn;
  for (size_t i = 0; i + 1 < sizes.size(); ++i) {
    const double bound = 1.0 / std::sqrt(double(sizes[i]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat<Scalar> w(sizes[i + 1], sizes[i]);
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) w(r, c) = Scalar(dist(rng));
    nn.weights.push_back(std::move(w));
  }
  return nn;
}

/// Forward pass through the controller, keeping the stacked pre- and
/// post-activation vectors used by the interconnection identity.
template <typename Scalar = double>
struct ForwardPass {
  Vec<Scalar> u;      // pi(x)
  Vec<Scalar> nu;     // stacked pre-activations, length n_phi
  Vec<Scalar> omega;  // stacked tanh outputs, length n_phi
};

template <typename Scalar>
ForwardPass<Scalar> forward(const NnController<Scalar>& nn, const Arg<Vec<Scalar>>& x) {
  nn.validate();
  if (x.size() != nn.input_dim()) throw InvalidDimensions("state dimension mismatch");
  ForwardPass<Scalar> fp;
  fp.nu.resize(nn.phi_dim());
  fp.omega.resize(nn.phi_dim());
  Vec<Scalar> layer_in = x;
  Index off = 0;
  for (Index i = 0; i + 1 < Index(nn.weights.size()); ++i) {
    Vec<Scalar> nu_i = nn.weights[i] * layer_in;
    Vec<Scalar> om_i = nu_i.array().tanh();
    fp.nu.segment(off, nu_i.size()) = nu_i;
    fp.omega.segment(off, om_i.size()) = om_i;
    off += nu_i.size();
    layer_in = om_i;
  }
  fp.u = nn.weights.back() * layer_in;
  return fp;
}

template <typename Scalar>
Vec<Scalar> evaluate(const NnController<Scalar>& nn, const Arg<Vec<Scalar>>& x) {
  return forward(nn, x).u;
}

/// Block matrix N of the neural-feedback-loop isolation
///   [pi; nu_phi] = N [x; omega_phi],  omega_phi = tanh(nu_phi):
/// the nonlinearity is pulled out and everything linear lands in N.
template <typename Scalar = double>
struct Interconnection {
  Mat<Scalar> pi_x;  // n_u  x n_x
  Mat<Scalar> pi_w;  // n_u  x n_phi
  Mat<Scalar> nu_x;  // n_phi x n_x
  Mat<Scalar> nu_w;  // n_phi x n_phi, strictly block lower triangular

  Index nx() const { return pi_x.cols(); }
  Index nu_out() const { return pi_x.rows(); }
  Index nphi() const { return nu_x.rows(); }

  Mat<Scalar> dense() const {
    Mat<Scalar> n(nu_out() + nphi(), nx() + nphi());
    n << pi_x, pi_w, nu_x, nu_w;
    return n;
  }
};

/// Assembles N from the controller weights: W^1 feeds the first block row of
/// nu_x, W^2..W^l sit on the block subdiagonal of nu_w, W^{l+1} in the last
/// block column of pi_w.
template <typename Scalar>
Interconnection<Scalar> interconnection(const NnController<Scalar>& nn) {
  nn.validate();
  const Index nx = nn.input_dim();
  const Index npi = nn.output_dim();
  const Index nphi = nn.phi_dim();
  const Index l = nn.hidden_count();

  Interconnection<Scalar> N;
  N.pi_x = Mat<Scalar>::Zero(npi, nx);
  N.pi_w = Mat<Scalar>::Zero(npi, nphi);
  N.nu_x = Mat<Scalar>::Zero(nphi, nx);
  N.nu_w = Mat<Scalar>::Zero(nphi, nphi);

  if (l == 0) {
    N.pi_x = nn.weights[0];
    return N;
  }

  std::vector<Index> offs(l + 1, 0);
  for (Index i = 0; i < l; ++i) offs[i + 1] = offs[i] + nn.weights[i].rows();

  N.nu_x.topRows(nn.weights[0].rows()) = nn.weights[0];
  for (Index i = 1; i < l; ++i)
    N.nu_w.block(offs[i], offs[i - 1], nn.weights[i].rows(), nn.weights[i].cols()) =
        nn.weights[i];
  N.pi_w.rightCols(nn.weights[l].cols()) = nn.weights[l];
  return N;
}

/// Inverse of `interconnection`: recovers the weights, rejecting any N whose
/// entries stray outside the legal feed-forward pattern by more than tol.
template <typename Scalar>
NnController<Scalar> network_from_interconnection(const Interconnection<Scalar>& N,
                                                  const std::vector<Index>& sizes,
                                                  double tol = 1e-12) {
  if (sizes.size() < 2) throw InvalidDimensions("need input and output sizes");
  const Index l = Index(sizes.size()) - 2;
  Index nphi = 0;
  for (Index i = 1; i <= l; ++i) nphi += sizes[i];
  if (N.nx() != sizes.front() || N.nu_out() != sizes.back() || N.nphi() != nphi)
    throw InvalidDimensions("interconnection dimensions do not match layer sizes");

  if (l == 0) {
    NnController<Scalar> nn;
    nn.weights.push_back(N.pi_x);
    return nn;
  }

  auto assert_zero = [&](const Mat<Scalar>& block, const char* what) {
    if (block.size() > 0 && block.cwiseAbs().maxCoeff() > tol)
      throw MalformedN(std::string("nonzero entries outside the legal pattern: ") + what);
  };

  std::vector<Index> offs(l + 1, 0);
  for (Index i = 0; i < l; ++i) offs[i + 1] = offs[i] + sizes[i + 1];

  assert_zero(N.pi_x, "pi_x");
  assert_zero(N.pi_w.leftCols(nphi - sizes[l]), "pi_w outside last block column");
  assert_zero(N.nu_x.bottomRows(nphi - sizes[1]), "nu_x below first block row");

  Mat<Scalar> nu_w_rem = N.nu_w;
  for (Index i = 1; i < l; ++i)
    nu_w_rem.block(offs[i], offs[i - 1], sizes[i + 1], sizes[i]).setZero();
  assert_zero(nu_w_rem, "nu_w outside block subdiagonal");

  NnController<Scalar> nn;
  nn.weights.push_back(N.nu_x.topRows(sizes[1]));
  for (Index i = 1; i < l; ++i)
    nn.weights.push_back(N.nu_w.block(offs[i], offs[i - 1], sizes[i + 1], sizes[i]));
  nn.weights.push_back(N.pi_w.rightCols(sizes[l]));
  nn.validate();
  return nn;
}

/// Scales the output layer in place; used to build the destabilized
/// fine-tuning fixture.
template <typename Scalar>
NnController<Scalar> scale_output_layer(NnController<Scalar> nn, Scalar factor) {
  nn.weights.back() *= factor;
  return nn;
}

}  // namespace nfl
