#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "nfl/types.hpp"

namespace nfl {

/// Affine form c0 + sum_i coeff_i * x[i] over a flat variable vector.
/// Term lists stay sorted by variable index with like terms merged.
struct LinForm {
  double c0 = 0.0;
  std::vector<std::pair<int, double>> terms;

  LinForm() = default;
  explicit LinForm(double constant) : c0(constant) {}
  static LinForm variable(int index, double coeff = 1.0) {
    LinForm f;
    if (coeff != 0.0) f.terms.emplace_back(index, coeff);
    return f;
  }

  bool is_zero() const { return c0 == 0.0 && terms.empty(); }

  LinForm& operator+=(const LinForm& other) {
    c0 += other.c0;
    if (other.terms.empty()) return *this;
    std::vector<std::pair<int, double>> merged;
    merged.reserve(terms.size() + other.terms.size());
    size_t a = 0, b = 0;
    while (a < terms.size() || b < other.terms.size()) {
      if (b == other.terms.size() || (a < terms.size() && terms[a].first < other.terms[b].first))
        merged.push_back(terms[a++]);
      else if (a == terms.size() || other.terms[b].first < terms[a].first)
        merged.push_back(other.terms[b++]);
      else {
        merged.emplace_back(terms[a].first, terms[a].second + other.terms[b].second);
        ++a;
        ++b;
      }
    }
    merged.erase(std::remove_if(merged.begin(), merged.end(),
                                [](const auto& t) { return t.second == 0.0; }),
                 merged.end());
    terms = std::move(merged);
    return *this;
  }

  LinForm& operator*=(double s) {
    if (s == 0.0) {
      c0 = 0.0;
      terms.clear();
      return *this;
    }
    c0 *= s;
    for (auto& t : terms) t.second *= s;
    return *this;
  }

  friend LinForm operator+(LinForm a, const LinForm& b) {
    a += b;
    return a;
  }
  friend LinForm operator*(LinForm a, double s) {
    a *= s;
    return a;
  }
  friend LinForm operator*(double s, LinForm a) {
    a *= s;
    return a;
  }

  double eval(const Vecd& x) const {
    double v = c0;
    for (const auto& [i, c] : terms) v += c * x[i];
    return v;
  }
};

/// Dense matrix of affine forms; the workhorse behind LMI assembly.
class AffineMatrix {
 public:
  AffineMatrix() = default;
  AffineMatrix(Index rows, Index cols) : rows_(rows), cols_(cols), at_(size_t(rows * cols)) {}

  static AffineMatrix constant(const Matd& m) {
    AffineMatrix out(m.rows(), m.cols());
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j)
        if (m(i, j) != 0.0) out(i, j) = LinForm(m(i, j));
    return out;
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }

  LinForm& operator()(Index i, Index j) { return at_[size_t(i * cols_ + j)]; }
  const LinForm& operator()(Index i, Index j) const { return at_[size_t(i * cols_ + j)]; }

  AffineMatrix transpose() const {
    AffineMatrix out(cols_, rows_);
    for (Index i = 0; i < rows_; ++i)
      for (Index j = 0; j < cols_; ++j) out(j, i) = (*this)(i, j);
    return out;
  }

  void set_block(Index r0, Index c0, const AffineMatrix& blk) {
    for (Index i = 0; i < blk.rows(); ++i)
      for (Index j = 0; j < blk.cols(); ++j) (*this)(r0 + i, c0 + j) = blk(i, j);
  }

  void add_in_place(const AffineMatrix& other) {
    for (size_t k = 0; k < at_.size(); ++k) at_[k] += other.at_[k];
  }

  friend AffineMatrix operator+(AffineMatrix a, const AffineMatrix& b) {
    a.add_in_place(b);
    return a;
  }

  friend AffineMatrix operator*(const Matd& lhs, const AffineMatrix& rhs) {
    AffineMatrix out(lhs.rows(), rhs.cols());
    for (Index i = 0; i < lhs.rows(); ++i)
      for (Index k = 0; k < lhs.cols(); ++k) {
        const double c = lhs(i, k);
        if (c == 0.0) continue;
        for (Index j = 0; j < rhs.cols(); ++j) out(i, j) += rhs(k, j) * c;
      }
    return out;
  }

  friend AffineMatrix operator*(const AffineMatrix& lhs, const Matd& rhs) {
    AffineMatrix out(lhs.rows(), rhs.cols());
    for (Index i = 0; i < lhs.rows(); ++i)
      for (Index k = 0; k < lhs.cols(); ++k) {
        const LinForm& f = lhs(i, k);
        if (f.is_zero()) continue;
        for (Index j = 0; j < rhs.cols(); ++j)
          if (rhs(k, j) != 0.0) out(i, j) += f * rhs(k, j);
      }
    return out;
  }

  AffineMatrix operator*(double s) const {
    AffineMatrix out(rows_, cols_);
    for (Index i = 0; i < rows_; ++i)
      for (Index j = 0; j < cols_; ++j) out(i, j) = (*this)(i, j) * s;
    return out;
  }

  static AffineMatrix vstack(const AffineMatrix& top, const AffineMatrix& bottom) {
    AffineMatrix out(top.rows() + bottom.rows(), top.cols());
    out.set_block(0, 0, top);
    out.set_block(top.rows(), 0, bottom);
    return out;
  }

  Matd eval(const Vecd& x) const {
    Matd m(rows_, cols_);
    for (Index i = 0; i < rows_; ++i)
      for (Index j = 0; j < cols_; ++j) m(i, j) = (*this)(i, j).eval(x);
    return m;
  }

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<LinForm> at_;
};

/// Flat variable vector with typed matrix views (symmetric, diagonal, full).
class VarSpace {
 public:
  struct SymVar {
    int offset = 0;
    Index d = 0;
    int index(Index i, Index j) const {
      if (i > j) std::swap(i, j);
      return offset + int(j * (j + 1) / 2 + i);
    }
    AffineMatrix expr() const {
      AffineMatrix m(d, d);
      for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) m(i, j) = LinForm::variable(index(i, j));
      return m;
    }
    Matd value(const Vecd& x) const {
      Matd m(d, d);
      for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) m(i, j) = x[index(i, j)];
      return m;
    }
    void set(Vecd& x, const Matd& m) const {
      for (Index i = 0; i < d; ++i)
        for (Index j = i; j < d; ++j) x[index(i, j)] = 0.5 * (m(i, j) + m(j, i));
    }
  };

  struct DiagVar {
    int offset = 0;
    Index d = 0;
    int index(Index i) const { return offset + int(i); }
    AffineMatrix expr() const {
      AffineMatrix m(d, d);
      for (Index i = 0; i < d; ++i) m(i, i) = LinForm::variable(index(i));
      return m;
    }
    Vecd value(const Vecd& x) const { return x.segment(offset, d); }
    void set(Vecd& x, const Vecd& v) const { x.segment(offset, d) = v; }
  };

  struct MatVar {
    int offset = 0;
    Index r = 0, c = 0;
    int index(Index i, Index j) const { return offset + int(i * c + j); }
    AffineMatrix expr() const {
      AffineMatrix m(r, c);
      for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = LinForm::variable(index(i, j));
      return m;
    }
    Matd value(const Vecd& x) const {
      Matd m(r, c);
      for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = x[index(i, j)];
      return m;
    }
    void set(Vecd& x, const Matd& m) const {
      for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) x[index(i, j)] = m(i, j);
    }
  };

  SymVar add_symmetric(Index d) {
    SymVar v{size_, d};
    size_ += int(d * (d + 1) / 2);
    return v;
  }
  DiagVar add_diagonal(Index d) {
    DiagVar v{size_, d};
    size_ += int(d);
    return v;
  }
  MatVar add_matrix(Index r, Index c) {
    MatVar v{size_, r, c};
    size_ += int(r * c);
    return v;
  }

  int size() const { return size_; }

 private:
  int size_ = 0;
};

}  // namespace nfl
