#pragma once

// Dense vectors and matrices plus the mixed L_{q,p} norm algebra the rest of
// the library is written against.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace polyrad {

using Vector = std::vector<double>;

// An extended-real norm exponent in [1, inf]. The conjugate exponent is
// computed once at construction and swapped by dual(), so dual(dual(e)) == e
// holds bit-for-bit for every exponent, not only 1, 2 and inf.
class Exponent {
 public:
  explicit Exponent(double value) {
    if (std::isnan(value) || value < 1.0) {
      throw std::invalid_argument("norm exponent must lie in [1, inf], got " +
                                  std::to_string(value));
    }
    if (std::isinf(value)) {
      infinite_ = true;
      value_ = 0.0;
      dual_value_ = 1.0;
      dual_infinite_ = false;
    } else if (value == 1.0) {
      value_ = 1.0;
      dual_value_ = 0.0;
      dual_infinite_ = true;
    } else if (value == 2.0) {
      value_ = 2.0;
      dual_value_ = 2.0;
      dual_infinite_ = false;
    } else {
      value_ = value;
      dual_value_ = value / (value - 1.0);
      dual_infinite_ = false;
    }
  }

  static Exponent infinity() { return Exponent(std::numeric_limits<double>::infinity()); }

  bool is_infinite() const { return infinite_; }

  // Finite value; +inf for the infinite exponent. Callers that raise to this
  // power must branch on is_infinite() first.
  double value() const {
    return infinite_ ? std::numeric_limits<double>::infinity() : value_;
  }

  // 1/value, exactly 0 for inf.
  double reciprocal() const { return infinite_ ? 0.0 : 1.0 / value_; }

  Exponent dual() const {
    Exponent d;
    d.value_ = dual_value_;
    d.infinite_ = dual_infinite_;
    d.dual_value_ = value_;
    d.dual_infinite_ = infinite_;
    return d;
  }

  // k * e, used for ||W||_{q,kp}; inf stays inf.
  Exponent scaled(double k) const {
    if (k < 1.0) throw std::invalid_argument("exponent scale factor must be >= 1");
    return infinite_ ? *this : Exponent(value_ * k);
  }

  friend bool operator==(const Exponent& a, const Exponent& b) {
    return a.infinite_ == b.infinite_ && (a.infinite_ || a.value_ == b.value_);
  }

  std::string to_string() const {
    if (infinite_) return "inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, value_);
    return std::string(buf, res.ptr);
  }

 private:
  Exponent() = default;

  double value_ = 1.0;
  bool infinite_ = false;
  double dual_value_ = 0.0;
  bool dual_infinite_ = true;
};

inline Exponent dual_exponent(Exponent p) { return p.dual(); }

// True when 1/p + 1/q = 1 up to rounding in the reciprocals.
inline bool are_dual(Exponent p, Exponent q) {
  return std::abs(p.reciprocal() + q.reciprocal() - 1.0) <= 1e-12;
}

// Row-major dense matrix with at least one row and one column.
class Matrix {
 public:
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    check_shape();
    check_finite();
  }

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
      : rows_(rows), cols_(cols), data_(std::move(entries)) {
    check_shape();
    if (data_.size() != rows_ * cols_) {
      throw std::invalid_argument("matrix entry count does not match its shape");
    }
    check_finite();
  }

  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    check_shape();
    data_.reserve(rows_ * cols_);
    for (const auto& row : rows) {
      if (row.size() != cols_) throw std::invalid_argument("ragged matrix literal");
      data_.insert(data_.end(), row.begin(), row.end());
    }
    check_finite();
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

  std::span<const double> entries() const { return data_; }
  std::span<double> entries() { return data_; }

  Matrix& operator*=(double c) {
    for (double& v : data_) v *= c;
    return *this;
  }
  Matrix& operator+=(const Matrix& other) {
    require_same_shape(other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }
  Matrix& operator-=(const Matrix& other) {
    require_same_shape(other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
  }

  friend Matrix operator*(double c, Matrix m) { return m *= c; }
  friend Matrix operator*(Matrix m, double c) { return m *= c; }
  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

 private:
  void check_shape() const {
    if (rows_ == 0 || cols_ == 0) throw std::invalid_argument("matrix must be at least 1x1");
  }
  void check_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) throw std::invalid_argument("matrix entries must be finite");
    }
  }
  void require_same_shape(const Matrix& other) const {
    if (!same_shape(other)) throw std::invalid_argument("matrix shape mismatch");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// (sum |x_j|^p)^(1/p), or max |x_j| for p = inf.
inline double vector_norm(std::span<const double> x, Exponent p) {
  if (p.is_infinite()) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
  }
  const double e = p.value();
  if (e == 1.0) {
    double s = 0.0;
    for (double v : x) s += std::abs(v);
    return s;
  }
  if (e == 2.0) {
    double s = 0.0;
    for (double v : x) s += v * v;
    if (s > 0.0 && std::isfinite(s) && s >= std::numeric_limits<double>::min()) {
      return std::sqrt(s);
    }
  } else {
    double s = 0.0;
    for (double v : x) s += std::pow(std::abs(v), e);
    if (s > 0.0 && std::isfinite(s) && s >= std::numeric_limits<double>::min()) {
      return std::pow(s, 1.0 / e);
    }
  }
  // Zero, or the plain sum under/overflowed: redo it relative to the largest
  // magnitude.
  double amax = 0.0;
  for (double v : x) amax = std::max(amax, std::abs(v));
  if (amax == 0.0) return 0.0;
  double s = 0.0;
  for (double v : x) s += std::pow(std::abs(v) / amax, e);
  return amax * std::pow(s, 1.0 / e);
}

// L_q norm of every row.
inline Vector row_norms(const Matrix& w, Exponent q) {
  Vector norms(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) norms[i] = vector_norm(w.row(i), q);
  return norms;
}

// ||W||_{q,p}: L_q norm of each row, then L_p norm across rows.
inline double matrix_norm_qp(const Matrix& w, Exponent q, Exponent p) {
  return vector_norm(row_norms(w, q), p);
}

inline double frobenius_norm(const Matrix& w) { return vector_norm(w.entries(), Exponent(2.0)); }

// Index of the row with the largest L_q norm; the lowest index wins ties.
inline std::size_t max_row_index_lq(const Matrix& w, Exponent q) {
  std::size_t best = 0;
  double best_norm = -1.0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double n = vector_norm(w.row(i), q);
    if (n > best_norm) {
      best_norm = n;
      best = i;
    }
  }
  return best;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vector matvec(const Matrix& w, std::span<const double> x) {
  if (x.size() != w.cols()) {
    throw std::invalid_argument("matvec: expected input of dimension " +
                                std::to_string(w.cols()) + ", got " + std::to_string(x.size()));
  }
  Vector y(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) y[i] = dot(w.row(i), x);
  return y;
}

// W^T g
inline Vector matvec_transposed(const Matrix& w, std::span<const double> g) {
  if (g.size() != w.rows()) throw std::invalid_argument("matvec_transposed: dimension mismatch");
  Vector y(w.cols(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const auto r = w.row(i);
    for (std::size_t j = 0; j < w.cols(); ++j) y[j] += g[i] * r[j];
  }
  return y;
}

}  // namespace polyrad
