#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace seqscope {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  /// Appends a row; the first appended row fixes the column count of an empty matrix.
  void push_row(std::span<const double> r) {
    if (rows_ == 0) cols_ = r.size();
    assert(r.size() == cols_);
    data_.insert(data_.end(), r.begin(), r.end());
    ++rows_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace linalg {

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// out = m * x (out is overwritten).
inline void matvec(const Matrix& m, std::span<const double> x, std::span<double> out) {
  assert(x.size() == m.cols() && out.size() == m.rows());
  const std::size_t n = m.cols();
  const double* p = m.data();
  for (std::size_t r = 0; r < m.rows(); ++r, p += n) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += p[c] * x[c];
    out[r] = s;
  }
}

/// out += m[row_begin:row_begin+out.size(), :] * x
inline void matvec_rows_add(const Matrix& m, std::size_t row_begin, std::span<const double> x,
                            std::span<double> out) {
  assert(x.size() == m.cols() && row_begin + out.size() <= m.rows());
  const std::size_t n = m.cols();
  const double* p = m.data() + row_begin * n;
  for (std::size_t r = 0; r < out.size(); ++r, p += n) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += p[c] * x[c];
    out[r] += s;
  }
}

/// out += m[row_begin:row_begin+g.size(), :]^T * g
inline void matvec_t_rows_add(const Matrix& m, std::size_t row_begin, std::span<const double> g,
                              std::span<double> out) {
  assert(out.size() == m.cols() && row_begin + g.size() <= m.rows());
  const std::size_t n = m.cols();
  const double* p = m.data() + row_begin * n;
  for (std::size_t r = 0; r < g.size(); ++r, p += n) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    for (std::size_t c = 0; c < n; ++c) out[c] += p[c] * gr;
  }
}

/// m[row_begin + r, :] += g[r] * x for each r.
inline void outer_rows_add(Matrix& m, std::size_t row_begin, std::span<const double> g,
                           std::span<const double> x) {
  assert(x.size() == m.cols() && row_begin + g.size() <= m.rows());
  const std::size_t n = m.cols();
  double* p = m.data() + row_begin * n;
  for (std::size_t r = 0; r < g.size(); ++r, p += n) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    for (std::size_t c = 0; c < n; ++c) p[c] += gr * x[c];
  }
}

}  // namespace linalg
}  // namespace seqscope
