#pragma once

// Data-parallel inner loops. Each kernel has a plain serial reference and an
// OpenMP version. Floating-point reductions run in a fixed order independent
// of threading, and the two versions return bit-identical results.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "seqscope/tensor.hpp"

namespace seqscope {

enum class Exec { serial, parallel };

namespace kernels {

struct ScoredRow {
  double score = 0.0;
  std::size_t row = 0;
  friend bool operator==(const ScoredRow&, const ScoredRow&) = default;
};

/// Arguments for an exact maximum-inner-product scan over the rows of a matrix.
struct DotScan {
  const Matrix* rows = nullptr;
  std::span<const double> query;
  std::size_t k = 0;
  /// Rows with allowed[i] == 0 are skipped. Empty means all rows.
  std::span<const std::uint8_t> allowed;
  /// Multiplies each row's score (e.g. inverse norms). Empty means 1.
  std::span<const double> row_scale;
  /// Ties on score are broken by ascending key. Empty means row index.
  std::span<const std::uint64_t> tie_keys;
};

/// Top-k rows by descending score, ties by ascending tie key.
std::vector<ScoredRow> top_k_dot(const DotScan& scan, Exec exec);

/// Squared Euclidean distances between all pairs of rows.
Matrix pairwise_sq_distances(const Matrix& points, Exec exec);

/// Exact t-SNE gradient for a 2-D embedding. p is the symmetric joint
/// probability matrix (possibly exaggerated). Writes dC/dy into grad and
/// returns the normalization sum of the Student-t kernel.
double tsne_gradient(const Matrix& p, const Matrix& y, Matrix& grad, Exec exec);

namespace serial {
std::vector<ScoredRow> top_k_dot(const DotScan& scan);
Matrix pairwise_sq_distances(const Matrix& points);
double tsne_gradient(const Matrix& p, const Matrix& y, Matrix& grad);
}  // namespace serial

namespace parallel {
std::vector<ScoredRow> top_k_dot(const DotScan& scan);
Matrix pairwise_sq_distances(const Matrix& points);
double tsne_gradient(const Matrix& p, const Matrix& y, Matrix& grad);
}  // namespace parallel

int max_threads();

}  // namespace kernels
}  // namespace seqscope
