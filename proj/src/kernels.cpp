#include "seqscope/kernels.hpp"

#include <algorithm>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace seqscope::kernels {

namespace {

struct Ranker {
  std::span<const std::uint64_t> keys;

  std::uint64_t key(std::size_t row) const { return keys.empty() ? row : keys[row]; }
  // True when a ranks strictly ahead of b.
  bool operator()(const ScoredRow& a, const ScoredRow& b) const {
    if (a.score != b.score) return a.score > b.score;
    return key(a.row) < key(b.row);
  }
};

void check_scan(const DotScan& scan) {
  if (scan.rows == nullptr) throw std::invalid_argument("top_k_dot: no matrix");
  if (scan.query.size() != scan.rows->cols())
    throw std::invalid_argument("top_k_dot: query dimension " + std::to_string(scan.query.size()) +
                                " does not match row dimension " +
                                std::to_string(scan.rows->cols()));
  const auto n = scan.rows->rows();
  if (!scan.allowed.empty() && scan.allowed.size() != n)
    throw std::invalid_argument("top_k_dot: filter size mismatch");
  if (!scan.row_scale.empty() && scan.row_scale.size() != n)
    throw std::invalid_argument("top_k_dot: scale size mismatch");
  if (!scan.tie_keys.empty() && scan.tie_keys.size() != n)
    throw std::invalid_argument("top_k_dot: key size mismatch");
}

// Bounded heap keeping the best k rows; heap front is the worst kept row.
void scan_range(const DotScan& scan, std::size_t begin, std::size_t end, const Ranker& better,
                std::vector<ScoredRow>& heap) {
  const Matrix& m = *scan.rows;
  const std::size_t d = m.cols();
  const double* q = scan.query.data();
  for (std::size_t i = begin; i < end; ++i) {
    if (!scan.allowed.empty() && !scan.allowed[i]) continue;
    const double* r = m.data() + i * d;
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += r[c] * q[c];
    if (!scan.row_scale.empty()) s *= scan.row_scale[i];
    ScoredRow cand{s, i};
    if (heap.size() < scan.k) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end(), better);
    } else if (better(cand, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), better);
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end(), better);
    }
  }
}

}  // namespace

namespace serial {

std::vector<ScoredRow> top_k_dot(const DotScan& scan) {
  check_scan(scan);
  std::vector<ScoredRow> heap;
  if (scan.k == 0) return heap;
  Ranker better{scan.tie_keys};
  heap.reserve(scan.k + 1);
  scan_range(scan, 0, scan.rows->rows(), better, heap);
  std::sort(heap.begin(), heap.end(), better);
  return heap;
}

Matrix pairwise_sq_distances(const Matrix& x) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = x(i, c) - x(j, c);
        s += diff * diff;
      }
      out(i, j) = s;
    }
  }
  return out;
}

double tsne_gradient(const Matrix& p, const Matrix& y, Matrix& grad) {
  const std::size_t n = y.rows();
  Matrix num(n, n);
  std::vector<double> row_sum(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dx = y(i, 0) - y(j, 0);
      const double dy = y(i, 1) - y(j, 1);
      num(i, j) = 1.0 / (1.0 + dx * dx + dy * dy);
      row_sum[i] += num(i, j);
    }
  }
  double z = 0.0;
  for (double s : row_sum) z += s;
  grad = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    double gx = 0.0, gy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double mult = (p(i, j) - num(i, j) / z) * num(i, j);
      gx += mult * (y(i, 0) - y(j, 0));
      gy += mult * (y(i, 1) - y(j, 1));
    }
    grad(i, 0) = 4.0 * gx;
    grad(i, 1) = 4.0 * gy;
  }
  return z;
}

}  // namespace serial

namespace parallel {

std::vector<ScoredRow> top_k_dot(const DotScan& scan) {
  check_scan(scan);
  if (scan.k == 0) return {};
  Ranker better{scan.tie_keys};
  const std::size_t n = scan.rows->rows();
  const int threads = max_threads();
  std::vector<std::vector<ScoredRow>> partial(static_cast<std::size_t>(threads));

#pragma omp parallel num_threads(threads)
  {
#ifdef _OPENMP
    const auto t = static_cast<std::size_t>(omp_get_thread_num());
    const auto nt = static_cast<std::size_t>(omp_get_num_threads());
#else
    const std::size_t t = 0, nt = 1;
#endif
    const std::size_t chunk = (n + nt - 1) / nt;
    const std::size_t begin = std::min(n, t * chunk);
    const std::size_t end = std::min(n, begin + chunk);
    auto& heap = partial[t];
    heap.reserve(scan.k + 1);
    scan_range(scan, begin, end, better, heap);
  }

  std::vector<ScoredRow> merged;
  for (auto& h : partial) merged.insert(merged.end(), h.begin(), h.end());
  const std::size_t keep = std::min(scan.k, merged.size());
  std::partial_sort(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(keep),
                    merged.end(), better);
  merged.resize(keep);
  return merged;
}

Matrix pairwise_sq_distances(const Matrix& x) {
  const auto n = static_cast<std::ptrdiff_t>(x.rows());
  const std::size_t d = x.cols();
  Matrix out(x.rows(), x.rows());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < x.rows(); ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = x(i, c) - x(j, c);
        s += diff * diff;
      }
      out(i, j) = s;
    }
  }
  return out;
}

double tsne_gradient(const Matrix& p, const Matrix& y, Matrix& grad) {
  const std::size_t n = y.rows();
  const auto sn = static_cast<std::ptrdiff_t>(n);
  Matrix num(n, n);
  std::vector<double> row_sum(n, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < sn; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dx = y(i, 0) - y(j, 0);
      const double dy = y(i, 1) - y(j, 1);
      num(i, j) = 1.0 / (1.0 + dx * dx + dy * dy);
      row_sum[i] += num(i, j);
    }
  }
  double z = 0.0;
  for (double s : row_sum) z += s;
  grad = Matrix(n, 2);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < sn; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double gx = 0.0, gy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double mult = (p(i, j) - num(i, j) / z) * num(i, j);
      gx += mult * (y(i, 0) - y(j, 0));
      gy += mult * (y(i, 1) - y(j, 1));
    }
    grad(i, 0) = 4.0 * gx;
    grad(i, 1) = 4.0 * gy;
  }
  return z;
}

}  // namespace parallel

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

std::vector<ScoredRow> top_k_dot(const DotScan& scan, Exec exec) {
  return exec == Exec::serial ? serial::top_k_dot(scan) : parallel::top_k_dot(scan);
}

Matrix pairwise_sq_distances(const Matrix& points, Exec exec) {
  return exec == Exec::serial ? serial::pairwise_sq_distances(points)
                              : parallel::pairwise_sq_distances(points);
}

double tsne_gradient(const Matrix& p, const Matrix& y, Matrix& grad, Exec exec) {
  return exec == Exec::serial ? serial::tsne_gradient(p, y, grad)
                              : parallel::tsne_gradient(p, y, grad);
}

}  // namespace seqscope::kernels
