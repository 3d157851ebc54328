#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "seqscope/projection.hpp"

namespace seqscope {

namespace {

constexpr double kEigenTol = 1e-10;
constexpr std::size_t kMaxEigenIters = 10000;

// Cyclic Jacobi rotations for a small symmetric matrix. Returns eigenvalues;
// columns of vecs are the matching eigenvectors.
std::vector<double> jacobi_eigen(Matrix a, Matrix& vecs) {
  const std::size_t n = a.rows();
  vecs = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) vecs(i, i) = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-300) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vecs(k, p), vkq = vecs(k, q);
          vecs(k, p) = c * vkp - s * vkq;
          vecs(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<double> vals(n);
  for (std::size_t i = 0; i < n; ++i) vals[i] = a(i, i);
  return vals;
}

// Modified Gram-Schmidt on the columns of v (n x p). Columns that vanish are
// replaced by fresh random directions so the block keeps full rank.
void orthonormalize(Matrix& v, std::mt19937_64& rng) {
  const std::size_t n = v.rows(), p = v.cols();
  std::normal_distribution<double> gauss;
  for (std::size_t j = 0; j < p; ++j) {
    for (int attempt = 0; attempt < 4; ++attempt) {
      double before = 0.0;
      for (std::size_t i = 0; i < n; ++i) before += v(i, j) * v(i, j);
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < j; ++k) {
          double d = 0.0;
          for (std::size_t i = 0; i < n; ++i) d += v(i, k) * v(i, j);
          for (std::size_t i = 0; i < n; ++i) v(i, j) -= d * v(i, k);
        }
      }
      double nrm = 0.0;
      for (std::size_t i = 0; i < n; ++i) nrm += v(i, j) * v(i, j);
      nrm = std::sqrt(nrm);
      if (nrm > 1e-10 * std::sqrt(before) && nrm > 1e-300) {
        for (std::size_t i = 0; i < n; ++i) v(i, j) /= nrm;
        break;
      }
      for (std::size_t i = 0; i < n; ++i) v(i, j) = gauss(rng);
    }
  }
}

Matrix multiply(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

struct EigenPairs {
  std::vector<double> values;  // descending
  Matrix vectors;              // [n x count]
};

// Top `count` algebraic eigenpairs of a symmetric matrix by block power
// iteration with a Rayleigh-Ritz step on each iterate.
EigenPairs top_eigenpairs(const Matrix& b, std::size_t count) {
  const std::size_t n = b.rows();
  const std::size_t p = std::min(n, std::max<std::size_t>(count + 4, 2 * count));
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> gauss;
  Matrix v(n, p);
  for (double& x : v.values()) x = gauss(rng);
  orthonormalize(v, rng);

  double scale = 0.0;
  for (double x : b.values()) scale = std::max(scale, std::abs(x));
  EigenPairs out;
  if (scale == 0.0) {
    out.values.assign(count, 0.0);
    out.vectors = Matrix(n, count);
    for (std::size_t j = 0; j < std::min(count, n); ++j) out.vectors(j, j) = 1.0;
    return out;
  }

  std::vector<double> ritz;
  Matrix rvecs;
  for (std::size_t iter = 0; iter < kMaxEigenIters; ++iter) {
    Matrix bv = multiply(b, v);
    // Rayleigh-Ritz: T = V^T B V.
    Matrix t(p, p);
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j) {
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) s += v(r, i) * bv(r, j);
        t(i, j) = s;
      }
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = i + 1; j < p; ++j) t(i, j) = t(j, i) = 0.5 * (t(i, j) + t(j, i));
    Matrix w;
    ritz = jacobi_eigen(t, w);
    std::vector<std::size_t> order(p);
    for (std::size_t i = 0; i < p; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) { return ritz[a] > ritz[c]; });

    // Ritz vectors and their residuals for the wanted pairs.
    rvecs = Matrix(n, count);
    double worst = 0.0;
    for (std::size_t j = 0; j < count && j < p; ++j) {
      const std::size_t c = order[j];
      for (std::size_t r = 0; r < n; ++r) {
        double x = 0.0, bx = 0.0;
        for (std::size_t k = 0; k < p; ++k) {
          x += v(r, k) * w(k, c);
          bx += bv(r, k) * w(k, c);
        }
        rvecs(r, j) = x;
        const double res = bx - ritz[c] * x;
        worst = std::max(worst, std::abs(res));
      }
    }
    std::vector<double> sorted(count, 0.0);
    for (std::size_t j = 0; j < count && j < p; ++j) sorted[j] = ritz[order[j]];
    out.values = sorted;
    out.vectors = rvecs;
    if (worst <= kEigenTol * scale || p == n) break;

    v = std::move(bv);
    orthonormalize(v, rng);
  }
  return out;
}

BBox tight_bbox(const Matrix& coords) {
  BBox b;
  if (coords.rows() == 0) return b;
  b.min_x = b.max_x = coords(0, 0);
  b.min_y = b.max_y = coords(0, 1);
  for (std::size_t i = 1; i < coords.rows(); ++i) {
    b.min_x = std::min(b.min_x, coords(i, 0));
    b.max_x = std::max(b.max_x, coords(i, 0));
    b.min_y = std::min(b.min_y, coords(i, 1));
    b.max_y = std::max(b.max_y, coords(i, 1));
  }
  return b;
}

// Gaussian conditional probabilities for one row, bandwidth found by bisection
// on the precision so the entropy matches log(perplexity).
void conditional_row(const Matrix& d2, std::size_t i, double perplexity, std::span<double> row) {
  const std::size_t n = d2.rows();
  const double target = std::log(perplexity);
  double beta = 1.0, lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 200; ++iter) {
    double min_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) min_d = std::min(min_d, d2(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = j == i ? 0.0 : std::exp(-beta * (d2(i, j) - min_d));
      sum += row[j];
    }
    double h = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      row[j] /= sum;
      h += beta * (d2(i, j) - min_d) * row[j];
    }
    h += std::log(sum);
    const double diff = h - target;
    if (std::abs(diff) < 1e-5) break;
    if (diff > 0) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
    } else {
      hi = beta;
      beta = std::isinf(lo) ? beta / 2.0 : 0.5 * (beta + lo);
    }
  }
}

double kl_divergence(const Matrix& p, const Matrix& y) {
  const std::size_t n = y.rows();
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
      z += 1.0 / (1.0 + dx * dx + dy * dy);
    }
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || p(i, j) <= 0.0) continue;
      const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
      const double q = 1.0 / (1.0 + dx * dx + dy * dy) / z;
      kl += p(i, j) * std::log(p(i, j) / std::max(q, 1e-300));
    }
  return kl;
}

}  // namespace

Layout make_layout(Matrix coords) {
  for (double v : coords.values())
    if (!std::isfinite(v)) throw ProjectionError("layout coordinates must be finite");
  Layout l;
  l.ids.resize(coords.rows());
  for (std::size_t i = 0; i < l.ids.size(); ++i) l.ids[i] = i;
  l.bbox = tight_bbox(coords);
  l.coords = std::move(coords);
  return l;
}

// ---------------------------------------------------------------------------

Layout classical_mds(const Matrix& d) {
  const std::size_t n = d.rows();
  if (n == 0) throw ProjectionError("classical MDS needs at least one point");
  if (d.cols() != n) throw ProjectionError("distance matrix must be square");
  for (std::size_t i = 0; i < n; ++i) {
    if (d(i, i) != 0.0) throw ProjectionError("distance matrix must have a zero diagonal");
    for (std::size_t j = 0; j < n; ++j) {
      if (!(d(i, j) >= 0.0) || !std::isfinite(d(i, j))) throw ProjectionError("distances must be finite and nonnegative");
      if (std::abs(d(i, j) - d(j, i)) > 1e-9 * std::max(1.0, std::abs(d(i, j))))
        throw ProjectionError("distance matrix must be symmetric");
    }
  }

  Matrix b(n, n);
  std::vector<double> row_mean(n, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double sq = d(i, j) * d(i, j);
      b(i, j) = sq;
      row_mean[i] += sq;
    }
    grand += row_mean[i];
    row_mean[i] /= static_cast<double>(n);
  }
  grand /= static_cast<double>(n) * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) b(i, j) = -0.5 * (b(i, j) - row_mean[i] - row_mean[j] + grand);

  const auto eig = top_eigenpairs(b, 2);
  Matrix coords(n, 2);
  for (std::size_t k = 0; k < 2; ++k) {
    const double lambda = std::max(0.0, eig.values[k]);
    const double s = std::sqrt(lambda);
    for (std::size_t i = 0; i < n; ++i) coords(i, k) = s * eig.vectors(i, k);
  }
  return make_layout(std::move(coords));
}

// ---------------------------------------------------------------------------

Layout tsne(const Matrix& x, const TsneOptions& opt) {
  const std::size_t n = x.rows();
  if (n < 2) throw ProjectionError("t-SNE needs at least two points");
  if (!(opt.perplexity > 0.0)) throw ProjectionError("perplexity must be positive");
  if (opt.perplexity >= static_cast<double>(n))
    throw ProjectionError("perplexity must be smaller than the number of points");

  const Matrix d2 = kernels::pairwise_sq_distances(x, opt.exec);
  Matrix cond(n, n);
  for (std::size_t i = 0; i < n; ++i) conditional_row(d2, i, opt.perplexity, cond.row(i));
  Matrix p(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      p(i, j) = i == j ? 0.0 : std::max((cond(i, j) + cond(j, i)) / (2.0 * static_cast<double>(n)), 1e-12);

  constexpr std::size_t kStopLying = 250;
  constexpr double kExaggeration = 12.0;
  constexpr double kLearningRate = 200.0;

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> gauss(0.0, 1e-4);
  Matrix y(n, 2);
  for (double& v : y.values()) v = gauss(rng);
  Matrix update(n, 2), gains(n, 2, 1.0), grad;
  Matrix exaggerated = p;
  for (double& v : exaggerated.values()) v *= kExaggeration;

  for (std::size_t iter = 1; iter <= opt.iterations; ++iter) {
    const bool lying = iter <= kStopLying;
    const double momentum = lying ? 0.5 : 0.8;
    kernels::tsne_gradient(lying ? exaggerated : p, y, grad, opt.exec);
    for (std::size_t i = 0; i < y.size(); ++i) {
      double& g = gains.values()[i];
      const double gr = grad.values()[i];
      double& u = update.values()[i];
      g = ((gr > 0.0) != (u > 0.0)) ? g + 0.2 : g * 0.8;
      g = std::max(g, 0.01);
      u = momentum * u - kLearningRate * g * gr;
      y.values()[i] += u;
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += y(i, 0);
      my += y(i, 1);
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      y(i, 0) -= mx;
      y(i, 1) -= my;
    }
    if (opt.on_report && ((opt.report_every && iter % opt.report_every == 0) || iter == opt.iterations))
      opt.on_report(iter, kl_divergence(p, y));
  }
  return make_layout(std::move(y));
}

// ---------------------------------------------------------------------------

Layout custom_position_projection(const Matrix& vectors, std::span<const SequencePosition> positions) {
  const std::size_t n = vectors.rows();
  if (positions.size() != n) throw ProjectionError("one position is needed per vector");
  Matrix coords(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& pos = positions[i];
    if (pos.length < 1) throw ProjectionError("sequence lengths must be at least 1");
    if (pos.index >= pos.length) throw ProjectionError("position index outside its sequence");
    coords(i, 1) = pos.length == 1 ? 0.0
                                   : static_cast<double>(pos.index) / static_cast<double>(pos.length - 1);
  }
  if (n == 0) return make_layout(std::move(coords));

  const std::size_t d = vectors.cols();
  Vector mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) mean[c] += vectors(i, c);
  for (double& m : mean) m /= static_cast<double>(n);
  Matrix centered(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) centered(i, c) = vectors(i, c) - mean[c];

  Matrix cov(d, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a) {
      const double va = centered(i, a);
      if (va == 0.0) continue;
      for (std::size_t b = 0; b < d; ++b) cov(a, b) += va * centered(i, b);
    }

  const auto eig = top_eigenpairs(cov, 1);
  if (eig.values[0] > 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += centered(i, c) * eig.vectors(c, 0);
      coords(i, 0) = s;
    }
    if (coords(0, 0) < 0.0)
      for (std::size_t i = 0; i < n; ++i) coords(i, 0) = -coords(i, 0);
  }
  return make_layout(std::move(coords));
}

// ---------------------------------------------------------------------------

std::pair<std::size_t, std::size_t> grid_cell(const Layout& layout, std::size_t index, const GridSpec& spec) {
  const BBox& b = layout.bbox;
  if (b.width() <= 0.0 || b.height() <= 0.0) return {0, 0};
  const Point2 p = layout.point(index);
  const double cw = b.width() / static_cast<double>(spec.cols);
  const double ch = b.height() / static_cast<double>(spec.rows);
  auto clamp_cell = [](double v, std::size_t count) {
    const double f = std::floor(v);
    if (f < 0.0) return std::size_t{0};
    return std::min(static_cast<std::size_t>(f), count - 1);
  };
  return {clamp_cell((p.y - b.min_y) / ch, spec.rows), clamp_cell((p.x - b.min_x) / cw, spec.cols)};
}

std::vector<Pictogram> assign_grid(const Layout& layout, const GridSpec& spec) {
  if (layout.size() == 0) throw ProjectionError("cannot grid an empty layout");
  if (spec.rows < 1 || spec.cols < 1) throw ProjectionError("grid needs at least one row and column");
  const BBox& b = layout.bbox;
  std::vector<Pictogram> cells;
  if (b.width() <= 0.0 || b.height() <= 0.0) {
    Pictogram only;
    only.cell = b;
    for (std::size_t i = 0; i < layout.size(); ++i) only.members.push_back(i);
    cells.push_back(std::move(only));
    return cells;
  }
  const double cw = b.width() / static_cast<double>(spec.cols);
  const double ch = b.height() / static_cast<double>(spec.rows);
  for (std::size_t r = 0; r < spec.rows; ++r)
    for (std::size_t c = 0; c < spec.cols; ++c) {
      Pictogram p;
      p.row = r;
      p.col = c;
      p.cell = {b.min_x + static_cast<double>(c) * cw, b.min_y + static_cast<double>(r) * ch,
                c + 1 == spec.cols ? b.max_x : b.min_x + static_cast<double>(c + 1) * cw,
                r + 1 == spec.rows ? b.max_y : b.min_y + static_cast<double>(r + 1) * ch};
      cells.push_back(std::move(p));
    }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto [r, c] = grid_cell(layout, i, spec);
    cells[r * spec.cols + c].members.push_back(i);
  }
  return cells;
}

double neighbor_radius(long x) {
  if (x < 1) throw ProjectionError("neighbor_radius needs a count of at least 1");
  return std::sqrt(2.0 * static_cast<double>(x));
}

}  // namespace seqscope
