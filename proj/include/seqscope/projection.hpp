#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "seqscope/kernels.hpp"
#include "seqscope/tensor.hpp"

namespace seqscope {

class ProjectionError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

struct BBox {
  double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;
  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
};

struct Layout {
  std::vector<std::size_t> ids;
  Matrix coords;  // [N x 2]
  BBox bbox;

  std::size_t size() const { return coords.rows(); }
  Point2 point(std::size_t i) const { return {coords(i, 0), coords(i, 1)}; }
};

/// Wraps coordinates with ids 0..N-1 and a tight bounding box.
Layout make_layout(Matrix coords);

/// Torgerson scaling: double-centres the squared distances and embeds with the
/// top two eigenpairs (negative eigenvalues clipped to zero).
Layout classical_mds(const Matrix& distances);

struct TsneOptions {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  std::uint64_t seed = 1;
  Exec exec = Exec::parallel;
  /// Called with (iteration, KL divergence) every report_every iterations and
  /// after the final iteration.
  std::function<void(std::size_t, double)> on_report;
  std::size_t report_every = 50;
};

Layout tsne(const Matrix& vectors, const TsneOptions& options = {});

struct SequencePosition {
  std::size_t index = 0;
  std::size_t length = 1;
};

/// y = relative position in the sequence, x = first principal component score.
Layout custom_position_projection(const Matrix& vectors, std::span<const SequencePosition> positions);

struct GridSpec {
  std::size_t rows = 3;
  std::size_t cols = 3;
};

struct Pictogram {
  std::size_t row = 0;
  std::size_t col = 0;
  std::vector<std::size_t> members;  // indices into the layout
  BBox cell;
};

/// Partitions the layout's bounding box into rows x cols equal cells. Every
/// cell is returned, row-major, even when empty.
std::vector<Pictogram> assign_grid(const Layout& layout, const GridSpec& spec = {});

/// Cell (row, col) of one point under the same rule as assign_grid.
std::pair<std::size_t, std::size_t> grid_cell(const Layout& layout, std::size_t index,
                                              const GridSpec& spec = {});

/// sqrt(2x) for a neighbor referenced by x states.
double neighbor_radius(long x);

struct Hull {
  std::vector<Point2> vertices;  // counter-clockwise, not repeating the first vertex
  double area() const;
};

Hull convex_hull(std::span<const Point2> points);

/// k-nearest-neighbour concave hull; grows k until the polygon is simple and
/// contains every point, falling back to the convex hull.
Hull concave_hull(std::span<const Point2> points, std::size_t k = 5);

/// Inside-or-on-boundary test; degenerate hulls (point, segment) use distance.
bool hull_contains(const Hull& hull, const Point2& p, double tol = 1e-9);

}  // namespace seqscope
