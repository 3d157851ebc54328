#include <algorithm>
#include <cmath>
#include <numbers>

#include "seqscope/projection.hpp"

namespace seqscope {

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

double dist2(const Point2& a, const Point2& b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

bool lex_less(const Point2& a, const Point2& b) { return a.x != b.x ? a.x < b.x : a.y < b.y; }

double segment_distance(const Point2& p, const Point2& a, const Point2& b) {
  const double len2 = dist2(a, b);
  if (len2 == 0.0) return std::sqrt(dist2(p, a));
  double t = ((p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y)) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return std::sqrt(dist2(p, {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)}));
}

bool on_segment(const Point2& p, const Point2& a, const Point2& b) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

// Closed-segment intersection, including touching and collinear overlap.
bool segments_intersect(const Point2& p1, const Point2& p2, const Point2& q1, const Point2& q2) {
  const int d1 = sign(cross(q1, q2, p1));
  const int d2 = sign(cross(q1, q2, p2));
  const int d3 = sign(cross(p1, p2, q1));
  const int d4 = sign(cross(p1, p2, q2));
  if (d1 * d2 < 0 && d3 * d4 < 0) return true;
  if (d1 == 0 && on_segment(p1, q1, q2)) return true;
  if (d2 == 0 && on_segment(p2, q1, q2)) return true;
  if (d3 == 0 && on_segment(q1, p1, p2)) return true;
  if (d4 == 0 && on_segment(q2, p1, p2)) return true;
  return false;
}

// Clockwise angle from direction `from` to direction `to`, in [0, 2pi).
double clockwise_angle(const Point2& from, const Point2& to) {
  double a = std::atan2(from.y, from.x) - std::atan2(to.y, to.x);
  while (a < 0.0) a += 2.0 * std::numbers::pi;
  while (a >= 2.0 * std::numbers::pi) a -= 2.0 * std::numbers::pi;
  return a;
}

std::vector<Point2> unique_points(std::span<const Point2> points) {
  std::vector<Point2> pts(points.begin(), points.end());
  std::sort(pts.begin(), pts.end(), lex_less);
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

bool all_collinear(const std::vector<Point2>& pts) {
  for (std::size_t i = 2; i < pts.size(); ++i)
    if (cross(pts[0], pts[1], pts[i]) != 0.0) return false;
  return true;
}

// One walk of the k-nearest-neighbour boundary tracer. Empty on failure.
std::vector<Point2> trace_concave(const std::vector<Point2>& pts, std::size_t k) {
  const std::size_t n = pts.size();
  std::size_t first = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (pts[i].y < pts[first].y || (pts[i].y == pts[first].y && pts[i].x < pts[first].x)) first = i;

  std::vector<std::size_t> hull{first};
  std::vector<bool> used(n, false);
  used[first] = true;
  std::size_t current = first;
  Point2 back{-1.0, 0.0};  // pretend we arrived heading right along the bottom

  for (std::size_t step = 0; step <= n; ++step) {
    // The start becomes a candidate once the hull has a few edges.
    const bool may_close = hull.size() >= 3;
    std::vector<std::size_t> cand;
    for (std::size_t i = 0; i < n; ++i)
      if (!used[i] || (i == first && may_close)) cand.push_back(i);
    if (cand.empty()) return {};
    const std::size_t kk = std::min(k, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk), cand.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double da = dist2(pts[current], pts[a]), db = dist2(pts[current], pts[b]);
                        return da != db ? da < db : a < b;
                      });
    cand.resize(kk);
    std::vector<double> angle(n, 0.0);
    for (std::size_t c : cand)
      angle[c] = clockwise_angle(back, {pts[c].x - pts[current].x, pts[c].y - pts[current].y});
    std::sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
      if (angle[a] != angle[b]) return angle[a] > angle[b];
      return dist2(pts[current], pts[a]) < dist2(pts[current], pts[b]);
    });

    std::size_t chosen = n;
    for (std::size_t c : cand) {
      if (hull.size() > 1 && angle[c] < 1e-12) continue;  // doubling back on the last edge
      bool crosses = false;
      // Skip the last edge (shares `current`) and, when closing, the first edge.
      const std::size_t edges = hull.size() - 1;
      for (std::size_t e = 0; e + 1 < edges && !crosses; ++e) {
        if (c == first && e == 0) continue;
        crosses = segments_intersect(pts[current], pts[c], pts[hull[e]], pts[hull[e + 1]]);
      }
      if (!crosses) {
        chosen = c;
        break;
      }
    }
    if (chosen == n) return {};
    if (chosen == first) {
      std::vector<Point2> poly;
      for (std::size_t i : hull) poly.push_back(pts[i]);
      return poly;
    }
    back = {pts[current].x - pts[chosen].x, pts[current].y - pts[chosen].y};
    used[chosen] = true;
    hull.push_back(chosen);
    current = chosen;
  }
  return {};
}

double signed_area(const std::vector<Point2>& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

}  // namespace

double Hull::area() const { return vertices.size() < 3 ? 0.0 : std::abs(signed_area(vertices)); }

bool hull_contains(const Hull& hull, const Point2& p, double tol) {
  const auto& v = hull.vertices;
  if (v.empty()) return false;
  if (v.size() == 1) return std::sqrt(dist2(p, v[0])) <= tol;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (segment_distance(p, v[i], v[(i + 1) % v.size()]) <= tol) return true;
  if (v.size() < 3) return false;
  bool inside = false;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    if ((v[i].y > p.y) != (v[j].y > p.y)) {
      const double x = v[j].x + (p.y - v[j].y) * (v[i].x - v[j].x) / (v[i].y - v[j].y);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

Hull convex_hull(std::span<const Point2> points) {
  auto pts = unique_points(points);
  Hull h;
  if (pts.size() <= 2) {
    h.vertices = pts;
    return h;
  }
  if (all_collinear(pts)) {
    h.vertices = {pts.front(), pts.back()};
    return h;
  }
  std::vector<Point2> out(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(out[k - 2], out[k - 1], p) <= 0.0) --k;
    out[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(out[k - 2], out[k - 1], pts[i]) <= 0.0) --k;
    out[k++] = pts[i];
  }
  out.resize(k - 1);
  h.vertices = std::move(out);
  return h;
}

Hull concave_hull(std::span<const Point2> points, std::size_t k) {
  auto pts = unique_points(points);
  if (pts.size() <= 3 || all_collinear(pts)) return convex_hull(pts);
  for (std::size_t kk = std::max<std::size_t>(k, 3); kk < pts.size(); ++kk) {
    auto poly = trace_concave(pts, kk);
    if (poly.size() < 3) continue;
    if (signed_area(poly) <= 0.0) continue;
    Hull h{std::move(poly)};
    bool ok = true;
    for (const auto& p : pts)
      if (!hull_contains(h, p)) {
        ok = false;
        break;
      }
    if (ok) return h;
  }
  return convex_hull(pts);
}

}  // namespace seqscope
