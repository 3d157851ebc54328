#pragma once

// Straightforward reference computations used as test oracles. They read
// the parameter tensors element by element and share no code with the
// library's forward pass, search or geometry.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "seqscope/model.hpp"
#include "seqscope/projection.hpp"

namespace oracle {

using seqscope::Matrix;
using seqscope::ModelParams;
using seqscope::TokenId;
using Vec = std::vector<double>;

inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// h' = (1 - z) h + z n with z, r, n stacked in the rows of W, U, b.
inline Vec gru(const seqscope::GruParams& g, const Vec& x, const Vec& h) {
  const std::size_t H = h.size();
  Vec z(H), r(H), n(H), out(H);
  for (std::size_t i = 0; i < H; ++i) {
    double a = g.b(i, 0), b = g.b(H + i, 0);
    for (std::size_t j = 0; j < x.size(); ++j) {
      a += g.W(i, j) * x[j];
      b += g.W(H + i, j) * x[j];
    }
    for (std::size_t j = 0; j < H; ++j) {
      a += g.U(i, j) * h[j];
      b += g.U(H + i, j) * h[j];
    }
    z[i] = sig(a);
    r[i] = sig(b);
  }
  for (std::size_t i = 0; i < H; ++i) {
    double c = g.b(2 * H + i, 0);
    for (std::size_t j = 0; j < x.size(); ++j) c += g.W(2 * H + i, j) * x[j];
    for (std::size_t j = 0; j < H; ++j) c += g.U(2 * H + i, j) * (r[j] * h[j]);
    n[i] = std::tanh(c);
  }
  for (std::size_t i = 0; i < H; ++i) out[i] = (1.0 - z[i]) * h[i] + z[i] * n[i];
  return out;
}

inline Vec embed(const Matrix& table, TokenId id) {
  Vec e(table.cols());
  for (std::size_t j = 0; j < e.size(); ++j) e[j] = table(static_cast<std::size_t>(id), j);
  return e;
}

inline Vec softmax(const Vec& logits) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double z = 0.0;
  Vec p(logits.size());
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - m));
  for (double& v : p) v /= z;
  return p;
}

struct Forward {
  std::vector<Vec> enc;         // encoder outputs
  std::vector<Vec> dec;         // decoder states per step
  std::vector<Vec> attention;   // per step
  std::vector<Vec> context;     // per step
  std::vector<Vec> dist;        // per step
  double logprob = 0.0;         // sum of log p(outputs[t])
};

inline std::vector<Vec> encode(const ModelParams& p, const std::vector<TokenId>& src) {
  const std::size_t S = src.size(), H = p.config.hidden_dim;
  std::vector<Vec> f(S), b(S), out(S);
  Vec h(H, 0.0);
  for (std::size_t s = 0; s < S; ++s) f[s] = h = gru(p.encoder_fwd, embed(p.src_embedding, src[s]), h);
  if (p.config.bidirectional_encoder) {
    h.assign(H, 0.0);
    for (std::size_t s = S; s-- > 0;) b[s] = h = gru(p.encoder_bwd, embed(p.src_embedding, src[s]), h);
  }
  for (std::size_t s = 0; s < S; ++s) {
    Vec joined = f[s];
    if (p.config.bidirectional_encoder) joined.insert(joined.end(), b[s].begin(), b[s].end());
    out[s].assign(H, 0.0);
    for (std::size_t i = 0; i < H; ++i) {
      double a = 0.0;
      for (std::size_t j = 0; j < joined.size(); ++j) a += p.encoder_bridge(i, j) * joined[j];
      out[s][i] = std::tanh(a);
    }
  }
  return out;
}

// Decoder step from (h, prev token); returns the new state and fills the rest.
inline Vec decode(const ModelParams& p, const std::vector<Vec>& enc, const Vec& h_prev, TokenId prev,
                  const Vec* override_row, Vec& att, Vec& ctx, Vec& dist) {
  const std::size_t H = p.config.hidden_dim, S = enc.size(), V = p.config.tgt_vocab_size;
  Vec h = gru(p.decoder, embed(p.tgt_embedding, prev), h_prev);
  Vec scores(S);
  for (std::size_t s = 0; s < S; ++s) {
    scores[s] = 0.0;
    for (std::size_t i = 0; i < H; ++i) scores[s] += enc[s][i] * h[i];
  }
  att = override_row ? *override_row : softmax(scores);
  ctx.assign(H, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t i = 0; i < H; ++i) ctx[i] += att[s] * enc[s][i];
  Vec o(H);
  for (std::size_t i = 0; i < H; ++i) {
    double a = p.combine_bias(i, 0);
    for (std::size_t j = 0; j < H; ++j) a += p.combine(i, j) * h[j] + p.combine(i, H + j) * ctx[j];
    o[i] = std::tanh(a);
  }
  Vec logits(V);
  for (std::size_t v = 0; v < V; ++v) {
    double a = p.output_bias(v, 0);
    for (std::size_t i = 0; i < H; ++i) a += p.output_proj(v, i) * o[i];
    logits[v] = a;
  }
  dist = softmax(logits);
  return h;
}

// Runs BOS + outputs[0..T-1] and scores outputs.
inline Forward forward(const ModelParams& p, const std::vector<TokenId>& src, const std::vector<TokenId>& outputs) {
  Forward f;
  f.enc = encode(p, src);
  Vec h = f.enc.back();
  TokenId prev = seqscope::Vocab::kBos;
  for (TokenId y : outputs) {
    Vec att, ctx, dist;
    h = decode(p, f.enc, h, prev, nullptr, att, ctx, dist);
    f.dec.push_back(h);
    f.attention.push_back(att);
    f.context.push_back(ctx);
    f.dist.push_back(dist);
    f.logprob += std::log(dist[static_cast<std::size_t>(y)]);
    prev = y;
  }
  return f;
}

struct Best {
  std::vector<TokenId> tokens;
  double logprob = -INFINITY;
};

// Highest-scoring EOS-terminated sequence of at most max_len tokens, found
// by enumerating every sequence over the full target vocabulary.
inline Best exhaustive_argmax(const ModelParams& p, const std::vector<TokenId>& src, std::size_t max_len) {
  const auto enc = encode(p, src);
  const auto V = static_cast<TokenId>(p.config.tgt_vocab_size);
  Best best;
  std::vector<TokenId> seq;
  auto rec = [&](auto&& self, const Vec& h, TokenId prev, double lp) -> void {
    Vec att, ctx, dist;
    Vec hn = decode(p, enc, h, prev, nullptr, att, ctx, dist);
    for (TokenId v = 0; v < V; ++v) {
      const double l = lp + std::log(dist[static_cast<std::size_t>(v)]);
      seq.push_back(v);
      if (v == seqscope::Vocab::kEos) {
        if (l > best.logprob) best = {seq, l};
      } else if (seq.size() < max_len) {
        self(self, hn, v, l);
      }
      seq.pop_back();
    }
  };
  rec(rec, enc.back(), seqscope::Vocab::kBos, 0.0);
  return best;
}

// Exact top-k rows by dot product; ties by ascending row index.
inline std::vector<std::pair<double, std::size_t>> brute_top_k(const Matrix& rows, const Vec& q, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < rows.cols(); ++c) s += rows(r, c) * q[c];
    all.emplace_back(s, r);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

// Residual after the best rigid motion (rotation or reflection plus
// translation) of `got` onto `want`, as the RMS point distance. The optimal
// orthogonal map comes from the 2x2 cross-covariance in closed form.
inline double procrustes_residual(const std::vector<seqscope::Point2>& want, const std::vector<seqscope::Point2>& got) {
  const std::size_t n = want.size();
  double wx = 0, wy = 0, gx = 0, gy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    wx += want[i].x; wy += want[i].y; gx += got[i].x; gy += got[i].y;
  }
  wx /= n; wy /= n; gx /= n; gy /= n;
  double a = 0, b = 0, c = 0, d = 0;  // M = sum g w^T
  for (std::size_t i = 0; i < n; ++i) {
    const double px = got[i].x - gx, py = got[i].y - gy, qx = want[i].x - wx, qy = want[i].y - wy;
    a += px * qx; b += px * qy; c += py * qx; d += py * qy;
  }
  double best = INFINITY;
  // Rotation maximizes trace(R^T M): angle atan2(b - c, a + d). Reflection: atan2(b + c, a - d).
  for (int reflect = 0; reflect < 2; ++reflect) {
    const double th = reflect ? std::atan2(b + c, a - d) : std::atan2(b - c, a + d);
    const double cs = std::cos(th), sn = std::sin(th);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double px = got[i].x - gx, py = got[i].y - gy;
      double rx, ry;
      if (!reflect) {
        rx = cs * px - sn * py;
        ry = sn * px + cs * py;
      } else {
        rx = cs * px + sn * py;
        ry = sn * px - cs * py;
      }
      const double ex = rx - (want[i].x - wx), ey = ry - (want[i].y - wy);
      err += ex * ex + ey * ey;
    }
    best = std::min(best, std::sqrt(err / n));
  }
  return best;
}

// Winding number of a closed polygon around p, with an explicit boundary check.
inline bool inside_or_on(const std::vector<seqscope::Point2>& poly, const seqscope::Point2& p, double tol) {
  const std::size_t n = poly.size();
  auto seg_dist = [](seqscope::Point2 p, seqscope::Point2 a, seqscope::Point2 b) {
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double L = vx * vx + vy * vy;
    double t = L == 0 ? 0 : ((p.x - a.x) * vx + (p.y - a.y) * vy) / L;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
  };
  if (n == 1) return std::hypot(p.x - poly[0].x, p.y - poly[0].y) <= tol;
  for (std::size_t i = 0; i < n; ++i)
    if (seg_dist(p, poly[i], poly[(i + 1) % n]) <= tol) return true;
  int wn = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % n];
    const double side = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
    if (a.y <= p.y) {
      if (b.y > p.y && side > 0) ++wn;
    } else if (b.y <= p.y && side < 0) {
      --wn;
    }
  }
  return wn != 0;
}

// True when no two non-adjacent edges of the closed polygon touch.
inline bool is_simple(const std::vector<seqscope::Point2>& poly) {
  const std::size_t n = poly.size();
  auto orient = [](seqscope::Point2 a, seqscope::Point2 b, seqscope::Point2 c) {
    const double v = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    return (v > 0) - (v < 0);
  };
  auto on = [](seqscope::Point2 a, seqscope::Point2 b, seqscope::Point2 c) {
    return std::min(a.x, b.x) <= c.x && c.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= c.y &&
           c.y <= std::max(a.y, b.y);
  };
  auto cross = [&](seqscope::Point2 p1, seqscope::Point2 p2, seqscope::Point2 q1, seqscope::Point2 q2) {
    const int o1 = orient(p1, p2, q1), o2 = orient(p1, p2, q2), o3 = orient(q1, q2, p1), o4 = orient(q1, q2, p2);
    if (o1 * o2 < 0 && o3 * o4 < 0) return true;
    if (!o1 && on(p1, p2, q1)) return true;
    if (!o2 && on(p1, p2, q2)) return true;
    if (!o3 && on(q1, q2, p1)) return true;
    if (!o4 && on(q1, q2, p2)) return true;
    return false;
  };
  if (n < 4) return true;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) return false;
    }
  return true;
}

}  // namespace oracle
