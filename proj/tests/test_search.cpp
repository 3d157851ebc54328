#include <cmath>
#include <map>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracle.hpp"
#include "seqscope/search.hpp"

using namespace seqscope;

namespace {

bool starts_with(const std::vector<TokenId>& seq, const std::vector<TokenId>& prefix) {
  return seq.size() >= prefix.size() && std::equal(prefix.begin(), prefix.end(), seq.begin());
}

void check_tree_shape(const BeamTree& tree, const DecodeResult& r) {
  REQUIRE_FALSE(tree.nodes.empty());
  CHECK(tree.nodes[0].parent == -1);
  CHECK(tree.nodes[0].token == Vocab::kBos);
  std::map<std::int64_t, int> children;
  std::size_t best = 0;
  for (std::size_t i = 1; i < tree.nodes.size(); ++i) {
    const auto& n = tree.nodes[i];
    REQUIRE(n.parent >= 0);
    REQUIRE(static_cast<std::size_t>(n.parent) < i);
    const auto& parent = tree.nodes[static_cast<std::size_t>(n.parent)];
    CHECK(n.step == parent.step + 1);
    CHECK(n.logprob <= parent.logprob);
    CHECK_FALSE(parent.finished);
    children[n.parent]++;
    best += n.on_best_path;
  }
  // The flagged nodes form one root-to-leaf path that spells the output.
  CHECK(best == r.output.size());
  std::int64_t cur = 0;
  std::vector<TokenId> path;
  for (;;) {
    std::int64_t next = -1;
    for (std::size_t i = 1; i < tree.nodes.size(); ++i)
      if (tree.nodes[i].parent == cur && tree.nodes[i].on_best_path) {
        CHECK(next == -1);
        next = static_cast<std::int64_t>(i);
      }
    if (next < 0) break;
    path.push_back(tree.nodes[static_cast<std::size_t>(next)].token);
    cur = next;
  }
  CHECK(path == r.output.ids);
  for (std::size_t i = 1; i < tree.nodes.size(); ++i) {
    const auto& n = tree.nodes[i];
    if (n.pruned_at_step) {
      CHECK_FALSE(n.finished);
      CHECK_FALSE(n.on_best_path);
      CHECK(children[static_cast<std::int64_t>(i)] == 0);
      CHECK(*n.pruned_at_step == n.step + 1);
    }
  }
}

}  // namespace

TEST_SUITE("search") {

TEST_CASE("wide beam equals exhaustive enumeration") {
  for (int trial = 0; trial < 20; ++trial) {
    const std::uint32_t V = 4 + trial % 2;
    auto p = fixtures::random_model(3, 2, 7, V, trial % 3 != 0, 100 + trial, 1.5);
    std::mt19937_64 rng(trial);
    auto src = fixtures::random_tokens(rng, 2 + trial % 4, 7, Role::source);
    const std::size_t L = 3;
    BeamConfig cfg{static_cast<std::size_t>(std::pow(V, L)), L, false};
    auto r = beam_search(p, src, cfg);
    auto best = oracle::exhaustive_argmax(p, src.ids, L);
    CHECK(r.output.ids == best.tokens);
    CHECK(std::abs(r.score - best.logprob) < 1e-9);
    check_tree_shape(r.tree, r);
    // A narrower beam cannot find a better finished sequence.
    for (std::size_t K = 1; K < cfg.K; K *= 2) {
      auto narrow = beam_search(p, src, {K, L, false});
      if (narrow.output.ids.back() == Vocab::kEos) CHECK(narrow.score <= r.score + 1e-12);
    }
  }
}

TEST_CASE("length normalization ranks by mean log-probability") {
  for (int trial = 0; trial < 10; ++trial) {
    auto p = fixtures::random_model(3, 2, 7, 5, true, 300 + trial, 1.5);
    std::mt19937_64 rng(trial);
    auto src = fixtures::random_tokens(rng, 3, 7, Role::source);
    auto r = beam_search(p, src, {125, 3, true});
    // Oracle: mean log-probability over every EOS-terminated sequence.
    double best = -INFINITY;
    std::vector<TokenId> arg;
    std::vector<TokenId> seq;
    auto rec = [&](auto&& self) -> void {
      for (TokenId v = 0; v < 5; ++v) {
        seq.push_back(v);
        if (v == Vocab::kEos) {
          const double m = oracle::forward(p, src.ids, seq).logprob / static_cast<double>(seq.size());
          if (m > best) best = m, arg = seq;
        } else if (seq.size() < 3) {
          self(self);
        }
        seq.pop_back();
      }
    };
    rec(rec);
    CHECK(r.output.ids == arg);
    CHECK(r.score / static_cast<double>(r.output.size()) == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("beam of one is greedy") {
  for (int trial = 0; trial < 40; ++trial) {
    auto p = fixtures::random_model(4, 3, 9, 7, trial % 2 == 0, 500 + trial, 1.2);
    std::mt19937_64 rng(trial);
    auto src = fixtures::random_tokens(rng, 1 + trial % 6, 9, Role::source);
    auto g = greedy_decode(p, src, 8);
    auto b = beam_search(p, src, {1, 8, false});
    CHECK(g == b);
    CHECK(g.tree.nodes.size() == g.output.size() + 1);
    for (std::size_t i = 1; i < g.tree.nodes.size(); ++i) CHECK(g.tree.nodes[i].parent == static_cast<std::int64_t>(i - 1));
    // Score is the sum of the per-step maximum log-probabilities.
    auto ref = oracle::forward(p, src.ids, g.output.ids);
    double s = 0;
    for (std::size_t t = 0; t < ref.dist.size(); ++t) {
      const auto mx = std::max_element(ref.dist[t].begin(), ref.dist[t].end());
      CHECK(static_cast<TokenId>(mx - ref.dist[t].begin()) == g.output.ids[t]);
      s += std::log(*mx);
    }
    CHECK(g.score == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("trace and tree agree with the output") {
  auto p = fixtures::random_model(4, 3, 9, 7, true, 42, 1.2);
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    auto src = fixtures::random_tokens(rng, 5, 9, Role::source);
    auto r = beam_search(p, src, {4, 6, false});
    CHECK(r.trace.target == r.output);
    double s = 0;
    for (double l : r.trace.step_logprobs) s += l;
    CHECK(r.score == doctest::Approx(s).epsilon(1e-12));
    check_tree_shape(r.tree, r);
    CHECK(r.tree.nodes.size() <= 1 + 6 * 4);
    // Every node's score extends its parent's by that token's log-probability.
    for (std::size_t i = 1; i < r.tree.nodes.size(); ++i) {
      std::vector<TokenId> path;
      for (std::int64_t c = static_cast<std::int64_t>(i); c > 0; c = r.tree.nodes[static_cast<std::size_t>(c)].parent)
        path.insert(path.begin(), r.tree.nodes[static_cast<std::size_t>(c)].token);
      auto ref = oracle::forward(p, src.ids, path);
      const auto& parent = r.tree.nodes[static_cast<std::size_t>(r.tree.nodes[i].parent)];
      CHECK(std::abs(r.tree.nodes[i].logprob - parent.logprob -
                     std::log(ref.dist.back()[static_cast<std::size_t>(path.back())])) < 1e-9);
    }
    CHECK(beam_search(p, src, {4, 6, false}) == r);
  }
}

TEST_CASE("prefix decoding") {
  auto p = fixtures::random_model(4, 3, 9, 7, true, 77, 1.2);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    auto src = fixtures::random_tokens(rng, 4, 9, Role::source);
    BeamConfig cfg{3, 6, false};
    auto free = beam_search(p, src, cfg);
    CHECK(prefix_decode(p, src, {}, cfg) == free);
    auto prefix = fixtures::random_tokens(rng, 1 + trial % 4, 7, Role::target).ids;
    auto r = prefix_decode(p, src, prefix, cfg);
    CHECK(starts_with(r.output.ids, prefix));
    // Forcing the full previous output reproduces it with its score.
    if (!free.output.ids.empty() && free.output.ids.back() == Vocab::kEos) {
      auto again = prefix_decode(p, src, free.output.ids, cfg);
      CHECK(again.output == free.output);
      CHECK(again.score == doctest::Approx(free.score).epsilon(1e-12));
    }
  }
  // A prefix longer than max_len is still honoured.
  auto src = fixtures::random_tokens(rng, 4, 9, Role::source);
  std::vector<TokenId> longp(8, 5);
  CHECK(starts_with(prefix_decode(p, src, longp, {2, 4, false}).output.ids, longp));

  CHECK_THROWS_AS(prefix_decode(p, src, {7}, {2, 4, false}), SearchError);
  CHECK_THROWS_AS(prefix_decode(p, src, {-1}, {2, 4, false}), SearchError);
  CHECK_THROWS_AS(prefix_decode(p, src, {Vocab::kEos, 4}, {2, 4, false}), SearchError);
  CHECK_THROWS_AS(beam_search(p, {{}, Role::source}, {2, 4, false}), SearchError);
}

TEST_CASE("attention overrides are local") {
  auto p = fixtures::random_model(4, 3, 9, 7, true, 91, 1.2);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto src = fixtures::random_tokens(rng, 5, 9, Role::source);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector raw(5);
    double total = 0;
    for (double& v : raw) total += (v = u(rng));
    for (double& v : raw) v /= total;
    const std::size_t step = static_cast<std::size_t>(trial % 3);
    DecodeConstraint c;
    c.attention_overrides.push_back({step, raw});
    Vector want = normalized_override(raw, 5);
    auto r = beam_search(p, src, {3, 6, false}, c);
    if (r.output.size() <= step) continue;
    for (std::size_t s = 0; s < 5; ++s) CHECK(r.trace.attention(step, s) == want[s]);
    // The remaining rows are what the model computes along the same path.
    auto ref_enc = oracle::encode(p, src.ids);
    oracle::Vec h = ref_enc.back();
    TokenId prev = Vocab::kBos;
    for (std::size_t t = 0; t < r.output.size(); ++t) {
      oracle::Vec att, ctx, dist;
      oracle::Vec row(want.begin(), want.end());
      h = oracle::decode(p, ref_enc, h, prev, t == step ? &row : nullptr, att, ctx, dist);
      for (std::size_t s = 0; s < 5; ++s) CHECK(r.trace.attention(t, s) == doctest::Approx(att[s]).epsilon(1e-12));
      prev = r.output.ids[t];
    }
  }
}

TEST_CASE("override validation") {
  CHECK(normalized_override(Vector{0.25, 0.25, 0.5}, 3) == Vector{0.25, 0.25, 0.5});
  CHECK_THROWS_AS(normalized_override(Vector{1, 1, 2}, 3), SearchError);
  CHECK_THROWS_AS(normalized_override(Vector{0.5, 0.5}, 3), SearchError);
  CHECK_THROWS_AS(normalized_override(Vector{1.5, -0.5}, 2), SearchError);
  CHECK_THROWS_AS(normalized_override(Vector{0.2, 0.2}, 2), SearchError);
  CHECK_NOTHROW(normalized_override(Vector{0.5, 0.5 + 5e-7}, 2));

  auto p = fixtures::random_model(3, 2, 7, 6, true, 1);
  TokenSeq src{{4, 5}, Role::source};
  DecodeConstraint c;
  c.attention_overrides.push_back({0, Vector{0.3, 0.3, 0.4}});
  CHECK_THROWS_AS(beam_search(p, src, {2, 4, false}, c), SearchError);
  c.attention_overrides = {{9, Vector{0.5, 0.5}}};
  CHECK_THROWS_AS(beam_search(p, src, {2, 4, false}, c), SearchError);
}

TEST_CASE("trained date model decodes and follows interventions") {
  const auto& m = fixtures::small_date_model();
  const auto& b = m.bundle;
  auto src = encode_text("March 25, 2000", b.source_vocab, Role::source, b.mode);
  auto r = beam_search(b.params, src, {5, 16, false});
  auto one = encode_text("1", b.target_vocab, Role::target, b.mode).ids;
  auto forced = prefix_decode(b.params, src, one, {5, 16, false});
  CHECK(forced.output.ids.front() == one.front());
  // Overriding with the model's own attention leaves the output unchanged.
  for (std::size_t t = 0; t < r.output.size(); ++t) {
    auto row = r.trace.attention.row(t);
    DecodeConstraint c;
    c.attention_overrides.push_back({t, normalized_override(row, src.size())});
    CHECK(beam_search(b.params, src, {5, 16, false}, c).output == r.output);
  }
}

}
