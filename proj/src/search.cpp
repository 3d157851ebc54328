#include "seqscope/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "model_internal.hpp"

namespace seqscope {

namespace {

struct Live {
  std::size_t entry = 0;
  std::vector<TokenId> tokens;
  double logprob = 0.0;
  Vector state;
};

struct Candidate {
  std::size_t parent_rank = 0;
  TokenId token = 0;
  double logprob = 0.0;
};

double ranking_score(double logprob, std::size_t length, bool normalize) {
  return normalize && length > 0 ? logprob / static_cast<double>(length) : logprob;
}

std::vector<AttentionOverride> checked_overrides(const DecodeConstraint& c, std::size_t source_len,
                                                 std::size_t max_len) {
  std::vector<AttentionOverride> out;
  for (const auto& o : c.attention_overrides) {
    if (o.step >= max_len)
      throw SearchError("attention override step " + std::to_string(o.step) +
                        " is beyond the decode limit " + std::to_string(max_len));
    for (const auto& prev : out)
      if (prev.step == o.step)
        throw SearchError("duplicate attention override for step " + std::to_string(o.step));
    out.push_back({o.step, normalized_override(o.distribution, source_len)});
  }
  return out;
}

const AttentionOverride* override_for(const std::vector<AttentionOverride>& ov, std::size_t step) {
  for (const auto& o : ov)
    if (o.step == step) return &o;
  return nullptr;
}

DecodeResult finish(const ModelParams& params, const TokenSeq& source, const SearchLog& log,
                    const std::vector<TokenId>& tokens, double score,
                    const std::vector<AttentionOverride>& overrides) {
  DecodeResult r;
  r.output.role = Role::target;
  r.output.ids = tokens;
  r.score = score;
  r.trace = trace_forced(params, source, tokens, overrides);
  r.tree = build_beam_tree(log);
  return r;
}

}  // namespace

Vector normalized_override(std::span<const double> dist, std::size_t source_len) {
  if (dist.size() != source_len)
    throw SearchError("attention override has " + std::to_string(dist.size()) +
                      " entries but the source has " + std::to_string(source_len) + " positions");
  double sum = 0.0;
  for (double v : dist) {
    if (!std::isfinite(v) || v < 0.0) throw SearchError("attention override entries must be finite and >= 0");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw SearchError("attention override must sum to 1 (got " + std::to_string(sum) + ")");
  Vector out(dist.begin(), dist.end());
  for (double& v : out) v /= sum;
  return out;
}

BeamTree build_beam_tree(const SearchLog& log) {
  BeamTree tree;
  const auto& e = log.entries;
  std::vector<bool> has_child(e.size(), false);
  for (const auto& entry : e)
    if (entry.parent >= 0) has_child[static_cast<std::size_t>(entry.parent)] = true;
  tree.nodes.reserve(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    BeamNode n;
    n.id = i;
    n.parent = e[i].parent;
    n.token = e[i].token;
    n.step = e[i].step;
    n.logprob = e[i].logprob;
    n.finished = e[i].finished;
    if (!n.finished && !has_child[i] && i != log.winner) n.pruned_at_step = n.step + 1;
    tree.nodes.push_back(n);
  }
  if (!tree.nodes.empty()) {
    for (std::int64_t cur = static_cast<std::int64_t>(log.winner); cur >= 0;
         cur = tree.nodes[static_cast<std::size_t>(cur)].parent)
      tree.nodes[static_cast<std::size_t>(cur)].on_best_path = true;
  }
  return tree;
}

DecodeResult beam_search(const ModelParams& params, const TokenSeq& source, const BeamConfig& cfg,
                         const DecodeConstraint& constraint) {
  if (source.empty()) throw SearchError("source sequence is empty");
  if (cfg.K < 1) throw SearchError("beam width must be at least 1");
  if (cfg.max_len < 1) throw SearchError("max_len must be at least 1");
  const std::size_t V = params.config.tgt_vocab_size;
  const auto& prefix = constraint.prefix;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (prefix[i] < 0 || static_cast<std::size_t>(prefix[i]) >= V)
      throw SearchError("prefix token id " + std::to_string(prefix[i]) + " is outside the target vocabulary");
    if (prefix[i] == Vocab::kEos && i + 1 != prefix.size())
      throw SearchError("EOS may only appear at the end of a prefix");
  }
  const std::size_t max_len = std::max(cfg.max_len, prefix.size());
  const auto overrides = checked_overrides(constraint, source.size(), max_len);

  detail::EncoderCache enc;
  detail::run_encoder(params, source, enc);
  const Matrix& x = enc.outputs;

  SearchLog log;
  log.entries.push_back({});
  std::vector<Live> live{{0, {}, 0.0, initial_decoder_state(params, x)}};
  std::vector<std::size_t> completed;  // entry ids
  std::vector<std::vector<TokenId>> completed_tokens;

  std::vector<detail::DecoderStep> steps;
  std::vector<Candidate> cands;
  for (std::size_t t = 0; t < max_len && !live.empty(); ++t) {
    const auto* ov = override_for(overrides, t);
    std::optional<std::span<const double>> ov_span;
    if (ov) ov_span = std::span<const double>(ov->distribution);

    steps.assign(live.size(), {});
    cands.clear();
    for (std::size_t li = 0; li < live.size(); ++li) {
      const TokenId prev = live[li].tokens.empty() ? Vocab::kBos : live[li].tokens.back();
      detail::run_decoder_step(params, live[li].state, prev, x, ov_span, steps[li]);
      const auto& logd = steps[li].log_distribution;
      if (t < prefix.size()) {
        cands.push_back({li, prefix[t], live[li].logprob + logd[static_cast<std::size_t>(prefix[t])]});
      } else {
        for (std::size_t v = 0; v < V; ++v)
          cands.push_back({li, static_cast<TokenId>(v), live[li].logprob + logd[v]});
      }
    }

    const std::size_t keep = t < prefix.size() ? cands.size() : std::min(cfg.K, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.logprob != b.logprob) return a.logprob > b.logprob;
                        if (a.token != b.token) return a.token < b.token;
                        return a.parent_rank < b.parent_rank;
                      });

    std::vector<Live> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = cands[i];
      const Live& parent = live[c.parent_rank];
      const bool done = c.token == Vocab::kEos;
      const std::size_t id = log.entries.size();
      log.entries.push_back({static_cast<std::int64_t>(parent.entry), c.token, t + 1, c.logprob, done});
      std::vector<TokenId> toks = parent.tokens;
      toks.push_back(c.token);
      if (done) {
        completed.push_back(id);
        completed_tokens.push_back(std::move(toks));
      } else {
        next.push_back({id, std::move(toks), c.logprob, steps[c.parent_rank].gru.h});
      }
    }
    live = std::move(next);
    if (completed.size() >= cfg.K) break;
  }

  // Winner: best completed hypothesis, else best live one. Earlier entries win ties.
  std::vector<TokenId> best_tokens;
  double best_rank = -std::numeric_limits<double>::infinity();
  bool have = false;
  double best_score = 0.0;
  auto consider = [&](std::size_t entry, const std::vector<TokenId>& toks) {
    const double lp = log.entries[entry].logprob;
    const double rank = ranking_score(lp, toks.size(), cfg.length_normalize);
    if (!have || rank > best_rank) {
      have = true;
      best_rank = rank;
      best_score = lp;
      best_tokens = toks;
      log.winner = entry;
    }
  };
  if (!completed.empty()) {
    for (std::size_t i = 0; i < completed.size(); ++i) consider(completed[i], completed_tokens[i]);
  } else {
    for (const auto& l : live) consider(l.entry, l.tokens);
  }
  return finish(params, source, log, best_tokens, best_score, overrides);
}

DecodeResult greedy_decode(const ModelParams& params, const TokenSeq& source,
                           std::optional<std::size_t> max_len) {
  if (source.empty()) throw SearchError("source sequence is empty");
  const std::size_t limit = max_len.value_or(params.config.max_decode_len);
  detail::EncoderCache enc;
  detail::run_encoder(params, source, enc);

  SearchLog log;
  log.entries.push_back({});
  Vector h = initial_decoder_state(params, enc.outputs);
  std::vector<TokenId> tokens;
  double score = 0.0;
  detail::DecoderStep step;
  for (std::size_t t = 0; t < limit; ++t) {
    const TokenId prev = tokens.empty() ? Vocab::kBos : tokens.back();
    detail::run_decoder_step(params, h, prev, enc.outputs, std::nullopt, step);
    const auto& logd = step.log_distribution;
    std::size_t best = 0;
    for (std::size_t v = 1; v < logd.size(); ++v)
      if (logd[v] > logd[best]) best = v;
    score += logd[best];
    tokens.push_back(static_cast<TokenId>(best));
    const bool done = tokens.back() == Vocab::kEos;
    log.entries.push_back({static_cast<std::int64_t>(log.entries.size() - 1), tokens.back(), t + 1, score, done});
    h = step.gru.h;
    if (done) break;
  }
  log.winner = log.entries.size() - 1;
  return finish(params, source, log, tokens, score, {});
}

DecodeResult prefix_decode(const ModelParams& params, const TokenSeq& source,
                           const std::vector<TokenId>& prefix, const BeamConfig& cfg) {
  DecodeConstraint c;
  c.prefix = prefix;
  return beam_search(params, source, cfg, c);
}

}  // namespace seqscope
