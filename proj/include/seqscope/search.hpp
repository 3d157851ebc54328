#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "seqscope/model.hpp"

namespace seqscope {

class SearchError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct BeamConfig {
  std::size_t K = 5;
  std::size_t max_len = 16;
  bool length_normalize = false;
};

/// Forced target prefix plus per-step attention replacements. Override
/// distributions must have one entry per source position.
struct DecodeConstraint {
  std::vector<TokenId> prefix;
  std::vector<AttentionOverride> attention_overrides;
  bool empty() const { return prefix.empty() && attention_overrides.empty(); }
};

struct Hypothesis {
  std::vector<TokenId> tokens;  // excludes the implicit BOS root
  double logprob = 0.0;
  Vector decoder_state;
  bool finished = false;
};

/// Flat search log: entry 0 is the BOS root, every other entry is a
/// hypothesis that made it into the beam at its step.
struct SearchLog {
  struct Entry {
    std::int64_t parent = -1;
    TokenId token = Vocab::kBos;
    std::size_t step = 0;
    double logprob = 0.0;
    bool finished = false;
  };
  std::vector<Entry> entries;
  std::size_t winner = 0;
};

struct BeamNode {
  std::size_t id = 0;
  std::int64_t parent = -1;
  TokenId token = Vocab::kBos;
  std::size_t step = 0;
  double logprob = 0.0;
  bool finished = false;
  bool on_best_path = false;
  /// Set for unfinished hypotheses none of whose extensions survived; holds
  /// the step at which the line died.
  std::optional<std::size_t> pruned_at_step;
  friend bool operator==(const BeamNode&, const BeamNode&) = default;
};

struct BeamTree {
  std::vector<BeamNode> nodes;
  friend bool operator==(const BeamTree&, const BeamTree&) = default;
};

struct DecodeResult {
  TokenSeq output;  // includes the final EOS when one was produced
  double score = 0.0;
  TraceRecord trace;
  BeamTree tree;
  friend bool operator==(const DecodeResult&, const DecodeResult&) = default;
};

BeamTree build_beam_tree(const SearchLog& log);

DecodeResult beam_search(const ModelParams& params, const TokenSeq& source, const BeamConfig& cfg,
                         const DecodeConstraint& constraint = {});

DecodeResult greedy_decode(const ModelParams& params, const TokenSeq& source,
                           std::optional<std::size_t> max_len = std::nullopt);

DecodeResult prefix_decode(const ModelParams& params, const TokenSeq& source,
                           const std::vector<TokenId>& prefix, const BeamConfig& cfg);

/// Checks an override against the source length and returns it scaled to sum to 1.
Vector normalized_override(std::span<const double> distribution, std::size_t source_len);

}  // namespace seqscope
