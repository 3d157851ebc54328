#pragma once

#include <random>

#include "seqscope/bundle.hpp"
#include "seqscope/corpus.hpp"
#include "seqscope/model.hpp"

namespace fixtures {

using namespace seqscope;

inline ModelParams random_model(std::uint32_t hidden, std::uint32_t embed, std::uint32_t src_vocab,
                                std::uint32_t tgt_vocab, bool bidir, std::uint64_t seed, double scale = 1.0) {
  ModelConfig c;
  c.hidden_dim = hidden;
  c.embed_dim = embed;
  c.src_vocab_size = src_vocab;
  c.tgt_vocab_size = tgt_vocab;
  c.bidirectional_encoder = bidir;
  c.topk_record = std::min<std::uint32_t>(tgt_vocab, 10);
  auto p = init_params(c, seed);
  // Biases start at zero; give them values so every term is exercised.
  std::mt19937_64 rng(seed * 7919 + 1);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& [name, m] : p.tensors())
    for (std::size_t r = 0; r < m->rows(); ++r)
      for (std::size_t k = 0; k < m->cols(); ++k) (*m)(r, k) = u(rng);
  return p;
}

inline TokenSeq random_tokens(std::mt19937_64& rng, std::size_t len, std::size_t vocab, Role role) {
  std::uniform_int_distribution<TokenId> d(static_cast<TokenId>(Vocab::kNumSpecials), static_cast<TokenId>(vocab - 1));
  TokenSeq s;
  s.role = role;
  for (std::size_t i = 0; i < len; ++i) s.ids.push_back(d(rng));
  return s;
}

struct DateModel {
  ModelBundle bundle;
  std::vector<RawPair> train;
  std::vector<RawPair> held_out;
};

// A small date model that trains in a few seconds; good enough for
// behavioural tests, not for accuracy targets.
inline const DateModel& small_date_model() {
  static const DateModel m = [] {
    DateModel d;
    DatasetSpec spec;
    spec.size = 3300;
    spec.seed = 5;
    auto raw = generate_date_pairs(spec);
    d.train.assign(raw.begin(), raw.begin() + 3000);
    d.held_out.assign(raw.begin() + 3000, raw.end());
    auto sv = build_vocab(d.train, Role::source, TokenizerMode::char_level);
    auto tv = build_vocab(d.train, Role::target, TokenizerMode::char_level);
    auto pairs = make_pairs(d.train, sv, tv, TokenizerMode::char_level);
    ModelConfig c;
    c.hidden_dim = 32;
    c.embed_dim = 16;
    c.src_vocab_size = static_cast<std::uint32_t>(sv.size());
    c.tgt_vocab_size = static_cast<std::uint32_t>(tv.size());
    TrainConfig h;
    h.epochs = 8;
    h.lr = 3e-3;
    d.bundle = {train(init_params(c, 3), pairs, h).params, sv, tv, TokenizerMode::char_level};
    return d;
  }();
  return m;
}

}  // namespace fixtures
