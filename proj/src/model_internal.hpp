#pragma once

// Forward-pass building blocks that keep the intermediates needed for
// backpropagation. Inference and training share these so traces and
// training losses come from the same arithmetic.

#include <optional>
#include <span>
#include <vector>

#include "seqscope/model.hpp"

namespace seqscope::detail {

struct GruStep {
  Vector z, r, n, rh, h;
};

void gru_step(const GruParams& p, std::span<const double> input, std::span<const double> h_prev,
              GruStep& out);

struct EncoderCache {
  std::vector<GruStep> fwd;   // fwd[s] consumed token s going left to right
  std::vector<GruStep> bwd;   // bwd[s] consumed token s going right to left
  std::vector<Vector> joined; // bridge input [f_s ; b_s]
  Matrix outputs;             // [S x H]
};

void run_encoder(const ModelParams& params, const TokenSeq& source, EncoderCache& cache);

struct DecoderStep {
  GruStep gru;
  Vector attention;
  Vector context;
  Vector joined;  // [h ; context]
  Vector combined;
  Vector distribution;
  Vector log_distribution;
};

void run_decoder_step(const ModelParams& params, std::span<const double> h_prev, TokenId prev_token,
                      const Matrix& encoder_states,
                      std::optional<std::span<const double>> attention_override, DecoderStep& out);

void softmax_inplace(std::span<double> v);
void check_token(TokenId id, std::size_t vocab_size, const char* what);

}  // namespace seqscope::detail
