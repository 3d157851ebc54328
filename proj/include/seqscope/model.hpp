#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "seqscope/corpus.hpp"
#include "seqscope/kernels.hpp"
#include "seqscope/tensor.hpp"

namespace seqscope {

class ModelError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Raised by load_params for bad magic, version, shapes or truncation.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  std::uint32_t embed_dim = 32;
  std::uint32_t hidden_dim = 64;
  std::uint32_t src_vocab_size = 0;
  std::uint32_t tgt_vocab_size = 0;
  bool bidirectional_encoder = true;
  std::uint32_t max_decode_len = 16;
  std::uint32_t topk_record = 10;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Gated recurrent cell. Rows of W, U and b are stacked as
/// [update gate z; reset gate r; candidate n], each hidden_dim tall.
struct GruParams {
  Matrix W;  // [3H x E]
  Matrix U;  // [3H x H]
  Matrix b;  // [3H x 1]
  friend bool operator==(const GruParams&, const GruParams&) = default;
};

struct ModelParams {
  ModelConfig config;
  Matrix src_embedding;  // [Vs x E]
  Matrix tgt_embedding;  // [Vt x E]
  GruParams encoder_fwd;
  GruParams encoder_bwd;  // empty when the encoder is unidirectional
  Matrix encoder_bridge;  // [H x 2H] (or [H x H])
  GruParams decoder;
  Matrix combine;       // [H x 2H]
  Matrix combine_bias;  // [H x 1]
  Matrix output_proj;   // [Vt x H]
  Matrix output_bias;   // [Vt x 1]

  /// Every tensor in serialization order, with a stable name.
  std::vector<std::pair<std::string, Matrix*>> tensors();
  std::vector<std::pair<std::string, const Matrix*>> tensors() const;

  /// Same shapes as this, all zeros.
  ModelParams zeros_like() const;
  std::size_t parameter_count() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Gradient of the loss with respect to every tensor of ModelParams.
using Gradients = ModelParams;

struct TokenProb {
  TokenId token = 0;
  double prob = 0.0;
  friend bool operator==(const TokenProb&, const TokenProb&) = default;
};

struct StepPredictions {
  std::size_t step = 0;
  std::vector<TokenProb> entries;  // descending probability, ties by lower id
  TokenId chosen = 0;
  friend bool operator==(const StepPredictions&, const StepPredictions&) = default;
};

/// Everything a forward run exposes. The target sequence includes the
/// trailing EOS whenever the run emitted one; row t of decoder_states,
/// attention and context_vectors belongs to the step that produced target[t].
struct TraceRecord {
  TokenSeq source;
  TokenSeq target;
  Matrix encoder_states;   // [S x H]
  Matrix decoder_states;   // [T x H]
  Matrix attention;        // [T x S]
  Matrix context_vectors;  // [T x H]
  std::vector<StepPredictions> step_predictions;
  std::vector<double> step_logprobs;  // log p(target[t])
  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Forward pieces ------------------------------------------------------------

Matrix encode(const ModelParams& params, const TokenSeq& source);

/// Softmax of the dot products between each encoder row and the decoder state.
Vector attention_weights(const Matrix& encoder_states, std::span<const double> decoder_state);

Vector initial_decoder_state(const ModelParams& params, const Matrix& encoder_states);

struct DecodeStepOutput {
  Vector state;
  Vector attention;
  Vector context;
  Vector distribution;
};

/// One decoder step. When attention_override is given it replaces the
/// computed attention before the context vector is formed.
DecodeStepOutput decode_step(const ModelParams& params, std::span<const double> prev_state,
                             TokenId prev_token, const Matrix& encoder_states,
                             std::optional<std::span<const double>> attention_override = {});

std::vector<TokenProb> top_k(std::span<const double> distribution, std::size_t k);

struct ForwardResult {
  TraceRecord trace;
  double loss = 0.0;
};

/// Feeds BOS + gold target; predicts target + EOS. Loss is the mean
/// negative log-likelihood per predicted token.
ForwardResult forward_teacher_forced(const ModelParams& params, const ParallelPair& pair);

/// Runs the decoder along a fixed output sequence (which may end in EOS)
/// and records the full trace. Overrides are keyed by decoder step.
struct AttentionOverride {
  std::size_t step = 0;
  Vector distribution;
};
TraceRecord trace_forced(const ModelParams& params, const TokenSeq& source,
                         std::span<const TokenId> outputs,
                         std::span<const AttentionOverride> overrides = {});

// Training ------------------------------------------------------------------

struct GradientResult {
  Gradients grads;
  double loss = 0.0;  // mean over the batch of per-pair losses
};

/// Exact gradients of the mean batch loss by backpropagation through time.
/// Per-pair gradients are reduced in batch order, so both execution modes
/// produce bit-identical results.
GradientResult compute_gradients(const ModelParams& params, std::span<const ParallelPair> batch,
                                 Exec exec = Exec::parallel);

/// Loss and gradient for a single pair (gradient added into grads).
double accumulate_pair_gradient(const ModelParams& params, const ParallelPair& pair,
                                Gradients& grads);

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 15;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Exec exec = Exec::parallel;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_history;  // per-epoch mean loss
};

/// Called after every epoch with (epoch index from 1, mean loss).
using EpochCallback = std::function<void(std::size_t, double)>;

TrainResult train(ModelParams params, std::span<const ParallelPair> dataset, const TrainConfig& hyper,
                  const EpochCallback& on_epoch = {});

double global_norm(const Gradients& g);

// Persistence -----------------------------------------------------------------

void save_params(const std::filesystem::path& path, const ModelParams& params);
/// When expected is set, a differing config stored in the file is an error.
ModelParams load_params(const std::filesystem::path& path,
                        const std::optional<ModelConfig>& expected = std::nullopt);

void write_params(std::ostream& out, const ModelParams& params);
ModelParams read_params(std::istream& in);

}  // namespace seqscope
