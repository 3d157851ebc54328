#include "seqscope/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "binary_io.hpp"
#include "model_internal.hpp"

namespace seqscope {

namespace {

constexpr char kModelMagic[5] = "S2SM";
constexpr std::uint32_t kModelVersion = 1;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

GruParams make_gru(std::size_t hidden, std::size_t input) {
  return {Matrix(3 * hidden, input), Matrix(3 * hidden, hidden), Matrix(3 * hidden, 1)};
}

template <typename Self, typename Ptr>
std::vector<std::pair<std::string, Ptr>> collect_tensors(Self& p) {
  std::vector<std::pair<std::string, Ptr>> out;
  out.emplace_back("src_embedding", &p.src_embedding);
  out.emplace_back("tgt_embedding", &p.tgt_embedding);
  auto gru = [&](const std::string& prefix, auto& g) {
    out.emplace_back(prefix + ".W", &g.W);
    out.emplace_back(prefix + ".U", &g.U);
    out.emplace_back(prefix + ".b", &g.b);
  };
  gru("encoder_fwd", p.encoder_fwd);
  if (p.config.bidirectional_encoder) gru("encoder_bwd", p.encoder_bwd);
  out.emplace_back("encoder_bridge", &p.encoder_bridge);
  gru("decoder", p.decoder);
  out.emplace_back("combine", &p.combine);
  out.emplace_back("combine_bias", &p.combine_bias);
  out.emplace_back("output_proj", &p.output_proj);
  out.emplace_back("output_bias", &p.output_bias);
  return out;
}

ModelParams shaped(const ModelConfig& c) {
  const std::size_t H = c.hidden_dim, E = c.embed_dim;
  ModelParams p;
  p.config = c;
  p.src_embedding = Matrix(c.src_vocab_size, E);
  p.tgt_embedding = Matrix(c.tgt_vocab_size, E);
  p.encoder_fwd = make_gru(H, E);
  if (c.bidirectional_encoder) p.encoder_bwd = make_gru(H, E);
  p.encoder_bridge = Matrix(H, c.bidirectional_encoder ? 2 * H : H);
  p.decoder = make_gru(H, E);
  p.combine = Matrix(H, 2 * H);
  p.combine_bias = Matrix(H, 1);
  p.output_proj = Matrix(c.tgt_vocab_size, H);
  p.output_bias = Matrix(c.tgt_vocab_size, 1);
  return p;
}

bool is_bias(const std::string& name) {
  return name.ends_with(".b") || name.ends_with("_bias");
}

}  // namespace

void ModelConfig::validate() const {
  if (embed_dim < 1 || hidden_dim < 1 || src_vocab_size < 1 || tgt_vocab_size < 1 ||
      max_decode_len < 1 || topk_record < 1)
    throw ModelError("model dimensions must all be at least 1");
  if (topk_record > tgt_vocab_size)
    throw ModelError("topk_record (" + std::to_string(topk_record) +
                     ") exceeds target vocabulary size (" + std::to_string(tgt_vocab_size) + ")");
}

std::vector<std::pair<std::string, Matrix*>> ModelParams::tensors() {
  return collect_tensors<ModelParams, Matrix*>(*this);
}

std::vector<std::pair<std::string, const Matrix*>> ModelParams::tensors() const {
  return collect_tensors<const ModelParams, const Matrix*>(*this);
}

ModelParams ModelParams::zeros_like() const { return shaped(config); }

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors()) n += t->size();
  return n;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams p = shaped(config);
  const double a = 1.0 / std::sqrt(static_cast<double>(config.hidden_dim));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-a, a);
  for (auto& [name, t] : p.tensors()) {
    if (is_bias(name)) continue;
    for (double& v : t->values()) v = dist(rng);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward building blocks

namespace detail {

void check_token(TokenId id, std::size_t vocab_size, const char* what) {
  if (id < 0 || static_cast<std::size_t>(id) >= vocab_size)
    throw ModelError(std::string(what) + " token id " + std::to_string(id) +
                     " out of range for vocabulary of size " + std::to_string(vocab_size));
}

void softmax_inplace(std::span<double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - m);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

void gru_step(const GruParams& p, std::span<const double> input, std::span<const double> h_prev,
              GruStep& out) {
  const std::size_t H = h_prev.size();
  Vector wx(3 * H);
  linalg::matvec(p.W, input, wx);
  for (std::size_t i = 0; i < 3 * H; ++i) wx[i] += p.b.values()[i];
  linalg::matvec_rows_add(p.U, 0, h_prev, std::span<double>(wx.data(), 2 * H));

  out.z.resize(H);
  out.r.resize(H);
  out.rh.resize(H);
  out.n.resize(H);
  out.h.resize(H);
  for (std::size_t i = 0; i < H; ++i) {
    out.z[i] = sigmoid(wx[i]);
    out.r[i] = sigmoid(wx[H + i]);
    out.rh[i] = out.r[i] * h_prev[i];
  }
  std::span<double> npre(wx.data() + 2 * H, H);
  linalg::matvec_rows_add(p.U, 2 * H, out.rh, npre);
  for (std::size_t i = 0; i < H; ++i) {
    out.n[i] = std::tanh(npre[i]);
    out.h[i] = (1.0 - out.z[i]) * h_prev[i] + out.z[i] * out.n[i];
  }
}

void run_encoder(const ModelParams& params, const TokenSeq& source, EncoderCache& cache) {
  const auto& cfg = params.config;
  const std::size_t S = source.size();
  const std::size_t H = cfg.hidden_dim;
  if (S == 0) throw ModelError("cannot encode an empty source sequence");
  for (TokenId id : source.ids) check_token(id, cfg.src_vocab_size, "source");

  cache.fwd.assign(S, {});
  const Vector zero(H, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    auto h_prev = s == 0 ? std::span<const double>(zero) : std::span<const double>(cache.fwd[s - 1].h);
    gru_step(params.encoder_fwd, params.src_embedding.row(static_cast<std::size_t>(source.ids[s])),
             h_prev, cache.fwd[s]);
  }
  cache.bwd.clear();
  if (cfg.bidirectional_encoder) {
    cache.bwd.assign(S, {});
    for (std::size_t k = 0; k < S; ++k) {
      const std::size_t s = S - 1 - k;
      auto h_prev = k == 0 ? std::span<const double>(zero) : std::span<const double>(cache.bwd[s + 1].h);
      gru_step(params.encoder_bwd, params.src_embedding.row(static_cast<std::size_t>(source.ids[s])),
               h_prev, cache.bwd[s]);
    }
  }

  cache.joined.assign(S, {});
  cache.outputs = Matrix(S, H);
  for (std::size_t s = 0; s < S; ++s) {
    auto& j = cache.joined[s];
    j = cache.fwd[s].h;
    if (cfg.bidirectional_encoder) j.insert(j.end(), cache.bwd[s].h.begin(), cache.bwd[s].h.end());
    auto row = cache.outputs.row(s);
    linalg::matvec(params.encoder_bridge, j, row);
    for (double& v : row) v = std::tanh(v);
  }
}

void run_decoder_step(const ModelParams& params, std::span<const double> h_prev, TokenId prev_token,
                      const Matrix& enc, std::optional<std::span<const double>> attention_override,
                      DecoderStep& out) {
  const auto& cfg = params.config;
  const std::size_t H = cfg.hidden_dim;
  const std::size_t S = enc.rows();
  check_token(prev_token, cfg.tgt_vocab_size, "target");
  if (h_prev.size() != H || enc.cols() != H) throw ModelError("decoder state dimension mismatch");

  gru_step(params.decoder, params.tgt_embedding.row(static_cast<std::size_t>(prev_token)), h_prev,
           out.gru);
  const Vector& h = out.gru.h;

  if (attention_override) {
    if (attention_override->size() != S) throw ModelError("attention override has wrong length");
    out.attention.assign(attention_override->begin(), attention_override->end());
  } else {
    out.attention = attention_weights(enc, h);
  }

  out.context.assign(H, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    const double a = out.attention[s];
    const auto row = enc.row(s);
    for (std::size_t i = 0; i < H; ++i) out.context[i] += a * row[i];
  }

  out.joined.resize(2 * H);
  std::copy(h.begin(), h.end(), out.joined.begin());
  std::copy(out.context.begin(), out.context.end(), out.joined.begin() + static_cast<std::ptrdiff_t>(H));
  out.combined.resize(H);
  linalg::matvec(params.combine, out.joined, out.combined);
  for (std::size_t i = 0; i < H; ++i) out.combined[i] = std::tanh(out.combined[i] + params.combine_bias.values()[i]);

  const std::size_t V = cfg.tgt_vocab_size;
  Vector logits(V);
  linalg::matvec(params.output_proj, out.combined, logits);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < V; ++v) {
    logits[v] += params.output_bias.values()[v];
    m = std::max(m, logits[v]);
  }
  out.distribution.resize(V);
  double sum = 0.0;
  for (std::size_t v = 0; v < V; ++v) {
    out.distribution[v] = std::exp(logits[v] - m);
    sum += out.distribution[v];
  }
  const double log_sum = std::log(sum);
  out.log_distribution.resize(V);
  for (std::size_t v = 0; v < V; ++v) {
    out.distribution[v] /= sum;
    out.log_distribution[v] = (logits[v] - m) - log_sum;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public forward API

Matrix encode(const ModelParams& params, const TokenSeq& source) {
  detail::EncoderCache cache;
  detail::run_encoder(params, source, cache);
  return std::move(cache.outputs);
}

Vector attention_weights(const Matrix& enc, std::span<const double> decoder_state) {
  if (enc.cols() != decoder_state.size()) throw ModelError("attention: dimension mismatch");
  Vector scores(enc.rows());
  for (std::size_t s = 0; s < enc.rows(); ++s) scores[s] = linalg::dot(enc.row(s), decoder_state);
  if (!scores.empty()) detail::softmax_inplace(scores);
  return scores;
}

Vector initial_decoder_state(const ModelParams& params, const Matrix& enc) {
  if (enc.rows() == 0 || enc.cols() != params.config.hidden_dim)
    throw ModelError("initial_decoder_state: bad encoder states");
  const auto last = enc.row(enc.rows() - 1);
  return Vector(last.begin(), last.end());
}

DecodeStepOutput decode_step(const ModelParams& params, std::span<const double> prev_state,
                             TokenId prev_token, const Matrix& encoder_states,
                             std::optional<std::span<const double>> attention_override) {
  detail::DecoderStep step;
  detail::run_decoder_step(params, prev_state, prev_token, encoder_states, attention_override, step);
  return {std::move(step.gru.h), std::move(step.attention), std::move(step.context),
          std::move(step.distribution)};
}

std::vector<TokenProb> top_k(std::span<const double> dist, std::size_t k) {
  std::vector<TokenId> ids(dist.size());
  std::iota(ids.begin(), ids.end(), 0);
  k = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                    [&](TokenId a, TokenId b) {
                      const double pa = dist[static_cast<std::size_t>(a)];
                      const double pb = dist[static_cast<std::size_t>(b)];
                      return pa != pb ? pa > pb : a < b;
                    });
  std::vector<TokenProb> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back({ids[i], dist[static_cast<std::size_t>(ids[i])]});
  return out;
}

TraceRecord trace_forced(const ModelParams& params, const TokenSeq& source,
                         std::span<const TokenId> outputs, std::span<const AttentionOverride> overrides) {
  const auto& cfg = params.config;
  detail::EncoderCache enc;
  detail::run_encoder(params, source, enc);
  for (TokenId id : outputs) detail::check_token(id, cfg.tgt_vocab_size, "target");

  const std::size_t T = outputs.size();
  const std::size_t S = source.size();
  const std::size_t H = cfg.hidden_dim;
  TraceRecord tr;
  tr.source = source;
  tr.source.role = Role::source;
  tr.target.role = Role::target;
  tr.target.ids.assign(outputs.begin(), outputs.end());
  tr.decoder_states = Matrix(T, H);
  tr.attention = Matrix(T, S);
  tr.context_vectors = Matrix(T, H);
  tr.step_predictions.reserve(T);
  tr.step_logprobs.reserve(T);

  Vector h = initial_decoder_state(params, enc.outputs);
  TokenId prev = Vocab::kBos;
  detail::DecoderStep step;
  for (std::size_t t = 0; t < T; ++t) {
    std::optional<std::span<const double>> ov;
    for (const auto& o : overrides)
      if (o.step == t) ov = std::span<const double>(o.distribution);
    detail::run_decoder_step(params, h, prev, enc.outputs, ov, step);
    std::copy(step.gru.h.begin(), step.gru.h.end(), tr.decoder_states.row(t).begin());
    std::copy(step.attention.begin(), step.attention.end(), tr.attention.row(t).begin());
    std::copy(step.context.begin(), step.context.end(), tr.context_vectors.row(t).begin());
    const TokenId chosen = outputs[t];
    tr.step_predictions.push_back({t, top_k(step.distribution, cfg.topk_record), chosen});
    tr.step_logprobs.push_back(step.log_distribution[static_cast<std::size_t>(chosen)]);
    h = step.gru.h;
    prev = chosen;
  }
  tr.encoder_states = std::move(enc.outputs);
  return tr;
}

ForwardResult forward_teacher_forced(const ModelParams& params, const ParallelPair& pair) {
  if (pair.source.empty()) throw ModelError("source sequence is empty");
  std::vector<TokenId> outputs = pair.target.ids;
  outputs.push_back(Vocab::kEos);
  ForwardResult r;
  r.trace = trace_forced(params, pair.source, outputs);
  double nll = 0.0;
  for (double lp : r.trace.step_logprobs) nll -= lp;
  r.loss = nll / static_cast<double>(outputs.size());
  return r;
}

// ---------------------------------------------------------------------------
// Persistence

void write_params(std::ostream& out, const ModelParams& p) {
  const auto& c = p.config;
  io::put_magic(out, kModelMagic);
  io::put_uint<std::uint32_t>(out, kModelVersion);
  for (std::uint32_t v : {c.embed_dim, c.hidden_dim, c.src_vocab_size, c.tgt_vocab_size,
                          static_cast<std::uint32_t>(c.bidirectional_encoder ? 1 : 0),
                          c.max_decode_len, c.topk_record})
    io::put_uint<std::uint32_t>(out, v);
  for (const auto& [name, t] : p.tensors()) {
    io::put_uint<std::uint64_t>(out, t->rows());
    io::put_uint<std::uint64_t>(out, t->cols());
    for (double v : t->values()) io::put_f64(out, v);
  }
}

ModelParams read_params(std::istream& in) {
  if (!io::read_magic(in, kModelMagic)) throw FormatError("not a model file (bad magic)");
  try {
    const auto version = io::get_uint<std::uint32_t>(in);
    if (version != kModelVersion)
      throw FormatError("unsupported model file version " + std::to_string(version));
    ModelConfig c;
    c.embed_dim = io::get_uint<std::uint32_t>(in);
    c.hidden_dim = io::get_uint<std::uint32_t>(in);
    c.src_vocab_size = io::get_uint<std::uint32_t>(in);
    c.tgt_vocab_size = io::get_uint<std::uint32_t>(in);
    const auto bidir = io::get_uint<std::uint32_t>(in);
    if (bidir > 1) throw FormatError("invalid bidirectional flag in model file");
    c.bidirectional_encoder = bidir == 1;
    c.max_decode_len = io::get_uint<std::uint32_t>(in);
    c.topk_record = io::get_uint<std::uint32_t>(in);
    try {
      c.validate();
    } catch (const ModelError& e) {
      throw FormatError(std::string("invalid model config: ") + e.what());
    }
    ModelParams p = shaped(c);
    for (auto& [name, t] : p.tensors()) {
      const auto rows = io::get_uint<std::uint64_t>(in);
      const auto cols = io::get_uint<std::uint64_t>(in);
      if (rows != t->rows() || cols != t->cols())
        throw FormatError("tensor " + name + " has shape " + std::to_string(rows) + "x" +
                          std::to_string(cols) + ", expected " + std::to_string(t->rows()) + "x" +
                          std::to_string(t->cols()));
      for (double& v : t->values()) {
        v = io::get_f64(in);
        if (!std::isfinite(v)) throw FormatError("tensor " + name + " contains a non-finite value");
      }
    }
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after model tensors");
    return p;
  } catch (const io::TruncatedError&) {
    throw FormatError("model file is truncated");
  }
}

void save_params(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_params(out, params);
  if (!out) throw std::runtime_error("I/O error while writing " + path.string());
}

ModelParams load_params(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
  ModelParams p = read_params(in);
  if (expected && !(*expected == p.config))
    throw FormatError("model file config does not match the requested configuration");
  return p;
}

}  // namespace seqscope
