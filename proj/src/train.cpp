#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "model_internal.hpp"
#include "seqscope/model.hpp"

namespace seqscope {

namespace {

using detail::DecoderStep;
using detail::EncoderCache;
using detail::GruStep;

// Backward through one gated-cell update. d_input is accumulated,
// d_hprev is overwritten.
void gru_backward(const GruParams& p, GruParams& g, std::span<const double> input,
                  std::span<const double> h_prev, const GruStep& c, std::span<const double> dh,
                  std::span<double> d_input, std::span<double> d_hprev) {
  const std::size_t H = h_prev.size();
  Vector dpre(3 * H);
  for (std::size_t i = 0; i < H; ++i) {
    const double dn = dh[i] * c.z[i];
    const double dz = dh[i] * (c.n[i] - h_prev[i]);
    d_hprev[i] = dh[i] * (1.0 - c.z[i]);
    dpre[2 * H + i] = dn * (1.0 - c.n[i] * c.n[i]);
    dpre[i] = dz * c.z[i] * (1.0 - c.z[i]);
  }
  Vector d_rh(H, 0.0);
  linalg::matvec_t_rows_add(p.U, 2 * H, std::span<const double>(dpre.data() + 2 * H, H), d_rh);
  for (std::size_t i = 0; i < H; ++i) {
    const double dr = d_rh[i] * h_prev[i];
    d_hprev[i] += d_rh[i] * c.r[i];
    dpre[H + i] = dr * c.r[i] * (1.0 - c.r[i]);
  }
  linalg::outer_rows_add(g.W, 0, dpre, input);
  linalg::outer_rows_add(g.U, 0, std::span<const double>(dpre.data(), 2 * H), h_prev);
  linalg::outer_rows_add(g.U, 2 * H, std::span<const double>(dpre.data() + 2 * H, H), c.rh);
  for (std::size_t i = 0; i < 3 * H; ++i) g.b.values()[i] += dpre[i];
  linalg::matvec_t_rows_add(p.W, 0, dpre, d_input);
  linalg::matvec_t_rows_add(p.U, 0, std::span<const double>(dpre.data(), 2 * H), d_hprev);
}

void add_into(Gradients& total, const Gradients& g) {
  auto dst = total.tensors();
  auto src = g.tensors();
  for (std::size_t k = 0; k < dst.size(); ++k) {
    auto& d = dst[k].second->values();
    const auto& s = src[k].second->values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  }
}

void scale_by_inverse(Gradients& g, double n) {
  for (auto& [name, t] : g.tensors())
    for (double& v : t->values()) v /= n;
}

void zero(Gradients& g) {
  for (auto& [name, t] : g.tensors()) t->fill(0.0);
}

// Per-pair gradients reduced in batch order; per-pair losses written to losses.
Gradients batch_gradient(const ModelParams& params, std::span<const ParallelPair* const> batch,
                         Exec exec, std::vector<double>& losses) {
  const std::size_t B = batch.size();
  if (B == 0) throw ModelError("gradient batch is empty");
  losses.assign(B, 0.0);
  Gradients total = params.zeros_like();

  if (exec == Exec::serial || B == 1) {
    Gradients scratch = params.zeros_like();
    for (std::size_t i = 0; i < B; ++i) {
      zero(scratch);
      losses[i] = accumulate_pair_gradient(params, *batch[i], scratch);
      add_into(total, scratch);
    }
  } else {
    std::vector<Gradients> per_pair(B);
    std::vector<std::string> errors(B);
    const auto n = static_cast<std::ptrdiff_t>(B);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      try {
        per_pair[i] = params.zeros_like();
        losses[i] = accumulate_pair_gradient(params, *batch[i], per_pair[i]);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
    for (const auto& e : errors)
      if (!e.empty()) throw ModelError(e);
    for (std::size_t i = 0; i < B; ++i) add_into(total, per_pair[i]);
  }
  scale_by_inverse(total, static_cast<double>(B));
  return total;
}

}  // namespace

double accumulate_pair_gradient(const ModelParams& params, const ParallelPair& pair, Gradients& g) {
  const auto& cfg = params.config;
  const std::size_t H = cfg.hidden_dim;
  const std::size_t E = cfg.embed_dim;
  const std::size_t S = pair.source.size();

  EncoderCache enc;
  detail::run_encoder(params, pair.source, enc);
  const Matrix& x = enc.outputs;

  std::vector<TokenId> inputs{Vocab::kBos};
  inputs.insert(inputs.end(), pair.target.ids.begin(), pair.target.ids.end());
  std::vector<TokenId> outputs = pair.target.ids;
  outputs.push_back(Vocab::kEos);
  for (TokenId id : outputs) detail::check_token(id, cfg.tgt_vocab_size, "target");
  const std::size_t T = outputs.size();

  const Vector h0 = initial_decoder_state(params, x);
  std::vector<DecoderStep> steps(T);
  double nll = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    const Vector& h_prev = t == 0 ? h0 : steps[t - 1].gru.h;
    detail::run_decoder_step(params, h_prev, inputs[t], x, std::nullopt, steps[t]);
    nll -= steps[t].log_distribution[static_cast<std::size_t>(outputs[t])];
  }
  const double inv_t = 1.0 / static_cast<double>(T);

  // Decoder, newest step first.
  Matrix dx(S, H);
  Vector dh_carry(H, 0.0);
  Vector dlogits(cfg.tgt_vocab_size), d_comb(H), dpre_c(H), d_joined(2 * H), dh(H), d_emb(E),
      d_hprev(H), da(S);
  for (std::size_t tt = T; tt-- > 0;) {
    const DecoderStep& st = steps[tt];
    for (std::size_t v = 0; v < dlogits.size(); ++v) dlogits[v] = st.distribution[v] * inv_t;
    dlogits[static_cast<std::size_t>(outputs[tt])] -= inv_t;

    linalg::outer_rows_add(g.output_proj, 0, dlogits, st.combined);
    for (std::size_t v = 0; v < dlogits.size(); ++v) g.output_bias.values()[v] += dlogits[v];
    std::fill(d_comb.begin(), d_comb.end(), 0.0);
    linalg::matvec_t_rows_add(params.output_proj, 0, dlogits, d_comb);

    for (std::size_t i = 0; i < H; ++i) dpre_c[i] = d_comb[i] * (1.0 - st.combined[i] * st.combined[i]);
    linalg::outer_rows_add(g.combine, 0, dpre_c, st.joined);
    for (std::size_t i = 0; i < H; ++i) g.combine_bias.values()[i] += dpre_c[i];
    std::fill(d_joined.begin(), d_joined.end(), 0.0);
    linalg::matvec_t_rows_add(params.combine, 0, dpre_c, d_joined);

    for (std::size_t i = 0; i < H; ++i) dh[i] = d_joined[i] + dh_carry[i];
    std::span<const double> dctx(d_joined.data() + H, H);

    // context = sum_s a_s x_s ; a = softmax(x_s . h)
    double sum_ada = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      const auto xs = x.row(s);
      auto dxs = dx.row(s);
      const double a = st.attention[s];
      for (std::size_t i = 0; i < H; ++i) dxs[i] += a * dctx[i];
      da[s] = linalg::dot(xs, dctx);
      sum_ada += a * da[s];
    }
    const Vector& h = st.gru.h;
    for (std::size_t s = 0; s < S; ++s) {
      const double dscore = st.attention[s] * (da[s] - sum_ada);
      if (dscore == 0.0) continue;
      const auto xs = x.row(s);
      auto dxs = dx.row(s);
      for (std::size_t i = 0; i < H; ++i) {
        dxs[i] += dscore * h[i];
        dh[i] += dscore * xs[i];
      }
    }

    const Vector& h_prev = tt == 0 ? h0 : steps[tt - 1].gru.h;
    const auto prev_tok = static_cast<std::size_t>(inputs[tt]);
    std::fill(d_emb.begin(), d_emb.end(), 0.0);
    gru_backward(params.decoder, g.decoder, params.tgt_embedding.row(prev_tok), h_prev, st.gru, dh,
                 d_emb, d_hprev);
    auto erow = g.tgt_embedding.row(prev_tok);
    for (std::size_t i = 0; i < E; ++i) erow[i] += d_emb[i];
    dh_carry = d_hprev;
  }
  // The decoder starts from the last encoder output.
  {
    auto last = dx.row(S - 1);
    for (std::size_t i = 0; i < H; ++i) last[i] += dh_carry[i];
  }

  // Bridge.
  const std::size_t J = enc.joined[0].size();
  std::vector<Vector> d_join(S, Vector(J, 0.0));
  Vector dpre(H);
  for (std::size_t s = 0; s < S; ++s) {
    const auto xs = x.row(s);
    const auto dxs = dx.row(s);
    for (std::size_t i = 0; i < H; ++i) dpre[i] = dxs[i] * (1.0 - xs[i] * xs[i]);
    linalg::outer_rows_add(g.encoder_bridge, 0, dpre, enc.joined[s]);
    linalg::matvec_t_rows_add(params.encoder_bridge, 0, dpre, d_join[s]);
  }

  // Encoder directions.
  const Vector zero_h(H, 0.0);
  Vector carry(H, 0.0);
  for (std::size_t s = S; s-- > 0;) {
    for (std::size_t i = 0; i < H; ++i) dh[i] = d_join[s][i] + carry[i];
    const auto tok = static_cast<std::size_t>(pair.source.ids[s]);
    const Vector& h_prev = s == 0 ? zero_h : enc.fwd[s - 1].h;
    std::fill(d_emb.begin(), d_emb.end(), 0.0);
    gru_backward(params.encoder_fwd, g.encoder_fwd, params.src_embedding.row(tok), h_prev, enc.fwd[s],
                 dh, d_emb, d_hprev);
    auto erow = g.src_embedding.row(tok);
    for (std::size_t i = 0; i < E; ++i) erow[i] += d_emb[i];
    carry = d_hprev;
  }
  if (cfg.bidirectional_encoder) {
    std::fill(carry.begin(), carry.end(), 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t i = 0; i < H; ++i) dh[i] = d_join[s][H + i] + carry[i];
      const auto tok = static_cast<std::size_t>(pair.source.ids[s]);
      const Vector& h_prev = s + 1 == S ? zero_h : enc.bwd[s + 1].h;
      std::fill(d_emb.begin(), d_emb.end(), 0.0);
      gru_backward(params.encoder_bwd, g.encoder_bwd, params.src_embedding.row(tok), h_prev,
                   enc.bwd[s], dh, d_emb, d_hprev);
      auto erow = g.src_embedding.row(tok);
      for (std::size_t i = 0; i < E; ++i) erow[i] += d_emb[i];
      carry = d_hprev;
    }
  }
  return nll * inv_t;
}

GradientResult compute_gradients(const ModelParams& params, std::span<const ParallelPair> batch,
                                 Exec exec) {
  std::vector<const ParallelPair*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& p : batch) ptrs.push_back(&p);
  std::vector<double> losses;
  GradientResult r;
  r.grads = batch_gradient(params, ptrs, exec, losses);
  double sum = 0.0;
  for (double l : losses) sum += l;
  r.loss = sum / static_cast<double>(losses.size());
  return r;
}

double global_norm(const Gradients& g) {
  double s = 0.0;
  for (const auto& [name, t] : g.tensors())
    for (double v : t->values()) s += v * v;
  return std::sqrt(s);
}

TrainResult train(ModelParams params, std::span<const ParallelPair> dataset, const TrainConfig& hyper,
                  const EpochCallback& on_epoch) {
  if (dataset.empty()) throw ModelError("training dataset is empty");
  if (hyper.batch_size == 0) throw ModelError("batch size must be at least 1");

  const std::size_t N = dataset.size();
  ModelParams m = params.zeros_like();
  ModelParams v = params.zeros_like();
  std::uint64_t step = 0;

  TrainResult result;
  std::vector<std::size_t> order(N);
  std::vector<double> sample_loss(N);
  std::vector<const ParallelPair*> batch;
  std::vector<double> batch_losses;

  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(hyper.seed), static_cast<std::uint32_t>(hyper.seed >> 32),
                      static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    for (std::size_t start = 0, b = 0; start < N; start += hyper.batch_size, ++b) {
      const std::size_t end = std::min(N, start + hyper.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(&dataset[order[i]]);
      Gradients g = batch_gradient(params, batch, hyper.exec, batch_losses);
      for (std::size_t i = start; i < end; ++i) {
        const double l = batch_losses[i - start];
        if (!std::isfinite(l)) {
          std::ostringstream msg;
          msg << "non-finite loss at epoch " << epoch << ", batch " << b + 1;
          throw ModelError(msg.str());
        }
        sample_loss[order[i]] = l;
      }

      const double norm = global_norm(g);
      if (!std::isfinite(norm)) {
        std::ostringstream msg;
        msg << "non-finite gradient at epoch " << epoch << ", batch " << b + 1;
        throw ModelError(msg.str());
      }
      const double clip = (hyper.clip_norm > 0.0 && norm > hyper.clip_norm) ? hyper.clip_norm / norm : 1.0;

      ++step;
      const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
      auto pt = params.tensors();
      auto gt = g.tensors();
      auto mt = m.tensors();
      auto vt = v.tensors();
      for (std::size_t k = 0; k < pt.size(); ++k) {
        auto& pv = pt[k].second->values();
        const auto& gv = gt[k].second->values();
        auto& mv = mt[k].second->values();
        auto& vv = vt[k].second->values();
        for (std::size_t i = 0; i < pv.size(); ++i) {
          const double gi = gv[i] * clip;
          mv[i] = hyper.beta1 * mv[i] + (1.0 - hyper.beta1) * gi;
          vv[i] = hyper.beta2 * vv[i] + (1.0 - hyper.beta2) * gi * gi;
          const double mhat = mv[i] / bc1;
          const double vhat = vv[i] / bc2;
          pv[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.epsilon);
        }
      }
    }

    double total = 0.0;
    for (double l : sample_loss) total += l;
    const double mean = total / static_cast<double>(N);
    result.loss_history.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  result.params = std::move(params);
  return result;
}

}  // namespace seqscope
