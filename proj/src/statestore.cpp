#include "seqscope/statestore.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "binary_io.hpp"

namespace seqscope {

namespace {

constexpr char kStoreMagic[5] = "S2SV";
constexpr std::uint32_t kStoreVersion = 1;

}  // namespace

const char* to_string(StateRole role) {
  switch (role) {
    case StateRole::encoder: return "encoder";
    case StateRole::decoder: return "decoder";
    case StateRole::context: return "context";
  }
  return "unknown";
}

std::optional<std::size_t> StateStore::find(const StateKey& key) const {
  auto it = index_.find(pack(key));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t StateStore::sequence_length(std::uint32_t sentence_id, StateRole role) const {
  const auto& s = sentences_.at(sentence_id);
  return role == StateRole::encoder ? s.source.size() : s.target.size();
}

std::uint32_t StateStore::add_sentence(StoredSentence sentence) {
  if (sentence.source.size() > std::numeric_limits<std::uint16_t>::max() ||
      sentence.target.size() > std::numeric_limits<std::uint16_t>::max())
    throw StoreError("sentence too long for the state store format");
  sentences_.push_back(std::move(sentence));
  return static_cast<std::uint32_t>(sentences_.size() - 1);
}

void StateStore::add_record(const StateKey& key, std::span<const double> vector) {
  if (vector.size() != hidden_dim_)
    throw StoreError("state vector has dimension " + std::to_string(vector.size()) + ", store expects " +
                     std::to_string(hidden_dim_));
  for (double v : vector)
    if (!std::isfinite(v)) throw StoreError("state vector contains a non-finite value");
  if (!index_.emplace(pack(key), keys_.size()).second)
    throw StoreError("duplicate state record for sentence " + std::to_string(key.sentence_id));
  keys_.push_back(key);
  vectors_.push_row(vector);
}

void StateStore::validate() const {
  std::size_t expected = 0;
  std::vector<std::size_t> context_count(sentences_.size(), 0);
  for (const auto& k : keys_) {
    if (k.sentence_id >= sentences_.size())
      throw StoreError("record refers to missing sentence " + std::to_string(k.sentence_id));
    if (k.position >= sequence_length(k.sentence_id, k.role))
      throw StoreError("record position " + std::to_string(k.position) + " out of range for sentence " +
                       std::to_string(k.sentence_id));
    if (k.role == StateRole::context) ++context_count[k.sentence_id];
  }
  for (std::size_t i = 0; i < sentences_.size(); ++i) {
    expected += sentences_[i].source.size() + sentences_[i].target.size();
    if (context_count[i] != 0 && context_count[i] != sentences_[i].target.size())
      throw StoreError("incomplete context records for sentence " + std::to_string(i));
    expected += context_count[i];
  }
  if (expected != keys_.size())
    throw StoreError("store holds " + std::to_string(keys_.size()) + " records but its sentence table implies " +
                     std::to_string(expected));
}

std::vector<std::uint64_t> tie_keys(const StateStore& store) {
  std::vector<std::uint64_t> out;
  out.reserve(store.keys_.size());
  for (const auto& k : store.keys_) out.push_back(StateStore::pack(k));
  return out;
}

// ---------------------------------------------------------------------------

StateStore extract_states(const ModelParams& params, std::span<const ParallelPair> corpus,
                          const ExtractOptions& options) {
  if (corpus.empty()) throw StoreError("cannot extract states from an empty corpus");
  const std::size_t n = std::min(options.limit, corpus.size());
  std::vector<TraceRecord> traces(n);
  std::vector<std::string> errors(n);

  auto run = [&](std::size_t i) {
    try {
      traces[i] = forward_teacher_forced(params, corpus[i]).trace;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };
  if (options.exec == Exec::serial) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    const auto sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < sn; ++i) run(static_cast<std::size_t>(i));
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!errors[i].empty()) throw ModelError("sentence " + std::to_string(i) + ": " + errors[i]);

  StateStore store(params.config.hidden_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& tr = traces[i];
    const auto sid = store.add_sentence({tr.source.ids, tr.target.ids});
    for (std::size_t s = 0; s < tr.encoder_states.rows(); ++s)
      store.add_record({sid, static_cast<std::uint16_t>(s), StateRole::encoder}, tr.encoder_states.row(s));
    for (std::size_t t = 0; t < tr.decoder_states.rows(); ++t)
      store.add_record({sid, static_cast<std::uint16_t>(t), StateRole::decoder}, tr.decoder_states.row(t));
    if (options.include_context)
      for (std::size_t t = 0; t < tr.context_vectors.rows(); ++t)
        store.add_record({sid, static_cast<std::uint16_t>(t), StateRole::context}, tr.context_vectors.row(t));
  }
  return store;
}

std::vector<NeighborHit> query_neighbors(const StateStore& store, std::span<const double> query,
                                         const QueryOptions& options) {
  if (query.size() != store.hidden_dim())
    throw StoreError("query has dimension " + std::to_string(query.size()) + ", store expects " +
                     std::to_string(store.hidden_dim()));
  if (options.k < 1) throw StoreError("k must be at least 1");

  std::vector<std::uint8_t> allowed;
  if (options.role_filter) {
    allowed.resize(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) allowed[i] = store.keys()[i].role == *options.role_filter;
  }
  Vector q(query.begin(), query.end());
  std::vector<double> scale;
  if (options.cosine) {
    const double qn = std::sqrt(linalg::dot(q, q));
    if (qn > 0.0)
      for (double& v : q) v /= qn;
    scale.resize(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
      const auto r = store.vectors().row(i);
      const double nrm = std::sqrt(linalg::dot(r, r));
      scale[i] = nrm > 0.0 ? 1.0 / nrm : 0.0;
    }
  }
  const auto keys = tie_keys(store);
  kernels::DotScan scan;
  scan.rows = &store.vectors();
  scan.query = q;
  scan.k = options.k;
  scan.allowed = allowed;
  scan.row_scale = scale;
  scan.tie_keys = keys;
  std::vector<NeighborHit> hits;
  for (const auto& r : kernels::top_k_dot(scan, options.exec)) {
    const auto& key = store.keys()[r.row];
    hits.push_back({r.row, key, r.score, key.position});
  }
  return hits;
}

std::optional<NeighborHit> resolve_offset(const StateStore& store, const NeighborHit& hit, int offset) {
  const auto len = static_cast<long>(store.sequence_length(hit.key.sentence_id, hit.key.role));
  const long pos = static_cast<long>(hit.key.position) + offset;
  if (pos < 0 || pos >= len) return std::nullopt;
  NeighborHit out = hit;
  out.display_position = static_cast<std::uint16_t>(pos);
  return out;
}

// ---------------------------------------------------------------------------

void write_store(std::ostream& out, const StateStore& store) {
  io::put_magic(out, kStoreMagic);
  io::put_uint<std::uint32_t>(out, kStoreVersion);
  io::put_uint<std::uint32_t>(out, store.hidden_dim());
  io::put_uint<std::uint64_t>(out, store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& k = store.keys()[i];
    io::put_uint<std::uint32_t>(out, k.sentence_id);
    io::put_uint<std::uint16_t>(out, k.position);
    io::put_uint<std::uint8_t>(out, static_cast<std::uint8_t>(k.role));
    for (double v : store.vectors().row(i)) io::put_f64(out, v);
  }
  io::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(store.sentences().size()));
  for (const auto& s : store.sentences()) {
    io::put_uint<std::uint16_t>(out, static_cast<std::uint16_t>(s.source.size()));
    io::put_uint<std::uint16_t>(out, static_cast<std::uint16_t>(s.target.size()));
    for (TokenId id : s.source) io::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(id));
    for (TokenId id : s.target) io::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(id));
  }
}

StateStore read_store(std::istream& in) {
  if (!io::read_magic(in, kStoreMagic)) throw StoreError("not a state store file (bad magic)");
  try {
    const auto version = io::get_uint<std::uint32_t>(in);
    if (version != kStoreVersion) throw StoreError("unsupported state store version " + std::to_string(version));
    const auto hidden = io::get_uint<std::uint32_t>(in);
    const auto count = io::get_uint<std::uint64_t>(in);

    // Reject impossible counts before allocating.
    const auto here = in.tellg();
    in.seekg(0, std::ios::end);
    const auto end = in.tellg();
    in.seekg(here);
    const std::uint64_t record_bytes = 4 + 2 + 1 + 8ull * hidden;
    if (here >= 0 && end >= here && count > static_cast<std::uint64_t>(end - here) / record_bytes)
      throw StoreError("header declares " + std::to_string(count) + " records but the payload is too small");

    StateStore store(hidden);
    std::vector<StateKey> keys(count);
    Matrix vecs(count, hidden);
    for (std::uint64_t i = 0; i < count; ++i) {
      keys[i].sentence_id = io::get_uint<std::uint32_t>(in);
      keys[i].position = io::get_uint<std::uint16_t>(in);
      const auto role = io::get_uint<std::uint8_t>(in);
      if (role > 2) throw StoreError("invalid record role " + std::to_string(role));
      keys[i].role = static_cast<StateRole>(role);
      for (double& v : vecs.row(i)) v = io::get_f64(in);
    }
    const auto n_sent = io::get_uint<std::uint32_t>(in);
    for (std::uint32_t s = 0; s < n_sent; ++s) {
      StoredSentence sent;
      sent.source.resize(io::get_uint<std::uint16_t>(in));
      sent.target.resize(io::get_uint<std::uint16_t>(in));
      for (auto& id : sent.source) id = static_cast<TokenId>(io::get_uint<std::uint32_t>(in));
      for (auto& id : sent.target) id = static_cast<TokenId>(io::get_uint<std::uint32_t>(in));
      store.add_sentence(std::move(sent));
    }
    if (in.peek() != std::char_traits<char>::eof())
      throw StoreError("trailing bytes after the sentence table; header record count disagrees with payload");
    for (std::uint64_t i = 0; i < count; ++i) store.add_record(keys[i], vecs.row(i));
    store.validate();
    return store;
  } catch (const io::TruncatedError&) {
    throw StoreError("state store file is truncated; header record count disagrees with payload");
  }
}

void save_store(const std::filesystem::path& path, const StateStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_store(out, store);
  if (!out) throw std::runtime_error("I/O error while writing " + path.string());
}

StateStore load_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
  return read_store(in);
}

}  // namespace seqscope
