#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "seqscope/kernels.hpp"
#include "seqscope/model.hpp"

namespace seqscope {

class StoreError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class StateRole : std::uint8_t { encoder = 0, decoder = 1, context = 2 };

const char* to_string(StateRole role);

struct StateKey {
  std::uint32_t sentence_id = 0;
  std::uint16_t position = 0;
  StateRole role = StateRole::encoder;
  friend bool operator==(const StateKey&, const StateKey&) = default;
};

struct StateRecord {
  StateKey key;
  std::span<const double> vector;
};

struct StoredSentence {
  std::vector<TokenId> source;
  std::vector<TokenId> target;  // includes the trailing EOS of the traced run
  friend bool operator==(const StoredSentence&, const StoredSentence&) = default;
};

/// Hidden states of a corpus, one dense row per record, plus the token ids
/// of every sentence they came from.
class StateStore {
public:
  StateStore() = default;
  explicit StateStore(std::uint32_t hidden_dim) : hidden_dim_(hidden_dim), vectors_(0, hidden_dim) {}

  std::uint32_t hidden_dim() const { return hidden_dim_; }
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }
  const Matrix& vectors() const { return vectors_; }
  const std::vector<StateKey>& keys() const { return keys_; }
  const std::vector<StoredSentence>& sentences() const { return sentences_; }

  StateRecord record(std::size_t i) const { return {keys_.at(i), vectors_.row(i)}; }
  std::optional<std::size_t> find(const StateKey& key) const;

  /// Length of the sequence a record of this role indexes into.
  std::size_t sequence_length(std::uint32_t sentence_id, StateRole role) const;

  std::uint32_t add_sentence(StoredSentence sentence);
  void add_record(const StateKey& key, std::span<const double> vector);

  /// Checks that every record is in range and unique, and that each sentence
  /// has a complete set of encoder and decoder records.
  void validate() const;

  friend bool operator==(const StateStore& a, const StateStore& b) {
    return a.hidden_dim_ == b.hidden_dim_ && a.keys_ == b.keys_ && a.vectors_ == b.vectors_ &&
           a.sentences_ == b.sentences_;
  }

private:
  static std::uint64_t pack(const StateKey& k) {
    return (std::uint64_t{k.sentence_id} << 18) | (std::uint64_t{k.position} << 2) |
           static_cast<std::uint64_t>(k.role);
  }
  friend std::vector<std::uint64_t> tie_keys(const StateStore&);

  std::uint32_t hidden_dim_ = 0;
  std::vector<StateKey> keys_;
  Matrix vectors_;
  std::vector<StoredSentence> sentences_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

/// (sentence, position, role) ordering keys, one per record.
std::vector<std::uint64_t> tie_keys(const StateStore& store);

struct ExtractOptions {
  std::size_t limit = 50000;
  bool include_context = false;
  Exec exec = Exec::parallel;
};

/// Teacher-forced traces over the first min(limit, |corpus|) pairs.
StateStore extract_states(const ModelParams& params, std::span<const ParallelPair> corpus,
                          const ExtractOptions& options = {});

struct NeighborHit {
  std::size_t record = 0;
  StateKey key;
  double score = 0.0;
  std::uint16_t display_position = 0;
  friend bool operator==(const NeighborHit&, const NeighborHit&) = default;
};

struct QueryOptions {
  std::size_t k = 20;
  std::optional<StateRole> role_filter;
  bool cosine = false;
  Exec exec = Exec::parallel;
};

/// Exact top-k by dot product (or cosine), ties by (sentence, position, role).
std::vector<NeighborHit> query_neighbors(const StateStore& store, std::span<const double> query,
                                         const QueryOptions& options = {});

/// Shifts the highlighted position by offset; empty when it leaves the sentence.
std::optional<NeighborHit> resolve_offset(const StateStore& store, const NeighborHit& hit, int offset);

void save_store(const std::filesystem::path& path, const StateStore& store);
StateStore load_store(const std::filesystem::path& path);
void write_store(std::ostream& out, const StateStore& store);
StateStore read_store(std::istream& in);

}  // namespace seqscope
