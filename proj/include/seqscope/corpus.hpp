#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace seqscope {

using TokenId = std::int32_t;

enum class Role { source, target };
enum class TokenizerMode { char_level, whitespace };

/// Errors raised for malformed corpora and vocabulary misuse.
class CorpusError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Token alphabet for one side of a parallel corpus. Ids 0..3 are the
/// special tokens PAD, BOS, EOS, UNK in that order.
class Vocab {
public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr std::size_t kNumSpecials = 4;
  static constexpr std::array<std::string_view, kNumSpecials> kSpecialNames = {"PAD", "BOS", "EOS",
                                                                              "UNK"};

  Vocab();
  explicit Vocab(const std::vector<std::string>& tokens);

  /// Adds a token if unseen; returns its id either way.
  TokenId add(const std::string& token);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Unknown strings map to UNK.
  TokenId encode(const std::string& token) const;
  std::optional<TokenId> find(const std::string& token) const;
  const std::string& decode(TokenId id) const;
  bool contains(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < size(); }
  static bool is_special(TokenId id) { return id >= 0 && id < static_cast<TokenId>(kNumSpecials); }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct TokenSeq {
  std::vector<TokenId> ids;
  Role role = Role::source;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
};

struct ParallelPair {
  TokenSeq source;
  TokenSeq target;
  std::string raw_source;
  std::string raw_target;
};

enum class TaskKind { date, tsv };

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSpec {
  TaskKind task = TaskKind::date;
  std::size_t size = 10000;
  std::uint64_t seed = 1;
  TokenizerMode tokenizer_mode = TokenizerMode::char_level;
  SplitFractions split;

  /// Throws CorpusError when size is zero or a fraction is out of (0,1) or
  /// the fractions do not sum to 1.
  void validate() const;
};

/// A pair of raw strings before vocabulary lookup.
struct RawPair {
  std::string source;
  std::string target;
};

// Tokenization.
std::vector<std::string> tokenize(std::string_view text, TokenizerMode mode);
std::string detokenize(const std::vector<std::string>& tokens, TokenizerMode mode);
std::string_view joiner(TokenizerMode mode);
TokenizerMode parse_tokenizer_mode(std::string_view name);
std::string_view to_string(TokenizerMode mode);

// Date task.
struct Date {
  int year = 2000;
  int month = 1;
  int day = 1;
  friend bool operator==(const Date&, const Date&) = default;
  auto operator<=>(const Date&) const = default;
};

enum class DateFormat {
  month_name_day_year,  // March 25, 2000
  day_abbrev_year,      // 25 Mar 2000
  us_slashes,           // 03/25/2000
  dotted_ymd,           // 2000.03.25
  ordinal_of_month,     // 25th of March 2000
  iso,                  // 2000-03-25
};
inline constexpr int kNumDateFormats = 6;
inline constexpr int kMinYear = 1950;
inline constexpr int kMaxYear = 2049;

bool is_valid_date(const Date& d);
int days_in_month(int year, int month);
std::string format_date(const Date& d, DateFormat fmt);
std::string canonical_date(const Date& d);

/// Distinct (date, format) surface/canonical pairs, deterministic in spec.seed.
std::vector<RawPair> generate_date_pairs(const DatasetSpec& spec);

/// Builds a vocabulary over one side of the raw pairs, ordered by first occurrence.
Vocab build_vocab(const std::vector<RawPair>& pairs, Role role, TokenizerMode mode);
Vocab build_vocab(const std::vector<ParallelPair>& pairs, Role role, TokenizerMode mode);

/// Tokenizes and looks up both sides. Unknown tokens map to UNK.
ParallelPair make_pair(const RawPair& raw, const Vocab& src, const Vocab& tgt, TokenizerMode mode);
std::vector<ParallelPair> make_pairs(const std::vector<RawPair>& raw, const Vocab& src,
                                     const Vocab& tgt, TokenizerMode mode);
TokenSeq encode_text(std::string_view text, const Vocab& vocab, Role role, TokenizerMode mode);
std::string decode_text(const std::vector<TokenId>& ids, const Vocab& vocab, TokenizerMode mode,
                        bool strip_specials = true);

/// Generates the date task, builds both vocabularies and returns tokenized pairs.
struct Dataset {
  std::vector<ParallelPair> pairs;
  Vocab source_vocab;
  Vocab target_vocab;
  TokenizerMode mode = TokenizerMode::char_level;
};
Dataset generate_date_dataset(const DatasetSpec& spec);

// TSV corpora.
std::vector<RawPair> read_tsv(const std::filesystem::path& path);
std::vector<RawPair> parse_tsv(std::string_view content);
void write_tsv(const std::filesystem::path& path, const std::vector<RawPair>& pairs);

/// Reads a TSV file and tokenizes it with vocabularies built from its own content.
Dataset load_tsv_corpus(const std::filesystem::path& path, const DatasetSpec& spec);

struct Split {
  std::vector<RawPair> train;
  std::vector<RawPair> val;
  std::vector<RawPair> test;
};
/// Contiguous split in the given order; the test part absorbs rounding.
Split split_pairs(const std::vector<RawPair>& pairs, const SplitFractions& fractions);

}  // namespace seqscope
