#include "seqscope/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace seqscope {

namespace {

constexpr std::array<const char*, 12> kMonthNames = {
    "January", "February", "March",     "April",   "May",      "June",
    "July",    "August",   "September", "October", "November", "December"};
constexpr std::array<const char*, 12> kMonthAbbrev = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                                      "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;  // stray continuation byte: keep it as its own token
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string two_digits(int v) {
  std::string s = std::to_string(v);
  return s.size() < 2 ? "0" + s : s;
}

std::string ordinal_suffix(int day) {
  if (day % 100 >= 11 && day % 100 <= 13) return "th";
  switch (day % 10) {
    case 1: return "st";
    case 2: return "nd";
    case 3: return "rd";
    default: return "th";
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() {
  for (auto name : kSpecialNames) add(std::string(name));
}

Vocab::Vocab(const std::vector<std::string>& tokens) {
  if (tokens.size() < kNumSpecials)
    throw CorpusError("vocabulary must start with the four special tokens");
  for (std::size_t i = 0; i < kNumSpecials; ++i) {
    if (tokens[i] != kSpecialNames[i])
      throw CorpusError("vocabulary special token " + std::to_string(i) + " must be " +
                        std::string(kSpecialNames[i]));
  }
  for (const auto& t : tokens) {
    if (index_.count(t)) throw CorpusError("duplicate vocabulary token '" + t + "'");
    add(t);
  }
}

TokenId Vocab::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

TokenId Vocab::encode(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::optional<TokenId> Vocab::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocab::decode(TokenId id) const {
  if (!contains(id)) throw CorpusError("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

void DatasetSpec::validate() const {
  if (size < 1) throw CorpusError("dataset size must be at least 1");
  for (double f : {split.train, split.val, split.test}) {
    if (!(f > 0.0 && f < 1.0)) throw CorpusError("split fractions must lie in (0,1)");
  }
  if (std::abs(split.train + split.val + split.test - 1.0) > 1e-9)
    throw CorpusError("split fractions must sum to 1");
}

// ---------------------------------------------------------------------------
// Tokenization

std::vector<std::string> tokenize(std::string_view text, TokenizerMode mode) {
  std::vector<std::string> out;
  if (mode == TokenizerMode::char_level) {
    for (std::size_t i = 0; i < text.size();) {
      std::size_t n = std::min(utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
      out.emplace_back(text.substr(i, n));
      i += n;
    }
    return out;
  }
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::string_view joiner(TokenizerMode mode) { return mode == TokenizerMode::char_level ? "" : " "; }

std::string detokenize(const std::vector<std::string>& tokens, TokenizerMode mode) {
  std::string out;
  const auto sep = joiner(mode);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

TokenizerMode parse_tokenizer_mode(std::string_view name) {
  if (name == "char") return TokenizerMode::char_level;
  if (name == "whitespace") return TokenizerMode::whitespace;
  throw CorpusError("unknown tokenizer mode '" + std::string(name) + "'");
}

std::string_view to_string(TokenizerMode mode) {
  return mode == TokenizerMode::char_level ? "char" : "whitespace";
}

// ---------------------------------------------------------------------------
// Dates

int days_in_month(int year, int month) {
  static constexpr std::array<int, 12> kDays = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month == 2) {
    bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    return leap ? 29 : 28;
  }
  return kDays[static_cast<std::size_t>(month - 1)];
}

bool is_valid_date(const Date& d) {
  return d.month >= 1 && d.month <= 12 && d.day >= 1 && d.day <= days_in_month(d.year, d.month);
}

std::string canonical_date(const Date& d) {
  return std::to_string(d.year) + "-" + two_digits(d.month) + "-" + two_digits(d.day);
}

std::string format_date(const Date& d, DateFormat fmt) {
  const auto m = static_cast<std::size_t>(d.month - 1);
  const std::string y = std::to_string(d.year);
  switch (fmt) {
    case DateFormat::month_name_day_year:
      return std::string(kMonthNames[m]) + " " + std::to_string(d.day) + ", " + y;
    case DateFormat::day_abbrev_year:
      return std::to_string(d.day) + " " + kMonthAbbrev[m] + " " + y;
    case DateFormat::us_slashes:
      return two_digits(d.month) + "/" + two_digits(d.day) + "/" + y;
    case DateFormat::dotted_ymd:
      return y + "." + two_digits(d.month) + "." + two_digits(d.day);
    case DateFormat::ordinal_of_month:
      return std::to_string(d.day) + ordinal_suffix(d.day) + " of " + kMonthNames[m] + " " + y;
    case DateFormat::iso:
      return canonical_date(d);
  }
  throw CorpusError("unknown date format");
}

std::vector<RawPair> generate_date_pairs(const DatasetSpec& spec) {
  if (spec.task != TaskKind::date) throw CorpusError("generate_date_pairs requires task=date");
  spec.validate();

  std::vector<Date> calendar;
  for (int y = kMinYear; y <= kMaxYear; ++y)
    for (int m = 1; m <= 12; ++m)
      for (int d = 1; d <= days_in_month(y, m); ++d) calendar.push_back({y, m, d});

  const std::size_t combos = calendar.size() * kNumDateFormats;
  if (spec.size > combos)
    throw CorpusError("requested " + std::to_string(spec.size) + " pairs but only " +
                      std::to_string(combos) + " distinct date/format combinations exist");

  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> pick_date(0, calendar.size() - 1);
  std::uniform_int_distribution<int> pick_format(0, kNumDateFormats - 1);
  std::set<std::pair<std::size_t, int>> seen;
  std::vector<RawPair> out;
  out.reserve(spec.size);
  while (out.size() < spec.size) {
    const std::size_t di = pick_date(rng);
    const int fi = pick_format(rng);
    if (!seen.emplace(di, fi).second) continue;
    const Date& d = calendar[di];
    out.push_back({format_date(d, static_cast<DateFormat>(fi)), canonical_date(d)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary and lookup

Vocab build_vocab(const std::vector<RawPair>& pairs, Role role, TokenizerMode mode) {
  if (pairs.empty()) throw CorpusError("cannot build a vocabulary from an empty corpus");
  Vocab v;
  for (const auto& p : pairs)
    for (const auto& tok : tokenize(role == Role::source ? p.source : p.target, mode)) v.add(tok);
  return v;
}

Vocab build_vocab(const std::vector<ParallelPair>& pairs, Role role, TokenizerMode mode) {
  std::vector<RawPair> raw;
  raw.reserve(pairs.size());
  for (const auto& p : pairs) raw.push_back({p.raw_source, p.raw_target});
  return build_vocab(raw, role, mode);
}

TokenSeq encode_text(std::string_view text, const Vocab& vocab, Role role, TokenizerMode mode) {
  TokenSeq seq;
  seq.role = role;
  for (const auto& tok : tokenize(text, mode)) seq.ids.push_back(vocab.encode(tok));
  return seq;
}

std::string decode_text(const std::vector<TokenId>& ids, const Vocab& vocab, TokenizerMode mode,
                        bool strip_specials) {
  std::vector<std::string> toks;
  for (TokenId id : ids) {
    if (strip_specials && Vocab::is_special(id) && id != Vocab::kUnk) continue;
    toks.push_back(vocab.decode(id));
  }
  return detokenize(toks, mode);
}

ParallelPair make_pair(const RawPair& raw, const Vocab& src, const Vocab& tgt, TokenizerMode mode) {
  return {encode_text(raw.source, src, Role::source, mode),
          encode_text(raw.target, tgt, Role::target, mode), raw.source, raw.target};
}

std::vector<ParallelPair> make_pairs(const std::vector<RawPair>& raw, const Vocab& src,
                                     const Vocab& tgt, TokenizerMode mode) {
  std::vector<ParallelPair> out;
  out.reserve(raw.size());
  for (const auto& r : raw) out.push_back(make_pair(r, src, tgt, mode));
  return out;
}

Dataset generate_date_dataset(const DatasetSpec& spec) {
  auto raw = generate_date_pairs(spec);
  Dataset ds;
  ds.mode = spec.tokenizer_mode;
  ds.source_vocab = build_vocab(raw, Role::source, ds.mode);
  ds.target_vocab = build_vocab(raw, Role::target, ds.mode);
  ds.pairs = make_pairs(raw, ds.source_vocab, ds.target_vocab, ds.mode);
  return ds;
}

// ---------------------------------------------------------------------------
// TSV

std::vector<RawPair> parse_tsv(std::string_view content) {
  std::vector<RawPair> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos)
      throw CorpusError("line " + std::to_string(line_no) + ": missing tab separator");
    out.push_back({std::string(line.substr(0, tab)), std::string(line.substr(tab + 1))});
  }
  return out;
}

std::vector<RawPair> read_tsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw std::runtime_error("I/O error while reading " + path.string());
  return parse_tsv(ss.str());
}

void write_tsv(const std::filesystem::path& path, const std::vector<RawPair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& p : pairs) out << p.source << '\t' << p.target << '\n';
  if (!out) throw std::runtime_error("I/O error while writing " + path.string());
}

Dataset load_tsv_corpus(const std::filesystem::path& path, const DatasetSpec& spec) {
  auto raw = read_tsv(path);
  Dataset ds;
  ds.mode = spec.tokenizer_mode;
  if (raw.empty()) return ds;
  ds.source_vocab = build_vocab(raw, Role::source, ds.mode);
  ds.target_vocab = build_vocab(raw, Role::target, ds.mode);
  ds.pairs = make_pairs(raw, ds.source_vocab, ds.target_vocab, ds.mode);
  return ds;
}

Split split_pairs(const std::vector<RawPair>& pairs, const SplitFractions& f) {
  const auto n = pairs.size();
  const auto n_train = static_cast<std::size_t>(std::floor(f.train * static_cast<double>(n)));
  const auto n_val =
      std::min(n - n_train, static_cast<std::size_t>(std::floor(f.val * static_cast<double>(n))));
  Split s;
  s.train.assign(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(pairs.begin() + static_cast<std::ptrdiff_t>(n_train),
               pairs.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(pairs.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), pairs.end());
  return s;
}

}  // namespace seqscope
