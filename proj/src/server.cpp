#include "seqscope/server.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <thread>

#include "httplib.h"

namespace seqscope {

double lower_quartile(std::span<const double> values) {
  if (values.empty()) return 0.0;
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double h = static_cast<double>(v.size() - 1) * 0.25;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= v.size()) return v[lo];
  return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

std::vector<bool> prune_flags(std::span<const double> attention_row) {
  const double threshold = lower_quartile(attention_row);
  std::vector<bool> flags(attention_row.size());
  for (std::size_t i = 0; i < attention_row.size(); ++i) flags[i] = attention_row[i] < threshold;
  return flags;
}

// Trace cache -----------------------------------------------------------------

std::shared_ptr<const CachedTranslation> TraceCache::insert(CachedTranslation entry) {
  std::lock_guard lock(mutex_);
  entry.id = next_id_++;
  auto ptr = std::make_shared<const CachedTranslation>(std::move(entry));
  order_.emplace_front(ptr->id, ptr);
  index_[ptr->id] = order_.begin();
  while (order_.size() > capacity_) {
    index_.erase(order_.back().first);
    order_.pop_back();
  }
  return ptr;
}

std::shared_ptr<const CachedTranslation> TraceCache::get(std::uint64_t id) {
  std::lock_guard lock(mutex_);
  auto it = index_.find(id);
  if (it == index_.end()) return nullptr;
  order_.splice(order_.begin(), order_, it->second);
  return it->second->second;
}

std::size_t TraceCache::size() const {
  std::lock_guard lock(mutex_);
  return order_.size();
}

// State ids -------------------------------------------------------------------

std::string format_state_id(const StateRef& ref) {
  return "t" + std::to_string(ref.translation_id) + (ref.role == StateRole::decoder ? ":d:" : ":e:") +
         std::to_string(ref.position);
}

namespace {

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

std::optional<StateRef> parse_state_id(const std::string& id) {
  if (id.size() < 6 || id[0] != 't') return std::nullopt;
  const auto c1 = id.find(':');
  if (c1 == std::string::npos || c1 + 3 > id.size() || id[c1 + 2] != ':') return std::nullopt;
  StateRef ref;
  if (!parse_number(std::string_view(id).substr(1, c1 - 1), ref.translation_id)) return std::nullopt;
  if (id[c1 + 1] == 'e')
    ref.role = StateRole::encoder;
  else if (id[c1 + 1] == 'd')
    ref.role = StateRole::decoder;
  else
    return std::nullopt;
  if (!parse_number(std::string_view(id).substr(c1 + 3), ref.position)) return std::nullopt;
  return ref;
}

// Workbench -------------------------------------------------------------------

namespace {

Json beam_tree_json(const BeamTree& tree, const Vocab& vocab) {
  Json nodes = Json::array();
  for (const auto& n : tree.nodes) {
    nodes.push_back({{"id", n.id},
                     {"parent", n.parent},
                     {"token", vocab.decode(n.token)},
                     {"token_id", n.token},
                     {"step", n.step},
                     {"logprob", n.logprob},
                     {"finished", n.finished},
                     {"on_best_path", n.on_best_path},
                     {"pruned_at_step", n.pruned_at_step ? Json(*n.pruned_at_step) : Json(nullptr)}});
  }
  return {{"nodes", nodes}};
}

template <typename T>
T field_or(const Json& body, const char* key, T fallback) {
  if (!body.contains(key) || body.at(key).is_null()) return fallback;
  try {
    return body.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ApiError(400, std::string("field '") + key + "' has the wrong type");
  }
}

template <typename T>
T required(const Json& body, const char* key) {
  if (!body.is_object() || !body.contains(key)) throw ApiError(400, std::string("missing field '") + key + "'");
  try {
    return body.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ApiError(400, std::string("field '") + key + "' has the wrong type");
  }
}

std::optional<StateRole> facet_role(const std::string& facet) {
  if (facet == "source") return StateRole::encoder;
  if (facet == "target") return StateRole::decoder;
  if (facet == "both" || facet.empty()) return std::nullopt;
  throw ApiError(400, "facet must be source, target or both");
}

StateRole scope_role(const std::string& role) {
  if (role == "decoder" || role == "target") return StateRole::decoder;
  if (role == "encoder" || role == "source") return StateRole::encoder;
  throw ApiError(400, "role must be encoder or decoder");
}

const Matrix& states_of(const TraceRecord& trace, StateRole role) {
  return role == StateRole::decoder ? trace.decoder_states : trace.encoder_states;
}

}  // namespace

Workbench::Workbench(ModelBundle bundle, std::optional<StateStore> store, ServerConfig config)
    : bundle_(std::move(bundle)), store_(std::move(store)), config_(config), cache_(config.cache_capacity) {
  if (store_ && !store_->empty() && store_->hidden_dim() != bundle_.params.config.hidden_dim)
    throw StoreError("state store hidden size " + std::to_string(store_->hidden_dim()) +
                     " does not match the model hidden size " +
                     std::to_string(bundle_.params.config.hidden_dim));
}

TokenSeq Workbench::source_from_text(const std::string& text) const {
  auto ids = encode_text(text, bundle_.source_vocab, Role::source, bundle_.mode);
  if (ids.empty()) throw ApiError(400, "source is empty");
  return ids;
}

std::shared_ptr<const CachedTranslation> Workbench::run(TokenSeq source, const DecodeConstraint& constraint) {
  CachedTranslation entry;
  try {
    entry.result = beam_search(bundle_.params, source, config_.beam, constraint);
  } catch (const SearchError& e) {
    throw ApiError(400, e.what());
  }
  entry.source = std::move(source);
  entry.constraint = constraint;
  return cache_.insert(std::move(entry));
}

std::shared_ptr<const CachedTranslation> Workbench::lookup(std::uint64_t id) {
  auto t = cache_.get(id);
  if (!t) throw ApiError(404, "unknown or expired translation id " + std::to_string(id));
  return t;
}

Json Workbench::translation_json(const CachedTranslation& t) const {
  const auto& trace = t.result.trace;
  const auto& sv = bundle_.source_vocab;
  const auto& tv = bundle_.target_vocab;

  Json source_tokens = Json::array();
  for (TokenId id : trace.source.ids) source_tokens.push_back(sv.decode(id));
  Json output_tokens = Json::array();
  for (TokenId id : trace.target.ids) output_tokens.push_back(tv.decode(id));

  Json attention = Json::array();
  for (std::size_t r = 0; r < trace.attention.rows(); ++r) {
    auto row = trace.attention.row(r);
    auto flags = prune_flags(row);
    Json edges = Json::array();
    for (std::size_t s = 0; s < row.size(); ++s) edges.push_back({{"weight", row[s]}, {"pruned", bool(flags[s])}});
    attention.push_back(std::move(edges));
  }

  Json steps = Json::array();
  for (std::size_t i = 0; i < trace.step_predictions.size(); ++i) {
    const auto& sp = trace.step_predictions[i];
    Json entries = Json::array();
    bool seen = false;
    for (const auto& e : sp.entries) {
      const bool chosen = e.token == sp.chosen;
      seen = seen || chosen;
      entries.push_back({{"token", tv.decode(e.token)}, {"id", e.token}, {"prob", e.prob}, {"chosen", chosen}});
    }
    if (!seen) {
      const double p = i < trace.step_logprobs.size() ? std::exp(trace.step_logprobs[i]) : 0.0;
      entries.push_back({{"token", tv.decode(sp.chosen)}, {"id", sp.chosen}, {"prob", p}, {"chosen", true}});
    }
    steps.push_back({{"step", sp.step}, {"entries", std::move(entries)}});
  }

  Json enc_ids = Json::array(), dec_ids = Json::array();
  for (std::size_t s = 0; s < trace.encoder_states.rows(); ++s)
    enc_ids.push_back(format_state_id({t.id, StateRole::encoder, s}));
  for (std::size_t s = 0; s < trace.decoder_states.rows(); ++s)
    dec_ids.push_back(format_state_id({t.id, StateRole::decoder, s}));

  Json overrides = Json::array();
  for (const auto& o : t.constraint.attention_overrides)
    overrides.push_back({{"step", o.step}, {"distribution", o.distribution}});

  return {{"id", t.id},
          {"source", {{"tokens", source_tokens}, {"ids", trace.source.ids}}},
          {"source_text", decode_text(trace.source.ids, sv, bundle_.mode)},
          {"output", {{"tokens", output_tokens}, {"ids", trace.target.ids}}},
          {"output_text", decode_text(trace.target.ids, tv, bundle_.mode)},
          {"score", t.result.score},
          {"attention", std::move(attention)},
          {"step_predictions", std::move(steps)},
          {"beam_tree", beam_tree_json(t.result.tree, tv)},
          {"state_ids", {{"encoder", enc_ids}, {"decoder", dec_ids}}},
          {"constraint", {{"prefix", t.constraint.prefix}, {"attention_overrides", overrides}}}};
}

Json Workbench::translate(const Json& body) {
  const auto text = required<std::string>(body, "source");
  auto t = run(source_from_text(text), {});
  return translation_json(*t);
}

Json Workbench::compare(const Json& body) {
  const auto pivot_id = required<std::uint64_t>(body, "pivot_id");
  const auto mode = required<std::string>(body, "mode");
  auto pivot = lookup(pivot_id);
  std::shared_ptr<const CachedTranslation> other;

  if (mode == "new_source") {
    other = run(source_from_text(required<std::string>(body, "source")), {});
  } else if (mode == "target_prefix") {
    const auto text = required<std::string>(body, "prefix");
    DecodeConstraint c;
    c.prefix = encode_text(text, bundle_.target_vocab, Role::target, bundle_.mode).ids;
    other = run(pivot->source, c);
  } else if (mode == "substitute_word") {
    const auto position = required<std::int64_t>(body, "position");
    const auto length = field_or<std::int64_t>(body, "length", 1);
    const auto replacement = required<std::string>(body, "replacement");
    const auto n = static_cast<std::int64_t>(pivot->source.size());
    if (position < 0 || position >= n) throw ApiError(400, "position " + std::to_string(position) + " is outside the source");
    if (length < 1 || position + length > n) throw ApiError(400, "substitution span runs past the end of the source");
    auto repl = encode_text(replacement, bundle_.source_vocab, Role::source, bundle_.mode);
    const auto& old = pivot->source.ids;
    TokenSeq src{{old.begin(), old.begin() + position}, Role::source};
    src.ids.insert(src.ids.end(), repl.ids.begin(), repl.ids.end());
    src.ids.insert(src.ids.end(), old.begin() + position + length, old.end());
    if (src.empty()) throw ApiError(400, "substitution leaves an empty source");
    other = run(std::move(src), {});
  } else if (mode == "attention_override") {
    const auto step = required<std::int64_t>(body, "step");
    const auto dist = required<std::vector<double>>(body, "distribution");
    const auto steps = static_cast<std::int64_t>(pivot->result.output.size());
    if (step < 0 || step >= steps) throw ApiError(400, "step " + std::to_string(step) + " is outside the pivot output");
    try {
      normalized_override(dist, pivot->source.size());
    } catch (const SearchError& e) {
      throw ApiError(400, e.what());
    }
    DecodeConstraint c;
    c.attention_overrides.push_back({static_cast<std::size_t>(step), dist});
    other = run(pivot->source, c);
  } else {
    throw ApiError(400, "unknown compare mode '" + mode + "'");
  }

  Json a = translation_json(*pivot), b = translation_json(*other);
  if (field_or<bool>(body, "swap", false)) std::swap(a, b);
  return {{"pivot", std::move(a)}, {"compare", std::move(b)}};
}

Json Workbench::neighbors(const std::string& state_id, std::size_t k, int offset, const std::string& facet) {
  const auto ref = parse_state_id(state_id);
  if (!ref) throw ApiError(400, "malformed state id '" + state_id + "'");
  if (offset < -1 || offset > 1) throw ApiError(400, "offset must be -1, 0 or 1");
  const auto role = facet_role(facet);
  if (!store_) throw ApiError(503, "no state store is loaded");
  auto t = lookup(ref->translation_id);
  const Matrix& states = states_of(t->result.trace, ref->role);
  if (ref->position >= states.rows()) throw ApiError(404, "state id '" + state_id + "' has no such position");

  QueryOptions q;
  q.k = k;
  q.role_filter = role;
  Json hits = Json::array();
  if (k > 0 && !store_->empty()) {
    for (const auto& hit : query_neighbors(*store_, states.row(ref->position), q)) {
      auto shifted = resolve_offset(*store_, hit, offset);
      if (!shifted) continue;
      const auto& sent = store_->sentences().at(shifted->key.sentence_id);
      hits.push_back({{"record", shifted->record},
                      {"sentence_id", shifted->key.sentence_id},
                      {"role", to_string(shifted->key.role)},
                      {"position", shifted->key.position},
                      {"highlight", shifted->display_position},
                      {"score", shifted->score},
                      {"source_text", decode_text(sent.source, bundle_.source_vocab, bundle_.mode)},
                      {"target_text", decode_text(sent.target, bundle_.target_vocab, bundle_.mode)},
                      {"source_ids", sent.source},
                      {"target_ids", sent.target}});
    }
  }
  return {{"state_id", state_id}, {"k", k}, {"offset", offset}, {"facet", facet.empty() ? "both" : facet},
          {"neighbors", std::move(hits)}};
}

Json Workbench::project(const Json& body) {
  const Json scope = body.contains("scope") ? body.at("scope") : body;
  const auto ids = required<std::vector<std::uint64_t>>(scope, "translation_ids");
  if (ids.empty()) throw ApiError(400, "translation_ids is empty");
  const bool include_neighbors = field_or<bool>(scope, "include_neighbors", true);
  const auto role = scope_role(field_or<std::string>(scope, "role", "decoder"));
  const auto method = field_or<std::string>(body, "method", "mds");
  if (method != "mds" && method != "tsne" && method != "custom")
    throw ApiError(400, "unknown projection method '" + method + "'");
  const auto k = field_or<std::size_t>(body, "k", config_.neighbors_k);
  if (include_neighbors && !store_) throw ApiError(503, "no state store is loaded");

  struct Point {
    Json meta;
    std::span<const double> vec;
    SequencePosition pos;
    long shared = 1;
  };
  std::vector<Point> points;
  std::vector<std::vector<std::size_t>> groups;  // per query state: itself + its neighbors
  std::map<std::size_t, std::size_t> neighbor_point;  // store record -> point index
  Json traces = Json::array();

  std::vector<std::shared_ptr<const CachedTranslation>> held;
  for (auto id : ids) held.push_back(lookup(id));

  for (const auto& t : held) {
    const Matrix& states = states_of(t->result.trace, role);
    Json trace_points = Json::array();
    for (std::size_t s = 0; s < states.rows(); ++s) {
      const std::size_t q = points.size();
      trace_points.push_back(q);
      points.push_back({{{"kind", "query"},
                         {"translation_id", t->id},
                         {"state_id", format_state_id({t->id, role, s})},
                         {"position", s}},
                        states.row(s),
                        {s, states.rows()}});
      groups.push_back({q});
    }
    traces.push_back({{"translation_id", t->id}, {"points", std::move(trace_points)}});
  }

  const std::size_t query_count = points.size();
  if (include_neighbors && k > 0 && !store_->empty()) {
    QueryOptions q;
    q.k = k;
    q.role_filter = role;
    for (std::size_t g = 0; g < query_count; ++g) {
      for (const auto& hit : query_neighbors(*store_, points[g].vec, q)) {
        auto [it, fresh] = neighbor_point.try_emplace(hit.record, points.size());
        if (fresh) {
          const auto len = store_->sequence_length(hit.key.sentence_id, hit.key.role);
          points.push_back({{{"kind", "neighbor"},
                             {"record", hit.record},
                             {"sentence_id", hit.key.sentence_id},
                             {"position", hit.key.position}},
                            store_->vectors().row(hit.record),
                            {hit.key.position, len},
                            0});
        }
        points[it->second].shared += 1;
        groups[g].push_back(it->second);
      }
    }
  }

  const std::size_t n = points.size();
  Matrix vectors(n, bundle_.params.config.hidden_dim);
  for (std::size_t i = 0; i < n; ++i) std::copy(points[i].vec.begin(), points[i].vec.end(), vectors.row(i).begin());

  Layout layout;
  try {
    if (method == "mds") {
      Matrix d = kernels::pairwise_sq_distances(vectors, Exec::parallel);
      for (std::size_t i = 0; i < n; ++i) {
        d(i, i) = 0.0;
        for (std::size_t j = i + 1; j < n; ++j) d(i, j) = d(j, i) = std::sqrt(std::max(0.0, d(i, j)));
      }
      layout = classical_mds(d);
    } else if (method == "tsne") {
      TsneOptions opt;
      opt.iterations = config_.tsne_iterations;
      opt.perplexity = std::min(opt.perplexity, std::max(1.0, static_cast<double>(n - 1) / 3.0));
      if (n < 3) throw ApiError(400, "t-SNE needs at least three points");
      layout = tsne(vectors, opt);
    } else {
      std::vector<SequencePosition> pos;
      for (const auto& p : points) pos.push_back(p.pos);
      layout = custom_position_projection(vectors, pos);
    }
  } catch (const ProjectionError& e) {
    throw ApiError(400, e.what());
  }

  Json pts = Json::array();
  for (std::size_t i = 0; i < n; ++i) {
    Json p = points[i].meta;
    p["x"] = layout.coords(i, 0);
    p["y"] = layout.coords(i, 1);
    p["radius"] = neighbor_radius(std::max<long>(1, points[i].shared));
    p["shared"] = points[i].shared;
    pts.push_back(std::move(p));
  }

  Json hulls = Json::array();
  if (field_or<bool>(body, "hulls", true)) {
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (groups[g].size() < 2) continue;
      std::vector<Point2> members;
      for (auto i : groups[g]) members.push_back(layout.point(i));
      const Hull h = concave_hull(members, config_.hull_k);
      Json verts = Json::array();
      for (const auto& v : h.vertices) verts.push_back({v.x, v.y});
      hulls.push_back({{"query_point", g}, {"members", groups[g]}, {"vertices", std::move(verts)}});
    }
  }

  Json picts = Json::array();
  if (field_or<bool>(body, "pictograms", true)) {
    for (const auto& c : assign_grid(layout, config_.grid))
      picts.push_back({{"row", c.row},
                       {"col", c.col},
                       {"members", c.members},
                       {"cell", {c.cell.min_x, c.cell.min_y, c.cell.max_x, c.cell.max_y}}});
  }

  return {{"method", method},
          {"role", to_string(role)},
          {"points", std::move(pts)},
          {"traces", std::move(traces)},
          {"hulls", std::move(hulls)},
          {"pictograms", std::move(picts)},
          {"bbox", {layout.bbox.min_x, layout.bbox.min_y, layout.bbox.max_x, layout.bbox.max_y}}};
}

Json Workbench::word_neighbors(const std::string& token, std::size_t k, const std::string& side) {
  if (side != "source" && side != "target") throw ApiError(400, "side must be source or target");
  const bool src = side == "source";
  const Vocab& vocab = src ? bundle_.source_vocab : bundle_.target_vocab;
  const Matrix& emb = src ? bundle_.params.src_embedding : bundle_.params.tgt_embedding;
  const auto q = vocab.find(token);
  if (!q || Vocab::is_special(*q)) throw ApiError(404, "token '" + token + "' is not in the " + side + " vocabulary");

  auto norm = [&](std::size_t r) { return std::sqrt(linalg::dot(emb.row(r), emb.row(r))); };
  const double qn = norm(static_cast<std::size_t>(*q));
  std::vector<std::pair<double, TokenId>> scored;
  for (std::size_t r = Vocab::kNumSpecials; r < emb.rows(); ++r) {
    if (static_cast<TokenId>(r) == *q) continue;
    const double denom = qn * norm(r);
    const double cos = denom > 0.0 ? linalg::dot(emb.row(static_cast<std::size_t>(*q)), emb.row(r)) / denom : 0.0;
    scored.emplace_back(cos, static_cast<TokenId>(r));
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  if (scored.size() > k) scored.resize(k);

  // MDS over the query plus its neighbors; the query is point 0.
  const std::size_t n = scored.size() + 1;
  std::vector<std::size_t> rows{static_cast<std::size_t>(*q)};
  for (const auto& s : scored) rows.push_back(static_cast<std::size_t>(s.second));
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double acc = 0.0;
      auto a = emb.row(rows[i]), b = emb.row(rows[j]);
      for (std::size_t c = 0; c < a.size(); ++c) acc += (a[c] - b[c]) * (a[c] - b[c]);
      d(i, j) = d(j, i) = std::sqrt(acc);
    }
  const Layout layout = classical_mds(d);

  Json entries = Json::array();
  for (std::size_t i = 0; i < scored.size(); ++i)
    entries.push_back({{"token", vocab.decode(scored[i].second)},
                       {"id", scored[i].second},
                       {"similarity", scored[i].first},
                       {"x", layout.coords(i + 1, 0)},
                       {"y", layout.coords(i + 1, 1)}});
  return {{"query", token},
          {"side", side},
          {"query_point", {layout.coords(0, 0), layout.coords(0, 1)}},
          {"entries", std::move(entries)}};
}

Json Workbench::info() const {
  const auto& c = bundle_.params.config;
  Json store = nullptr;
  if (store_)
    store = {{"records", store_->size()}, {"sentences", store_->sentences().size()}, {"hidden_dim", store_->hidden_dim()}};
  return {{"model",
           {{"embed_dim", c.embed_dim},
            {"hidden_dim", c.hidden_dim},
            {"src_vocab_size", c.src_vocab_size},
            {"tgt_vocab_size", c.tgt_vocab_size},
            {"bidirectional_encoder", c.bidirectional_encoder},
            {"max_decode_len", c.max_decode_len},
            {"topk_record", c.topk_record}}},
          {"tokenizer", std::string(to_string(bundle_.mode))},
          {"vocab", {{"source", bundle_.source_vocab.size()}, {"target", bundle_.target_vocab.size()}}},
          {"store", store},
          {"defaults",
           {{"beam_size", config_.beam.K},
            {"max_len", config_.beam.max_len},
            {"length_normalize", config_.beam.length_normalize},
            {"neighbors_k", config_.neighbors_k},
            {"cache_capacity", config_.cache_capacity},
            {"grid", {config_.grid.rows, config_.grid.cols}}}}};
}

// HTTP ------------------------------------------------------------------------

struct HttpService::Impl {
  Workbench& bench;
  httplib::Server server;
  std::thread thread;
  explicit Impl(Workbench& b) : bench(b) {}
};

namespace {

void send_json(httplib::Response& res, const Json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      send_json(res, f(req));
    } catch (const ApiError& e) {
      send_json(res, {{"error", e.what()}}, e.status());
    } catch (const Json::exception& e) {
      send_json(res, {{"error", std::string("malformed JSON: ") + e.what()}}, 400);
    } catch (const std::exception& e) {
      send_json(res, {{"error", e.what()}}, 500);
    }
  };
}

Json parse_body(const httplib::Request& req) {
  auto j = Json::parse(req.body);
  if (!j.is_object()) throw ApiError(400, "request body must be a JSON object");
  return j;
}

template <typename T>
T query_param(const httplib::Request& req, const char* name, T fallback) {
  if (!req.has_param(name)) return fallback;
  T v{};
  if (!parse_number(req.get_param_value(name), v))
    throw ApiError(400, std::string("query parameter '") + name + "' is not a valid number");
  return v;
}

}  // namespace

HttpService::HttpService(Workbench& bench, std::string static_dir) : impl_(std::make_unique<Impl>(bench)) {
  auto& svr = impl_->server;
  Workbench* wb = &bench;
  svr.Post("/api/translate", guarded([wb](const httplib::Request& r) { return wb->translate(parse_body(r)); }));
  svr.Post("/api/compare", guarded([wb](const httplib::Request& r) { return wb->compare(parse_body(r)); }));
  svr.Post("/api/project", guarded([wb](const httplib::Request& r) { return wb->project(parse_body(r)); }));
  svr.Get("/api/neighbors", guarded([wb](const httplib::Request& r) {
            if (!r.has_param("state_id")) throw ApiError(400, "missing query parameter 'state_id'");
            return wb->neighbors(r.get_param_value("state_id"),
                                 query_param<std::size_t>(r, "k", wb->config().neighbors_k),
                                 query_param<int>(r, "offset", 0),
                                 r.has_param("facet") ? r.get_param_value("facet") : "both");
          }));
  svr.Get("/api/word_neighbors", guarded([wb](const httplib::Request& r) {
            if (!r.has_param("token")) throw ApiError(400, "missing query parameter 'token'");
            return wb->word_neighbors(r.get_param_value("token"), query_param<std::size_t>(r, "k", 10),
                                      r.has_param("side") ? r.get_param_value("side") : "source");
          }));
  svr.Get("/api/info", guarded([wb](const httplib::Request&) { return wb->info(); }));
  if (!static_dir.empty() && !svr.set_mount_point("/", static_dir))
    throw std::runtime_error("static directory " + static_dir + " does not exist");
}

HttpService::~HttpService() { stop(); }

int HttpService::start(const std::string& host, int port) {
  auto& svr = impl_->server;
  int bound = port;
  if (port == 0)
    bound = svr.bind_to_any_port(host);
  else if (!svr.bind_to_port(host, port))
    bound = -1;
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([&svr] { svr.listen_after_bind(); });
  svr.wait_until_ready();
  return bound;
}

bool HttpService::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

void HttpService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace seqscope
