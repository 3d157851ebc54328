#pragma once

#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "seqscope/bundle.hpp"
#include "seqscope/projection.hpp"
#include "seqscope/search.hpp"
#include "seqscope/statestore.hpp"

namespace seqscope {

using Json = nlohmann::json;

/// A request failure carrying the HTTP status to report.
class ApiError : public std::runtime_error {
public:
  ApiError(int status, const std::string& message) : std::runtime_error(message), status_(status) {}
  int status() const { return status_; }

private:
  int status_;
};

/// Lower-quartile rule: an edge is pruned when its weight is strictly below
/// the row's 25th percentile (linear interpolation between order statistics).
std::vector<bool> prune_flags(std::span<const double> attention_row);
double lower_quartile(std::span<const double> values);

struct CachedTranslation {
  std::uint64_t id = 0;
  TokenSeq source;
  DecodeResult result;
  DecodeConstraint constraint;
};

/// Thread-safe LRU map from translation id to its cached run.
class TraceCache {
public:
  explicit TraceCache(std::size_t capacity) : capacity_(capacity) {}

  std::shared_ptr<const CachedTranslation> insert(CachedTranslation entry);
  std::shared_ptr<const CachedTranslation> get(std::uint64_t id);
  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }

private:
  using Entry = std::pair<std::uint64_t, std::shared_ptr<const CachedTranslation>>;
  mutable std::mutex mutex_;
  std::size_t capacity_;
  std::uint64_t next_id_ = 1;
  std::list<Entry> order_;  // most recent first
  std::unordered_map<std::uint64_t, std::list<Entry>::iterator> index_;
};

struct ServerConfig {
  BeamConfig beam{5, 16, false};
  std::size_t cache_capacity = 256;
  std::size_t neighbors_k = 20;
  GridSpec grid{};
  std::size_t hull_k = 5;
  std::size_t tsne_iterations = 1000;
};

/// Transport-independent request handlers. Every method takes and returns
/// the JSON bodies of the HTTP API and throws ApiError on bad input.
class Workbench {
public:
  Workbench(ModelBundle bundle, std::optional<StateStore> store, ServerConfig config = {});

  Json translate(const Json& body);
  Json compare(const Json& body);
  Json neighbors(const std::string& state_id, std::size_t k, int offset, const std::string& facet);
  Json project(const Json& body);
  Json word_neighbors(const std::string& token, std::size_t k, const std::string& side);
  Json info() const;

  const ModelBundle& bundle() const { return bundle_; }
  const std::optional<StateStore>& store() const { return store_; }
  const ServerConfig& config() const { return config_; }

private:
  std::shared_ptr<const CachedTranslation> run(TokenSeq source, const DecodeConstraint& constraint);
  std::shared_ptr<const CachedTranslation> lookup(std::uint64_t id);
  Json translation_json(const CachedTranslation& t) const;
  TokenSeq source_from_text(const std::string& text) const;

  ModelBundle bundle_;
  std::optional<StateStore> store_;
  ServerConfig config_;
  TraceCache cache_;
};

struct StateRef {
  std::uint64_t translation_id = 0;
  StateRole role = StateRole::encoder;
  std::size_t position = 0;
};
std::string format_state_id(const StateRef& ref);
std::optional<StateRef> parse_state_id(const std::string& id);

/// HTTP front end for a Workbench.
class HttpService {
public:
  explicit HttpService(Workbench& bench, std::string static_dir = {});
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host, int port);
  /// Binds and serves on the calling thread until stop().
  bool listen(const std::string& host, int port);
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace seqscope
