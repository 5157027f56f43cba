#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mils/media.hpp"

namespace mils {

enum class ApiKind { chat, embed, image_gen, image_edit, features, preference };

std::string to_string(ApiKind api);
ApiKind api_kind_from_string(std::string_view name);

struct BackendEndpoint {
  std::string name;
  std::string base_url;
  ApiKind api = ApiKind::chat;
  std::string model;
  std::optional<std::string> auth_env_var;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 2;
  int max_in_flight = 8;
  /// Send media as base64 instead of a file URI.
  bool inline_media = false;

  /// Throws ConfigError for a malformed base_url or negative retry budget.
  void validate() const;
};

/// Exponential backoff: base_delay * factor^attempt, scaled by a random factor in
/// [1 - jitter, 1 + jitter].
struct RetryPolicy {
  std::chrono::milliseconds base_delay{500};
  double factor = 2.0;
  double jitter = 0.25;
};

struct ChatMessage {
  std::string role;
  std::string content;
};

struct Sampling {
  double temperature = 1.0;
  int max_tokens = 2048;
};

/// C x M activations of one network layer, row-major by channel.
struct FeatureMap {
  std::string layer_id;
  int channels = 0;
  int spatial = 0;
  std::vector<double> values;

  /// Throws ContractViolation unless C, M >= 1, |values| = C*M and all finite.
  void validate() const;
  double at(int c, int m) const { return values[static_cast<std::size_t>(c) * spatial + m]; }
};

struct CacheEntry {
  std::string key;
  std::string value;
  std::chrono::system_clock::time_point created_at;
};

/// Content-addressed response store. Keys are SHA-256 over (api, model, canonical
/// JSON payload). Optionally persisted one file per entry under a directory, shared
/// across runs and processes.
class ResponseCache {
 public:
  explicit ResponseCache(std::optional<std::filesystem::path> dir = std::nullopt);

  static std::string make_key(ApiKind api, std::string_view model, const nlohmann::json& payload);

  std::optional<CacheEntry> lookup(const std::string& key);
  void store(const std::string& key, const std::string& value);

  /// Returns the stored value for `key`, or runs `compute` once and stores its result.
  /// Disk errors are logged and degrade to pass-through.
  std::string get_or_compute(const std::string& key, const std::function<std::string()>& compute,
                             bool* was_hit = nullptr);

  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }
  const std::optional<std::filesystem::path>& directory() const { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;

  std::optional<std::filesystem::path> dir_;
  std::mutex mutex_;
  std::unordered_map<std::string, CacheEntry> memory_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

/// HTTP client for one endpoint. Safe for concurrent use; in-flight requests are capped
/// at endpoint.max_in_flight.
class BackendClient {
 public:
  BackendClient(BackendEndpoint endpoint, std::shared_ptr<ResponseCache> cache,
                std::filesystem::path media_dir = std::filesystem::temp_directory_path() / "mils-media",
                RetryPolicy retry = {});
  ~BackendClient();
  BackendClient(const BackendClient&) = delete;
  BackendClient& operator=(const BackendClient&) = delete;

  /// First choice message content. Not cached.
  std::string chat_complete(std::span<const ChatMessage> messages, const Sampling& sampling);

  std::vector<double> embed_text(std::string_view text);
  /// Batched; each text is cached under its own key, misses go upstream in one request.
  std::vector<std::vector<double>> embed_texts(std::span<const std::string> texts);
  /// `frames` is a sampling hint forwarded for video.
  std::vector<double> embed_media(const MediaHandle& media, std::optional<int> frames = std::nullopt);

  MediaHandle generate_image(std::string_view prompt);
  MediaHandle edit_image(const MediaHandle& image, std::string_view instruction);

  /// One map per requested layer, in request order.
  std::vector<FeatureMap> extract_features(const MediaHandle& image, std::span<const std::string> layer_ids);

  /// Human-preference scores for (prompt, image) pairs, order-aligned with `images`.
  std::vector<double> preference(std::string_view prompt, std::span<const MediaHandle> images);

  const BackendEndpoint& endpoint() const { return endpoint_; }
  const std::filesystem::path& media_dir() const { return media_dir_; }

  /// Upstream HTTP attempts, including retries.
  std::size_t upstream_requests() const { return upstream_requests_.load(); }
  std::size_t cache_hits() const { return cache_hits_.load(); }

 private:
  struct Impl;

  nlohmann::json post(const std::string& path, const nlohmann::json& body);
  nlohmann::json cached_post(const std::string& path, const nlohmann::json& body);
  nlohmann::json media_ref(const MediaHandle& media, std::string_view prefix) const;
  void check_dimension(std::size_t dim, const std::string& where = {});
  MediaHandle persist_image(const nlohmann::json& response);

  BackendEndpoint endpoint_;
  std::shared_ptr<ResponseCache> cache_;
  std::filesystem::path media_dir_;
  RetryPolicy retry_;
  std::unique_ptr<Impl> impl_;
  std::atomic<std::size_t> upstream_requests_{0};
  std::atomic<std::size_t> cache_hits_{0};
  std::mutex dim_mutex_;
  std::optional<std::size_t> dimension_;
};

/// Named clients sharing one cache and media directory.
class BackendRegistry {
 public:
  BackendRegistry(std::shared_ptr<ResponseCache> cache, std::filesystem::path media_dir, RetryPolicy retry = {});

  void add(const BackendEndpoint& endpoint);
  BackendClient& get(std::string_view name) const;  // throws ConfigError
  bool contains(std::string_view name) const;

  const std::shared_ptr<ResponseCache>& cache() const { return cache_; }
  const std::filesystem::path& media_dir() const { return media_dir_; }

 private:
  std::shared_ptr<ResponseCache> cache_;
  std::filesystem::path media_dir_;
  RetryPolicy retry_;
  std::map<std::string, std::unique_ptr<BackendClient>, std::less<>> clients_;
};

}  // namespace mils
