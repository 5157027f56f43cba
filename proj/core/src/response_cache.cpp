#include <spdlog/spdlog.h>

#include "mils/backends.hpp"
#include "mils/errors.hpp"

namespace mils {

namespace {

std::int64_t to_millis(std::chrono::system_clock::time_point t) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

}  // namespace

ResponseCache::ResponseCache(std::optional<std::filesystem::path> dir) : dir_(std::move(dir)) {
  if (dir_) {
    std::error_code ec;
    std::filesystem::create_directories(*dir_, ec);
    if (ec) spdlog::warn("cache directory {} unavailable ({}); using memory only", dir_->string(), ec.message());
  }
}

std::string ResponseCache::make_key(ApiKind api, std::string_view model, const nlohmann::json& payload) {
  // nlohmann::json objects keep keys sorted, so dump() is canonical.
  std::string material = to_string(api);
  material += '\n';
  material += model;
  material += '\n';
  material += payload.dump();
  return to_hex(sha256(material));
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return *dir_ / key.substr(0, 2) / key;
}

std::optional<CacheEntry> ResponseCache::lookup(const std::string& key) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = memory_.find(key); it != memory_.end()) return it->second;
  }
  if (!dir_) return std::nullopt;
  const auto path = path_for(key);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    const auto bytes = read_file_bytes(path);
    const auto doc = nlohmann::json::parse(bytes.begin(), bytes.end());
    CacheEntry entry{key, doc.at("value").get<std::string>(),
                     std::chrono::system_clock::time_point(std::chrono::milliseconds(doc.at("created_at").get<std::int64_t>()))};
    std::lock_guard lock(mutex_);
    memory_.emplace(key, entry);
    return entry;
  } catch (const std::exception& e) {
    spdlog::warn("ignoring unreadable cache entry {}: {}", path.string(), e.what());
    return std::nullopt;
  }
}

void ResponseCache::store(const std::string& key, const std::string& value) {
  CacheEntry entry{key, value, std::chrono::system_clock::now()};
  {
    std::lock_guard lock(mutex_);
    // Values are deterministic per key; the first writer wins and stays immutable.
    if (!memory_.emplace(key, entry).second) return;
  }
  if (!dir_) return;
  try {
    nlohmann::json doc{{"key", key}, {"created_at", to_millis(entry.created_at)}, {"value", value}};
    write_file_atomic(path_for(key), doc.dump());
  } catch (const std::exception& e) {
    spdlog::warn("cache write failed for {}: {}", key, e.what());
  }
}

std::string ResponseCache::get_or_compute(const std::string& key, const std::function<std::string()>& compute,
                                          bool* was_hit) {
  if (auto entry = lookup(key)) {
    ++hits_;
    if (was_hit) *was_hit = true;
    return entry->value;
  }
  ++misses_;
  if (was_hit) *was_hit = false;
  std::string value = compute();
  store(key, value);
  return value;
}

}  // namespace mils
