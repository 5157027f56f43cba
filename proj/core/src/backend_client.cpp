#include <cmath>
#include <cstdlib>
#include <random>
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "mils/backends.hpp"
#include "mils/errors.hpp"

namespace mils {

namespace {

constexpr std::size_t kEmbedBatch = 256;

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

SplitUrl split_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  const auto path_start = base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  SplitUrl out;
  out.origin = base_url.substr(0, path_start);
  if (path_start != std::string::npos) out.prefix = base_url.substr(path_start);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

std::string snippet(const std::string& body) {
  constexpr std::size_t kMax = 200;
  return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
}

std::vector<double> to_vector(const nlohmann::json& j, const std::string& endpoint) {
  if (!j.is_array()) throw BackendError(endpoint, 0, "embedding is not an array");
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw BackendError(endpoint, 0, "embedding holds a non-number");
    v.push_back(x.get<double>());
  }
  return v;
}

}  // namespace

std::string to_string(ApiKind api) {
  switch (api) {
    case ApiKind::chat: return "chat";
    case ApiKind::embed: return "embed";
    case ApiKind::image_gen: return "image_gen";
    case ApiKind::image_edit: return "image_edit";
    case ApiKind::features: return "features";
    case ApiKind::preference: return "preference";
  }
  return "chat";
}

ApiKind api_kind_from_string(std::string_view name) {
  for (auto api : {ApiKind::chat, ApiKind::embed, ApiKind::image_gen, ApiKind::image_edit, ApiKind::features,
                   ApiKind::preference}) {
    if (to_string(api) == name) return api;
  }
  throw ConfigError("unknown api '" + std::string(name) + "'", "api");
}

void BackendEndpoint::validate() const {
  const std::string field = "endpoints." + name;
  if (name.empty()) throw ConfigError("endpoint name must not be empty", "endpoints");
  const bool http = base_url.rfind("http://", 0) == 0;
  const bool https = base_url.rfind("https://", 0) == 0;
  const std::size_t host_at = http ? 7 : 8;
  if ((!http && !https) || base_url.size() <= host_at || base_url[host_at] == '/' || base_url[host_at] == ':') {
    throw ConfigError("malformed base_url '" + base_url + "'", field + ".base_url");
  }
  if (max_retries < 0) throw ConfigError("must be >= 0", field + ".max_retries");
  if (max_in_flight < 1) throw ConfigError("must be >= 1", field + ".max_in_flight");
  if (timeout.count() <= 0) throw ConfigError("must be > 0", field + ".timeout_ms");
}

void FeatureMap::validate() const {
  if (channels < 1 || spatial < 1) throw ContractViolation("feature map '" + layer_id + "' needs C >= 1 and M >= 1");
  if (values.size() != static_cast<std::size_t>(channels) * static_cast<std::size_t>(spatial)) {
    throw ContractViolation("feature map '" + layer_id + "' holds " + std::to_string(values.size()) +
                            " values, expected C*M = " + std::to_string(channels * spatial));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw ContractViolation("feature map '" + layer_id + "' holds a non-finite value");
  }
}

struct BackendClient::Impl {
  explicit Impl(int slots) : in_flight(slots) {}
  std::counting_semaphore<4096> in_flight;
};

BackendClient::BackendClient(BackendEndpoint endpoint, std::shared_ptr<ResponseCache> cache,
                             std::filesystem::path media_dir, RetryPolicy retry)
    : endpoint_(std::move(endpoint)),
      cache_(std::move(cache)),
      media_dir_(std::move(media_dir)),
      retry_(retry),
      impl_(std::make_unique<Impl>(std::clamp(endpoint_.max_in_flight, 1, 4096))) {
  endpoint_.validate();
  if (!cache_) cache_ = std::make_shared<ResponseCache>();
}

BackendClient::~BackendClient() = default;

nlohmann::json BackendClient::post(const std::string& path, const nlohmann::json& body) {
  const auto url = split_base_url(endpoint_.base_url);
  httplib::Headers headers;
  if (endpoint_.auth_env_var) {
    if (const char* token = std::getenv(endpoint_.auth_env_var->c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    } else {
      spdlog::warn("endpoint '{}': auth variable {} is not set", endpoint_.name, *endpoint_.auth_env_var);
    }
  }
  const std::string payload = body.dump();

  thread_local std::mt19937_64 jitter_rng{std::random_device{}()};
  int last_status = 0;
  std::string last_error;
  for (int attempt = 0; attempt <= endpoint_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::uniform_real_distribution<double> jitter(1.0 - retry_.jitter, 1.0 + retry_.jitter);
      const double ms = static_cast<double>(retry_.base_delay.count()) * std::pow(retry_.factor, attempt - 1) *
                        jitter(jitter_rng);
      std::this_thread::sleep_for(std::chrono::microseconds(static_cast<std::int64_t>(ms * 1000.0)));
    }

    impl_->in_flight.acquire();
    ++upstream_requests_;
    httplib::Result res = [&] {
      httplib::Client client(url.origin);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint_.timeout);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint_.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      return client.Post(url.prefix + path, headers, payload, "application/json");
    }();
    impl_->in_flight.release();

    if (!res) {
      last_status = 0;
      last_error = httplib::to_string(res.error());
      spdlog::debug("endpoint '{}' {} attempt {} failed: {}", endpoint_.name, path, attempt + 1, last_error);
      continue;
    }
    last_status = res->status;
    if (res->status >= 200 && res->status < 300) {
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::parse_error& e) {
        throw BackendError(endpoint_.name, res->status, std::string("response is not JSON: ") + e.what());
      }
    }
    last_error = snippet(res->body);
    const bool transient = res->status >= 500 || res->status == 429 || res->status == 408;
    if (!transient) throw BackendError(endpoint_.name, res->status, path + ": " + last_error);
    spdlog::debug("endpoint '{}' {} attempt {} got HTTP {}", endpoint_.name, path, attempt + 1, res->status);
  }
  throw BackendError(endpoint_.name, last_status,
                     path + " failed after " + std::to_string(endpoint_.max_retries + 1) + " attempt(s): " + last_error);
}

nlohmann::json BackendClient::cached_post(const std::string& path, const nlohmann::json& body) {
  nlohmann::json key_body = body;
  // Media is identified by content hash; its location must not affect the key.
  for (const char* volatile_field : {"input_uri", "input_b64", "image_uri", "image_b64"}) key_body.erase(volatile_field);
  const auto key = ResponseCache::make_key(endpoint_.api, endpoint_.model, key_body);
  bool hit = false;
  const std::string text = cache_->get_or_compute(key, [&] { return post(path, body).dump(); }, &hit);
  if (hit) ++cache_hits_;
  return nlohmann::json::parse(text);
}

nlohmann::json BackendClient::media_ref(const MediaHandle& media, std::string_view prefix) const {
  nlohmann::json ref;
  const std::string p(prefix);
  if (endpoint_.inline_media) {
    ref[p + "_b64"] = base64_encode(media.read_bytes());
  } else {
    ref[p + "_uri"] = std::filesystem::absolute(media.uri_or_path).string();
  }
  ref[p == "input" ? "content_sha256" : p + "_sha256"] = media.hash_hex();
  return ref;
}

void BackendClient::check_dimension(std::size_t dim, const std::string& where) {
  std::lock_guard lock(dim_mutex_);
  if (dim == 0) throw BackendError(endpoint_.name, 0, where + "empty embedding");
  if (!dimension_) {
    dimension_ = dim;
  } else if (*dimension_ != dim) {
    throw BackendError(endpoint_.name, 0,
                       where + "embedding dimension changed from " + std::to_string(*dimension_) + " to " + std::to_string(dim));
  }
}

std::string BackendClient::chat_complete(std::span<const ChatMessage> messages, const Sampling& sampling) {
  if (messages.empty()) throw ContractViolation("chat_complete needs at least one message");
  nlohmann::json body;
  body["model"] = endpoint_.model;
  body["messages"] = nlohmann::json::array();
  for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  body["temperature"] = sampling.temperature;
  body["max_tokens"] = sampling.max_tokens;
  const auto response = post("/v1/chat/completions", body);
  try {
    return response.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(endpoint_.name, 0, std::string("unexpected chat response shape: ") + e.what());
  }
}

std::vector<double> BackendClient::embed_text(std::string_view text) {
  const std::string s(text);
  return embed_texts(std::span<const std::string>(&s, 1)).front();
}

std::vector<std::vector<double>> BackendClient::embed_texts(std::span<const std::string> texts) {
  std::vector<std::vector<double>> out(texts.size());
  std::vector<std::string> keys(texts.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    keys[i] = ResponseCache::make_key(endpoint_.api, endpoint_.model,
                                      nlohmann::json{{"model", endpoint_.model}, {"input", texts[i]}});
    if (auto entry = cache_->lookup(keys[i])) {
      ++cache_hits_;
      out[i] = to_vector(nlohmann::json::parse(entry->value), endpoint_.name);
    } else {
      missing.push_back(i);
    }
  }

  for (std::size_t start = 0; start < missing.size(); start += kEmbedBatch) {
    const std::size_t count = std::min(kEmbedBatch, missing.size() - start);
    nlohmann::json body{{"model", endpoint_.model}};
    if (count == 1) {
      body["input"] = texts[missing[start]];
    } else {
      body["input"] = nlohmann::json::array();
      for (std::size_t j = 0; j < count; ++j) body["input"].push_back(texts[missing[start + j]]);
    }
    const auto response = post("/v1/embeddings", body);
    const auto& data = response.contains("data") ? response["data"] : nlohmann::json();
    if (!data.is_array() || data.size() != count) {
      throw BackendError(endpoint_.name, 0,
                         "expected " + std::to_string(count) + " embeddings, got " +
                             std::to_string(data.is_array() ? data.size() : 0));
    }
    for (std::size_t j = 0; j < count; ++j) {
      const std::size_t i = missing[start + j];
      // OpenAI-style responses may carry an explicit index.
      const std::size_t slot = data[j].contains("index") ? data[j]["index"].get<std::size_t>() : j;
      if (slot >= count) throw BackendError(endpoint_.name, 0, "embedding index out of range");
      const auto& emb = data[slot].at("embedding");
      out[i] = to_vector(emb, endpoint_.name);
      cache_->store(keys[i], emb.dump());
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    check_dimension(out[i].size(), "text " + std::to_string(i) + ": ");
  }
  return out;
}

std::vector<double> BackendClient::embed_media(const MediaHandle& media, std::optional<int> frames) {
  nlohmann::json body = media_ref(media, "input");
  body["model"] = endpoint_.model;
  body["kind"] = to_string(media.kind);
  if (frames) body["frames"] = *frames;
  const auto response = cached_post("/v1/embeddings", body);
  try {
    auto v = to_vector(response.at("data").at(0).at("embedding"), endpoint_.name);
    check_dimension(v.size());
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(endpoint_.name, 0, std::string("unexpected embedding response shape: ") + e.what());
  }
}

MediaHandle BackendClient::persist_image(const nlohmann::json& response) {
  try {
    const auto& item = response.at("data").at(0);
    const auto bytes = base64_decode(item.at("b64_json").get<std::string>());
    const std::string ext = item.value("format", std::string("png"));
    return MediaHandle::store(MediaKind::image, bytes, media_dir_, ext);
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(endpoint_.name, 0, std::string("unexpected image response shape: ") + e.what());
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw BackendError(endpoint_.name, 0, e.what());
  }
}

MediaHandle BackendClient::generate_image(std::string_view prompt) {
  if (prompt.empty()) throw ContractViolation("generate_image needs a non-empty prompt");
  nlohmann::json body{{"model", endpoint_.model}, {"prompt", prompt}, {"n", 1}, {"response_format", "b64_json"}};
  return persist_image(cached_post("/v1/images/generations", body));
}

MediaHandle BackendClient::edit_image(const MediaHandle& image, std::string_view instruction) {
  if (instruction.empty()) throw ContractViolation("edit_image needs a non-empty instruction");
  nlohmann::json body = media_ref(image, "image");
  body["model"] = endpoint_.model;
  body["prompt"] = instruction;
  body["n"] = 1;
  body["response_format"] = "b64_json";
  return persist_image(cached_post("/v1/images/edits", body));
}

std::vector<FeatureMap> BackendClient::extract_features(const MediaHandle& image,
                                                        std::span<const std::string> layer_ids) {
  if (layer_ids.empty()) throw ContractViolation("extract_features needs at least one layer");
  nlohmann::json body = media_ref(image, "image");
  body["model"] = endpoint_.model;
  body["layers"] = std::vector<std::string>(layer_ids.begin(), layer_ids.end());
  const auto response = cached_post("/v1/features", body);

  std::map<std::string, const nlohmann::json*, std::less<>> by_layer;
  if (response.contains("features") && response["features"].is_array()) {
    for (const auto& f : response["features"]) {
      if (f.contains("layer")) by_layer[f["layer"].get<std::string>()] = &f;
    }
  }
  std::vector<FeatureMap> out;
  out.reserve(layer_ids.size());
  for (const auto& id : layer_ids) {
    auto it = by_layer.find(id);
    if (it == by_layer.end()) throw BackendError(endpoint_.name, 0, "response lacks layer '" + id + "'");
    const auto& f = *it->second;
    FeatureMap map;
    map.layer_id = id;
    try {
      map.channels = f.at("channels").get<int>();
      map.spatial = f.at("spatial").get<int>();
      map.values = f.at("values").get<std::vector<double>>();
      map.validate();
    } catch (const std::exception& e) {
      throw BackendError(endpoint_.name, 0, "layer '" + id + "': " + e.what());
    }
    out.push_back(std::move(map));
  }
  return out;
}

std::vector<double> BackendClient::preference(std::string_view prompt, std::span<const MediaHandle> images) {
  std::vector<double> out(images.size());
  std::vector<std::string> keys(images.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < images.size(); ++i) {
    keys[i] = ResponseCache::make_key(
        endpoint_.api, endpoint_.model,
        nlohmann::json{{"model", endpoint_.model}, {"prompt", prompt}, {"image_sha256", images[i].hash_hex()}});
    if (auto entry = cache_->lookup(keys[i])) {
      ++cache_hits_;
      out[i] = nlohmann::json::parse(entry->value).get<double>();
    } else {
      missing.push_back(i);
    }
  }
  if (missing.empty()) return out;

  nlohmann::json body{{"model", endpoint_.model}, {"prompt", prompt}, {"images", nlohmann::json::array()}};
  for (std::size_t i : missing) {
    auto ref = media_ref(images[i], "image");
    nlohmann::json item;
    for (auto& [k, v] : ref.items()) item[k.substr(std::string("image_").size())] = v;
    body["images"].push_back(std::move(item));
  }
  const auto response = post("/v1/preference", body);
  const auto& scores = response.contains("scores") ? response["scores"] : nlohmann::json();
  if (!scores.is_array() || scores.size() != missing.size()) {
    throw BackendError(endpoint_.name, 0, "expected " + std::to_string(missing.size()) + " preference scores");
  }
  for (std::size_t j = 0; j < missing.size(); ++j) {
    if (!scores[j].is_number()) throw BackendError(endpoint_.name, 0, "preference score is not a number");
    out[missing[j]] = scores[j].get<double>();
    cache_->store(keys[missing[j]], scores[j].dump());
  }
  return out;
}

BackendRegistry::BackendRegistry(std::shared_ptr<ResponseCache> cache, std::filesystem::path media_dir,
                                 RetryPolicy retry)
    : cache_(cache ? std::move(cache) : std::make_shared<ResponseCache>()),
      media_dir_(std::move(media_dir)),
      retry_(retry) {}

void BackendRegistry::add(const BackendEndpoint& endpoint) {
  clients_.insert_or_assign(endpoint.name, std::make_unique<BackendClient>(endpoint, cache_, media_dir_, retry_));
}

BackendClient& BackendRegistry::get(std::string_view name) const {
  auto it = clients_.find(name);
  if (it == clients_.end()) throw ConfigError("no endpoint named '" + std::string(name) + "'", "endpoints");
  return *it->second;
}

bool BackendRegistry::contains(std::string_view name) const { return clients_.find(name) != clients_.end(); }

}  // namespace mils
