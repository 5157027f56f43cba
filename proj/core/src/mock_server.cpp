#include <atomic>
#include <cmath>
#include <map>
#include <random>
#include <regex>
#include <sstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "mils/core.hpp"
#include "mils/errors.hpp"
#include "mils/generators.hpp"
#include "mils/media.hpp"
#include "mils/mock_server.hpp"

namespace mils {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t digest_prefix(const Digest& d) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | d[static_cast<std::size_t>(i)];
  return v;
}

std::string last_user_message(const nlohmann::json& request) {
  const auto& messages = request.at("messages");
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->value("role", "") == "user") return it->value("content", "");
  }
  return messages.empty() ? std::string() : messages.back().value("content", "");
}

nlohmann::json chat_reply(const std::string& content) {
  return {{"object", "chat.completion"},
          {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}, {"finish_reason", "stop"}}}}};
}

std::vector<std::uint8_t> media_bytes(const nlohmann::json& request, const std::string& prefix) {
  if (request.contains(prefix + "_b64")) return base64_decode(request[prefix + "_b64"].get<std::string>());
  if (request.contains(prefix + "_uri")) return read_file_bytes(request[prefix + "_uri"].get<std::string>());
  throw MockHttpStatus{400, "request carries no " + prefix + " reference"};
}

std::string as_text(const std::vector<std::uint8_t>& bytes) { return std::string(bytes.begin(), bytes.end()); }

nlohmann::json image_response(std::string_view bytes, const std::string& format = "png") {
  const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data());
  return {{"data", {{{"b64_json", base64_encode(std::span<const std::uint8_t>(p, bytes.size()))}, {"format", format}}}}};
}

// Feedback rows as rendered into generator prompts: "0.873: text" or "(2.000, 1.000): text".
std::vector<std::string> feedback_texts_in(const std::string& prompt) {
  static const std::regex row(R"(^\s*(?:-?\d+(?:\.\d+)?|\((?:-?\d+(?:\.\d+)?)(?:,\s*-?\d+(?:\.\d+)?)*\)): (.+)$)");
  std::vector<std::string> out;
  std::istringstream in(prompt);
  for (std::string line; std::getline(in, line);) {
    std::smatch m;
    if (std::regex_match(line, m, row)) out.push_back(m[1].str());
  }
  return out;
}

std::optional<int> requested_count_in(const std::string& prompt) {
  static const std::regex additional(R"(Generate additional (\d+))");
  std::smatch m;
  if (std::regex_search(prompt, m, additional)) return std::stoi(m[1].str());
  return std::nullopt;
}

struct ChatRule {
  std::string match;
  std::vector<std::string> replies;
  std::string mode;  // "" | "mutate"
  std::vector<std::string> vocabulary;
  std::optional<int> max_phrase_tokens;
  int count = 10;
  std::uint64_t seed = 0;
  std::shared_ptr<std::atomic<std::size_t>> cursor = std::make_shared<std::atomic<std::size_t>>(0);
};

std::string numbered(const std::vector<Candidate>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    out += std::to_string(i + 1) + ". " + items[i].text + "\n";
  }
  return out;
}

// Text embedder chosen by a script section.
struct TextEmbedder {
  std::string mode = "token_basis";
  std::vector<std::string> vocabulary;
  std::size_t dim = 256;
  std::map<std::string, std::vector<double>> table;
  std::optional<std::vector<double>> fallback;

  std::vector<double> operator()(const std::string& text) const {
    if (mode == "table") {
      if (auto it = table.find(text); it != table.end()) return it->second;
      if (fallback) return *fallback;
      throw MockHttpStatus{404, "no scripted embedding for '" + text + "'"};
    }
    return token_basis_embedding(text, vocabulary, dim);
  }
};

TextEmbedder make_text_embedder(const nlohmann::json& section) {
  TextEmbedder e;
  e.mode = section.value("mode", section.contains("table") ? "table" : "token_basis");
  e.vocabulary = section.value("vocabulary", std::vector<std::string>{});
  e.dim = section.value("dim", std::size_t{256});
  if (section.contains("table")) e.table = section["table"].get<std::map<std::string, std::vector<double>>>();
  if (section.contains("default")) e.fallback = section["default"].get<std::vector<double>>();
  return e;
}

}  // namespace

std::vector<double> token_basis_embedding(std::string_view text, const std::vector<std::string>& vocabulary,
                                          std::size_t dim) {
  const std::size_t size = vocabulary.empty() ? dim : vocabulary.size() + 1;
  std::vector<double> v(size, 0.0);
  std::istringstream in(normalize_text(text));
  for (std::string token; in >> token;) {
    if (vocabulary.empty()) {
      v[fnv1a(token) % size] += 1.0;
    } else {
      auto it = std::find(vocabulary.begin(), vocabulary.end(), token);
      v[it == vocabulary.end() ? size - 1 : static_cast<std::size_t>(it - vocabulary.begin())] += 1.0;
    }
  }
  return v;
}

struct MockServer::Impl {
  httplib::Server server;
  std::thread thread;
  mutable std::mutex mutex;
  std::map<std::string, Handler> handlers;
  std::map<std::string, std::pair<int, int>> faults;  // path -> (status, remaining)
  std::map<std::string, std::chrono::milliseconds> delays;
  std::vector<RecordedRequest> log;
  std::ostream* log_stream = nullptr;
  bool running = false;
};

MockServer::MockServer() : impl_(std::make_unique<Impl>()) {}

MockServer::~MockServer() { stop(); }

void MockServer::on(const std::string& path, Handler handler) {
  std::lock_guard lock(impl_->mutex);
  const bool fresh = impl_->handlers.find(path) == impl_->handlers.end();
  impl_->handlers[path] = std::move(handler);
  if (!fresh) return;
  impl_->server.Post(path, [this, path](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::parse_error&) {
      body = req.body;
    }
    Handler handler;
    std::optional<int> fault;
    std::chrono::milliseconds delay{0};
    {
      std::lock_guard lock(impl_->mutex);
      impl_->log.push_back({path, body, req.get_header_value("Authorization")});
      if (impl_->log_stream) {
        *impl_->log_stream << nlohmann::json{{"path", path}, {"body", body}}.dump() << '\n';
        impl_->log_stream->flush();
      }
      if (auto it = impl_->faults.find(path); it != impl_->faults.end() && it->second.second > 0) {
        --it->second.second;
        fault = it->second.first;
      }
      if (auto it = impl_->delays.find(path); it != impl_->delays.end()) delay = it->second;
      handler = impl_->handlers[path];
    }
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
    if (fault) {
      res.status = *fault;
      res.set_content(nlohmann::json{{"error", "injected fault"}}.dump(), "application/json");
      return;
    }
    try {
      res.set_content(handler(body).dump(), "application/json");
    } catch (const MockHttpStatus& s) {
      res.status = s.status;
      res.set_content(nlohmann::json{{"error", s.message}}.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    }
  });
}

void MockServer::inject_faults(const std::string& path, int status, int count) {
  std::lock_guard lock(impl_->mutex);
  impl_->faults[path] = {status, count};
}

void MockServer::set_delay(const std::string& path, std::chrono::milliseconds delay) {
  std::lock_guard lock(impl_->mutex);
  impl_->delays[path] = delay;
}

int MockServer::start(int port, const std::string& host) {
  if (impl_->running) throw Error("mock server already running");
  impl_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port(host);
    if (port_ < 0) throw IoError("mock server could not bind any port on " + host);
  } else {
    if (!impl_->server.bind_to_port(host, port)) {
      throw IoError("mock server could not bind " + host + ":" + std::to_string(port));
    }
    port_ = port;
  }
  impl_->running = true;
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void MockServer::stop() {
  if (!impl_->running) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
  impl_->running = false;
}

void MockServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
  impl_->running = false;
}

std::string MockServer::base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

std::vector<RecordedRequest> MockServer::requests() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->log;
}

std::size_t MockServer::request_count(const std::string& path) const {
  std::lock_guard lock(impl_->mutex);
  return static_cast<std::size_t>(
      std::count_if(impl_->log.begin(), impl_->log.end(), [&](const RecordedRequest& r) { return r.path == path; }));
}

void MockServer::clear_requests() {
  std::lock_guard lock(impl_->mutex);
  impl_->log.clear();
}

void MockServer::set_log_stream(std::ostream* out) {
  std::lock_guard lock(impl_->mutex);
  impl_->log_stream = out;
}

void install_script(MockServer& server, const nlohmann::json& script, const std::filesystem::path& base_dir) {
  auto resolve = [base_dir](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };

  if (script.contains("chat")) {
    std::vector<ChatRule> rules;
    for (const auto& r : script["chat"]) {
      ChatRule rule;
      rule.match = r.value("match", "*");
      if (r.contains("reply")) rule.replies.push_back(r["reply"].get<std::string>());
      if (r.contains("replies")) rule.replies = r["replies"].get<std::vector<std::string>>();
      rule.mode = r.value("mode", "");
      rule.vocabulary = r.value("vocabulary", std::vector<std::string>{});
      if (r.contains("max_phrase_tokens")) rule.max_phrase_tokens = r["max_phrase_tokens"].get<int>();
      rule.count = r.value("count", 10);
      rule.seed = r.value("seed", std::uint64_t{0});
      if (rule.mode == "mutate" && rule.vocabulary.empty()) throw ConfigError("mutate chat rule needs a vocabulary", "chat");
      if (rule.mode.empty() && rule.replies.empty()) throw ConfigError("chat rule needs reply, replies or mode", "chat");
      rules.push_back(std::move(rule));
    }
    server.on("/v1/chat/completions", [rules](const nlohmann::json& request) {
      const std::string prompt = last_user_message(request);
      for (const auto& rule : rules) {
        if (rule.match != "*" && prompt.find(rule.match) == std::string::npos) continue;
        if (rule.mode == "mutate") {
          const int count = requested_count_in(prompt).value_or(rule.count);
          return chat_reply(numbered(mock_mutation_generate(feedback_texts_in(prompt), count,
                                                            rule.seed ^ fnv1a(prompt), rule.vocabulary,
                                                            rule.max_phrase_tokens)));
        }
        const std::size_t i = rule.cursor->fetch_add(1);
        return chat_reply(rule.replies[std::min(i, rule.replies.size() - 1)]);
      }
      throw MockHttpStatus{404, "no chat rule matches the prompt"};
    });
  }

  if (script.contains("embeddings")) {
    const auto& section = script["embeddings"];
    const TextEmbedder text = make_text_embedder(section.value("text", nlohmann::json::object()));
    const auto media_section = section.value("media", nlohmann::json::object());
    const std::string media_mode = media_section.value("mode", "file_text");
    std::map<std::string, std::vector<double>> media_table;
    if (media_section.contains("table")) {
      for (auto& [k, v] : media_section["table"].items()) media_table[k] = v.get<std::vector<double>>();
    }
    std::optional<std::vector<double>> media_default;
    if (media_section.contains("default")) media_default = media_section["default"].get<std::vector<double>>();

    server.on("/v1/embeddings", [=](const nlohmann::json& request) {
      nlohmann::json data = nlohmann::json::array();
      auto push = [&](std::vector<double> v) {
        data.push_back({{"object", "embedding"}, {"index", data.size()}, {"embedding", std::move(v)}});
      };
      if (request.contains("kind")) {
        if (media_mode == "table") {
          const std::string uri = request.value("input_uri", "");
          const std::string sha = request.value("content_sha256", "");
          if (auto it = media_table.find(sha); it != media_table.end()) {
            push(it->second);
          } else if (auto it2 = media_table.find(std::filesystem::path(uri).filename().string());
                     it2 != media_table.end()) {
            push(it2->second);
          } else if (media_default) {
            push(*media_default);
          } else {
            throw MockHttpStatus{404, "no scripted media embedding"};
          }
        } else {
          // The media file's bytes are read as a caption and embedded like text.
          push(text(as_text(media_bytes(request, "input"))));
        }
      } else if (request.at("input").is_array()) {
        for (const auto& t : request["input"]) push(text(t.get<std::string>()));
      } else {
        push(text(request["input"].get<std::string>()));
      }
      return nlohmann::json{{"object", "list"}, {"data", std::move(data)}};
    });
  }

  if (script.contains("images")) {
    const auto& section = script["images"];
    const auto gen = section.value("generations", nlohmann::json::object());
    const std::string gen_mode = gen.value("mode", "echo");
    std::string fixed_gen;
    if (gen.contains("file")) fixed_gen = as_text(read_file_bytes(resolve(gen["file"].get<std::string>())));
    server.on("/v1/images/generations", [gen_mode, fixed_gen](const nlohmann::json& request) {
      if (gen_mode == "fixed") return image_response(fixed_gen);
      return image_response("IMG:" + request.at("prompt").get<std::string>());
    });

    const auto edits = section.value("edits", nlohmann::json::object());
    std::vector<std::pair<std::string, std::string>> edit_rules;
    for (const auto& r : edits.value("rules", nlohmann::json::array())) {
      edit_rules.emplace_back(r.at("match").get<std::string>(),
                              as_text(read_file_bytes(resolve(r.at("file").get<std::string>()))));
    }
    std::vector<std::string> fail_on = edits.value("fail_on", std::vector<std::string>{});
    server.on("/v1/images/edits", [edit_rules, fail_on](const nlohmann::json& request) {
      const std::string instruction = request.at("prompt").get<std::string>();
      for (const auto& f : fail_on) {
        if (instruction.find(f) != std::string::npos) throw MockHttpStatus{422, "scripted edit failure"};
      }
      const auto source = media_bytes(request, "image");
      for (const auto& [match, bytes] : edit_rules) {
        if (instruction.find(match) != std::string::npos) return image_response(bytes);
      }
      return image_response("EDIT:" + instruction + ":" + to_hex(sha256(source)));
    });
  }

  if (script.contains("features")) {
    const auto& section = script["features"];
    const std::string mode = section.value("mode", "content_hash");
    const int channels = section.value("channels", 4);
    const int spatial = section.value("spatial", 16);
    const double constant = section.value("value", 1.0);
    const auto omit = section.value("omit_layers", std::vector<std::string>{});
    server.on("/v1/features", [=](const nlohmann::json& request) {
      const auto bytes = media_bytes(request, "image");
      const auto seed = digest_prefix(sha256(bytes));
      nlohmann::json features = nlohmann::json::array();
      for (const auto& layer : request.at("layers")) {
        const auto id = layer.get<std::string>();
        if (std::find(omit.begin(), omit.end(), id) != omit.end()) continue;
        std::vector<double> values(static_cast<std::size_t>(channels) * spatial, constant);
        if (mode == "content_hash") {
          std::mt19937_64 rng(seed ^ fnv1a(id));
          std::uniform_real_distribution<double> u(0.0, 1.0);
          for (auto& v : values) v = u(rng);
        }
        features.push_back({{"layer", id}, {"channels", channels}, {"spatial", spatial}, {"values", std::move(values)}});
      }
      return nlohmann::json{{"features", std::move(features)}};
    });
  }

  if (script.contains("preference")) {
    const auto& section = script["preference"];
    const std::string mode = section.value("mode", "constant");
    const double value = section.value("value", 0.21);
    const double base = section.value("base", 0.2);
    const double per_byte = section.value("per_byte", 0.0001);
    server.on("/v1/preference", [=](const nlohmann::json& request) {
      nlohmann::json scores = nlohmann::json::array();
      for (const auto& image : request.at("images")) {
        if (mode == "length") {
          const auto bytes = image.contains("b64") ? base64_decode(image["b64"].get<std::string>())
                                                   : read_file_bytes(image.at("uri").get<std::string>());
          scores.push_back(base + per_byte * static_cast<double>(bytes.size()));
        } else {
          scores.push_back(value);
        }
      }
      return nlohmann::json{{"scores", std::move(scores)}};
    });
  }

  for (const auto& f : script.value("faults", nlohmann::json::array())) {
    server.inject_faults(f.at("path").get<std::string>(), f.value("status", 500), f.value("count", 1));
  }
}

}  // namespace mils
