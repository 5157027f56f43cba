#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

namespace mils {

struct RecordedRequest {
  std::string path;
  nlohmann::json body;
  std::string authorization;
};

/// Thrown from a mock handler to answer with a non-200 status.
struct MockHttpStatus {
  int status = 500;
  std::string message;
};

/// In-process HTTP server speaking the engine's backend wire protocol.
///
/// Handlers are registered per path. A JSON script (see install_script) can populate
/// them with canned behaviour. Every request is recorded before dispatch, including
/// ones answered by an injected fault, so logs can be compared against client-side
/// call counts.
class MockServer {
 public:
  using Handler = std::function<nlohmann::json(const nlohmann::json& request)>;

  MockServer();
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  void on(const std::string& path, Handler handler);

  /// The next `count` requests to `path` are answered with `status`.
  void inject_faults(const std::string& path, int status, int count);
  /// Every request to `path` sleeps before answering.
  void set_delay(const std::string& path, std::chrono::milliseconds delay);

  /// Binds (port 0 picks a free port) and starts serving on a background thread.
  /// Returns the bound port; throws IoError when the port cannot be bound.
  int start(int port = 0, const std::string& host = "127.0.0.1");
  void stop();
  /// Blocks until stop() is called from another thread.
  void wait();

  int port() const { return port_; }
  std::string base_url() const;

  std::vector<RecordedRequest> requests() const;
  std::size_t request_count(const std::string& path) const;
  void clear_requests();

  /// Mirrors each request as one JSON line ({"path":..., "body":...}).
  void set_log_stream(std::ostream* out);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

/// Registers handlers described by a mock script. Relative file references resolve
/// against `base_dir`. Script sections (all optional):
///
///   chat:        [{"match": "*" | substring, "reply": text | "replies": [...] | "mode": "mutate", ...}]
///   embeddings:  {"text": {...}, "media": {...}}
///   images:      {"generations": {...}, "edits": {...}}
///   features:    {"mode": "constant" | "content_hash", "channels": C, "spatial": M, "omit_layers": [...]}
///   preference:  {"mode": "constant" | "length", ...}
///   faults:      [{"path": ..., "status": ..., "count": ...}]
///
/// The full reference lives in docs/protocol.md.
void install_script(MockServer& server, const nlohmann::json& script,
                    const std::filesystem::path& base_dir = std::filesystem::current_path());

/// Token-basis embedding used by the mock: each normalized token adds a unit vector.
/// With a vocabulary the dimension is |vocabulary| + 1 (last slot collects unknown
/// tokens); without one tokens are hashed into `dim` slots.
std::vector<double> token_basis_embedding(std::string_view text, const std::vector<std::string>& vocabulary,
                                          std::size_t dim = 256);

}  // namespace mils
