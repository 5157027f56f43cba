#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "mils/backends.hpp"
#include "mils/core.hpp"
#include "mils/mock_server.hpp"

namespace mils::test {

namespace fs = std::filesystem;

inline fs::path fixture_dir() { return fs::path(MILS_FIXTURE_DIR); }
inline fs::path golden_dir() { return fs::path(MILS_GOLDEN_DIR); }
inline fs::path template_store_dir() { return fs::path(MILS_TEMPLATE_STORE_DIR); }

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = fs::temp_directory_path() /
            ("mils-test-" + std::to_string(stamp) + "-" + std::to_string(counter.fetch_add(1)));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline Candidate scored(std::string text, double scalar, int step = 0) {
  auto c = Candidate::make(std::move(text), step);
  c.score = ScoreValue::single("s", scalar);
  return c;
}

inline RetryPolicy fast_retry() { return RetryPolicy{std::chrono::milliseconds(1), 2.0, 0.0}; }

inline BackendEndpoint endpoint(const MockServer& server, std::string name, ApiKind api, std::string model = "m") {
  BackendEndpoint e;
  e.name = std::move(name);
  e.base_url = server.base_url();
  e.api = api;
  e.model = std::move(model);
  e.timeout = std::chrono::milliseconds(5000);
  return e;
}

/// Fills @PORT@ and @WORK@ in a fixture config and writes it next to the fixture files
/// (so relative paths still resolve) under a unique name.
inline fs::path instantiate_config(const std::string& fixture_name, int port, const fs::path& work) {
  auto text = slurp(fixture_dir() / "mock_stack" / fixture_name);
  const auto replace_all = [&](const std::string& from, const std::string& to) {
    for (std::size_t pos = 0; (pos = text.find(from, pos)) != std::string::npos; pos += to.size()) {
      text.replace(pos, from.size(), to);
    }
  };
  replace_all("@PORT@", std::to_string(port));
  replace_all("@WORK@", work.string());
  auto doc = nlohmann::json::parse(text);
  // Relative paths in the fixture resolve against the fixture directory.
  const auto dir = fixture_dir() / "mock_stack";
  const auto absolutize = [&](nlohmann::json& node, const char* key) {
    if (node.contains(key) && node[key].is_string()) node[key] = (dir / node[key].get<std::string>()).string();
    if (node.contains(key) && node[key].is_object() && node[key].contains("path")) {
      node[key]["path"] = (dir / node[key]["path"].get<std::string>()).string();
    }
  };
  absolutize(doc, "test_sample");
  absolutize(doc, "image_sample");
  absolutize(doc, "audio_sample");
  for (auto* task : {&doc, doc.contains("image_task") ? &doc["image_task"] : nullptr,
                     doc.contains("audio_task") ? &doc["audio_task"] : nullptr}) {
    if (task && task->contains("bootstrap")) absolutize(*task, "bootstrap");
  }
  const auto path = work / ("config-" + fixture_name);
  spit(path, doc.dump(2));
  return path;
}

inline nlohmann::json load_script() {
  return nlohmann::json::parse(slurp(fixture_dir() / "mock_stack" / "script.json"));
}

}  // namespace mils::test
