#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace mils::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

std::string engine_version();

struct RunManifest {
  std::filesystem::path config_path;
  std::filesystem::path output_dir;
  nlohmann::json resolved_task;
  std::string engine_version;
  std::string started_at;  // ISO 8601, UTC

  nlohmann::json to_json() const;
};

struct RunOutcome {
  int exit_code = kExitOk;
  std::optional<double> best_scalar;
  std::string message;
};

/// Runs one task config and writes manifest.json, trace.jsonl, curve.csv, best.txt,
/// result.json and best_media.* (when the best candidate carries media) into `out_dir`.
RunOutcome run_config(const std::filesystem::path& config_path, const std::vector<std::string>& overrides,
                      const std::filesystem::path& out_dir, std::ostream& err);

int cmd_run(const std::filesystem::path& config_path, const std::vector<std::string>& overrides,
            const std::filesystem::path& out_dir, std::ostream& err);

struct SweepOptions {
  std::filesystem::path config_path;
  std::string param;
  std::vector<std::string> values;
  std::filesystem::path out_dir = "sweep";
  std::vector<std::string> overrides;
  int jobs = 1;
};

/// One run per value into `<out_dir>/<param>=<value>`, then summary.csv
/// (value,best_scalar,status) sorted by value. Failed runs do not stop the sweep;
/// the exit code is 2 if any run had a config error, else 1 if any failed.
int cmd_sweep(const SweepOptions& options, std::ostream& err);

/// Sentence BLEU-4 with uniform weights, closest-reference brevity penalty and no
/// smoothing. Tokens are lowercase whitespace-separated words.
double bleu4(std::string_view candidate, const std::vector<std::string>& references);

/// Serves a mock script until `stop` becomes true. `on_ready` receives the bound port.
/// Returns 1 when the port is busy or the script is unreadable.
int cmd_mockserve(int port, const std::filesystem::path& script_path,
                  const std::optional<std::filesystem::path>& log_path, std::ostream& err,
                  const std::atomic<bool>& stop, const std::function<void(int)>& on_ready = {});

/// Argument parsing and dispatch for the `mils` executable.
int main_entry(int argc, char** argv);

}  // namespace mils::cli
