#include <algorithm>
#include <chrono>
#include <fstream>
#include <future>
#include <sstream>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mils/cli.hpp"
#include "mils/errors.hpp"
#include "mils/task_config.hpp"

namespace mils::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  return fmt::format("{:%Y-%m-%dT%H:%M:%S}.{:03d}Z", fmt::gmtime(std::chrono::system_clock::to_time_t(now)), ms);
}

json score_to_json(const Candidate& c) {
  json objectives = json::array();
  if (c.score) {
    for (const auto& o : c.score->objectives) {
      objectives.push_back({{"name", o.name}, {"value", o.value}, {"direction", to_string(o.direction)}});
    }
  }
  return {{"scalar", c.score ? json(c.score->scalar) : json(nullptr)}, {"objectives", objectives}};
}

void write_outputs(const SolveResult& result, const fs::path& out) {
  write_file_atomic(out / "trace.jsonl", result.trace.to_jsonl());
  write_file_atomic(out / "curve.csv", result.trace.to_curve_csv());
  for (const auto& [name, trace] : result.attached_traces) {
    write_file_atomic(out / ("trace." + name + ".jsonl"), trace.to_jsonl());
  }
  write_file_atomic(out / "best.txt", result.best.text + "\n");

  json summary = {{"best_text", result.best.text},
                  {"best_score", score_to_json(result.best)},
                  {"stopped_reason", to_string(result.stopped_reason)},
                  {"steps", result.trace.steps.size()},
                  {"metadata", result.metadata}};
  if (result.best.media) {
    const auto& media = *result.best.media;
    auto ext = fs::path(media.uri_or_path).extension().string();
    if (ext.empty()) ext = ".bin";
    const auto dest = out / ("best_media" + ext);
    write_file_atomic(dest, media.read_bytes());
    summary["best_media"] = {{"path", dest.string()}, {"source", media.uri_or_path}, {"sha256", media.hash_hex()}};
  }
  write_file_atomic(out / "result.json", summary.dump(2) + "\n");
}

}  // namespace

std::string engine_version() { return "0.3.0"; }

json RunManifest::to_json() const {
  return {{"config_path", config_path.string()},
          {"output_dir", output_dir.string()},
          {"task", resolved_task},
          {"engine_version", engine_version},
          {"started_at", started_at}};
}

RunOutcome run_config(const fs::path& config_path, const std::vector<std::string>& overrides, const fs::path& out_dir,
                      std::ostream& err) {
  EngineConfig cfg;
  try {
    cfg = load_engine_config(config_path, overrides);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return {kExitConfig, std::nullopt, e.what()};
  }

  try {
    fs::create_directories(out_dir);
    RunManifest manifest{fs::absolute(config_path), fs::absolute(out_dir), to_json(cfg), engine_version(),
                         utc_timestamp()};
    write_file_atomic(out_dir / "manifest.json", manifest.to_json().dump(2) + "\n");

    auto registry = make_registry(cfg);
    TaskRunner runner(*registry, make_template_store(cfg));
    const auto result = runner.run(cfg.task);
    write_outputs(result, out_dir);
    spdlog::info("best {:.6f}: {}", result.best.scalar(), result.best.text);
    return {kExitOk, result.best.scalar(), {}};
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return {kExitConfig, std::nullopt, e.what()};
  } catch (const std::exception& e) {
    err << "solve error: " << e.what() << "\n";
    return {kExitFailure, std::nullopt, e.what()};
  }
}

int cmd_run(const fs::path& config_path, const std::vector<std::string>& overrides, const fs::path& out_dir,
            std::ostream& err) {
  return run_config(config_path, overrides, out_dir, err).exit_code;
}

int cmd_sweep(const SweepOptions& options, std::ostream& err) {
  if (options.param.empty()) {
    err << "config error: --param: required\n";
    return kExitConfig;
  }
  if (options.values.empty()) {
    err << "config error: --values: required\n";
    return kExitConfig;
  }
  std::vector<double> numeric;
  for (const auto& v : options.values) {
    try {
      std::size_t used = 0;
      numeric.push_back(std::stod(v, &used));
      if (used != v.size()) throw std::invalid_argument(v);
    } catch (const std::exception&) {
      err << "config error: --values: '" << v << "' is not numeric\n";
      return kExitConfig;
    }
  }

  const auto run_one = [&](std::size_t i) {
    auto overrides = options.overrides;
    overrides.push_back(options.param + "=" + options.values[i]);
    const auto dir = options.out_dir / (options.param + "=" + options.values[i]);
    std::ostringstream local_err;
    auto outcome = run_config(options.config_path, overrides, dir, local_err);
    outcome.message = local_err.str();
    return outcome;
  };

  std::vector<RunOutcome> outcomes(options.values.size());
  const auto jobs = static_cast<std::size_t>(std::max(1, options.jobs));
  for (std::size_t start = 0; start < outcomes.size(); start += jobs) {
    std::vector<std::future<RunOutcome>> batch;
    for (std::size_t i = start; i < std::min(outcomes.size(), start + jobs); ++i) {
      batch.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async, run_one, i));
    }
    for (std::size_t i = 0; i < batch.size(); ++i) outcomes[start + i] = batch[i].get();
  }

  std::vector<std::size_t> order(outcomes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return numeric[a] < numeric[b]; });

  std::string csv = "value,best_scalar,status\n";
  int code = kExitOk;
  for (const auto i : order) {
    const auto& o = outcomes[i];
    if (o.exit_code != kExitOk) {
      err << options.param << "=" << options.values[i] << ": " << o.message;
      code = std::max(code, o.exit_code == kExitConfig ? kExitConfig : kExitFailure);
    }
    csv += fmt::format("{},{},{}\n", options.values[i], o.best_scalar ? fmt::format("{:.17g}", *o.best_scalar) : "",
                       o.exit_code == kExitOk ? "ok" : (o.exit_code == kExitConfig ? "config_error" : "failed"));
  }
  fs::create_directories(options.out_dir);
  write_file_atomic(options.out_dir / "summary.csv", csv);
  return code;
}

}  // namespace mils::cli
