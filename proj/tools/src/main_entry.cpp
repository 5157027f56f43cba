#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mils/cli.hpp"

namespace mils::cli {

namespace {

std::atomic<bool> g_stop{false};

extern "C" void handle_signal(int) { g_stop.store(true); }

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--refs", "cannot read " + path.string());
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

int main_entry(int argc, char** argv) {
  CLI::App app{"mils: generate / score / select optimization over text candidates"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  std::filesystem::path config;
  std::filesystem::path out = "out";
  std::vector<std::string> sets;
  auto* run = app.add_subcommand("run", "Run one task config");
  run->add_option("--config", config, "Task config (JSON)")->required();
  run->add_option("--set", sets, "Override a config field, e.g. run.max_steps=3");
  run->add_option("--out", out, "Output directory");

  SweepOptions sweep_opts;
  std::string values;
  auto* sweep = app.add_subcommand("sweep", "Run a config once per value of a numeric field");
  sweep->add_option("--config", sweep_opts.config_path, "Task config (JSON)")->required();
  sweep->add_option("--param", sweep_opts.param, "Dotted field path, e.g. bootstrap.limit")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();
  sweep->add_option("--out", sweep_opts.out_dir, "Parent output directory");
  sweep->add_option("--set", sweep_opts.overrides, "Override applied to every run");
  sweep->add_option("--jobs", sweep_opts.jobs, "Runs in parallel")->check(CLI::PositiveNumber);

  std::string candidate;
  std::filesystem::path refs;
  auto* bleu = app.add_subcommand("bleu4", "Sentence BLEU-4 of a candidate against references");
  bleu->add_option("--candidate", candidate, "Candidate sentence")->required();
  bleu->add_option("--refs", refs, "File with one reference per line")->required();

  int port = 0;
  std::filesystem::path script;
  std::optional<std::filesystem::path> log_path;
  auto* mock = app.add_subcommand("mockserve", "Serve the backend wire protocol from a script");
  mock->add_option("--port", port, "Port (0 picks a free one)")->required();
  mock->add_option("--script", script, "Mock script (JSON)")->required();
  mock->add_option("--log", log_path, "Append one JSON line per request");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("mils"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  if (*run) return cmd_run(config, sets, out, std::cerr);
  if (*sweep) {
    std::stringstream ss(values);
    for (std::string v; std::getline(ss, v, ',');) {
      if (!v.empty()) sweep_opts.values.push_back(v);
    }
    return cmd_sweep(sweep_opts, std::cerr);
  }
  if (*bleu) {
    try {
      const auto references = read_lines(refs);
      if (references.empty()) {
        std::cerr << "--refs: no references\n";
        return kExitConfig;
      }
      fmt::print("{:.6f}\n", bleu4(candidate, references));
      return kExitOk;
    } catch (const CLI::Error& e) {
      std::cerr << e.what() << "\n";
      return kExitConfig;
    }
  }
  if (*mock) {
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    return cmd_mockserve(port, script, log_path, std::cerr, g_stop,
                         [](int p) { fmt::print("listening on http://127.0.0.1:{}\n", p), std::fflush(stdout); });
  }
  return kExitConfig;
}

}  // namespace mils::cli
