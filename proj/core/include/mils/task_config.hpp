#pragma once

// JSON task configuration: parsing with per-kind defaults, dotted overrides and
// canonical serialization.

#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mils/backends.hpp"
#include "mils/solver.hpp"

namespace mils {

struct EngineConfig {
  TaskSpec task;
  std::vector<BackendEndpoint> endpoints;
  std::optional<std::filesystem::path> cache_dir;
  std::filesystem::path media_dir = "media";
  /// Templates in this directory override the built-ins by name.
  std::optional<std::filesystem::path> templates_dir;
  RetryPolicy retry;
};

/// Parses a config document. Relative paths resolve against `base_dir`; media files are
/// read and hashed. Unset hyperparameters take the defaults of the task kind. Throws
/// ConfigError naming the offending field.
EngineConfig parse_engine_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);

/// Reads and parses a config file (relative paths resolve against its directory).
EngineConfig load_engine_config(const std::filesystem::path& path,
                                const std::vector<std::string>& overrides = {});

/// Canonical form with every field explicit and absolute paths; parsing it again
/// yields the same config.
nlohmann::json to_json(const EngineConfig& config);

/// Applies `dotted.path=value`. The value is read as JSON when it parses, otherwise as
/// a string. Missing intermediate objects are created; numeric segments index arrays.
void apply_override(nlohmann::json& doc, std::string_view assignment);

/// Registry with every configured endpoint, sharing one response cache.
std::unique_ptr<BackendRegistry> make_registry(const EngineConfig& config);

/// Built-in templates plus any from templates_dir.
TemplateStore make_template_store(const EngineConfig& config);

}  // namespace mils
