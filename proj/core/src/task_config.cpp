#include "mils/task_config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "mils/errors.hpp"

namespace mils {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join_field(std::string_view prefix, std::string_view key) {
  if (prefix.empty()) return std::string(key);
  return std::string(prefix) + "." + std::string(key);
}

void check_object(const json& v, const std::string& field) {
  if (!v.is_object()) throw ConfigError("expected an object", field);
}

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view prefix) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown field", join_field(prefix, key));
    }
  }
}

const json* find(const json& obj, std::string_view key) {
  const auto it = obj.find(std::string(key));
  if (it == obj.end() || it->is_null()) return nullptr;
  return &*it;
}

std::string get_string(const json& v, const std::string& field) {
  if (!v.is_string()) throw ConfigError("expected a string", field);
  return v.get<std::string>();
}

long long get_integer(const json& v, const std::string& field) {
  if (!v.is_number_integer()) throw ConfigError("expected an integer", field);
  return v.get<long long>();
}

double get_number(const json& v, const std::string& field) {
  if (!v.is_number()) throw ConfigError("expected a number", field);
  return v.get<double>();
}

bool get_bool(const json& v, const std::string& field) {
  if (!v.is_boolean()) throw ConfigError("expected true or false", field);
  return v.get<bool>();
}

std::vector<std::string> get_strings(const json& v, const std::string& field) {
  if (!v.is_array()) throw ConfigError("expected an array of strings", field);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(get_string(v[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

// Re-tags conversion errors with the field they came from.
template <typename F>
auto with_field(const std::string& field, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(e.message(), field);
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  return path.lexically_normal();
}

MediaKind default_media_kind(TaskKind kind) {
  switch (kind) {
    case TaskKind::caption_video: return MediaKind::video;
    case TaskKind::caption_audio: return MediaKind::audio;
    default: return MediaKind::image;
  }
}

MediaHandle parse_media(const json& v, const fs::path& base, MediaKind default_kind, const std::string& field) {
  MediaKind kind = default_kind;
  std::string path;
  std::optional<std::string> sha;
  if (v.is_string()) {
    path = v.get<std::string>();
  } else {
    check_object(v, field);
    check_keys(v, {"kind", "path", "sha256"}, field);
    const auto* p = find(v, "path");
    if (!p) throw ConfigError("required", field + ".path");
    path = get_string(*p, field + ".path");
    if (const auto* k = find(v, "kind")) {
      kind = with_field(field + ".kind", [&] { return media_kind_from_string(get_string(*k, field + ".kind")); });
    }
    if (const auto* s = find(v, "sha256")) sha = get_string(*s, field + ".sha256");
  }
  MediaHandle handle;
  try {
    handle = MediaHandle::from_file(kind, resolve(base, path));
  } catch (const IoError& e) {
    throw ConfigError(e.what(), field + ".path");
  }
  if (sha && *sha != handle.hash_hex()) throw ConfigError("content hash does not match the file", field + ".sha256");
  return handle;
}

json media_to_json(const MediaHandle& m) {
  return {{"kind", to_string(m.kind)}, {"path", m.uri_or_path}, {"sha256", m.hash_hex()}};
}

RunConfig parse_run(const json* v, TaskKind kind, const std::string& field) {
  RunConfig run;
  if (kind == TaskKind::t2i_enhance) run.max_steps = 20;
  if (!v) return run;
  check_object(*v, field);
  check_keys(*v, {"top_k", "max_steps", "epsilon", "requested_number", "convergence_threshold", "seed", "pool_capacity"},
             field);
  if (const auto* x = find(*v, "top_k")) run.top_k = static_cast<int>(get_integer(*x, field + ".top_k"));
  if (const auto* x = find(*v, "max_steps")) run.max_steps = static_cast<int>(get_integer(*x, field + ".max_steps"));
  if (const auto* x = find(*v, "epsilon")) run.epsilon = get_number(*x, field + ".epsilon");
  if (const auto* x = find(*v, "requested_number")) {
    run.requested_number = static_cast<int>(get_integer(*x, field + ".requested_number"));
  }
  if (const auto* x = find(*v, "convergence_threshold")) {
    run.convergence_threshold = get_number(*x, field + ".convergence_threshold");
  }
  if (const auto* x = find(*v, "seed")) {
    const auto s = get_integer(*x, field + ".seed");
    if (s < 0) throw ConfigError("must be >= 0", field + ".seed");
    run.seed = static_cast<std::uint64_t>(s);
  }
  if (const auto* x = find(*v, "pool_capacity")) {
    const auto c = get_integer(*x, field + ".pool_capacity");
    if (c < 1) throw ConfigError("must be >= 1", field + ".pool_capacity");
    run.pool_capacity = static_cast<std::size_t>(c);
  }
  try {
    run.validate();
  } catch (const ConfigError& e) {
    // RunConfig names its fields run.*; keep that under a nested prefix.
    std::string f = e.field();
    if (f.rfind("run.", 0) == 0) f = field + f.substr(3);
    throw ConfigError(e.message(), f);
  }
  return run;
}

json run_to_json(const RunConfig& r) {
  json j = {{"top_k", r.top_k},       {"max_steps", r.max_steps}, {"epsilon", r.epsilon},
            {"requested_number", r.requested_number}, {"seed", r.seed}};
  j["convergence_threshold"] = r.convergence_threshold ? json(*r.convergence_threshold) : json(nullptr);
  j["pool_capacity"] = r.pool_capacity ? json(*r.pool_capacity) : json(nullptr);
  return j;
}

GeneratorSpec parse_generator(const json* v, TaskKind kind, const std::string& field) {
  GeneratorSpec g;
  switch (kind) {
    case TaskKind::t2i_enhance:
      g.kind = GeneratorKind::llm_then_image;
      g.template_name = std::string(templates::kT2iEnhance);
      break;
    case TaskKind::style_transfer:
      g.kind = GeneratorKind::llm_then_edit;
      g.template_name = std::string(templates::kStyleTransfer);
      break;
    case TaskKind::caption_video: g.template_name = std::string(templates::kCaptionVideo); break;
    case TaskKind::caption_audio: g.template_name = std::string(templates::kCaptionAudio); break;
    default: g.template_name = std::string(templates::kCaptionImage); break;
  }
  if (!v) return g;
  check_object(*v, field);
  check_keys(*v,
             {"kind", "template", "backend", "media_backend", "temperature", "max_tokens", "vocabulary",
              "max_phrase_tokens", "media_concurrency"},
             field);
  if (const auto* x = find(*v, "kind")) {
    g.kind = with_field(field + ".kind", [&] { return generator_kind_from_string(get_string(*x, field + ".kind")); });
  }
  if (const auto* x = find(*v, "template")) g.template_name = get_string(*x, field + ".template");
  if (const auto* x = find(*v, "backend")) g.backend = get_string(*x, field + ".backend");
  if (const auto* x = find(*v, "media_backend")) g.media_backend = get_string(*x, field + ".media_backend");
  if (const auto* x = find(*v, "temperature")) g.sampling.temperature = get_number(*x, field + ".temperature");
  if (const auto* x = find(*v, "max_tokens")) {
    g.sampling.max_tokens = static_cast<int>(get_integer(*x, field + ".max_tokens"));
  }
  if (const auto* x = find(*v, "vocabulary")) g.vocabulary = get_strings(*x, field + ".vocabulary");
  if (const auto* x = find(*v, "max_phrase_tokens")) {
    g.max_phrase_tokens = static_cast<int>(get_integer(*x, field + ".max_phrase_tokens"));
  }
  if (const auto* x = find(*v, "media_concurrency")) {
    g.media_concurrency = static_cast<int>(get_integer(*x, field + ".media_concurrency"));
  }
  return g;
}

json generator_to_json(const GeneratorSpec& g) {
  json j = {{"kind", to_string(g.kind)},
            {"template", g.template_name},
            {"backend", g.backend},
            {"media_backend", g.media_backend},
            {"temperature", g.sampling.temperature},
            {"max_tokens", g.sampling.max_tokens},
            {"vocabulary", g.vocabulary},
            {"media_concurrency", g.media_concurrency}};
  j["max_phrase_tokens"] = g.max_phrase_tokens ? json(*g.max_phrase_tokens) : json(nullptr);
  return j;
}

ScorerSpec parse_scorer(const json* v, TaskKind kind, const fs::path& base, const std::string& field) {
  ScorerSpec s;
  switch (kind) {
    case TaskKind::t2i_enhance: s.kind = ScorerKind::preference_service; break;
    case TaskKind::style_transfer: s.kind = ScorerKind::gram_style; break;
    default: s.kind = ScorerKind::embedding_similarity; break;
  }
  if (kind == TaskKind::caption_video) s.frames = 8;
  if (v) {
    check_object(*v, field);
    check_keys(*v,
               {"kind", "backend", "direction", "objective_names", "weights", "style_target", "content_target",
                "layers", "frames", "reference"},
               field);
    if (const auto* x = find(*v, "kind")) {
      s.kind = with_field(field + ".kind", [&] { return scorer_kind_from_string(get_string(*x, field + ".kind")); });
    }
    if (const auto* x = find(*v, "backend")) s.backend = get_string(*x, field + ".backend");
    if (const auto* x = find(*v, "direction")) {
      s.direction =
          with_field(field + ".direction", [&] { return direction_from_string(get_string(*x, field + ".direction")); });
    }
    if (const auto* x = find(*v, "objective_names")) s.objective_names = get_strings(*x, field + ".objective_names");
    if (const auto* x = find(*v, "weights")) {
      if (!x->is_array()) throw ConfigError("expected an array of numbers", field + ".weights");
      for (std::size_t i = 0; i < x->size(); ++i) {
        s.weights.push_back(get_number((*x)[i], field + ".weights[" + std::to_string(i) + "]"));
      }
    }
    if (const auto* x = find(*v, "style_target")) {
      s.style_target = parse_media(*x, base, MediaKind::image, field + ".style_target");
    }
    if (const auto* x = find(*v, "content_target")) {
      s.content_target = parse_media(*x, base, MediaKind::image, field + ".content_target");
    }
    if (const auto* x = find(*v, "layers")) {
      if (!x->is_array()) throw ConfigError("expected an array", field + ".layers");
      for (std::size_t i = 0; i < x->size(); ++i) {
        const auto f = field + ".layers[" + std::to_string(i) + "]";
        const auto& l = (*x)[i];
        check_object(l, f);
        check_keys(l, {"id", "role"}, f);
        LayerBinding b;
        const auto* id = find(l, "id");
        if (!id) throw ConfigError("required", f + ".id");
        b.layer_id = get_string(*id, f + ".id");
        if (const auto* r = find(l, "role")) {
          const auto role = get_string(*r, f + ".role");
          if (role == "style") {
            b.role = LayerRole::style;
          } else if (role == "content") {
            b.role = LayerRole::content;
          } else {
            throw ConfigError("expected style or content", f + ".role");
          }
        }
        s.layers.push_back(std::move(b));
      }
    }
    if (const auto* x = find(*v, "frames")) s.frames = static_cast<int>(get_integer(*x, field + ".frames"));
    if (const auto* x = find(*v, "reference")) s.reference = get_string(*x, field + ".reference");
  }
  s.fill_defaults();
  return s;
}

json scorer_to_json(const ScorerSpec& s) {
  json layers = json::array();
  for (const auto& l : s.layers) {
    layers.push_back({{"id", l.layer_id}, {"role", l.role == LayerRole::style ? "style" : "content"}});
  }
  json j = {{"kind", to_string(s.kind)},
            {"direction", to_string(s.direction)},
            {"objective_names", s.objective_names},
            {"weights", s.weights},
            {"layers", layers},
            {"reference", s.reference}};
  j["backend"] = s.backend ? json(*s.backend) : json(nullptr);
  j["frames"] = s.frames ? json(*s.frames) : json(nullptr);
  j["style_target"] = s.style_target ? media_to_json(*s.style_target) : json(nullptr);
  j["content_target"] = s.content_target ? media_to_json(*s.content_target) : json(nullptr);
  return j;
}

BootstrapSpec parse_bootstrap(const json& v, const fs::path& base, const std::string& field) {
  check_object(v, field);
  check_keys(v, {"source", "path", "labels", "labels_file", "per_label", "template", "backend", "limit"}, field);
  BootstrapSpec b;
  if (const auto* x = find(v, "source")) {
    const auto src = get_string(*x, field + ".source");
    if (src == "file") {
      b.source = BootstrapSpec::Source::file;
    } else if (src == "llm") {
      b.source = BootstrapSpec::Source::llm;
    } else {
      throw ConfigError("expected file or llm", field + ".source");
    }
  }
  if (const auto* x = find(v, "path")) b.path = resolve(base, get_string(*x, field + ".path")).string();
  if (const auto* x = find(v, "labels")) b.labels = get_strings(*x, field + ".labels");
  if (const auto* x = find(v, "labels_file")) {
    const auto p = resolve(base, get_string(*x, field + ".labels_file"));
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot read " + p.string(), field + ".labels_file");
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty()) b.labels.push_back(line);
    }
  }
  if (const auto* x = find(v, "per_label")) b.per_label = static_cast<int>(get_integer(*x, field + ".per_label"));
  if (const auto* x = find(v, "template")) b.template_name = get_string(*x, field + ".template");
  if (const auto* x = find(v, "backend")) b.backend = get_string(*x, field + ".backend");
  if (const auto* x = find(v, "limit")) {
    const auto l = get_integer(*x, field + ".limit");
    if (l < 1) throw ConfigError("must be >= 1", field + ".limit");
    b.limit = static_cast<std::size_t>(l);
  }
  return b;
}

json bootstrap_to_json(const BootstrapSpec& b) {
  json j = {{"source", b.source == BootstrapSpec::Source::file ? "file" : "llm"},
            {"path", b.path},
            {"labels", b.labels},
            {"per_label", b.per_label},
            {"template", b.template_name},
            {"backend", b.backend}};
  j["limit"] = b.limit ? json(*b.limit) : json(nullptr);
  return j;
}

// Prefixes a ConfigError field raised by a spec validator (which uses bare names).
void validate_under(const TaskSpec& task, const std::string& prefix, bool defer) {
  try {
    task.validate(defer);
  } catch (const ConfigError& e) {
    if (prefix.empty()) throw;
    throw ConfigError(e.message(), e.field().empty() ? prefix : prefix + "." + e.field());
  }
}

TaskSpec parse_task(const json& doc, const fs::path& base, const std::string& prefix,
                    std::optional<TaskKind> forced_kind, bool is_stage) {
  const auto f = [&](std::string_view key) { return join_field(prefix, key); };
  TaskSpec task;
  if (const auto* x = find(doc, "kind")) {
    task.kind = with_field(f("kind"), [&] { return task_kind_from_string(get_string(*x, f("kind"))); });
  } else if (forced_kind) {
    task.kind = *forced_kind;
  } else {
    throw ConfigError("required", f("kind"));
  }
  if (forced_kind && task.kind != *forced_kind) {
    throw ConfigError("expected " + to_string(*forced_kind), f("kind"));
  }
  task.run = parse_run(find(doc, "run"), task.kind, f("run"));
  task.generator = parse_generator(find(doc, "generator"), task.kind, f("generator"));
  task.scorer = parse_scorer(find(doc, "scorer"), task.kind, base, f("scorer"));
  if (!is_stage) {
    if (const auto* x = find(doc, "test_sample")) {
      task.test_sample = parse_media(*x, base, default_media_kind(task.kind), f("test_sample"));
    }
    if (const auto* x = find(doc, "init_description")) task.init_description = get_string(*x, f("init_description"));
  }
  if (const auto* x = find(doc, "bootstrap")) task.bootstrap = parse_bootstrap(*x, base, f("bootstrap"));
  if (task.kind == TaskKind::style_transfer) {
    if (!task.scorer.content_target) task.scorer.content_target = task.test_sample;
  }
  if (task.generator.kind == GeneratorKind::llm_then_edit) task.generator.test_sample = task.test_sample;
  return task;
}

json task_to_json(const TaskSpec& t, bool is_stage) {
  json j = {{"kind", to_string(t.kind)},
            {"run", run_to_json(t.run)},
            {"generator", generator_to_json(t.generator)},
            {"scorer", scorer_to_json(t.scorer)}};
  j["bootstrap"] = t.bootstrap ? bootstrap_to_json(*t.bootstrap) : json(nullptr);
  if (!is_stage) {
    j["test_sample"] = t.test_sample ? media_to_json(*t.test_sample) : json(nullptr);
    j["init_description"] = t.init_description ? json(*t.init_description) : json(nullptr);
  }
  return j;
}

BackendEndpoint parse_endpoint(const json& v, const std::string& field) {
  check_object(v, field);
  check_keys(v,
             {"name", "base_url", "api", "model", "auth_env_var", "timeout_ms", "max_retries", "max_in_flight",
              "inline_media"},
             field);
  BackendEndpoint e;
  const auto req = [&](std::string_view key) -> const json& {
    const auto* x = find(v, key);
    if (!x) throw ConfigError("required", join_field(field, key));
    return *x;
  };
  e.name = get_string(req("name"), field + ".name");
  e.base_url = get_string(req("base_url"), field + ".base_url");
  e.api = with_field(field + ".api", [&] { return api_kind_from_string(get_string(req("api"), field + ".api")); });
  if (const auto* x = find(v, "model")) e.model = get_string(*x, field + ".model");
  if (const auto* x = find(v, "auth_env_var")) e.auth_env_var = get_string(*x, field + ".auth_env_var");
  if (const auto* x = find(v, "timeout_ms")) {
    e.timeout = std::chrono::milliseconds(get_integer(*x, field + ".timeout_ms"));
  }
  if (const auto* x = find(v, "max_retries")) e.max_retries = static_cast<int>(get_integer(*x, field + ".max_retries"));
  if (const auto* x = find(v, "max_in_flight")) {
    e.max_in_flight = static_cast<int>(get_integer(*x, field + ".max_in_flight"));
  }
  if (const auto* x = find(v, "inline_media")) e.inline_media = get_bool(*x, field + ".inline_media");
  e.validate();
  return e;
}

json endpoint_to_json(const BackendEndpoint& e) {
  json j = {{"name", e.name},
            {"base_url", e.base_url},
            {"api", to_string(e.api)},
            {"model", e.model},
            {"timeout_ms", e.timeout.count()},
            {"max_retries", e.max_retries},
            {"max_in_flight", e.max_in_flight},
            {"inline_media", e.inline_media}};
  j["auth_env_var"] = e.auth_env_var ? json(*e.auth_env_var) : json(nullptr);
  return j;
}

void require_endpoint(const EngineConfig& cfg, const std::string& name, ApiKind api, const std::string& field) {
  const auto it = std::find_if(cfg.endpoints.begin(), cfg.endpoints.end(), [&](auto& e) { return e.name == name; });
  if (it == cfg.endpoints.end()) throw ConfigError("no endpoint named '" + name + "'", field);
  if (it->api != api) {
    throw ConfigError("endpoint '" + name + "' serves " + to_string(it->api) + ", expected " + to_string(api), field);
  }
}

void check_task_endpoints(const EngineConfig& cfg, const TaskSpec& t, const std::string& prefix) {
  const auto f = [&](std::string_view key) { return join_field(prefix, key); };
  const auto& g = t.generator;
  if (g.kind != GeneratorKind::mock_mutation) require_endpoint(cfg, g.backend, ApiKind::chat, f("generator.backend"));
  if (g.kind == GeneratorKind::llm_then_image) {
    require_endpoint(cfg, g.media_backend, ApiKind::image_gen, f("generator.media_backend"));
  }
  if (g.kind == GeneratorKind::llm_then_edit) {
    require_endpoint(cfg, g.media_backend, ApiKind::image_edit, f("generator.media_backend"));
  }
  const auto& s = t.scorer;
  switch (s.kind) {
    case ScorerKind::embedding_similarity: require_endpoint(cfg, *s.backend, ApiKind::embed, f("scorer.backend")); break;
    case ScorerKind::preference_service:
      require_endpoint(cfg, *s.backend, ApiKind::preference, f("scorer.backend"));
      break;
    case ScorerKind::gram_style: require_endpoint(cfg, *s.backend, ApiKind::features, f("scorer.backend")); break;
    case ScorerKind::lexical: break;
  }
  if (t.bootstrap && t.bootstrap->source == BootstrapSpec::Source::llm) {
    require_endpoint(cfg, t.bootstrap->backend, ApiKind::chat, f("bootstrap.backend"));
  }
}

}  // namespace

EngineConfig parse_engine_config(const json& doc, const fs::path& base_dir) {
  check_object(doc, "config");
  EngineConfig cfg;
  const auto base = fs::absolute(base_dir);

  if (const auto* x = find(doc, "endpoints")) {
    if (!x->is_array()) throw ConfigError("expected an array", "endpoints");
    for (std::size_t i = 0; i < x->size(); ++i) {
      const auto field = "endpoints[" + std::to_string(i) + "]";
      auto ep = parse_endpoint((*x)[i], field);
      for (const auto& other : cfg.endpoints) {
        if (other.name == ep.name) throw ConfigError("duplicate endpoint name '" + ep.name + "'", field + ".name");
      }
      cfg.endpoints.push_back(std::move(ep));
    }
  }
  if (const auto* x = find(doc, "cache_dir")) cfg.cache_dir = resolve(base, get_string(*x, "cache_dir"));
  cfg.media_dir = resolve(base, find(doc, "media_dir") ? get_string(doc["media_dir"], "media_dir") : "media");
  if (const auto* x = find(doc, "templates_dir")) cfg.templates_dir = resolve(base, get_string(*x, "templates_dir"));
  if (const auto* x = find(doc, "retry")) {
    check_object(*x, "retry");
    check_keys(*x, {"base_delay_ms", "factor", "jitter"}, "retry");
    if (const auto* y = find(*x, "base_delay_ms")) {
      const auto ms = get_integer(*y, "retry.base_delay_ms");
      if (ms < 0) throw ConfigError("must be >= 0", "retry.base_delay_ms");
      cfg.retry.base_delay = std::chrono::milliseconds(ms);
    }
    if (const auto* y = find(*x, "factor")) cfg.retry.factor = get_number(*y, "retry.factor");
    if (const auto* y = find(*x, "jitter")) cfg.retry.jitter = get_number(*y, "retry.jitter");
    if (cfg.retry.factor < 1.0) throw ConfigError("must be >= 1", "retry.factor");
    if (cfg.retry.jitter < 0.0 || cfg.retry.jitter >= 1.0) throw ConfigError("must be in [0, 1)", "retry.jitter");
  }

  const auto* kind = find(doc, "kind");
  if (!kind) throw ConfigError("required", "kind");
  const auto task_kind = with_field("kind", [&] { return task_kind_from_string(get_string(*kind, "kind")); });

  if (task_kind == TaskKind::cross_modal_arithmetic) {
    check_keys(doc,
               {"kind", "endpoints", "cache_dir", "media_dir", "templates_dir", "retry", "image_sample", "audio_sample",
                "image_task", "audio_task", "t2i_task", "combine"},
               "");
    auto spec = std::make_shared<ArithmeticSpec>();
    const auto req = [&](std::string_view key) -> const json& {
      const auto* x = find(doc, key);
      if (!x) throw ConfigError("required", std::string(key));
      return *x;
    };
    spec->image = parse_media(req("image_sample"), base, MediaKind::image, "image_sample");
    spec->audio = parse_media(req("audio_sample"), base, MediaKind::audio, "audio_sample");
    const auto stage = [&](std::string_view key, TaskKind k) {
      const auto& v = req(key);
      check_object(v, std::string(key));
      check_keys(v, {"kind", "run", "generator", "scorer", "bootstrap"}, key);
      return parse_task(v, base, std::string(key), k, true);
    };
    spec->image_task = stage("image_task", TaskKind::caption_image);
    spec->image_task.test_sample = spec->image;
    spec->audio_task = stage("audio_task", TaskKind::caption_audio);
    spec->audio_task.test_sample = spec->audio;
    spec->t2i_task = stage("t2i_task", TaskKind::t2i_enhance);
    const auto& c = req("combine");
    check_object(c, "combine");
    check_keys(c, {"backend", "template", "temperature", "max_tokens"}, "combine");
    const auto* cb = find(c, "backend");
    if (!cb) throw ConfigError("required", "combine.backend");
    spec->combine_backend = get_string(*cb, "combine.backend");
    if (const auto* x = find(c, "template")) spec->combine_template = get_string(*x, "combine.template");
    if (const auto* x = find(c, "temperature")) spec->combine_sampling.temperature = get_number(*x, "combine.temperature");
    if (const auto* x = find(c, "max_tokens")) {
      spec->combine_sampling.max_tokens = static_cast<int>(get_integer(*x, "combine.max_tokens"));
    }
    validate_under(spec->image_task, "image_task", false);
    validate_under(spec->audio_task, "audio_task", false);
    validate_under(spec->t2i_task, "t2i_task", true);
    cfg.task.kind = task_kind;
    cfg.task.arithmetic = spec;
    check_task_endpoints(cfg, spec->image_task, "image_task");
    check_task_endpoints(cfg, spec->audio_task, "audio_task");
    check_task_endpoints(cfg, spec->t2i_task, "t2i_task");
    require_endpoint(cfg, spec->combine_backend, ApiKind::chat, "combine.backend");
  } else {
    check_keys(doc,
               {"kind", "endpoints", "cache_dir", "media_dir", "templates_dir", "retry", "test_sample",
                "init_description", "bootstrap", "generator", "scorer", "run"},
               "");
    cfg.task = parse_task(doc, base, "", task_kind, false);
    cfg.task.validate();
    check_task_endpoints(cfg, cfg.task, "");
  }

  // Template names must resolve.
  const auto store = make_template_store(cfg);
  const auto check_template = [&](const std::string& name, const std::string& field) {
    if (!store.contains(name)) throw ConfigError("unknown template '" + name + "'", field);
  };
  const auto check_task_templates = [&](const TaskSpec& t, const std::string& prefix) {
    if (t.generator.kind != GeneratorKind::mock_mutation) {
      check_template(t.generator.template_name, join_field(prefix, "generator.template"));
    }
    if (t.bootstrap && t.bootstrap->source == BootstrapSpec::Source::llm) {
      check_template(t.bootstrap->template_name, join_field(prefix, "bootstrap.template"));
    }
  };
  if (cfg.task.arithmetic) {
    check_task_templates(cfg.task.arithmetic->image_task, "image_task");
    check_task_templates(cfg.task.arithmetic->audio_task, "audio_task");
    check_task_templates(cfg.task.arithmetic->t2i_task, "t2i_task");
    check_template(cfg.task.arithmetic->combine_template, "combine.template");
  } else {
    check_task_templates(cfg.task, "");
  }
  return cfg;
}

EngineConfig load_engine_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string(), "config");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what(), "config");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return parse_engine_config(doc, fs::absolute(path).parent_path());
}

json to_json(const EngineConfig& cfg) {
  json j;
  if (cfg.task.arithmetic) {
    const auto& a = *cfg.task.arithmetic;
    j["kind"] = to_string(TaskKind::cross_modal_arithmetic);
    j["image_sample"] = media_to_json(a.image);
    j["audio_sample"] = media_to_json(a.audio);
    j["image_task"] = task_to_json(a.image_task, true);
    j["audio_task"] = task_to_json(a.audio_task, true);
    j["t2i_task"] = task_to_json(a.t2i_task, true);
    j["combine"] = {{"backend", a.combine_backend},
                    {"template", a.combine_template},
                    {"temperature", a.combine_sampling.temperature},
                    {"max_tokens", a.combine_sampling.max_tokens}};
  } else {
    j = task_to_json(cfg.task, false);
  }
  json eps = json::array();
  for (const auto& e : cfg.endpoints) eps.push_back(endpoint_to_json(e));
  j["endpoints"] = eps;
  j["cache_dir"] = cfg.cache_dir ? json(cfg.cache_dir->string()) : json(nullptr);
  j["media_dir"] = cfg.media_dir.string();
  j["templates_dir"] = cfg.templates_dir ? json(cfg.templates_dir->string()) : json(nullptr);
  j["retry"] = {{"base_delay_ms", cfg.retry.base_delay.count()},
                {"factor", cfg.retry.factor},
                {"jitter", cfg.retry.jitter}};
  return j;
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override must look like path=value: '" + std::string(assignment) + "'", "--set");
  }
  const std::string path(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* cur = &doc;
  std::stringstream ss(path);
  std::string seg;
  std::vector<std::string> segs;
  while (std::getline(ss, seg, '.')) {
    if (seg.empty()) throw ConfigError("empty path segment", path);
    segs.push_back(seg);
  }
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const bool last = i + 1 == segs.size();
    const auto& s = segs[i];
    if (cur->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(s);
      } catch (const std::exception&) {
        throw ConfigError("expected an array index", path);
      }
      if (idx >= cur->size()) throw ConfigError("array index out of range", path);
      cur = &(*cur)[idx];
    } else {
      if (cur->is_null()) *cur = json::object();
      if (!cur->is_object()) throw ConfigError("cannot descend into a scalar", path);
      cur = &(*cur)[s];
    }
    if (last) *cur = value;
  }
}

std::unique_ptr<BackendRegistry> make_registry(const EngineConfig& config) {
  auto cache = std::make_shared<ResponseCache>(config.cache_dir);
  auto registry = std::make_unique<BackendRegistry>(cache, config.media_dir, config.retry);
  for (const auto& e : config.endpoints) registry->add(e);
  return registry;
}

TemplateStore make_template_store(const EngineConfig& config) {
  if (!config.templates_dir) return TemplateStore{};
  try {
    return TemplateStore::load_directory(*config.templates_dir);
  } catch (const IoError& e) {
    throw ConfigError(e.what(), "templates_dir");
  } catch (const TemplateError& e) {
    throw ConfigError(e.what(), "templates_dir");
  }
}

}  // namespace mils
