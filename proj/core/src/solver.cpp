#include "mils/solver.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include <spdlog/spdlog.h>

#include "mils/errors.hpp"

namespace mils {

namespace {

constexpr std::array<std::pair<TaskKind, std::string_view>, 6> kTaskNames{{
    {TaskKind::caption_image, "caption_image"},
    {TaskKind::caption_video, "caption_video"},
    {TaskKind::caption_audio, "caption_audio"},
    {TaskKind::t2i_enhance, "t2i_enhance"},
    {TaskKind::style_transfer, "style_transfer"},
    {TaskKind::cross_modal_arithmetic, "cross_modal_arithmetic"},
}};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent streams for selection and generation at each step.
std::uint64_t step_seed(std::uint64_t run_seed, int step, std::uint64_t salt) {
  return splitmix64(splitmix64(run_seed ^ salt) + static_cast<std::uint64_t>(step));
}

constexpr std::uint64_t kSelectSalt = 0x5e1ec7ULL;
constexpr std::uint64_t kGenerateSalt = 0x6e4e7a7eULL;

StepRecord make_record(int step, const CandidatePool& pool, std::size_t k) {
  StepRecord rec;
  rec.step = step;
  const auto top = top_k_select(pool, k);
  if (!top.empty()) {
    rec.best_scalar = top.front().scalar();
    double sum = 0.0;
    for (const auto& c : top) sum += c.scalar();
    rec.mean_topk_scalar = sum / static_cast<double>(top.size());
  }
  rec.topk_texts.reserve(top.size());
  for (const auto& c : top) rec.topk_texts.push_back(c.text);
  return rec;
}

struct Counters {
  int generator = 0;
  std::size_t scorer = 0;
  std::size_t hits = 0;
};

Counters snapshot(const Generator& g, const BatchScorer& s) {
  return {g.calls(), s.backend_calls(), s.cache_hits()};
}

void fill_counters(StepRecord& rec, const Counters& before, const Counters& after) {
  rec.generator_calls = after.generator - before.generator;
  rec.scorer_calls = static_cast<int>(after.scorer - before.scorer);
  rec.cache_hits = static_cast<int>(after.hits - before.hits);
}

}  // namespace

std::string to_string(TaskKind kind) {
  for (const auto& [k, name] : kTaskNames) {
    if (k == kind) return std::string(name);
  }
  return "unknown";
}

TaskKind task_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kTaskNames) {
    if (n == name) return k;
  }
  throw ConfigError("unknown task kind '" + std::string(name) + "'", "kind");
}

bool is_captioning(TaskKind kind) {
  return kind == TaskKind::caption_image || kind == TaskKind::caption_video || kind == TaskKind::caption_audio;
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::max_steps: return "max_steps";
    case StopReason::converged: return "converged";
    case StopReason::empty_generation: return "empty_generation";
  }
  return "unknown";
}

void TaskSpec::validate(bool defer_init_description) const {
  if (bootstrap) {
    if (bootstrap->source == BootstrapSpec::Source::file && bootstrap->path.empty()) {
      throw ConfigError("file bootstrap needs a path", "bootstrap.path");
    }
    if (bootstrap->source == BootstrapSpec::Source::llm) {
      if (bootstrap->labels.empty()) throw ConfigError("llm bootstrap needs labels", "bootstrap.labels");
      if (bootstrap->backend.empty()) throw ConfigError("llm bootstrap needs a backend", "bootstrap.backend");
      if (bootstrap->per_label < 1) throw ConfigError("must be >= 1", "bootstrap.per_label");
    }
    if (bootstrap->limit && *bootstrap->limit == 0) throw ConfigError("must be >= 1", "bootstrap.limit");
  }
  switch (kind) {
    case TaskKind::caption_image:
    case TaskKind::caption_video:
    case TaskKind::caption_audio:
      if (!test_sample) throw ConfigError("captioning requires a test sample", "test_sample");
      if (!bootstrap) throw ConfigError("captioning requires a bootstrap set", "bootstrap");
      break;
    case TaskKind::t2i_enhance:
      if (!defer_init_description && (!init_description || init_description->empty())) {
        throw ConfigError("t2i_enhance requires the original prompt", "init_description");
      }
      if (bootstrap) throw ConfigError("t2i_enhance does not use a bootstrap set", "bootstrap");
      if (generator.kind != GeneratorKind::llm_then_image) {
        throw ConfigError("t2i_enhance needs an image-producing generator", "generator.kind");
      }
      break;
    case TaskKind::style_transfer:
      if (!test_sample) throw ConfigError("style_transfer requires a content image", "test_sample");
      if (!scorer.style_target) throw ConfigError("style_transfer requires a style image", "scorer.style_target");
      if (bootstrap) throw ConfigError("style_transfer does not use a bootstrap set", "bootstrap");
      if (scorer.kind != ScorerKind::gram_style) {
        throw ConfigError("style_transfer is scored with gram_style", "scorer.kind");
      }
      break;
    case TaskKind::cross_modal_arithmetic:
      if (!arithmetic) throw ConfigError("cross_modal_arithmetic requires stage definitions", "image_task");
      return;
  }
  run.validate();
  auto g = generator;
  if (!g.test_sample) g.test_sample = test_sample;
  g.validate();
  auto sc = scorer;
  sc.fill_defaults();
  if (!sc.content_target) sc.content_target = test_sample;
  sc.validate();
}

SolveResult run_optimization(const RunConfig& run, Generator& generator, BatchScorer& scorer,
                             std::vector<Candidate> initial, const LoopOptions& options) {
  run.validate();
  const auto k = static_cast<std::size_t>(run.top_k);
  CandidatePool pool(run.effective_pool_capacity());
  SolveResult result;

  auto before = snapshot(generator, scorer);
  bool last_empty = false;
  if (initial.empty()) {
    GenerationRequest req{FeedbackBlock{}, run.requested_number, 0, step_seed(run.seed, 0, kGenerateSalt),
                          options.extra_bindings};
    try {
      initial = generator.generate(req);
    } catch (const EmptyGenerationError& e) {
      spdlog::warn("step 0: {}", e.what());
      last_empty = true;
    }
  }
  pool.merge(scorer.score(initial));
  if (pool.empty()) throw SolveError("no scored candidates after step 0");
  auto rec = make_record(0, pool, k);
  fill_counters(rec, before, snapshot(generator, scorer));
  spdlog::info("step 0: pool {} best {:.4f}", pool.size(), rec.best_scalar);
  result.trace.steps.push_back(rec);

  StopReason reason = StopReason::max_steps;
  for (int step = 1; step <= run.max_steps; ++step) {
    before = snapshot(generator, scorer);
    const auto selected = epsilon_greedy_select(pool, k, run.epsilon, step_seed(run.seed, step, kSelectSalt));
    GenerationRequest req{format_feedback(selected, options.feedback_mode), run.requested_number, step,
                          step_seed(run.seed, step, kGenerateSalt), options.extra_bindings};
    std::vector<Candidate> fresh;
    last_empty = false;
    try {
      fresh = generator.generate(req);
    } catch (const EmptyGenerationError& e) {
      spdlog::warn("step {}: {}", step, e.what());
      last_empty = true;
    }
    pool.merge(scorer.score(fresh));

    const auto prev = result.trace.steps.back().topk_texts;
    rec = make_record(step, pool, k);
    fill_counters(rec, before, snapshot(generator, scorer));
    spdlog::info("step {}: +{} pool {} best {:.4f}", step, fresh.size(), pool.size(), rec.best_scalar);
    result.trace.steps.push_back(rec);

    if (run.convergence_threshold && check_convergence(prev, rec.topk_texts, *run.convergence_threshold)) {
      reason = StopReason::converged;
      break;
    }
  }
  if (last_empty && reason == StopReason::max_steps) reason = StopReason::empty_generation;
  result.stopped_reason = reason;
  result.best = *pool.best();
  return result;
}

}  // namespace mils
