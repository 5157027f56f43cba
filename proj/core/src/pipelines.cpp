#include <algorithm>

#include <spdlog/spdlog.h>

#include "mils/errors.hpp"
#include "mils/solver.hpp"

namespace mils {

namespace {

FeedbackMode feedback_mode_for(const TaskSpec& task) {
  return task.scorer.objective_names.size() > 1 ? FeedbackMode::multi : FeedbackMode::single;
}

std::string first_nonempty_line(std::string_view text) {
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    auto line = text.substr(pos, end - pos);
    const auto b = line.find_first_not_of(" \t\r");
    if (b != std::string_view::npos) {
      const auto e = line.find_last_not_of(" \t\r");
      return std::string(line.substr(b, e - b + 1));
    }
    pos = end + 1;
  }
  return {};
}

template <typename F>
auto run_stage(const char* stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw SolveError(std::string(stage) + ": " + e.what());
  }
}

}  // namespace

TaskRunner::TaskRunner(BackendRegistry& registry, TemplateStore templates)
    : registry_(registry), templates_(std::move(templates)) {}

std::unique_ptr<Generator> TaskRunner::make_generator(const TaskSpec& task) const {
  const auto& g = task.generator;
  switch (g.kind) {
    case GeneratorKind::mock_mutation:
      return std::make_unique<MutationGenerator>(g.vocabulary, g.max_phrase_tokens);
    case GeneratorKind::llm:
      return std::make_unique<LlmGenerator>(registry_.get(g.backend), templates_.get(g.template_name), g.sampling);
    case GeneratorKind::llm_then_image:
      return std::make_unique<ChainedMediaGenerator>(registry_.get(g.backend), registry_.get(g.media_backend),
                                                     templates_.get(g.template_name), g.sampling, std::nullopt,
                                                     g.media_concurrency);
    case GeneratorKind::llm_then_edit: {
      auto sample = g.test_sample ? g.test_sample : task.test_sample;
      if (!sample) throw ConfigError("llm_then_edit requires a test sample", "test_sample");
      return std::make_unique<ChainedMediaGenerator>(registry_.get(g.backend), registry_.get(g.media_backend),
                                                     templates_.get(g.template_name), g.sampling, sample,
                                                     g.media_concurrency);
    }
  }
  throw ConfigError("unsupported generator kind", "generator.kind");
}

std::unique_ptr<BatchScorer> TaskRunner::make_scorer(const TaskSpec& task) const {
  auto spec = task.scorer;
  spec.fill_defaults();
  std::unique_ptr<Scorer> scorer;
  switch (spec.kind) {
    case ScorerKind::lexical:
      scorer = std::make_unique<LexicalScorer>(spec.reference);
      break;
    case ScorerKind::embedding_similarity:
      if (!task.test_sample) throw ConfigError("embedding scorer requires a test sample", "test_sample");
      scorer = std::make_unique<EmbeddingSimilarityScorer>(registry_.get(*spec.backend), *task.test_sample,
                                                           spec.frames);
      break;
    case ScorerKind::preference_service:
      if (!task.init_description) {
        throw ConfigError("preference scorer requires the original prompt", "init_description");
      }
      scorer = std::make_unique<PreferenceScorer>(registry_.get(*spec.backend), *task.init_description);
      break;
    case ScorerKind::gram_style:
      if (!spec.content_target) spec.content_target = task.test_sample;
      scorer = std::make_unique<GramStyleScorer>(registry_.get(*spec.backend), spec);
      break;
  }
  return std::make_unique<BatchScorer>(std::move(scorer), spec.weights);
}

std::vector<Candidate> TaskRunner::load_bootstrap(const TaskSpec& task) const {
  if (!task.bootstrap) return {};
  const auto& b = *task.bootstrap;
  std::vector<Candidate> out;
  if (b.source == BootstrapSpec::Source::file) {
    out = bootstrap_load(b.path);
  } else {
    out = bootstrap_build(registry_.get(b.backend), b.labels, templates_.get(b.template_name), b.per_label,
                          task.generator.sampling);
  }
  if (b.limit && out.size() > *b.limit) out.resize(*b.limit);
  if (out.empty()) throw BootstrapError("bootstrap set is empty");
  spdlog::info("bootstrap: {} candidates", out.size());
  return out;
}

SolveResult TaskRunner::run(const TaskSpec& task) {
  switch (task.kind) {
    case TaskKind::t2i_enhance: return solve_t2i(task);
    case TaskKind::style_transfer: return solve_style_transfer(task);
    case TaskKind::cross_modal_arithmetic:
      if (!task.arithmetic) throw ConfigError("missing stage definitions", "image_task");
      return solve_cross_modal_arithmetic(*task.arithmetic);
    default: return run_optimization(task);
  }
}

SolveResult TaskRunner::run_optimization(const TaskSpec& task) {
  task.validate();
  auto generator = make_generator(task);
  auto scorer = make_scorer(task);
  auto initial = load_bootstrap(task);
  LoopOptions options{feedback_mode_for(task), {}};
  return mils::run_optimization(task.run, *generator, *scorer, std::move(initial), options);
}

SolveResult TaskRunner::solve_t2i(const TaskSpec& task) {
  task.validate();
  auto generator = make_generator(task);
  auto scorer = make_scorer(task);
  auto seed = Candidate::make(*task.init_description, 0);
  seed.media = registry_.get(task.generator.media_backend).generate_image(*task.init_description);
  std::vector<Candidate> initial{std::move(seed)};
  LoopOptions options{feedback_mode_for(task), {{"init_description", *task.init_description}}};
  auto result = mils::run_optimization(task.run, *generator, *scorer, std::move(initial), options);
  result.metadata["init_description"] = *task.init_description;
  return result;
}

SolveResult TaskRunner::solve_style_transfer(const TaskSpec& task) {
  task.validate();
  auto generator = make_generator(task);
  auto scorer = make_scorer(task);
  LoopOptions options{FeedbackMode::multi, {}};
  return mils::run_optimization(task.run, *generator, *scorer, {}, options);
}

SolveResult TaskRunner::solve_cross_modal_arithmetic(const ArithmeticSpec& spec) {
  auto image_task = spec.image_task;
  image_task.test_sample = spec.image;
  auto audio_task = spec.audio_task;
  audio_task.test_sample = spec.audio;

  auto image = run_stage("image_caption", [&] { return run_optimization(image_task); });
  auto audio = run_stage("audio_caption", [&] { return run_optimization(audio_task); });

  const auto prompt = run_stage("combine", [&] {
    Bindings bindings{{"image_caption", image.best.text}, {"audio_caption", audio.best.text}};
    const auto rendered = render_template(templates_.get(spec.combine_template), bindings);
    std::vector<ChatMessage> messages{{"user", rendered}};
    const auto reply = registry_.get(spec.combine_backend).chat_complete(messages, spec.combine_sampling);
    auto line = first_nonempty_line(reply);
    if (line.empty()) throw GenerationError("combine reply is empty");
    return line;
  });

  auto t2i_task = spec.t2i_task;
  t2i_task.init_description = prompt;
  auto result = run_stage("t2i_enhance", [&] { return solve_t2i(t2i_task); });
  result.attached_traces["image_caption"] = image.trace;
  result.attached_traces["audio_caption"] = audio.trace;
  result.metadata["image_caption"] = image.best.text;
  result.metadata["audio_caption"] = audio.best.text;
  result.metadata["combined_prompt"] = prompt;
  return result;
}

}  // namespace mils
