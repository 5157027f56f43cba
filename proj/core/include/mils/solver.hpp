#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mils/backends.hpp"
#include "mils/core.hpp"
#include "mils/generators.hpp"
#include "mils/prompts.hpp"
#include "mils/scorers.hpp"

namespace mils {

enum class TaskKind { caption_image, caption_video, caption_audio, t2i_enhance, style_transfer, cross_modal_arithmetic };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(std::string_view name);
bool is_captioning(TaskKind kind);

struct BootstrapSpec {
  enum class Source { file, llm };
  Source source = Source::file;
  /// Candidate file for Source::file.
  std::string path;
  /// Class labels for Source::llm.
  std::vector<std::string> labels;
  int per_label = 50;
  std::string template_name = std::string(templates::kBootstrapAudio);
  std::string backend;
  /// Keep only the first `limit` candidates.
  std::optional<std::size_t> limit;
};

struct ArithmeticSpec;

struct TaskSpec {
  TaskKind kind = TaskKind::caption_image;
  GeneratorSpec generator;
  ScorerSpec scorer;
  RunConfig run;
  std::optional<MediaHandle> test_sample;
  std::optional<std::string> init_description;
  std::optional<BootstrapSpec> bootstrap;
  /// Stage definitions; cross_modal_arithmetic only.
  std::shared_ptr<const ArithmeticSpec> arithmetic;

  /// Throws ConfigError naming the field. `defer_init_description` skips the t2i
  /// prompt check for stages whose prompt is produced at run time.
  void validate(bool defer_init_description = false) const;
};

struct ArithmeticSpec {
  MediaHandle image;
  MediaHandle audio;
  TaskSpec image_task;
  TaskSpec audio_task;
  TaskSpec t2i_task;
  std::string combine_backend;
  std::string combine_template = std::string(templates::kCrossModalArithmetic);
  Sampling combine_sampling;
};

enum class StopReason { max_steps, converged, empty_generation };

std::string to_string(StopReason reason);

struct SolveResult {
  Candidate best;
  RunTrace trace;
  StopReason stopped_reason = StopReason::max_steps;
  /// Traces of earlier stages (cross-modal arithmetic: "image_caption", "audio_caption").
  std::map<std::string, RunTrace> attached_traces;
  std::map<std::string, std::string> metadata;
};

struct LoopOptions {
  FeedbackMode feedback_mode = FeedbackMode::single;
  Bindings extra_bindings;
};

/// The generate / score / select loop.
///
/// Step 0 scores `initial` (or, when it is empty, one generation from empty feedback)
/// and seeds the pool. Each later step selects feedback with epsilon-greedy top-K,
/// formats it, generates, scores and merges. Stops after run.max_steps steps or when
/// the top-K texts of consecutive steps reach run.convergence_threshold. A step whose
/// generation comes back empty is still recorded; if the final step was empty the
/// stop reason is empty_generation.
///
/// Throws SolveError if the pool is still empty after step 0.
SolveResult run_optimization(const RunConfig& run, Generator& generator, BatchScorer& scorer,
                             std::vector<Candidate> initial, const LoopOptions& options = {});

/// Builds generators and scorers from task specs and runs the task pipelines.
class TaskRunner {
 public:
  explicit TaskRunner(BackendRegistry& registry, TemplateStore templates = {});

  /// Dispatches on task.kind.
  SolveResult run(const TaskSpec& task);

  /// Generic path: bootstrap (if any) + loop with the configured generator and scorer.
  SolveResult run_optimization(const TaskSpec& task);
  /// Step 0 is the original prompt rendered and scored, so the result never loses to it.
  SolveResult solve_t2i(const TaskSpec& task);
  /// Multi-objective feedback over the edit generator and Gram scorer.
  SolveResult solve_style_transfer(const TaskSpec& task);
  /// Caption both inputs, fuse the captions with one chat call, then enhance the fused
  /// prompt. Any stage failure is rethrown as SolveError naming the stage.
  SolveResult solve_cross_modal_arithmetic(const ArithmeticSpec& spec);

  std::unique_ptr<Generator> make_generator(const TaskSpec& task) const;
  std::unique_ptr<BatchScorer> make_scorer(const TaskSpec& task) const;
  std::vector<Candidate> load_bootstrap(const TaskSpec& task) const;

  const TemplateStore& templates() const { return templates_; }

 private:
  BackendRegistry& registry_;
  TemplateStore templates_;
};

}  // namespace mils
