#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mils/backends.hpp"
#include "mils/core.hpp"
#include "mils/prompts.hpp"

namespace mils {

enum class GeneratorKind { llm, llm_then_image, llm_then_edit, mock_mutation };

std::string to_string(GeneratorKind kind);
GeneratorKind generator_kind_from_string(std::string_view name);

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::llm;
  std::string template_name;
  /// Chat endpoint name.
  std::string backend;
  /// Image generation / edit endpoint for chained kinds.
  std::string media_backend;
  Sampling sampling;
  std::optional<MediaHandle> test_sample;  // required by llm_then_edit
  /// Token vocabulary of the mutation generator.
  std::vector<std::string> vocabulary;
  /// Upper bound on phrase length for the mutation generator; unset means unbounded.
  std::optional<int> max_phrase_tokens;
  /// Concurrent image calls in chained generation.
  int media_concurrency = 4;

  /// Throws ConfigError naming the field when the spec is inconsistent.
  void validate() const;
};

/// Everything a generator sees for one step.
struct GenerationRequest {
  FeedbackBlock feedback;
  int requested_number = 50;
  int step = 0;
  std::uint64_t seed = 0;
  Bindings extra_bindings;
};

/// Proposes unscored candidates from score-annotated feedback.
class Generator {
 public:
  virtual ~Generator() = default;
  /// Throws EmptyGenerationError when nothing usable was produced.
  virtual std::vector<Candidate> generate(const GenerationRequest& request) = 0;
  /// Upstream chat calls issued so far (including retries on under-production).
  virtual int calls() const = 0;
};

/// Renders `tmpl` with {descriptions} and {requested_number}, asks the chat endpoint and
/// parses the numbered reply. Retries once when fewer than ceil(n/2) lines parse; the
/// two replies are pooled. Output is deduplicated and truncated to `requested_number`.
/// `calls_out` (optional) is incremented per chat call.
std::vector<Candidate> llm_generate(BackendClient& chat, const PromptTemplate& tmpl, const Sampling& sampling,
                                    const FeedbackBlock& feedback, int requested_number, const Bindings& extra_bindings,
                                    int step = 0, int* calls_out = nullptr);

/// Rewrites from llm_generate, each turned into one image (generate, or edit of
/// `test_sample` when given). Failed images drop their candidate with a warning.
std::vector<Candidate> chained_media_generate(BackendClient& chat, BackendClient& media, const PromptTemplate& tmpl,
                                              const Sampling& sampling, const FeedbackBlock& feedback,
                                              int requested_number, const Bindings& extra_bindings,
                                              const std::optional<MediaHandle>& test_sample, int concurrency = 4,
                                              int step = 0, int* calls_out = nullptr);

/// Seeded offline generator: each output picks a feedback text uniformly (empty text
/// when there is no feedback) and applies one substitute / insert / delete of a
/// vocabulary token. Deletions never produce an empty phrase and insertions respect
/// `max_phrase_tokens`.
std::vector<Candidate> mock_mutation_generate(const std::vector<std::string>& feedback_texts, int requested_number,
                                              std::uint64_t rng_seed, const std::vector<std::string>& vocabulary,
                                              std::optional<int> max_phrase_tokens = std::nullopt, int step = 0);

/// One chat call per label with {class_label} bound; at most `per_label` lines kept per
/// label; failures skip the label. Deduplicated by normalized key.
std::vector<Candidate> bootstrap_build(BackendClient& chat, const std::vector<std::string>& labels,
                                       const PromptTemplate& tmpl, int per_label, const Sampling& sampling = {});

/// One candidate per non-blank line, first occurrence wins on duplicates.
std::vector<Candidate> bootstrap_load(const std::filesystem::path& path);
void bootstrap_write(const std::filesystem::path& path, std::span<const std::string> texts);

class LlmGenerator final : public Generator {
 public:
  LlmGenerator(BackendClient& chat, PromptTemplate tmpl, Sampling sampling);
  std::vector<Candidate> generate(const GenerationRequest& request) override;
  int calls() const override { return calls_; }

 private:
  BackendClient& chat_;
  PromptTemplate template_;
  Sampling sampling_;
  int calls_ = 0;
};

class ChainedMediaGenerator final : public Generator {
 public:
  ChainedMediaGenerator(BackendClient& chat, BackendClient& media, PromptTemplate tmpl, Sampling sampling,
                        std::optional<MediaHandle> test_sample, int concurrency);
  std::vector<Candidate> generate(const GenerationRequest& request) override;
  int calls() const override { return calls_; }

 private:
  BackendClient& chat_;
  BackendClient& media_;
  PromptTemplate template_;
  Sampling sampling_;
  std::optional<MediaHandle> test_sample_;
  int concurrency_;
  int calls_ = 0;
};

class MutationGenerator final : public Generator {
 public:
  MutationGenerator(std::vector<std::string> vocabulary, std::optional<int> max_phrase_tokens);
  std::vector<Candidate> generate(const GenerationRequest& request) override;
  int calls() const override { return calls_; }

 private:
  std::vector<std::string> vocabulary_;
  std::optional<int> max_phrase_tokens_;
  int calls_ = 0;
};

}  // namespace mils
