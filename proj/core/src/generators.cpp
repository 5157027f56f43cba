#include <future>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "mils/errors.hpp"
#include "mils/generators.hpp"

namespace mils {

std::string to_string(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::llm: return "llm";
    case GeneratorKind::llm_then_image: return "llm_then_image";
    case GeneratorKind::llm_then_edit: return "llm_then_edit";
    case GeneratorKind::mock_mutation: return "mock_mutation";
  }
  return "llm";
}

GeneratorKind generator_kind_from_string(std::string_view name) {
  for (auto kind : {GeneratorKind::llm, GeneratorKind::llm_then_image, GeneratorKind::llm_then_edit,
                    GeneratorKind::mock_mutation}) {
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("unknown generator kind '" + std::string(name) + "'", "generator.kind");
}

void GeneratorSpec::validate() const {
  if (kind == GeneratorKind::mock_mutation) {
    if (vocabulary.empty()) throw ConfigError("mock_mutation requires a vocabulary", "generator.vocabulary");
    if (max_phrase_tokens && *max_phrase_tokens < 1) throw ConfigError("must be >= 1", "generator.max_phrase_tokens");
    return;
  }
  if (backend.empty()) throw ConfigError("required for LLM generators", "generator.backend");
  if (template_name.empty()) throw ConfigError("required for LLM generators", "generator.template");
  if (sampling.temperature < 0.0) throw ConfigError("must be >= 0", "generator.temperature");
  if (sampling.max_tokens < 1) throw ConfigError("must be >= 1", "generator.max_tokens");
  if (kind == GeneratorKind::llm_then_image || kind == GeneratorKind::llm_then_edit) {
    if (media_backend.empty()) throw ConfigError("required for chained generators", "generator.media_backend");
    if (media_concurrency < 1) throw ConfigError("must be >= 1", "generator.media_concurrency");
  }
  if (kind == GeneratorKind::llm_then_edit && !test_sample) {
    throw ConfigError("llm_then_edit requires a test sample", "test_sample");
  }
}

std::vector<Candidate> llm_generate(BackendClient& chat, const PromptTemplate& tmpl, const Sampling& sampling,
                                    const FeedbackBlock& feedback, int requested_number, const Bindings& extra_bindings,
                                    int step, int* calls_out) {
  if (requested_number < 1) throw ContractViolation("requested_number must be >= 1");
  Bindings bindings = extra_bindings;
  bindings["descriptions"] = feedback.to_string();
  bindings["requested_number"] = std::to_string(requested_number);
  const std::vector<ChatMessage> messages{{"user", render_template(tmpl, bindings)}};

  auto ask = [&] {
    if (calls_out) ++*calls_out;
    return parse_numbered_list(chat.chat_complete(messages, sampling));
  };

  std::vector<std::string> lines;
  try {
    lines = ask();
  } catch (const BackendError& e) {
    throw GenerationError(std::string("chat call failed: ") + e.what());
  }
  if (lines.size() < static_cast<std::size_t>(requested_number)) {
    spdlog::info("generator parsed {} of {} requested lines; retrying once", lines.size(), requested_number);
    try {
      auto more = ask();
      lines.insert(lines.end(), more.begin(), more.end());
    } catch (const BackendError& e) {
      if (lines.empty()) throw GenerationError(std::string("chat retry failed: ") + e.what());
      spdlog::warn("chat retry failed, keeping {} parsed lines: {}", lines.size(), e.what());
    }
  }

  std::vector<Candidate> out;
  std::unordered_set<std::string> seen;
  for (auto& line : lines) {
    if (out.size() >= static_cast<std::size_t>(requested_number)) break;
    auto c = Candidate::make(std::move(line), step);
    if (c.normalized_key.empty() || !seen.insert(c.normalized_key).second) continue;
    out.push_back(std::move(c));
  }
  if (out.empty()) throw EmptyGenerationError("generator produced no parseable candidates");
  return out;
}

std::vector<Candidate> chained_media_generate(BackendClient& chat, BackendClient& media, const PromptTemplate& tmpl,
                                              const Sampling& sampling, const FeedbackBlock& feedback,
                                              int requested_number, const Bindings& extra_bindings,
                                              const std::optional<MediaHandle>& test_sample, int concurrency, int step,
                                              int* calls_out) {
  auto texts = llm_generate(chat, tmpl, sampling, feedback, requested_number, extra_bindings, step, calls_out);

  std::vector<std::optional<MediaHandle>> produced(texts.size());
  const auto width = static_cast<std::size_t>(std::max(concurrency, 1));
  for (std::size_t start = 0; start < texts.size(); start += width) {
    const std::size_t end = std::min(texts.size(), start + width);
    std::vector<std::future<MediaHandle>> inflight;
    for (std::size_t i = start; i < end; ++i) {
      inflight.push_back(std::async(std::launch::async, [&, i] {
        return test_sample ? media.edit_image(*test_sample, texts[i].text) : media.generate_image(texts[i].text);
      }));
    }
    for (std::size_t i = start; i < end; ++i) {
      try {
        produced[i] = inflight[i - start].get();
      } catch (const std::exception& e) {
        spdlog::warn("dropping candidate '{}': image call failed: {}", texts[i].text, e.what());
      }
    }
  }

  std::vector<Candidate> out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (!produced[i]) continue;
    texts[i].media = std::move(produced[i]);
    out.push_back(std::move(texts[i]));
  }
  if (out.empty()) throw EmptyGenerationError("every image call failed");
  return out;
}

LlmGenerator::LlmGenerator(BackendClient& chat, PromptTemplate tmpl, Sampling sampling)
    : chat_(chat), template_(std::move(tmpl)), sampling_(sampling) {}

std::vector<Candidate> LlmGenerator::generate(const GenerationRequest& request) {
  return llm_generate(chat_, template_, sampling_, request.feedback, request.requested_number, request.extra_bindings,
                      request.step, &calls_);
}

ChainedMediaGenerator::ChainedMediaGenerator(BackendClient& chat, BackendClient& media, PromptTemplate tmpl,
                                             Sampling sampling, std::optional<MediaHandle> test_sample,
                                             int concurrency)
    : chat_(chat),
      media_(media),
      template_(std::move(tmpl)),
      sampling_(sampling),
      test_sample_(std::move(test_sample)),
      concurrency_(concurrency) {}

std::vector<Candidate> ChainedMediaGenerator::generate(const GenerationRequest& request) {
  return chained_media_generate(chat_, media_, template_, sampling_, request.feedback, request.requested_number,
                                request.extra_bindings, test_sample_, concurrency_, request.step, &calls_);
}

}  // namespace mils
