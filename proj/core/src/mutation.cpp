#include <random>
#include <sstream>

#include "mils/errors.hpp"
#include "mils/generators.hpp"

namespace mils {

namespace {

enum class Mutation { substitute, insert, remove };

std::vector<std::string> split_tokens(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> tokens;
  for (std::string t; in >> t;) tokens.push_back(std::move(t));
  return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

std::vector<Candidate> mock_mutation_generate(const std::vector<std::string>& feedback_texts, int requested_number,
                                              std::uint64_t rng_seed, const std::vector<std::string>& vocabulary,
                                              std::optional<int> max_phrase_tokens, int step) {
  if (vocabulary.empty()) throw ContractViolation("mock_mutation_generate needs a non-empty vocabulary");
  if (max_phrase_tokens && *max_phrase_tokens < 1) throw ContractViolation("max_phrase_tokens must be >= 1");

  std::mt19937_64 rng(rng_seed);
  std::vector<Candidate> out;
  out.reserve(static_cast<std::size_t>(std::max(requested_number, 0)));
  for (int i = 0; i < requested_number; ++i) {
    auto tokens = feedback_texts.empty() ? std::vector<std::string>{}
                                         : split_tokens(feedback_texts[uniform_index(rng, feedback_texts.size())]);
    if (max_phrase_tokens && tokens.size() > static_cast<std::size_t>(*max_phrase_tokens)) {
      tokens.resize(static_cast<std::size_t>(*max_phrase_tokens));
    }

    std::vector<Mutation> allowed;
    if (!tokens.empty()) allowed.push_back(Mutation::substitute);
    if (!max_phrase_tokens || tokens.size() < static_cast<std::size_t>(*max_phrase_tokens)) {
      allowed.push_back(Mutation::insert);
    }
    if (tokens.size() >= 2) allowed.push_back(Mutation::remove);

    switch (allowed[uniform_index(rng, allowed.size())]) {
      case Mutation::substitute:
        tokens[uniform_index(rng, tokens.size())] = vocabulary[uniform_index(rng, vocabulary.size())];
        break;
      case Mutation::insert: {
        const auto at = uniform_index(rng, tokens.size() + 1);
        tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(at), vocabulary[uniform_index(rng, vocabulary.size())]);
        break;
      }
      case Mutation::remove:
        tokens.erase(tokens.begin() + static_cast<std::ptrdiff_t>(uniform_index(rng, tokens.size())));
        break;
    }
    out.push_back(Candidate::make(join_tokens(tokens), step));
  }
  return out;
}

MutationGenerator::MutationGenerator(std::vector<std::string> vocabulary, std::optional<int> max_phrase_tokens)
    : vocabulary_(std::move(vocabulary)), max_phrase_tokens_(max_phrase_tokens) {
  if (vocabulary_.empty()) throw ConfigError("mutation generator needs a vocabulary", "generator.vocabulary");
}

std::vector<Candidate> MutationGenerator::generate(const GenerationRequest& request) {
  ++calls_;
  return mock_mutation_generate(request.feedback.texts(), request.requested_number, request.seed, vocabulary_,
                                max_phrase_tokens_, request.step);
}

}  // namespace mils
