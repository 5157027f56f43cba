#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>

#include "mils/core.hpp"
#include "mils/errors.hpp"

namespace mils {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_sentence_end(char c) { return c == '.' || c == '!' || c == '?'; }

std::atomic<std::uint64_t> next_candidate_id{1};

}  // namespace

std::string to_string(Direction direction) {
  return direction == Direction::maximize ? "maximize" : "minimize";
}

Direction direction_from_string(std::string_view name) {
  if (name == "maximize" || name == "max") return Direction::maximize;
  if (name == "minimize" || name == "min") return Direction::minimize;
  throw ConfigError("unknown direction '" + std::string(name) + "'", "direction");
}

std::string normalize_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char c : raw) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  // "a dog . !" must reach the same fixpoint as "a dog".
  while (!out.empty() && (is_sentence_end(out.back()) || out.back() == ' ')) out.pop_back();
  return out;
}

double scalarize_scores(std::span<const Objective> objectives, std::span<const double> weights) {
  if (objectives.size() != weights.size()) {
    throw ConfigError("expected " + std::to_string(objectives.size()) + " weights, got " +
                          std::to_string(weights.size()),
                      "weights");
  }
  if (objectives.empty()) throw ConfigError("at least one objective is required", "objectives");
  bool any_positive = false;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("weights must be finite and >= 0", "weights");
    any_positive = any_positive || w > 0.0;
  }
  if (!any_positive) throw ConfigError("weights must not all be zero", "weights");

  double total = 0.0;
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    const double signed_value =
        objectives[i].direction == Direction::maximize ? objectives[i].value : -objectives[i].value;
    total += weights[i] * signed_value;
  }
  return total;
}

ScoreValue ScoreValue::make(std::vector<Objective> objectives, std::span<const double> weights) {
  if (objectives.empty()) throw ContractViolation("a score needs at least one objective");
  for (const auto& o : objectives) {
    if (!std::isfinite(o.value)) {
      throw ScoringError("objective '" + o.name + "' is not finite");
    }
  }
  ScoreValue score;
  if (weights.empty()) {
    const std::vector<double> ones(objectives.size(), 1.0);
    score.scalar = scalarize_scores(objectives, ones);
  } else {
    score.scalar = scalarize_scores(objectives, weights);
  }
  score.objectives = std::move(objectives);
  return score;
}

ScoreValue ScoreValue::single(std::string name, double value, Direction direction) {
  return make({Objective{std::move(name), value, direction}});
}

Candidate Candidate::make(std::string text, int step) {
  Candidate c;
  c.id = next_candidate_id.fetch_add(1, std::memory_order_relaxed);
  c.normalized_key = normalize_text(text);
  c.text = std::move(text);
  c.step_created = step;
  return c;
}

double Candidate::scalar() const {
  if (!score) throw ContractViolation("candidate '" + text + "' has no score");
  return score->scalar;
}

bool ranks_before(const Candidate& a, const Candidate& b) {
  const double sa = a.scalar();
  const double sb = b.scalar();
  if (sa != sb) return sa > sb;
  return a.normalized_key < b.normalized_key;
}

}  // namespace mils
