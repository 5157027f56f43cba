#pragma once

// Candidates, the deduplicated pool, feedback selection and convergence.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mils/media.hpp"

namespace mils {

enum class Direction { maximize, minimize };

std::string to_string(Direction direction);
Direction direction_from_string(std::string_view name);

struct Objective {
  std::string name;
  double value = 0.0;
  Direction direction = Direction::maximize;
};

/// Weighted sum of objectives with minimize objectives negated.
/// Throws ConfigError on a length mismatch or invalid weights.
double scalarize_scores(std::span<const Objective> objectives, std::span<const double> weights);

/// Per-candidate score: raw objectives plus the scalar ranking key.
struct ScoreValue {
  std::vector<Objective> objectives;
  double scalar = 0.0;

  /// Validates (non-empty, finite) and scalarizes. Empty weights mean 1.0 each.
  static ScoreValue make(std::vector<Objective> objectives, std::span<const double> weights = {});
  static ScoreValue single(std::string name, double value, Direction direction = Direction::maximize);
};

/// Dedup key: lowercase, trimmed, whitespace collapsed, trailing . ! ? stripped.
std::string normalize_text(std::string_view raw);

struct Candidate {
  std::uint64_t id = 0;
  std::string text;
  std::optional<MediaHandle> media;
  std::optional<ScoreValue> score;
  int step_created = 0;
  std::string normalized_key;

  /// Fresh unscored candidate with a process-unique id.
  static Candidate make(std::string text, int step = 0);

  double scalar() const;  // throws ContractViolation when unscored
};

/// Strict ranking order: scalar descending, then normalized_key ascending.
bool ranks_before(const Candidate& a, const Candidate& b);

class CandidatePool {
 public:
  CandidatePool() = default;
  explicit CandidatePool(std::optional<std::size_t> capacity) : capacity_(capacity) {}

  /// Adds scored candidates. A duplicate key keeps the higher scalar (incumbent on ties);
  /// afterwards the pool is trimmed to the `capacity` best entries.
  void merge(std::span<const Candidate> incoming);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::optional<std::size_t> capacity() const { return capacity_; }

  const Candidate* find(std::string_view normalized_key) const;
  const Candidate* best() const;

  /// All entries in ranking order.
  std::vector<const Candidate*> ranked() const;

  const std::unordered_map<std::string, Candidate>& entries() const { return entries_; }

 private:
  void trim();

  std::unordered_map<std::string, Candidate> entries_;
  std::optional<std::size_t> capacity_;
};

/// Value-returning form of CandidatePool::merge.
CandidatePool pool_merge(CandidatePool pool, std::span<const Candidate> incoming);

/// The min(k, |pool|) best candidates in ranking order.
std::vector<Candidate> top_k_select(const CandidatePool& pool, std::size_t k);

/// ceil((1 - epsilon) * k) greedy slots followed by seeded uniform draws (without
/// replacement) from candidates ranked below k; when that tail is too small the
/// remaining draws come from the unselected part of the top k. epsilon == 0 is
/// exactly top_k_select.
std::vector<Candidate> epsilon_greedy_select(const CandidatePool& pool, std::size_t k, double epsilon,
                                             std::uint64_t rng_seed);

/// Jaccard similarity of the normalized text sets.
double jaccard_similarity(std::span<const std::string> a, std::span<const std::string> b);

/// True when the Jaccard similarity of the normalized sets reaches `threshold`.
/// Two empty sets count as converged.
bool check_convergence(std::span<const std::string> prev_topk, std::span<const std::string> curr_topk,
                       double threshold);

struct RunConfig {
  int top_k = 50;
  int max_steps = 10;
  double epsilon = 0.0;
  int requested_number = 50;
  std::optional<double> convergence_threshold;
  std::uint64_t seed = 0;
  std::optional<std::size_t> pool_capacity;

  /// Throws ConfigError naming the field when a bound is violated.
  void validate() const;

  /// pool_capacity, or max(top_k, 1000) when unset.
  std::size_t effective_pool_capacity() const;
};

struct StepRecord {
  int step = 0;
  double best_scalar = 0.0;
  double mean_topk_scalar = 0.0;
  std::vector<std::string> topk_texts;
  int generator_calls = 0;
  int scorer_calls = 0;
  int cache_hits = 0;
};

struct RunTrace {
  std::vector<StepRecord> steps;

  /// One JSON object per line, keys in a fixed order.
  std::string to_jsonl() const;
  /// Header step,best_scalar,mean_topk_scalar.
  std::string to_curve_csv() const;
  static RunTrace from_jsonl(std::string_view text);
};

}  // namespace mils
