#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "mils/core.hpp"
#include "mils/errors.hpp"

namespace mils {

namespace {

std::vector<const Candidate*> leading(const CandidatePool& pool, std::size_t count) {
  std::vector<const Candidate*> order;
  order.reserve(pool.size());
  for (const auto& [key, c] : pool.entries()) order.push_back(&c);
  count = std::min(count, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(),
                    [](const Candidate* a, const Candidate* b) { return ranks_before(*a, *b); });
  order.resize(count);
  return order;
}

// Draws `count` items uniformly without replacement, in draw order.
std::vector<const Candidate*> draw(std::vector<const Candidate*> from, std::size_t count, std::mt19937_64& rng) {
  count = std::min(count, from.size());
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, from.size() - 1);
    std::swap(from[i], from[pick(rng)]);
  }
  from.resize(count);
  return from;
}

}  // namespace

std::vector<Candidate> top_k_select(const CandidatePool& pool, std::size_t k) {
  if (k == 0) throw ContractViolation("top_k_select: k must be >= 1");
  std::vector<Candidate> out;
  for (const Candidate* c : leading(pool, k)) out.push_back(*c);
  return out;
}

std::vector<Candidate> epsilon_greedy_select(const CandidatePool& pool, std::size_t k, double epsilon,
                                             std::uint64_t rng_seed) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ContractViolation("epsilon must lie in [0, 1]");
  if (k == 0) throw ContractViolation("epsilon_greedy_select: k must be >= 1");
  if (epsilon == 0.0) return top_k_select(pool, k);

  const std::size_t slots = std::min(k, pool.size());
  const auto greedy = std::min(slots, static_cast<std::size_t>(std::ceil((1.0 - epsilon) * static_cast<double>(k))));

  const auto ranked = pool.ranked();
  std::vector<Candidate> out;
  out.reserve(slots);
  for (std::size_t i = 0; i < greedy; ++i) out.push_back(*ranked[i]);

  std::mt19937_64 rng(rng_seed);
  std::size_t remaining = slots - greedy;
  std::vector<const Candidate*> tail(ranked.begin() + static_cast<std::ptrdiff_t>(std::min(k, ranked.size())),
                                     ranked.end());
  for (const Candidate* c : draw(std::move(tail), remaining, rng)) out.push_back(*c);
  remaining = slots - out.size();
  if (remaining > 0) {
    std::vector<const Candidate*> rest(ranked.begin() + static_cast<std::ptrdiff_t>(greedy),
                                       ranked.begin() + static_cast<std::ptrdiff_t>(slots));
    for (const Candidate* c : draw(std::move(rest), remaining, rng)) out.push_back(*c);
  }
  return out;
}

double jaccard_similarity(std::span<const std::string> a, std::span<const std::string> b) {
  std::set<std::string> sa, sb;
  for (const auto& s : a) sa.insert(normalize_text(s));
  for (const auto& s : b) sb.insert(normalize_text(s));
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& s : sa) common += sb.count(s);
  const std::size_t unioned = sa.size() + sb.size() - common;
  return static_cast<double>(common) / static_cast<double>(unioned);
}

bool check_convergence(std::span<const std::string> prev_topk, std::span<const std::string> curr_topk,
                       double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ContractViolation("threshold must lie in [0, 1]");
  return jaccard_similarity(prev_topk, curr_topk) >= threshold;
}

void RunConfig::validate() const {
  if (top_k < 1) throw ConfigError("must be >= 1", "run.top_k");
  if (max_steps < 1) throw ConfigError("must be >= 1", "run.max_steps");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("must lie in [0, 1]", "run.epsilon");
  if (requested_number < 1) throw ConfigError("must be >= 1", "run.requested_number");
  if (convergence_threshold && !(*convergence_threshold >= 0.0 && *convergence_threshold <= 1.0)) {
    throw ConfigError("must lie in [0, 1]", "run.convergence_threshold");
  }
  if (pool_capacity && *pool_capacity < 1) throw ConfigError("must be >= 1", "run.pool_capacity");
}

std::size_t RunConfig::effective_pool_capacity() const {
  return pool_capacity.value_or(std::max<std::size_t>(static_cast<std::size_t>(top_k), 1000));
}

}  // namespace mils
