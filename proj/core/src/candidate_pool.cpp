#include <algorithm>

#include "mils/core.hpp"
#include "mils/errors.hpp"

namespace mils {

void CandidatePool::merge(std::span<const Candidate> incoming) {
  for (const auto& c : incoming) {
    if (!c.score) throw ContractViolation("pool_merge: candidate '" + c.text + "' is unscored");
  }
  for (const auto& c : incoming) {
    auto it = entries_.find(c.normalized_key);
    if (it == entries_.end()) {
      entries_.emplace(c.normalized_key, c);
    } else if (c.score->scalar > it->second.score->scalar) {
      it->second = c;
    }
  }
  trim();
}

void CandidatePool::trim() {
  if (!capacity_ || entries_.size() <= *capacity_) return;
  std::vector<const Candidate*> order;
  order.reserve(entries_.size());
  for (const auto& [key, c] : entries_) order.push_back(&c);
  const auto keep = static_cast<std::ptrdiff_t>(*capacity_);
  std::nth_element(order.begin(), order.begin() + keep, order.end(),
                   [](const Candidate* a, const Candidate* b) { return ranks_before(*a, *b); });
  std::vector<std::string> evicted;
  evicted.reserve(order.size() - *capacity_);
  for (auto it = order.begin() + keep; it != order.end(); ++it) evicted.push_back((*it)->normalized_key);
  for (const auto& key : evicted) entries_.erase(key);
}

const Candidate* CandidatePool::find(std::string_view normalized_key) const {
  auto it = entries_.find(std::string(normalized_key));
  return it == entries_.end() ? nullptr : &it->second;
}

const Candidate* CandidatePool::best() const {
  const Candidate* best = nullptr;
  for (const auto& [key, c] : entries_) {
    if (best == nullptr || ranks_before(c, *best)) best = &c;
  }
  return best;
}

std::vector<const Candidate*> CandidatePool::ranked() const {
  std::vector<const Candidate*> order;
  order.reserve(entries_.size());
  for (const auto& [key, c] : entries_) order.push_back(&c);
  std::sort(order.begin(), order.end(), [](const Candidate* a, const Candidate* b) { return ranks_before(*a, *b); });
  return order;
}

CandidatePool pool_merge(CandidatePool pool, std::span<const Candidate> incoming) {
  pool.merge(incoming);
  return pool;
}

}  // namespace mils
