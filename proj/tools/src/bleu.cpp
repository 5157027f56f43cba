#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>

#include "mils/cli.hpp"

namespace mils::cli {

namespace {

std::vector<std::string> tokens(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  std::istringstream in(lower);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

using Ngrams = std::map<std::vector<std::string>, int>;

Ngrams ngrams(const std::vector<std::string>& toks, std::size_t n) {
  Ngrams out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[{toks.begin() + i, toks.begin() + i + n}];
  return out;
}

}  // namespace

double bleu4(std::string_view candidate, const std::vector<std::string>& references) {
  if (references.empty()) return 0.0;
  const auto cand = tokens(candidate);
  if (cand.empty()) return 0.0;
  std::vector<std::vector<std::string>> refs;
  for (const auto& r : references) refs.push_back(tokens(r));

  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto counts = ngrams(cand, n);
    std::vector<Ngrams> ref_counts;
    for (const auto& r : refs) ref_counts.push_back(ngrams(r, n));
    int total = 0;
    int clipped = 0;
    for (const auto& [gram, count] : counts) {
      int max_ref = 0;
      for (const auto& rc : ref_counts) {
        if (const auto it = rc.find(gram); it != rc.end()) max_ref = std::max(max_ref, it->second);
      }
      clipped += std::min(count, max_ref);
      total += count;
    }
    if (total == 0 || clipped == 0) return 0.0;
    log_sum += std::log(static_cast<double>(clipped) / total) / 4.0;
  }

  const auto c = static_cast<long>(cand.size());
  long r = static_cast<long>(refs.front().size());
  for (const auto& ref : refs) {
    const auto len = static_cast<long>(ref.size());
    if (std::labs(len - c) < std::labs(r - c) || (std::labs(len - c) == std::labs(r - c) && len < r)) r = len;
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return bp * std::exp(log_sum);
}

}  // namespace mils::cli
