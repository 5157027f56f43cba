#include <algorithm>
#include <cmath>

#include "mils/errors.hpp"
#include "mils/scorers.hpp"

namespace mils {

Matrix gram_matrix(const FeatureMap& features) {
  features.validate();
  const int c = features.channels;
  const int m = features.spatial;
  Matrix g{c, c, std::vector<double>(static_cast<std::size_t>(c) * c, 0.0)};
  const double norm = 1.0 / (static_cast<double>(c) * static_cast<double>(m));
  for (int i = 0; i < c; ++i) {
    const double* row_i = features.values.data() + static_cast<std::size_t>(i) * m;
    for (int j = i; j < c; ++j) {
      const double* row_j = features.values.data() + static_cast<std::size_t>(j) * m;
      double dot = 0.0;
      for (int k = 0; k < m; ++k) dot += row_i[k] * row_j[k];
      g(i, j) = dot * norm;
      g(j, i) = g(i, j);
    }
  }
  return g;
}

double mean_squared_difference(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ScoringError("shape mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " values");
  }
  if (a.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    total += d * d;
  }
  return total / static_cast<double>(a.size());
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ScoringError("dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

}  // namespace mils
