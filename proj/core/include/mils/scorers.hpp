#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mils/backends.hpp"
#include "mils/core.hpp"

namespace mils {

enum class ScorerKind { embedding_similarity, preference_service, lexical, gram_style };

std::string to_string(ScorerKind kind);
ScorerKind scorer_kind_from_string(std::string_view name);

enum class LayerRole { style, content };

struct LayerBinding {
  std::string layer_id;
  LayerRole role = LayerRole::style;
};

struct ScorerSpec {
  ScorerKind kind = ScorerKind::embedding_similarity;
  std::optional<std::string> backend;
  Direction direction = Direction::maximize;
  std::vector<std::string> objective_names;
  std::vector<double> weights;
  std::optional<MediaHandle> style_target;
  std::optional<MediaHandle> content_target;
  std::vector<LayerBinding> layers;
  /// Frame-count hint forwarded with video embeddings.
  std::optional<int> frames;
  /// Target text for the lexical scorer.
  std::string reference;

  /// Objective names and unit weights implied by `kind` when left empty.
  void fill_defaults();
  /// Throws ConfigError naming the field.
  void validate() const;
};

/// Dense C x C (or general rows x cols) matrix, row-major.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

/// G = V V^T / (C M) for the C x M value matrix V.
Matrix gram_matrix(const FeatureMap& features);

/// Mean of squared element differences; shapes must agree.
double mean_squared_difference(std::span<const double> a, std::span<const double> b);

/// Cosine similarity; 0 when either vector has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Term-frequency cosine between normalized whitespace tokens, one maximize objective each.
std::vector<ScoreValue> lexical_score(std::string_view reference, std::span<const std::string> texts);

std::vector<ScoreValue> embedding_similarity_score(BackendClient& backend, const MediaHandle& test_sample,
                                                   std::span<const std::string> texts,
                                                   std::optional<int> frames = std::nullopt);

/// (style, content) minimize objectives per candidate: style sums the Gram MSE over the
/// style layers, content sums raw-feature MSE over the content layers.
std::vector<ScoreValue> gram_style_score(BackendClient& backend, std::span<const Candidate> candidates,
                                         const ScorerSpec& spec);

/// Scores each candidate's image against the original prompt.
std::vector<ScoreValue> preference_score(BackendClient& backend, std::string_view init_description,
                                         std::span<const Candidate> candidates);

/// Raw objective scorer; outputs are order-aligned with inputs.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::vector<ScoreValue> score(std::span<const Candidate> candidates) = 0;
  /// Upstream requests and cache hits observed so far.
  virtual std::size_t backend_calls() const { return 0; }
  virtual std::size_t backend_cache_hits() const { return 0; }
};

class LexicalScorer final : public Scorer {
 public:
  explicit LexicalScorer(std::string reference) : reference_(std::move(reference)) {}
  std::vector<ScoreValue> score(std::span<const Candidate> candidates) override;

 private:
  std::string reference_;
};

class EmbeddingSimilarityScorer final : public Scorer {
 public:
  EmbeddingSimilarityScorer(BackendClient& backend, MediaHandle test_sample, std::optional<int> frames);
  std::vector<ScoreValue> score(std::span<const Candidate> candidates) override;
  std::size_t backend_calls() const override { return backend_.upstream_requests(); }
  std::size_t backend_cache_hits() const override { return backend_.cache_hits(); }

 private:
  BackendClient& backend_;
  MediaHandle test_sample_;
  std::optional<int> frames_;
};

class PreferenceScorer final : public Scorer {
 public:
  PreferenceScorer(BackendClient& backend, std::string init_description);
  std::vector<ScoreValue> score(std::span<const Candidate> candidates) override;
  std::size_t backend_calls() const override { return backend_.upstream_requests(); }
  std::size_t backend_cache_hits() const override { return backend_.cache_hits(); }

 private:
  BackendClient& backend_;
  std::string init_description_;
};

class GramStyleScorer final : public Scorer {
 public:
  GramStyleScorer(BackendClient& backend, ScorerSpec spec);
  std::vector<ScoreValue> score(std::span<const Candidate> candidates) override;
  std::size_t backend_calls() const override { return backend_.upstream_requests(); }
  std::size_t backend_cache_hits() const override { return backend_.cache_hits(); }

 private:
  BackendClient& backend_;
  ScorerSpec spec_;
};

/// Attaches scalarized scores to candidates and memoizes by (text, media hash) so a
/// repeated candidate is never re-sent to the scorer.
class BatchScorer {
 public:
  BatchScorer(std::unique_ptr<Scorer> scorer, std::vector<double> weights);

  /// Returns scored copies in input order. Scoring errors are rethrown as ScoringError
  /// naming the failing candidate index when the scorer reports one.
  std::vector<Candidate> score(std::span<const Candidate> candidates);

  std::size_t backend_calls() const { return scorer_->backend_calls(); }
  /// Memo hits plus backend cache hits.
  std::size_t cache_hits() const { return memo_hits_.load() + scorer_->backend_cache_hits(); }
  Scorer& scorer() { return *scorer_; }

 private:
  std::unique_ptr<Scorer> scorer_;
  std::vector<double> weights_;
  std::mutex mutex_;
  std::unordered_map<std::string, ScoreValue> memo_;
  std::atomic<std::size_t> memo_hits_{0};
};

/// batch_score: scores `candidates` with `scorer` and returns them in order.
std::vector<Candidate> batch_score(BatchScorer& scorer, std::span<const Candidate> candidates);

}  // namespace mils
