#include <algorithm>
#include <cmath>
#include <future>
#include <map>
#include <sstream>

#include "mils/errors.hpp"
#include "mils/scorers.hpp"

namespace mils {

namespace {

std::map<std::string, double> term_frequencies(std::string_view text) {
  std::map<std::string, double> tf;
  std::istringstream in(normalize_text(text));
  for (std::string token; in >> token;) tf[token] += 1.0;
  return tf;
}

double tf_cosine(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
  if (a.empty() || b.empty()) return 0.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [t, v] : a) {
    na += v * v;
    if (auto it = b.find(t); it != b.end()) dot += v * it->second;
  }
  for (const auto& [t, v] : b) nb += v * v;
  return std::min(1.0, dot / (std::sqrt(na) * std::sqrt(nb)));
}

std::string memo_key(const Candidate& c) {
  std::string key = c.text;
  key += '\x1f';
  if (c.media) key += c.media->hash_hex();
  return key;
}

}  // namespace

std::string to_string(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::embedding_similarity: return "embedding_similarity";
    case ScorerKind::preference_service: return "preference_service";
    case ScorerKind::lexical: return "lexical";
    case ScorerKind::gram_style: return "gram_style";
  }
  return "lexical";
}

ScorerKind scorer_kind_from_string(std::string_view name) {
  for (auto kind : {ScorerKind::embedding_similarity, ScorerKind::preference_service, ScorerKind::lexical,
                    ScorerKind::gram_style}) {
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("unknown scorer kind '" + std::string(name) + "'", "scorer.kind");
}

void ScorerSpec::fill_defaults() {
  if (objective_names.empty()) {
    switch (kind) {
      case ScorerKind::embedding_similarity: objective_names = {"similarity"}; break;
      case ScorerKind::preference_service: objective_names = {"preference"}; break;
      case ScorerKind::lexical: objective_names = {"lexical"}; break;
      case ScorerKind::gram_style: objective_names = {"style", "content"}; break;
    }
  }
  if (weights.empty()) weights.assign(objective_names.size(), 1.0);
  if (kind == ScorerKind::gram_style) direction = Direction::minimize;
}

void ScorerSpec::validate() const {
  if (weights.size() != objective_names.size()) {
    throw ConfigError("expected " + std::to_string(objective_names.size()) + " weights", "scorer.weights");
  }
  if (kind != ScorerKind::lexical && (!backend || backend->empty())) {
    throw ConfigError("required for " + to_string(kind), "scorer.backend");
  }
  if (kind == ScorerKind::gram_style) {
    if (objective_names.size() != 2) throw ConfigError("gram_style has exactly two objectives", "scorer.objective_names");
    if (!style_target) throw ConfigError("gram_style requires a style target", "scorer.style_target");
    if (!content_target) throw ConfigError("gram_style requires a content target", "scorer.content_target");
    if (layers.empty()) throw ConfigError("gram_style requires layers", "scorer.layers");
    const bool has_style = std::any_of(layers.begin(), layers.end(), [](auto& l) { return l.role == LayerRole::style; });
    const bool has_content =
        std::any_of(layers.begin(), layers.end(), [](auto& l) { return l.role == LayerRole::content; });
    if (!has_style || !has_content) {
      throw ConfigError("gram_style needs at least one style and one content layer", "scorer.layers");
    }
  } else if (objective_names.size() != 1) {
    throw ConfigError(to_string(kind) + " has exactly one objective", "scorer.objective_names");
  }
  if (frames && *frames < 1) throw ConfigError("must be >= 1", "scorer.frames");
}

std::vector<ScoreValue> lexical_score(std::string_view reference, std::span<const std::string> texts) {
  const auto ref = term_frequencies(reference);
  std::vector<ScoreValue> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(ScoreValue::single("lexical", tf_cosine(ref, term_frequencies(t))));
  return out;
}

std::vector<ScoreValue> embedding_similarity_score(BackendClient& backend, const MediaHandle& test_sample,
                                                   std::span<const std::string> texts, std::optional<int> frames) {
  if (texts.empty()) return {};
  std::vector<double> media;
  std::vector<std::vector<double>> text_vectors;
  try {
    media = backend.embed_media(test_sample, frames);
    text_vectors = backend.embed_texts(texts);
  } catch (const BackendError& e) {
    throw ScoringError(std::string("embedding request failed: ") + e.what());
  }
  std::vector<ScoreValue> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (text_vectors[i].size() != media.size()) {
      throw ScoringError("candidate " + std::to_string(i) + ": text embedding has dimension " +
                         std::to_string(text_vectors[i].size()) + ", media has " + std::to_string(media.size()));
    }
    out.push_back(ScoreValue::single("similarity", cosine_similarity(text_vectors[i], media)));
  }
  return out;
}

std::vector<ScoreValue> gram_style_score(BackendClient& backend, std::span<const Candidate> candidates,
                                         const ScorerSpec& spec) {
  if (!spec.style_target || !spec.content_target || spec.layers.empty()) {
    throw ContractViolation("gram_style_score needs style/content targets and layers");
  }
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!candidates[i].media) throw ContractViolation("candidate " + std::to_string(i) + " has no image to score");
  }
  std::vector<std::string> style_layers, content_layers, all_layers;
  for (const auto& l : spec.layers) {
    (l.role == LayerRole::style ? style_layers : content_layers).push_back(l.layer_id);
    all_layers.push_back(l.layer_id);
  }

  auto fetch = [&](const MediaHandle& image, const std::vector<std::string>& ids, const std::string& what) {
    try {
      return backend.extract_features(image, ids);
    } catch (const BackendError& e) {
      throw ScoringError(what + ": " + e.what());
    }
  };
  const auto style_ref = fetch(*spec.style_target, style_layers, "style target");
  const auto content_ref = fetch(*spec.content_target, content_layers, "content target");
  std::vector<Matrix> style_grams;
  for (const auto& f : style_ref) style_grams.push_back(gram_matrix(f));

  auto score_one = [&](std::size_t i) {
    const std::string where = "candidate " + std::to_string(i);
    const auto maps = fetch(*candidates[i].media, all_layers, where);
    double style = 0.0, content = 0.0;
    std::size_t si = 0, ci = 0;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
      try {
        if (spec.layers[l].role == LayerRole::style) {
          const auto g = gram_matrix(maps[l]);
          style += mean_squared_difference(g.data, style_grams[si++].data);
        } else {
          content += mean_squared_difference(maps[l].values, content_ref[ci++].values);
        }
      } catch (const ScoringError& e) {
        throw ScoringError(where + ", layer '" + spec.layers[l].layer_id + "': " + e.what());
      }
    }
    return ScoreValue::make({{spec.objective_names[0], style, Direction::minimize},
                             {spec.objective_names[1], content, Direction::minimize}});
  };

  std::vector<ScoreValue> out(candidates.size());
  constexpr std::size_t kWidth = 8;
  for (std::size_t start = 0; start < candidates.size(); start += kWidth) {
    const std::size_t end = std::min(candidates.size(), start + kWidth);
    std::vector<std::future<ScoreValue>> inflight;
    for (std::size_t i = start; i < end; ++i) inflight.push_back(std::async(std::launch::async, score_one, i));
    for (std::size_t i = start; i < end; ++i) out[i] = inflight[i - start].get();
  }
  return out;
}

std::vector<ScoreValue> preference_score(BackendClient& backend, std::string_view init_description,
                                         std::span<const Candidate> candidates) {
  std::vector<MediaHandle> images;
  images.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!candidates[i].media) throw ContractViolation("candidate " + std::to_string(i) + " has no image to score");
    images.push_back(*candidates[i].media);
  }
  std::vector<double> raw;
  try {
    raw = backend.preference(init_description, images);
  } catch (const BackendError& e) {
    throw ScoringError(std::string("preference request failed: ") + e.what());
  }
  std::vector<ScoreValue> out;
  out.reserve(raw.size());
  for (double v : raw) out.push_back(ScoreValue::single("preference", v));
  return out;
}

std::vector<ScoreValue> LexicalScorer::score(std::span<const Candidate> candidates) {
  std::vector<std::string> texts;
  texts.reserve(candidates.size());
  for (const auto& c : candidates) texts.push_back(c.text);
  return lexical_score(reference_, texts);
}

EmbeddingSimilarityScorer::EmbeddingSimilarityScorer(BackendClient& backend, MediaHandle test_sample,
                                                     std::optional<int> frames)
    : backend_(backend), test_sample_(std::move(test_sample)), frames_(frames) {}

std::vector<ScoreValue> EmbeddingSimilarityScorer::score(std::span<const Candidate> candidates) {
  std::vector<std::string> texts;
  texts.reserve(candidates.size());
  for (const auto& c : candidates) texts.push_back(c.text);
  return embedding_similarity_score(backend_, test_sample_, texts, frames_);
}

PreferenceScorer::PreferenceScorer(BackendClient& backend, std::string init_description)
    : backend_(backend), init_description_(std::move(init_description)) {}

std::vector<ScoreValue> PreferenceScorer::score(std::span<const Candidate> candidates) {
  return preference_score(backend_, init_description_, candidates);
}

GramStyleScorer::GramStyleScorer(BackendClient& backend, ScorerSpec spec) : backend_(backend), spec_(std::move(spec)) {
  spec_.fill_defaults();
}

std::vector<ScoreValue> GramStyleScorer::score(std::span<const Candidate> candidates) {
  return gram_style_score(backend_, candidates, spec_);
}

BatchScorer::BatchScorer(std::unique_ptr<Scorer> scorer, std::vector<double> weights)
    : scorer_(std::move(scorer)), weights_(std::move(weights)) {
  if (!scorer_) throw ContractViolation("BatchScorer needs a scorer");
}

std::vector<Candidate> BatchScorer::score(std::span<const Candidate> candidates) {
  std::vector<Candidate> out(candidates.begin(), candidates.end());
  for (auto& c : out) c.score.reset();
  std::vector<std::size_t> pending;
  std::vector<Candidate> to_score;
  {
    std::lock_guard lock(mutex_);
    std::unordered_map<std::string, std::size_t> first_pending;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto key = memo_key(out[i]);
      if (auto it = memo_.find(key); it != memo_.end()) {
        out[i].score = it->second;
        ++memo_hits_;
      } else if (first_pending.emplace(key, i).second) {
        pending.push_back(i);
        to_score.push_back(out[i]);
      }
    }
  }
  if (!to_score.empty()) {
    auto raw = scorer_->score(to_score);
    if (raw.size() != to_score.size()) {
      throw ScoringError("scorer returned " + std::to_string(raw.size()) + " scores for " +
                         std::to_string(to_score.size()) + " candidates");
    }
    std::lock_guard lock(mutex_);
    for (std::size_t j = 0; j < pending.size(); ++j) {
      auto value = ScoreValue::make(std::move(raw[j].objectives), weights_);
      memo_.insert_or_assign(memo_key(out[pending[j]]), value);
    }
  }
  std::lock_guard lock(mutex_);
  for (auto& c : out) {
    if (!c.score) c.score = memo_.at(memo_key(c));
  }
  return out;
}

std::vector<Candidate> batch_score(BatchScorer& scorer, std::span<const Candidate> candidates) {
  return scorer.score(candidates);
}

}  // namespace mils
