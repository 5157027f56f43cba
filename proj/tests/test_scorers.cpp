#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "mils/errors.hpp"
#include "mils/scorers.hpp"
#include "support.hpp"

namespace mils {
namespace {

using nlohmann::json;
using test::endpoint;
using test::fast_retry;

FeatureMap random_map(std::mt19937_64& rng, int c, int m, std::string layer = "l") {
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureMap f{std::move(layer), c, m, {}};
  f.values.resize(static_cast<std::size_t>(c) * m);
  for (auto& v : f.values) v = n(rng);
  return f;
}

Eigen::MatrixXd eigen_gram(const FeatureMap& f) {
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> v(f.values.data(),
                                                                                             f.channels, f.spatial);
  return v * v.transpose() / static_cast<double>(f.channels * f.spatial);
}

Eigen::MatrixXd as_eigen(const Matrix& g) {
  Eigen::MatrixXd out(g.rows, g.cols);
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) out(r, c) = g(r, c);
  return out;
}

TEST(GramMatrix, Examples) {
  const auto g = gram_matrix({"l", 1, 3, {1, 2, 2}});
  ASSERT_EQ(g.rows, 1);
  EXPECT_DOUBLE_EQ(g(0, 0), 3.0);
  const auto zero = gram_matrix({"l", 3, 2, std::vector<double>(6, 0.0)});
  for (double v : zero.data) EXPECT_EQ(v, 0.0);
}

TEST(GramMatrix, MatchesEigenAndIsSymmetricPsd) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const int c = 1 + static_cast<int>(rng() % 64);
    const int m = 1 + static_cast<int>(rng() % 256);
    const auto f = random_map(rng, c, m);
    const auto g = as_eigen(gram_matrix(f));
    EXPECT_LE((g - eigen_gram(f)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(g, g.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-9);
  }
}

TEST(GramMatrix, ScalesQuadratically) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    auto f = random_map(rng, 1 + static_cast<int>(rng() % 64), 1 + static_cast<int>(rng() % 256));
    const double t = u(rng);
    const auto base = gram_matrix(f);
    for (auto& v : f.values) v *= t;
    const auto scaled = gram_matrix(f);
    for (std::size_t i = 0; i < base.data.size(); ++i) {
      EXPECT_NEAR(scaled.data[i], t * t * base.data[i], 1e-6 * std::max(1e-12, std::abs(t * t * base.data[i])));
    }
  }
}

TEST(GramMatrix, InvariantToColumnPermutation) {
  std::mt19937_64 rng(29);
  const int c = 8, m = 40;
  const auto f = random_map(rng, c, m);
  std::vector<int> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  FeatureMap p = f;
  for (int r = 0; r < c; ++r)
    for (int j = 0; j < m; ++j) p.values[static_cast<std::size_t>(r) * m + j] = f.at(r, perm[j]);
  const auto a = gram_matrix(f);
  const auto b = gram_matrix(p);
  for (std::size_t i = 0; i < a.data.size(); ++i) EXPECT_NEAR(a.data[i], b.data[i], 1e-12);
}

TEST(Distances, Examples) {
  EXPECT_DOUBLE_EQ(mean_squared_difference(std::vector<double>{3.0}, std::vector<double>{1.0}), 4.0);
  EXPECT_THROW(mean_squared_difference(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), ScoringError);
  EXPECT_NEAR(cosine_similarity(std::vector<double>{1, 0, 0}, std::vector<double>{1, 1, 0}), 1 / std::sqrt(2.0),
              1e-12);
  EXPECT_EQ(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 1}), 0.0);
}

TEST(Lexical, Examples) {
  const std::vector<std::string> texts{"a cat", "a dog", "A Cat.", "", "red car"};
  const auto s = lexical_score("a cat", texts);
  ASSERT_EQ(s.size(), texts.size());
  EXPECT_NEAR(s[0].scalar, 1.0, 1e-12);
  EXPECT_NEAR(s[1].scalar, 0.5, 1e-12);
  EXPECT_NEAR(s[2].scalar, 1.0, 1e-12);
  EXPECT_EQ(s[3].scalar, 0.0);
  EXPECT_EQ(s[4].scalar, 0.0);
  EXPECT_EQ(lexical_score("", std::vector<std::string>{"x"})[0].scalar, 0.0);
}

TEST(Lexical, BoundedInUnitInterval) {
  std::mt19937 rng(31);
  const std::vector<std::string> words{"a", "red", "car", "dog", "blue", "the"};
  for (int trial = 0; trial < 500; ++trial) {
    auto phrase = [&] {
      std::string s;
      for (int i = 0, n = static_cast<int>(rng() % 6); i < n; ++i) s += words[rng() % words.size()] + " ";
      return s;
    };
    const auto v = lexical_score(phrase(), std::vector<std::string>{phrase()})[0].scalar;
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

class ScorerBackendTest : public ::testing::Test {
 protected:
  void SetUp() override {
    cache_ = std::make_shared<ResponseCache>();
    test::spit(media_ / "sample.png", "SAMPLE");
    sample_ = MediaHandle::from_file(MediaKind::image, media_ / "sample.png");
  }

  BackendClient& client(ApiKind api) {
    if (server_.port() == 0) server_.start();
    clients_.push_back(std::make_unique<BackendClient>(endpoint(server_, "b", api), cache_, media_.path(), fast_retry()));
    return *clients_.back();
  }

  MediaHandle image(const std::string& name, const std::string& bytes) {
    test::spit(media_ / name, bytes);
    return MediaHandle::from_file(MediaKind::image, media_ / name);
  }

  MockServer server_;
  test::TempDir media_;
  std::shared_ptr<ResponseCache> cache_;
  std::vector<std::unique_ptr<BackendClient>> clients_;
  MediaHandle sample_;
};

TEST_F(ScorerBackendTest, EmbeddingCosineAgainstTable) {
  install_script(server_, json{{"embeddings",
                                {{"text", {{"table", {{"same", {1, 0, 0}}, {"half", {1, 1, 0}}, {"ortho", {0, 1, 0}}}}}},
                                 {"media", {{"mode", "table"}, {"default", {1, 0, 0}}}}}}});
  auto& b = client(ApiKind::embed);
  const auto s = embedding_similarity_score(b, sample_, std::vector<std::string>{"half", "same", "ortho"});
  ASSERT_EQ(s.size(), 3u);
  EXPECT_NEAR(s[0].scalar, 1 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(s[1].scalar, 1.0, 1e-12);
  EXPECT_NEAR(s[2].scalar, 0.0, 1e-12);
  EXPECT_TRUE(embedding_similarity_score(b, sample_, std::vector<std::string>{}).empty());
}

TEST_F(ScorerBackendTest, EmbeddingDimensionMismatchNamesIndex) {
  install_script(server_, json{{"embeddings",
                                {{"text", {{"table", {{"ok", {1, 0, 0}}, {"short", {1, 0}}}}}},
                                 {"media", {{"mode", "table"}, {"default", {1, 0, 0}}}}}}});
  auto& b = client(ApiKind::embed);
  try {
    embedding_similarity_score(b, sample_, std::vector<std::string>{"ok", "short"});
    FAIL();
  } catch (const ScoringError& e) {
    EXPECT_NE(std::string(e.what()).find("text 1"), std::string::npos) << e.what();
  }
}

TEST_F(ScorerBackendTest, PreferenceScoresAgainstOriginalPrompt) {
  install_script(server_, json{{"preference", {{"mode", "length"}, {"base", 0.0}, {"per_byte", 1.0}}}});
  auto& b = client(ApiKind::preference);
  std::vector<Candidate> cs;
  for (const std::string bytes : {"xx", "x", "xxxx"}) {
    auto c = Candidate::make("rewrite " + bytes);
    c.media = image(bytes + ".png", bytes);
    cs.push_back(c);
  }
  const auto s = preference_score(b, "a crane at dawn", cs);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].scalar, 2.0);
  EXPECT_EQ(s[1].scalar, 1.0);
  EXPECT_EQ(s[2].scalar, 4.0);
  EXPECT_EQ(server_.requests().back().body.at("prompt"), "a crane at dawn");
  EXPECT_THROW(preference_score(b, "p", std::vector{Candidate::make("no media")}), ContractViolation);
}

TEST_F(ScorerBackendTest, PreferenceConstantPipesThrough) {
  install_script(server_, json{{"preference", {{"mode", "constant"}, {"value", 0.21}}}});
  auto& b = client(ApiKind::preference);
  auto c = Candidate::make("x");
  c.media = sample_;
  EXPECT_EQ(preference_score(b, "p", std::vector{c})[0].scalar, 0.21);
}

TEST_F(ScorerBackendTest, PreferenceBackendFailureIsScoringError) {
  install_script(server_, json{{"preference", {{"mode", "constant"}}}});
  server_.inject_faults("/v1/preference", 500, 100);
  auto& b = client(ApiKind::preference);
  auto c = Candidate::make("x");
  c.media = sample_;
  EXPECT_THROW(preference_score(b, "p", std::vector{c}), ScoringError);
}

class GramScorerTest : public ScorerBackendTest {
 protected:
  // Feature maps served per image hash and layer.
  void serve(std::map<std::pair<std::string, std::string>, FeatureMap> maps) {
    maps_ = std::move(maps);
    server_.on("/v1/features", [this](const json& request) {
      json features = json::array();
      const auto sha = request.at("image_sha256").get<std::string>();
      for (const auto& layer : request.at("layers")) {
        auto it = maps_.find({sha, layer.get<std::string>()});
        if (it == maps_.end()) continue;
        const auto& f = it->second;
        features.push_back({{"layer", f.layer_id}, {"channels", f.channels}, {"spatial", f.spatial}, {"values", f.values}});
      }
      return json{{"features", features}};
    });
  }

  ScorerSpec spec(const MediaHandle& style, const MediaHandle& content) {
    ScorerSpec s;
    s.kind = ScorerKind::gram_style;
    s.backend = "b";
    s.style_target = style;
    s.content_target = content;
    s.layers = {{"s1", LayerRole::style}, {"c1", LayerRole::content}};
    s.fill_defaults();
    return s;
  }

  std::map<std::pair<std::string, std::string>, FeatureMap> maps_;
};

TEST_F(GramScorerTest, HandComputedStyleAndContent) {
  const auto style = image("style.png", "STYLE");
  const auto content = image("content.png", "CONTENT");
  auto cand = Candidate::make("edit");
  cand.media = image("cand.png", "CAND");
  // Candidate style Gram [[3]] vs target [[1]]; content values differ by 2 in one of two cells.
  serve({{{cand.media->hash_hex(), "s1"}, {"s1", 1, 3, {1, 2, 2}}},
         {{cand.media->hash_hex(), "c1"}, {"c1", 1, 2, {2, 0}}},
         {{style.hash_hex(), "s1"}, {"s1", 1, 1, {1}}},
         {{content.hash_hex(), "c1"}, {"c1", 1, 2, {0, 0}}}});
  auto& b = client(ApiKind::features);
  const auto s = gram_style_score(b, std::vector{cand}, spec(style, content));
  ASSERT_EQ(s.size(), 1u);
  ASSERT_EQ(s[0].objectives.size(), 2u);
  EXPECT_DOUBLE_EQ(s[0].objectives[0].value, 4.0);
  EXPECT_DOUBLE_EQ(s[0].objectives[1].value, 2.0);
  EXPECT_EQ(s[0].objectives[0].direction, Direction::minimize);
  EXPECT_DOUBLE_EQ(s[0].scalar, -6.0);
}

TEST_F(GramScorerTest, IdenticalImageScoresZeroAndDistanceIsSymmetric) {
  std::mt19937_64 rng(41);
  const auto a = image("a.png", "A");
  const auto bimg = image("b.png", "B");
  const auto fa = random_map(rng, 6, 20, "s1");
  const auto fb = random_map(rng, 6, 20, "s1");
  const auto ca = random_map(rng, 3, 10, "c1");
  const auto cb = random_map(rng, 3, 10, "c1");
  serve({{{a.hash_hex(), "s1"}, fa}, {{a.hash_hex(), "c1"}, ca}, {{bimg.hash_hex(), "s1"}, fb},
         {{bimg.hash_hex(), "c1"}, cb}});
  auto& b = client(ApiKind::features);
  auto ca_cand = Candidate::make("a");
  ca_cand.media = a;
  auto cb_cand = Candidate::make("b");
  cb_cand.media = bimg;
  const auto self = gram_style_score(b, std::vector{ca_cand}, spec(a, a));
  EXPECT_EQ(self[0].objectives[0].value, 0.0);
  EXPECT_EQ(self[0].objectives[1].value, 0.0);
  const auto ab = gram_style_score(b, std::vector{ca_cand}, spec(bimg, bimg));
  const auto ba = gram_style_score(b, std::vector{cb_cand}, spec(a, a));
  EXPECT_DOUBLE_EQ(ab[0].objectives[0].value, ba[0].objectives[0].value);
  EXPECT_DOUBLE_EQ(ab[0].objectives[1].value, ba[0].objectives[1].value);
  EXPECT_GT(ab[0].objectives[0].value, 0.0);
}

TEST_F(GramScorerTest, ConstantFeaturesGiveZeroDistance) {
  install_script(server_, json{{"features", {{"mode", "constant"}, {"value", 0.5}}}});
  auto& b = client(ApiKind::features);
  std::vector<Candidate> cs;
  for (int i = 0; i < 3; ++i) {
    auto c = Candidate::make("e" + std::to_string(i));
    c.media = image("i" + std::to_string(i) + ".png", "img" + std::to_string(i));
    cs.push_back(c);
  }
  for (const auto& s : gram_style_score(b, cs, spec(sample_, sample_))) EXPECT_EQ(s.scalar, 0.0);
}

TEST_F(GramScorerTest, MissingLayerIsScoringErrorAndMissingMediaIsContract) {
  install_script(server_, json{{"features", {{"omit_layers", {"c1"}}}}});
  auto& b = client(ApiKind::features);
  auto c = Candidate::make("x");
  c.media = sample_;
  EXPECT_THROW(gram_style_score(b, std::vector{c}, spec(sample_, sample_)), ScoringError);
  EXPECT_THROW(gram_style_score(b, std::vector{Candidate::make("y")}, spec(sample_, sample_)), ContractViolation);
}

TEST(ScorerSpecTest, Validation) {
  ScorerSpec s;
  s.kind = ScorerKind::gram_style;
  s.backend = "feat";
  s.fill_defaults();
  EXPECT_EQ(s.objective_names, (std::vector<std::string>{"style", "content"}));
  EXPECT_EQ(s.weights, (std::vector<double>{1.0, 1.0}));
  try {
    s.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "scorer.style_target");
  }
  ScorerSpec lex;
  lex.kind = ScorerKind::lexical;
  lex.fill_defaults();
  EXPECT_NO_THROW(lex.validate());
  lex.weights = {1.0, 2.0};
  EXPECT_THROW(lex.validate(), ConfigError);
}

class CountingScorer : public Scorer {
 public:
  std::vector<ScoreValue> score(std::span<const Candidate> candidates) override {
    ++batches;
    seen += candidates.size();
    std::vector<std::string> texts;
    for (const auto& c : candidates) texts.push_back(c.text);
    return lexical_score("a red car", texts);
  }
  std::size_t backend_calls() const override { return seen; }
  int batches = 0;
  std::size_t seen = 0;
};

TEST(BatchScorerTest, OrderAlignedWithDirectScores) {
  BatchScorer scorer(std::make_unique<LexicalScorer>("a red car"), {1.0});
  EXPECT_TRUE(scorer.score(std::vector<Candidate>{}).empty());
  std::vector<std::string> texts{"a car", "blue dog", "a red car", "red", "car red a", "dog"};
  std::mt19937 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(texts.begin(), texts.end(), rng);
    std::vector<Candidate> cs;
    for (const auto& t : texts) cs.push_back(Candidate::make(t));
    const auto out = batch_score(scorer, cs);
    const auto direct = lexical_score("a red car", texts);
    ASSERT_EQ(out.size(), texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
      EXPECT_EQ(out[i].text, texts[i]);
      EXPECT_EQ(out[i].scalar(), direct[i].scalar);
    }
  }
}

TEST(BatchScorerTest, MemoSkipsRepeatedCandidates) {
  auto owned = std::make_unique<CountingScorer>();
  auto* counting = owned.get();
  BatchScorer scorer(std::move(owned), {1.0});
  const std::vector<Candidate> batch{Candidate::make("a car"), Candidate::make("red"), Candidate::make("a car")};
  scorer.score(batch);
  EXPECT_EQ(counting->seen, 2u);
  scorer.score(batch);
  EXPECT_EQ(counting->seen, 2u);
  EXPECT_EQ(counting->batches, 1);
  EXPECT_GE(scorer.cache_hits(), 3u);
}

TEST(BatchScorerTest, AppliesWeights) {
  BatchScorer scorer(std::make_unique<LexicalScorer>("a cat"), {2.0});
  EXPECT_NEAR(scorer.score(std::vector{Candidate::make("a dog")})[0].scalar(), 1.0, 1e-12);
}

}  // namespace
}  // namespace mils
