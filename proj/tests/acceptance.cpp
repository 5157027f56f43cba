// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "mils/cli.hpp"
#include "mils/errors.hpp"
#include "mils/solver.hpp"
#include "mils/task_config.hpp"
#include "mockserve_runner.hpp"
#include "oracle.hpp"
#include "support.hpp"

namespace mils {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Verdict {
  bool ok = true;
  std::string detail;
};

// Collects the first failure message; later checks still run.
class Checker {
 public:
  void expect(bool cond, const std::string& what) {
    if (!cond && verdict_.ok) {
      verdict_.ok = false;
      verdict_.detail = what;
    }
  }
  void note(const std::string& detail) {
    if (verdict_.ok) verdict_.detail = detail;
  }
  Verdict done() const { return verdict_; }

 private:
  Verdict verdict_;
};

std::string fmt_double(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

std::vector<std::string> nonempty_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

RunConfig loop_config(std::uint64_t seed, int k, int n, int requested) {
  RunConfig r;
  r.top_k = k;
  r.max_steps = n;
  r.requested_number = requested;
  r.seed = seed;
  return r;
}

SolveResult lexical_run(const std::string& target, const std::vector<std::string>& vocab, int max_tokens,
                        const RunConfig& run) {
  MutationGenerator gen(vocab, max_tokens);
  BatchScorer scorer(std::make_unique<LexicalScorer>(target), {1.0});
  return run_optimization(run, gen, scorer, {});
}

// 1. Best-so-far curves over 20 seeded lexical-oracle runs.
Verdict loop_shape() {
  Checker c;
  const std::vector<std::string> vocab{"a", "red", "car", "dog", "blue"};
  int monotone = 0, improved = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto trace = lexical_run("a red car", vocab, 3, loop_config(seed, 5, 10, 10)).trace;
    c.expect(trace.steps.size() == 11, "expected 11 step records");
    bool mono = true;
    for (std::size_t i = 1; i < trace.steps.size(); ++i) mono &= trace.steps[i].best_scalar >= trace.steps[i - 1].best_scalar;
    monotone += mono;
    improved += trace.steps.back().best_scalar > trace.steps.front().best_scalar;
  }
  c.expect(monotone == 20, "non-decreasing in " + std::to_string(monotone) + "/20 runs");
  c.expect(improved >= 18, "strictly improved in " + std::to_string(improved) + "/20 runs");
  c.note("non-decreasing 20/20, improved " + std::to_string(improved) + "/20");
  return c.done();
}

// 2. Final best against exhaustive search over every phrase of <= 3 tokens.
Verdict oracle_optimality() {
  Checker c;
  const std::vector<std::string> vocab{"a", "red", "car", "on", "the", "street", "blue", "dog"};
  const auto universe = test::enumerate_phrases(vocab, 3);
  c.expect(universe.size() <= 585, "universe too large");
  int matched = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed * 7919 + 1);
    std::string target;
    for (int i = 0, n = 2 + static_cast<int>(rng() % 4); i < n; ++i) target += (i ? " " : "") + vocab[rng() % vocab.size()];
    const auto scores = lexical_score(target, universe);
    double oracle = -1.0;
    for (const auto& s : scores) oracle = std::max(oracle, s.scalar);
    std::set<std::string> argmax;
    for (std::size_t i = 0; i < universe.size(); ++i) {
      if (scores[i].scalar == oracle) argmax.insert(normalize_text(universe[i]));
    }
    const auto result = lexical_run(target, vocab, 3, loop_config(seed, 5, 15, 10));
    const double got = result.best.scalar();
    if (argmax.count(result.best.normalized_key)) {
      ++matched;
    } else {
      c.expect(std::abs(got - oracle) <= 1e-9, "seed " + std::to_string(seed) + " target '" + target + "': best " +
                                                   fmt_double(got) + " vs oracle " + fmt_double(oracle));
    }
  }
  c.expect(matched >= 19, "matched oracle in " + std::to_string(matched) + "/20 seeds");
  c.note("matched " + std::to_string(matched) + "/20 over " + std::to_string(universe.size()) + " phrases");
  return c.done();
}

// 3. Bootstrap-size sweep on the oracle stack, mean over 20 seeds.
Verdict init_set_monotonicity() {
  Checker c;
  const std::vector<std::string> sizes{"10", "100", "1000"};
  std::vector<double> sum(sizes.size(), 0.0);
  test::TempDir work;
  for (int seed = 0; seed < 20; ++seed) {
    const auto dir = work / ("seed" + std::to_string(seed));
    cli::SweepOptions opts;
    opts.config_path = test::write_oracle_stack(dir, static_cast<std::uint64_t>(seed));
    opts.param = "bootstrap.limit";
    opts.values = sizes;
    opts.out_dir = dir / "sweep";
    opts.jobs = 3;
    std::ostringstream err;
    const int code = cli::cmd_sweep(opts, err);
    c.expect(code == cli::kExitOk, "sweep failed: " + err.str());
    if (code != cli::kExitOk) continue;
    const auto rows = nonempty_lines(test::slurp(dir / "sweep" / "summary.csv"));
    for (std::size_t i = 0; i < sizes.size() && i + 1 < rows.size(); ++i) {
      const auto& row = rows[i + 1];
      const auto a = row.find(',');
      sum[i] += std::stod(row.substr(a + 1, row.rfind(',') - a - 1));
    }
  }
  std::string means;
  for (std::size_t i = 0; i < sizes.size(); ++i) means += (i ? ", " : "") + sizes[i] + ": " + fmt_double(sum[i] / 20);
  for (std::size_t i = 1; i < sizes.size(); ++i) c.expect(sum[i] >= sum[i - 1], "means not monotone (" + means + ")");
  c.note("means " + means);
  return c.done();
}

// 4. top_k_select and epsilon = 0 against an independent sort.
Verdict selection_correctness() {
  Checker c;
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 10000);
    const int distinct_scores = 1 + static_cast<int>(rng() % 50);  // small ranges force ties
    std::vector<Candidate> batch;
    std::map<std::string, double> best_by_key;
    for (int i = 0; i < n; ++i) {
      auto cand = Candidate::make("t" + std::to_string(rng() % (2 * n + 1)));
      const double v = static_cast<double>(rng() % distinct_scores) / distinct_scores;
      cand.score = ScoreValue::single("s", v);
      auto [it, fresh] = best_by_key.emplace(cand.normalized_key, v);
      if (!fresh) it->second = std::max(it->second, v);
      batch.push_back(std::move(cand));
    }
    CandidatePool pool;
    pool.merge(batch);
    std::vector<std::pair<std::string, double>> sorted(best_by_key.begin(), best_by_key.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    const std::size_t k = 1 + rng() % 100;
    const auto top = top_k_select(pool, k);
    const auto eps0 = epsilon_greedy_select(pool, k, 0.0, rng());
    const std::size_t want = std::min(k, sorted.size());
    bool same = top.size() == want && eps0.size() == want;
    for (std::size_t i = 0; same && i < want; ++i) {
      same = top[i].normalized_key == sorted[i].first && top[i].scalar() == sorted[i].second &&
             eps0[i].normalized_key == sorted[i].first;
    }
    c.expect(same, "mismatch on trial " + std::to_string(trial));
    if (!same) break;
  }
  c.note("1000 pools agree with the sort oracle");
  return c.done();
}

// 5. Gram numerics on random maps up to 64 x 256.
Verdict gram_numerics() {
  Checker c;
  std::mt19937_64 rng(505);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.05, 20.0);
  double worst_eig = 0.0;
  for (int trial = 0; trial < 60; ++trial) {
    const int channels = trial == 0 ? 64 : 1 + static_cast<int>(rng() % 64);
    const int spatial = trial == 0 ? 256 : 1 + static_cast<int>(rng() % 256);
    FeatureMap f{"l", channels, spatial, std::vector<double>(static_cast<std::size_t>(channels) * spatial)};
    for (auto& v : f.values) v = normal(rng);
    const auto g = gram_matrix(f);
    Eigen::MatrixXd m(channels, channels);
    for (int r = 0; r < channels; ++r)
      for (int col = 0; col < channels; ++col) m(r, col) = g(r, col);
    c.expect(m == m.transpose(), "gram not symmetric");
    const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    worst_eig = std::min(worst_eig, min_eig);
    c.expect(min_eig >= -1e-9, "eigenvalue " + fmt_double(min_eig));

    const double t = scale(rng);
    FeatureMap scaled = f;
    for (auto& v : scaled.values) v *= t;
    const auto gs = gram_matrix(scaled);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      const double want = t * t * g.data[i];
      if (std::abs(gs.data[i] - want) > 1e-6 * std::max(std::abs(want), 1e-300)) {
        c.expect(false, "t^2 scaling off at entry " + std::to_string(i));
        break;
      }
    }
    c.expect(mean_squared_difference(g.data, gram_matrix(f).data) == 0.0, "nonzero self distance");
  }

  // Self distance through the scorer and backend path.
  MockServer server;
  FeatureMap served{"", 64, 256, std::vector<double>(64 * 256)};
  for (auto& v : served.values) v = normal(rng);
  server.on("/v1/features", [&served](const json& request) {
    json features = json::array();
    for (const auto& layer : request.at("layers")) {
      features.push_back({{"layer", layer}, {"channels", served.channels}, {"spatial", served.spatial}, {"values", served.values}});
    }
    return json{{"features", features}};
  });
  server.start();
  test::TempDir dir;
  test::spit(dir / "img.png", "IMG");
  const auto img = MediaHandle::from_file(MediaKind::image, dir / "img.png");
  BackendClient client(test::endpoint(server, "feat", ApiKind::features), std::make_shared<ResponseCache>(), dir.path(),
                       test::fast_retry());
  ScorerSpec spec;
  spec.kind = ScorerKind::gram_style;
  spec.backend = "feat";
  spec.style_target = img;
  spec.content_target = img;
  spec.layers = {{"conv1", LayerRole::style}, {"conv4", LayerRole::content}};
  spec.fill_defaults();
  auto cand = Candidate::make("identity");
  cand.media = img;
  const auto s = gram_style_score(client, std::vector{cand}, spec);
  c.expect(s[0].objectives[0].value == 0.0 && s[0].objectives[1].value == 0.0, "scorer self distance nonzero");
  c.note("60 maps, min eigenvalue " + fmt_double(worst_eig));
  return c.done();
}

// 6. Templates against golden files; 50 feedback lines survive rendering in order.
Verdict prompt_fidelity() {
  Checker c;
  const std::vector<std::string> names{"bootstrap_audio", "caption_image", "caption_video", "caption_audio",
                                       "t2i_enhance", "style_transfer", "cross_modal_arithmetic"};
  const auto store = TemplateStore::load_directory(test::template_store_dir());
  for (const auto& name : names) {
    const auto golden = test::slurp(test::golden_dir() / "templates" / name);
    c.expect(!golden.empty(), "missing golden " + name);
    c.expect(builtin_templates().at(name).body() == golden, "built-in " + name + " differs from golden");
    c.expect(store.get(name).body() == golden, "stored " + name + " differs from golden");
  }
  std::vector<Candidate> selected;
  for (int i = 0; i < 50; ++i) selected.push_back(test::scored("feedback caption " + std::to_string(i), 1.0 - i * 0.01));
  const auto block = format_feedback(selected, FeedbackMode::single);
  const auto prompt = render_template(builtin_templates().at("caption_image"),
                                      {{"descriptions", block.to_string()}, {"requested_number", "50"}});
  std::size_t pos = 0, found = 0;
  for (const auto& line : block.lines) {
    const auto row = line.score_display + ": " + line.text + "\n";
    const auto at = prompt.find(row, pos);
    if (at == std::string::npos) break;
    pos = at + row.size();
    ++found;
  }
  c.expect(found == 50, "only " + std::to_string(found) + " feedback lines in order");
  c.note("7 templates byte-identical, 50/50 lines in order");
  return c.done();
}

// 7. Numbered-list parser round trip and fuzzing.
Verdict parser_robustness() {
  Checker c;
  std::mt19937_64 rng(707);
  const std::string letters = "abcdefghijklmnopqrstuvwxyz";
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::string> items;
    std::string text = trial % 3 == 0 ? "Here are the captions:\n" : "";
    for (int i = 0, n = 1 + static_cast<int>(rng() % 60); i < n; ++i) {
      std::string item;
      for (int w = 0, words = 1 + static_cast<int>(rng() % 8); w < words; ++w) {
        if (w) item += ' ';
        for (int l = 0, len = 1 + static_cast<int>(rng() % 9); l < len; ++l) item += letters[rng() % letters.size()];
      }
      items.push_back(item);
      text += std::to_string(i + 1) + (rng() % 2 ? ". " : ") ") + item + (rng() % 4 == 0 ? "\r\n" : "\n");
      if (rng() % 5 == 0) text += "\n";
    }
    const auto parsed = parse_numbered_list(text);
    c.expect(parsed == items, "round trip failed on trial " + std::to_string(trial));
    if (parsed != items) break;
  }
  const std::string alphabet = "0123456789.) \t\n\r-abcXYZ\x01\x7f\xc3\xa9\xff";
  int thrown = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    std::string input;
    for (int i = 0, n = static_cast<int>(rng() % 200); i < n; ++i) input += alphabet[rng() % alphabet.size()];
    try {
      for (const auto& item : parse_numbered_list(input)) {
        if (item.empty()) ++thrown;
      }
    } catch (...) {
      ++thrown;
    }
  }
  c.expect(thrown == 0, std::to_string(thrown) + " fuzzed inputs threw or produced empty items");
  c.note("1000 round trips, 10000 fuzzed inputs");
  return c.done();
}

// 8. A repeated captioning run is served entirely from the cache.
Verdict cache_accounting() {
  Checker c;
  test::TempDir work;
  const auto log = work / "requests.jsonl";
  test::BackgroundMockserve mock(test::fixture_dir() / "mock_stack" / "script.json", log);
  c.expect(mock.port() > 0, "mockserve did not start");
  if (mock.port() <= 0) return c.done();
  const auto config = test::instantiate_config("caption_image.json", mock.port(), work.path());
  const auto count_text_embeddings = [&] {
    int n = 0;
    for (const auto& line : nonempty_lines(test::slurp(log))) {
      const auto entry = json::parse(line);
      if (entry.at("path") == "/v1/embeddings" && !entry.at("body").contains("kind")) ++n;
    }
    return n;
  };
  std::ostringstream err;
  c.expect(cli::cmd_run(config, {}, work / "first", err) == cli::kExitOk, "first run failed: " + err.str());
  const int first = count_text_embeddings();
  c.expect(first > 0, "first run made no text-embedding calls");
  c.expect(cli::cmd_run(config, {}, work / "second", err) == cli::kExitOk, "second run failed: " + err.str());
  const int second = count_text_embeddings() - first;
  c.expect(second == 0, std::to_string(second) + " text-embedding calls on the second run");
  c.expect(test::slurp(work / "first" / "trace.jsonl").size() > 0, "missing trace");
  c.note("first run " + std::to_string(first) + " text-embedding requests, second run " + std::to_string(second));
  return c.done();
}

// 9. Hyperparameter defaults with nothing set.
Verdict hyperparameter_defaults() {
  Checker c;
  test::TempDir dir;
  test::spit(dir / "image.png", "IMG");
  test::spit(dir / "boot.txt", "a cat\n");
  const json endpoints = json::array(
      {{{"name", "chat"}, {"base_url", "http://127.0.0.1:1"}, {"api", "chat"}, {"model", "c"}},
       {{"name", "embed"}, {"base_url", "http://127.0.0.1:1"}, {"api", "embed"}, {"model", "e"}},
       {{"name", "img"}, {"base_url", "http://127.0.0.1:1"}, {"api", "image_gen"}, {"model", "i"}},
       {{"name", "pref"}, {"base_url", "http://127.0.0.1:1"}, {"api", "preference"}, {"model", "p"}}});
  for (const auto* kind : {"caption_image", "caption_video", "caption_audio"}) {
    const json doc{{"kind", kind},
                   {"endpoints", endpoints},
                   {"test_sample", "image.png"},
                   {"bootstrap", {{"source", "file"}, {"path", "boot.txt"}}},
                   {"generator", {{"backend", "chat"}}},
                   {"scorer", {{"backend", "embed"}}}};
    const auto run = parse_engine_config(doc, dir.path()).task.run;
    c.expect(run.top_k == 50 && run.max_steps == 10,
             std::string(kind) + " resolved K=" + std::to_string(run.top_k) + " N=" + std::to_string(run.max_steps));
  }
  const json t2i{{"kind", "t2i_enhance"},
                 {"endpoints", endpoints},
                 {"init_description", "a crane"},
                 {"generator", {{"backend", "chat"}, {"media_backend", "img"}}},
                 {"scorer", {{"backend", "pref"}}}};
  const auto run = parse_engine_config(t2i, dir.path()).task.run;
  c.expect(run.max_steps == 20, "t2i resolved N=" + std::to_string(run.max_steps));
  c.note("captioning K=50 N=10, t2i N=20");
  return c.done();
}

// 10. Cross-modal arithmetic end to end over the mock stack.
Verdict cross_modal_smoke() {
  Checker c;
  test::TempDir work;
  const auto log = work / "requests.jsonl";
  test::BackgroundMockserve mock(test::fixture_dir() / "mock_stack" / "script.json", log);
  c.expect(mock.port() > 0, "mockserve did not start");
  if (mock.port() <= 0) return c.done();
  const auto config = test::instantiate_config("cross_modal.json", mock.port(), work.path());
  const auto out = work / "out";
  std::ostringstream err;
  c.expect(cli::cmd_run(config, {}, out, err) == cli::kExitOk, "run failed: " + err.str());
  for (const auto* name : {"manifest.json", "trace.jsonl", "curve.csv", "best.txt", "result.json",
                           "trace.image_caption.jsonl", "trace.audio_caption.jsonl"}) {
    c.expect(fs::exists(out / name), std::string("missing ") + name);
  }
  if (!fs::exists(out / "result.json")) return c.done();
  const auto result = json::parse(test::slurp(out / "result.json"));
  c.expect(result.contains("best_media") && fs::exists(result["best_media"]["path"].get<std::string>()),
           "missing best media file");
  const auto image_caption = result["metadata"].value("image_caption", "");
  const auto audio_caption = result["metadata"].value("audio_caption", "");
  int combine = 0;
  for (const auto& line : nonempty_lines(test::slurp(log))) {
    const auto entry = json::parse(line);
    if (entry.at("path") != "/v1/chat/completions") continue;
    const auto prompt = entry["body"]["messages"][0]["content"].get<std::string>();
    if (prompt.find("Image caption:") == std::string::npos) continue;
    ++combine;
    c.expect(prompt.find("Image caption: " + image_caption + "\n") != std::string::npos, "image caption not verbatim");
    c.expect(prompt.find("Audio caption: " + audio_caption + "\n") != std::string::npos, "audio caption not verbatim");
  }
  c.expect(combine == 1, std::to_string(combine) + " combine requests");
  c.note("combined prompt '" + result["metadata"].value("combined_prompt", "") + "'");
  return c.done();
}

struct Criterion {
  int id;
  std::string name;
  std::function<Verdict()> run;
  double budget_seconds;
};

}  // namespace
}  // namespace mils

int main() {
  using namespace mils;
  spdlog::set_level(spdlog::level::off);
  const std::vector<Criterion> criteria{
      {1, "loop shape over seeded oracle runs", loop_shape, 10.0},
      {2, "oracle optimality on enumerable instances", oracle_optimality, 30.0},
      {3, "init-set-size monotonicity", init_set_monotonicity, 60.0},
      {4, "selection correctness", selection_correctness, 0.0},
      {5, "gram scorer numerics", gram_numerics, 0.0},
      {6, "prompt fidelity", prompt_fidelity, 0.0},
      {7, "parser robustness", parser_robustness, 0.0},
      {8, "cache accounting", cache_accounting, 0.0},
      {9, "hyperparameter defaults", hyperparameter_defaults, 0.0},
      {10, "end-to-end cross-modal smoke", cross_modal_smoke, 5.0},
  };
  int failures = 0;
  for (const auto& crit : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = crit.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (crit.budget_seconds > 0 && secs > crit.budget_seconds) {
      v = {false, "took " + fmt_double(secs) + " s, budget " + fmt_double(crit.budget_seconds) + " s"};
    }
    failures += !v.ok;
    std::cout << (v.ok ? "PASS" : "FAIL") << " AC" << crit.id << " " << crit.name << " (" << fmt_double(secs)
              << " s): " << v.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
