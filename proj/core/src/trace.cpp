#include <sstream>

#include <nlohmann/json.hpp>

#include "mils/core.hpp"
#include "mils/errors.hpp"

namespace mils {

std::string RunTrace::to_jsonl() const {
  std::string out;
  for (const auto& s : steps) {
    nlohmann::ordered_json line;
    line["step"] = s.step;
    line["best_scalar"] = s.best_scalar;
    line["mean_topk_scalar"] = s.mean_topk_scalar;
    line["topk_texts"] = s.topk_texts;
    line["generator_calls"] = s.generator_calls;
    line["scorer_calls"] = s.scorer_calls;
    line["cache_hits"] = s.cache_hits;
    out += line.dump();
    out += '\n';
  }
  return out;
}

std::string RunTrace::to_curve_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "step,best_scalar,mean_topk_scalar\n";
  for (const auto& s : steps) out << s.step << ',' << s.best_scalar << ',' << s.mean_topk_scalar << '\n';
  return out.str();
}

RunTrace RunTrace::from_jsonl(std::string_view text) {
  RunTrace trace;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      StepRecord s;
      s.step = j.at("step").get<int>();
      s.best_scalar = j.at("best_scalar").get<double>();
      s.mean_topk_scalar = j.at("mean_topk_scalar").get<double>();
      s.topk_texts = j.at("topk_texts").get<std::vector<std::string>>();
      s.generator_calls = j.at("generator_calls").get<int>();
      s.scorer_calls = j.at("scorer_calls").get<int>();
      s.cache_hits = j.at("cache_hits").get<int>();
      trace.steps.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(std::string("malformed trace line: ") + e.what());
    }
  }
  return trace;
}

}  // namespace mils
