#include <fstream>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "mils/errors.hpp"
#include "mils/generators.hpp"

namespace mils {

namespace {

void append_unique(std::vector<Candidate>& out, std::unordered_set<std::string>& seen, std::string text) {
  auto c = Candidate::make(std::move(text), 0);
  if (c.normalized_key.empty() || !seen.insert(c.normalized_key).second) return;
  out.push_back(std::move(c));
}

}  // namespace

std::vector<Candidate> bootstrap_build(BackendClient& chat, const std::vector<std::string>& labels,
                                       const PromptTemplate& tmpl, int per_label, const Sampling& sampling) {
  if (per_label < 1) throw ContractViolation("per_label must be >= 1");
  std::vector<Candidate> out;
  std::unordered_set<std::string> seen;
  for (const auto& label : labels) {
    try {
      const std::vector<ChatMessage> messages{{"user", render_template(tmpl, {{"class_label", label}})}};
      auto lines = parse_numbered_list(chat.chat_complete(messages, sampling));
      if (lines.size() > static_cast<std::size_t>(per_label)) lines.resize(static_cast<std::size_t>(per_label));
      for (auto& line : lines) append_unique(out, seen, std::move(line));
    } catch (const BackendError& e) {
      spdlog::warn("bootstrap: skipping label '{}': {}", label, e.what());
    }
  }
  if (out.empty()) throw BootstrapError("bootstrap produced no candidates from " + std::to_string(labels.size()) + " label(s)");
  return out;
}

std::vector<Candidate> bootstrap_load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read bootstrap file " + path.string());
  std::vector<Candidate> out;
  std::unordered_set<std::string> seen;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t\f\v") == std::string::npos) continue;
    append_unique(out, seen, std::move(line));
  }
  if (in.bad()) throw IoError("read failed: " + path.string());
  return out;
}

void bootstrap_write(const std::filesystem::path& path, std::span<const std::string> texts) {
  std::string body;
  for (const auto& t : texts) {
    body += t;
    body += '\n';
  }
  write_file_atomic(path, body);
}

}  // namespace mils
