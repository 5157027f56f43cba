#include <algorithm>
#include <cctype>
#include <fmt/format.h>
#include <fstream>
#include <sstream>

#include "mils/errors.hpp"
#include "mils/media.hpp"
#include "mils/prompts.hpp"

namespace mils {

namespace {

bool is_placeholder_char(char c) {
  return std::islower(static_cast<unsigned char>(c)) || c == '_';
}

bool is_known_placeholder(std::string_view name) {
  return std::find(std::begin(kPlaceholders), std::end(kPlaceholders), name) != std::end(kPlaceholders);
}

// Visits every "{identifier}" token in `body`; the callback receives (start, length, name).
template <typename Fn>
void scan_placeholders(std::string_view body, Fn&& fn) {
  std::size_t pos = 0;
  while ((pos = body.find('{', pos)) != std::string_view::npos) {
    std::size_t end = pos + 1;
    while (end < body.size() && is_placeholder_char(body[end])) ++end;
    if (end < body.size() && body[end] == '}' && end > pos + 1) {
      fn(pos, end - pos + 1, body.substr(pos + 1, end - pos - 1));
      pos = end + 1;
    } else {
      ++pos;
    }
  }
}

std::string trim(std::string_view s) {
  auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  auto last = s.find_last_not_of(" \t\r\n\f\v");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

PromptTemplate::PromptTemplate(std::string name, std::string body) : name_(std::move(name)), body_(std::move(body)) {
  scan_placeholders(body_, [&](std::size_t, std::size_t, std::string_view ph) {
    if (!is_known_placeholder(ph)) {
      throw TemplateError("template '" + name_ + "' uses unknown placeholder {" + std::string(ph) + "}");
    }
    if (std::find(placeholders_.begin(), placeholders_.end(), ph) == placeholders_.end()) {
      placeholders_.emplace_back(ph);
    }
  });
}

std::string render_template(const PromptTemplate& tmpl, const Bindings& bindings) {
  const std::string_view body = tmpl.body();
  std::string out;
  out.reserve(body.size());
  std::size_t copied = 0;
  scan_placeholders(body, [&](std::size_t start, std::size_t length, std::string_view ph) {
    auto it = bindings.find(ph);
    if (it == bindings.end()) {
      throw TemplateError("template '" + tmpl.name() + "' is missing a binding for {" + std::string(ph) + "}");
    }
    out.append(body.substr(copied, start - copied));
    out.append(it->second);
    copied = start + length;
  });
  out.append(body.substr(copied));
  return out;
}

TemplateStore::TemplateStore() : templates_(builtin_templates()) {}

TemplateStore TemplateStore::load_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("template directory not found: " + dir.string());
  TemplateStore store;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto bytes = read_file_bytes(entry.path());
    store.add(PromptTemplate(entry.path().filename().string(), std::string(bytes.begin(), bytes.end())));
  }
  return store;
}

void TemplateStore::save_directory(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [name, tmpl] : templates_) write_file_atomic(dir / name, tmpl.body());
}

void TemplateStore::add(PromptTemplate tmpl) {
  std::string name = tmpl.name();
  templates_.insert_or_assign(std::move(name), std::move(tmpl));
}

const PromptTemplate& TemplateStore::get(std::string_view name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw TemplateError("unknown template '" + std::string(name) + "'");
  return it->second;
}

bool TemplateStore::contains(std::string_view name) const { return templates_.find(name) != templates_.end(); }

std::vector<std::string> TemplateStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, tmpl] : templates_) out.push_back(name);
  return out;
}

std::string FeedbackBlock::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i > 0) out += '\n';
    out += lines[i].score_display;
    out += ": ";
    out += lines[i].text;
  }
  return out;
}

std::vector<std::string> FeedbackBlock::texts() const {
  std::vector<std::string> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(l.text);
  return out;
}

FeedbackBlock format_feedback(std::span<const Candidate> selected, FeedbackMode mode) {
  FeedbackBlock block;
  block.lines.reserve(selected.size());
  for (const auto& c : selected) {
    if (!c.score) throw ContractViolation("format_feedback: candidate '" + c.text + "' is unscored");
    std::string display;
    if (mode == FeedbackMode::single) {
      display = fmt::format("{:.3f}", c.score->scalar);
    } else {
      display = "(";
      for (std::size_t i = 0; i < c.score->objectives.size(); ++i) {
        if (i > 0) display += ", ";
        display += fmt::format("{:.3f}", c.score->objectives[i].value);
      }
      display += ")";
    }
    block.lines.push_back({std::move(display), c.text});
  }
  return block;
}

std::vector<std::string> parse_numbered_list(std::string_view raw) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    std::size_t nl = raw.find('\n', pos);
    if (nl == std::string_view::npos) nl = raw.size();
    std::string_view line = raw.substr(pos, nl - pos);
    pos = nl + 1;

    std::size_t i = 0;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t digits = i;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i == digits || i >= line.size() || (line[i] != '.' && line[i] != ')')) continue;
    ++i;
    if (i >= line.size() || !std::isspace(static_cast<unsigned char>(line[i]))) continue;
    std::string payload = trim(line.substr(i));
    if (!payload.empty()) out.push_back(std::move(payload));
  }
  return out;
}

}  // namespace mils
