#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mils/core.hpp"

namespace mils {

/// Placeholder names a template body may reference, written as {name}.
inline constexpr std::string_view kPlaceholders[] = {
    "descriptions", "requested_number", "init_description", "image_caption", "audio_caption", "class_label",
};

using Bindings = std::map<std::string, std::string, std::less<>>;

class PromptTemplate {
 public:
  /// Throws TemplateError if the body references an unknown {placeholder}.
  PromptTemplate(std::string name, std::string body);

  const std::string& name() const { return name_; }
  const std::string& body() const { return body_; }

  /// Placeholders in order of first occurrence.
  const std::vector<std::string>& placeholders() const { return placeholders_; }

 private:
  std::string name_;
  std::string body_;
  std::vector<std::string> placeholders_;
};

/// Substitutes each {placeholder} exactly once, left to right; substituted text is
/// never rescanned. Throws TemplateError naming the first unbound placeholder.
std::string render_template(const PromptTemplate& tmpl, const Bindings& bindings);

// Names of the stock task templates.
namespace templates {
inline constexpr std::string_view kCaptionImage = "caption_image";
inline constexpr std::string_view kCaptionVideo = "caption_video";
inline constexpr std::string_view kCaptionAudio = "caption_audio";
inline constexpr std::string_view kT2iEnhance = "t2i_enhance";
inline constexpr std::string_view kStyleTransfer = "style_transfer";
inline constexpr std::string_view kCrossModalArithmetic = "cross_modal_arithmetic";
inline constexpr std::string_view kBootstrapAudio = "bootstrap_audio";
}  // namespace templates

/// The stock templates compiled into the library.
const std::map<std::string, PromptTemplate, std::less<>>& builtin_templates();

/// Template lookup: directory entries override the built-ins by name.
class TemplateStore {
 public:
  TemplateStore();  // built-ins only

  /// Loads every regular file in `dir`; the file name is the template name.
  static TemplateStore load_directory(const std::filesystem::path& dir);

  /// Writes each template to `dir/<name>` byte for byte.
  void save_directory(const std::filesystem::path& dir) const;

  void add(PromptTemplate tmpl);
  const PromptTemplate& get(std::string_view name) const;  // throws TemplateError
  bool contains(std::string_view name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

enum class FeedbackMode { single, multi };

struct FeedbackLine {
  std::string score_display;
  std::string text;
};

struct FeedbackBlock {
  std::vector<FeedbackLine> lines;

  /// "score: text" rows joined by newlines.
  std::string to_string() const;
  std::vector<std::string> texts() const;
};

/// single: "0.873: text" using the scalar; multi: "(2.000, 1.000): text" using the raw
/// objective values. Order follows `selected`.
FeedbackBlock format_feedback(std::span<const Candidate> selected, FeedbackMode mode);

/// Payloads of lines shaped like `  12. text` or `3) text`; everything else is skipped.
std::vector<std::string> parse_numbered_list(std::string_view raw);

}  // namespace mils
