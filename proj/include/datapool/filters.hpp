#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace datapool {

/// Heuristic quality rules. Evaluated in a fixed order:
/// too_short, too_long, non_text, repetitive. The first failing rule names
/// the rejection.
struct FilterRuleSet {
  /// Length bounds, in code points.
  std::int64_t min_chars = 32;
  std::int64_t max_chars = 1'048'576;
  /// Max share of code points that are not letters, marks, digits,
  /// whitespace, or punctuation.
  double max_non_text_ratio = 0.3;
  /// Max share of non-blank lines that repeat an earlier line verbatim.
  double max_repetition_ratio = 0.5;

  bool enable_min_chars = true;
  bool enable_max_chars = true;
  bool enable_non_text = true;
  bool enable_repetition = true;

  /// Throws Error(validation) unless min_chars < max_chars and ratios are in [0,1].
  void validate() const;

  /// Parses "key = value" lines; '#' starts a comment. Unknown keys are an error.
  static FilterRuleSet parse(std::string_view config_text);
  static FilterRuleSet load(const std::filesystem::path& path);
};

struct FilterVerdict {
  /// Empty when the document is accepted; otherwise the failing rule id.
  std::optional<std::string> rejection;

  bool accepted() const { return !rejection.has_value(); }
};

/// Share of code points outside letters/marks/digits/whitespace/punctuation.
/// 0 for empty text.
double non_text_ratio(std::string_view normalized_text);

/// Duplicate non-blank lines divided by non-blank lines (0 when none).
/// 100 identical lines give 99/100.
double repetition_ratio(std::string_view normalized_text);

FilterVerdict apply_filters(std::string_view normalized_text, const FilterRuleSet& rules);

}  // namespace datapool
