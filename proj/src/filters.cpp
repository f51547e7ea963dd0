#include "datapool/filters.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "datapool/error.hpp"
#include "datapool/text.hpp"

namespace datapool {
namespace {

bool is_text_code_point(UChar32 c) {
  const std::int32_t mask = U_GET_GC_MASK(c);
  return (mask & (U_GC_L_MASK | U_GC_M_MASK | U_GC_ND_MASK | U_GC_P_MASK)) != 0 ||
         u_hasBinaryProperty(c, UCHAR_WHITE_SPACE);
}

std::string_view strip_ascii(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  fail(ErrorKind::validation, "invalid_filter_config",
       "'" + std::string(key) + "' expects a boolean, got '" + std::string(value) + "'");
}

std::int64_t parse_int(std::string_view key, std::string_view value) {
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    fail(ErrorKind::validation, "invalid_filter_config",
         "'" + std::string(key) + "' expects an integer, got '" + std::string(value) + "'");
  }
  return out;
}

double parse_fraction(std::string_view key, std::string_view value) {
  std::istringstream in{std::string(value)};
  in.imbue(std::locale::classic());
  double out = 0;
  if (!(in >> out) || !in.eof()) {
    fail(ErrorKind::validation, "invalid_filter_config",
         "'" + std::string(key) + "' expects a number, got '" + std::string(value) + "'");
  }
  return out;
}

}  // namespace

void FilterRuleSet::validate() const {
  if (min_chars < 0 || min_chars >= max_chars) {
    fail(ErrorKind::validation, "invalid_filter_config", "min_chars must be >= 0 and < max_chars");
  }
  auto in_unit = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (!in_unit(max_non_text_ratio) || !in_unit(max_repetition_ratio)) {
    fail(ErrorKind::validation, "invalid_filter_config", "ratios must lie in [0, 1]");
  }
}

FilterRuleSet FilterRuleSet::parse(std::string_view config_text) {
  FilterRuleSet rules;
  std::istringstream in{std::string(config_text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = strip_ascii(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorKind::validation, "invalid_filter_config",
           "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string_view key = strip_ascii(line.substr(0, eq));
    const std::string_view value = strip_ascii(line.substr(eq + 1));
    if (key == "min_chars") rules.min_chars = parse_int(key, value);
    else if (key == "max_chars") rules.max_chars = parse_int(key, value);
    else if (key == "max_non_text_ratio") rules.max_non_text_ratio = parse_fraction(key, value);
    else if (key == "max_repetition_ratio") rules.max_repetition_ratio = parse_fraction(key, value);
    else if (key == "enable_min_chars") rules.enable_min_chars = parse_bool(key, value);
    else if (key == "enable_max_chars") rules.enable_max_chars = parse_bool(key, value);
    else if (key == "enable_non_text") rules.enable_non_text = parse_bool(key, value);
    else if (key == "enable_repetition") rules.enable_repetition = parse_bool(key, value);
    else {
      fail(ErrorKind::validation, "invalid_filter_config", "unknown key '" + std::string(key) + "'");
    }
  }
  rules.validate();
  return rules;
}

FilterRuleSet FilterRuleSet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(ErrorKind::config, "filter_config_unreadable", "cannot read " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

double non_text_ratio(std::string_view text) {
  const auto* s = reinterpret_cast<const std::uint8_t*>(text.data());
  const auto length = static_cast<std::int32_t>(text.size());
  std::int64_t total = 0;
  std::int64_t non_text = 0;
  for (std::int32_t i = 0; i < length;) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    ++total;
    if (c < 0 || !is_text_code_point(c)) ++non_text;
  }
  return total == 0 ? 0.0 : static_cast<double>(non_text) / static_cast<double>(total);
}

double repetition_ratio(std::string_view text) {
  std::unordered_set<std::string_view> seen;
  std::int64_t lines = 0;
  std::int64_t duplicates = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(start, nl - start);
    bool blank = true;
    for (std::size_t pos = 0; pos < line.size() && blank;) {
      UChar32 c;
      auto i = static_cast<std::int32_t>(pos);
      U8_NEXT(reinterpret_cast<const std::uint8_t*>(line.data()), i,
              static_cast<std::int32_t>(line.size()), c);
      pos = static_cast<std::size_t>(i);
      blank = c >= 0 && is_unicode_whitespace(static_cast<char32_t>(c));
    }
    if (!blank) {
      ++lines;
      if (!seen.insert(line).second) ++duplicates;
    }
    start = nl + 1;
  }
  return lines == 0 ? 0.0 : static_cast<double>(duplicates) / static_cast<double>(lines);
}

FilterVerdict apply_filters(std::string_view text, const FilterRuleSet& rules) {
  const auto chars = static_cast<std::int64_t>(count_code_points(text));
  if (rules.enable_min_chars && chars < rules.min_chars) return {"too_short"};
  if (rules.enable_max_chars && chars > rules.max_chars) return {"too_long"};
  if (rules.enable_non_text && non_text_ratio(text) > rules.max_non_text_ratio) return {"non_text"};
  if (rules.enable_repetition && repetition_ratio(text) > rules.max_repetition_ratio) {
    return {"repetitive"};
  }
  return {};
}

}  // namespace datapool
