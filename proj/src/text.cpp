#include "datapool/text.hpp"

#include <unicode/bytestream.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <vector>

#include "datapool/error.hpp"

namespace datapool {
namespace {

const icu::Normalizer2& nfc() {
  static const icu::Normalizer2* instance = [] {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* n = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) {
      fail(ErrorKind::config, "icu_unavailable", u_errorName(status));
    }
    return n;
  }();
  return *instance;
}

// Decodes the next code point; text is known to be valid.
char32_t next_cp(std::string_view text, std::size_t& pos) {
  UChar32 c;
  const auto* s = reinterpret_cast<const std::uint8_t*>(text.data());
  auto i = static_cast<std::int32_t>(pos);
  U8_NEXT(s, i, static_cast<std::int32_t>(text.size()), c);
  pos = static_cast<std::size_t>(i);
  return static_cast<char32_t>(c);
}

bool is_whitespace_only(std::string_view line) {
  std::size_t pos = 0;
  while (pos < line.size()) {
    if (!is_unicode_whitespace(next_cp(line, pos))) return false;
  }
  return true;
}

std::string canonical_newlines(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\r') {
      out.push_back('\n');
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
    } else {
      out.push_back(text[i]);
    }
  }
  return out;
}

std::string collapse_blank_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (true) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }

  std::string out;
  out.reserve(text.size());
  bool first = true;
  auto emit = [&](std::string_view line) {
    if (!first) out.push_back('\n');
    out.append(line);
    first = false;
  };
  for (std::size_t i = 0; i < lines.size();) {
    if (!is_whitespace_only(lines[i])) {
      emit(lines[i++]);
      continue;
    }
    std::size_t j = i;
    while (j < lines.size() && is_whitespace_only(lines[j])) ++j;
    if (j - i >= 3) {
      emit("");
      emit("");
    } else {
      for (std::size_t k = i; k < j; ++k) emit(lines[k]);
    }
    i = j;
  }
  return out;
}

std::string_view trim(std::string_view text) {
  std::size_t begin = 0;
  std::size_t first_kept = text.size();
  while (begin < text.size()) {
    std::size_t next = begin;
    if (!is_unicode_whitespace(next_cp(text, next))) {
      first_kept = begin;
      break;
    }
    begin = next;
  }
  if (first_kept == text.size()) return {};
  std::size_t end = first_kept;
  std::size_t pos = first_kept;
  while (pos < text.size()) {
    if (!is_unicode_whitespace(next_cp(text, pos))) end = pos;
  }
  return text.substr(first_kept, end - first_kept);
}

}  // namespace

bool is_valid_utf8(std::string_view bytes) {
  const auto* s = reinterpret_cast<const std::uint8_t*>(bytes.data());
  const auto length = static_cast<std::int32_t>(bytes.size());
  std::int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    if (c < 0) return false;
  }
  return true;
}

bool is_unicode_whitespace(char32_t cp) {
  return u_hasBinaryProperty(static_cast<UChar32>(cp), UCHAR_WHITE_SPACE);
}

std::string normalize(std::string_view raw_text) {
  if (!is_valid_utf8(raw_text)) {
    fail(ErrorKind::validation, "invalid_utf8", "text is not valid UTF-8");
  }
  std::string composed;
  icu::StringByteSink<std::string> sink(&composed, static_cast<int32_t>(raw_text.size()));
  UErrorCode status = U_ZERO_ERROR;
  nfc().normalizeUTF8(0, icu::StringPiece(raw_text.data(), static_cast<int32_t>(raw_text.size())),
                      sink, nullptr, status);
  if (U_FAILURE(status)) {
    fail(ErrorKind::validation, "normalization_failed", u_errorName(status));
  }
  const std::string lines = collapse_blank_lines(canonical_newlines(composed));
  return std::string(trim(lines));
}

std::size_t count_code_points(std::string_view text) {
  std::size_t n = 0;
  for (const char c : text) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::int64_t WhitespaceTokenizer::count(std::string_view normalized_text) const {
  std::int64_t tokens = 0;
  bool in_token = false;
  std::size_t pos = 0;
  while (pos < normalized_text.size()) {
    const bool ws = is_unicode_whitespace(next_cp(normalized_text, pos));
    if (!ws && !in_token) ++tokens;
    in_token = !ws;
  }
  return tokens;
}

const Tokenizer& default_tokenizer() {
  static const WhitespaceTokenizer tokenizer;
  return tokenizer;
}

std::int64_t count_tokens(std::string_view normalized_text) {
  return default_tokenizer().count(normalized_text);
}

}  // namespace datapool
