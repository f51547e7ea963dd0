#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

namespace datapool {

bool is_valid_utf8(std::string_view bytes);

/// Unicode White_Space property.
bool is_unicode_whitespace(char32_t cp);

/// Canonical text form used for token counting and fingerprinting:
///  1. Unicode NFC (canonical composition)
///  2. CRLF and bare CR become LF
///  3. runs of three or more blank (whitespace-only) lines collapse to two empty lines
///  4. leading and trailing Unicode whitespace is stripped
///
/// Idempotent. Input must be valid UTF-8; throws Error(validation) otherwise.
std::string normalize(std::string_view raw_text);

/// Number of Unicode code points. Text must be valid UTF-8.
std::size_t count_code_points(std::string_view text);

/// Token counter. Payouts are proportional to its output, so implementations
/// must be deterministic.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::string name() const = 0;
  virtual std::int64_t count(std::string_view normalized_text) const = 0;
};

/// Default tokenizer: maximal runs of non-White_Space code points. Linear time.
class WhitespaceTokenizer final : public Tokenizer {
 public:
  std::string name() const override { return "unicode-whitespace"; }
  std::int64_t count(std::string_view normalized_text) const override;
};

/// Counts with the default tokenizer.
std::int64_t count_tokens(std::string_view normalized_text);

const Tokenizer& default_tokenizer();

}  // namespace datapool
