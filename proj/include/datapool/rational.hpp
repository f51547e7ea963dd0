#pragma once

#include <cstdint>
#include <string>

namespace datapool {

/// Non-negative exact fraction in lowest terms. den > 0 always.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Rational make(std::int64_t num, std::int64_t den);

  friend bool operator==(const Rational&, const Rational&) = default;

  /// "3/10", or "1" / "0" for integers.
  std::string to_string() const;

  /// Fixed-precision decimal, rounded half-up at `places` digits, trailing zeros
  /// dropped: 1/4 -> "0.25", 2/3 -> "0.666667", 1 -> "1".
  std::string to_decimal(int places = 6) const;
};

}  // namespace datapool
