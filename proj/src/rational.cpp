#include "datapool/rational.hpp"

#include <numeric>

#include "datapool/error.hpp"

namespace datapool {

Rational Rational::make(std::int64_t num, std::int64_t den) {
  if (den <= 0 || num < 0) {
    fail(ErrorKind::validation, "invalid_rational", "rational requires num >= 0 and den > 0");
  }
  const std::int64_t g = std::gcd(num, den);
  return Rational{num / g, den / g};
}

std::string Rational::to_string() const {
  if (den == 1) return std::to_string(num);
  return std::to_string(num) + "/" + std::to_string(den);
}

std::string Rational::to_decimal(int places) const {
  unsigned __int128 scale = 1;
  for (int i = 0; i < places; ++i) scale *= 10;
  const unsigned __int128 scaled =
      (static_cast<unsigned __int128>(num) * scale * 2 + static_cast<unsigned __int128>(den)) /
      (static_cast<unsigned __int128>(den) * 2);
  const auto whole = static_cast<std::uint64_t>(scaled / scale);
  auto frac = static_cast<std::uint64_t>(scaled % scale);
  std::string out = std::to_string(whole);
  if (frac == 0) return out;
  std::string digits(static_cast<std::size_t>(places), '0');
  for (int i = places - 1; i >= 0; --i) {
    digits[static_cast<std::size_t>(i)] = static_cast<char>('0' + frac % 10);
    frac /= 10;
  }
  while (!digits.empty() && digits.back() == '0') digits.pop_back();
  return out + "." + digits;
}

}  // namespace datapool
