#pragma once

// Exact and extended-precision scalar helpers shared by every module.

#include <gmpxx.h>

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <type_traits>

#include "shapx/error.hpp"

namespace shapx {

using Integer = mpz_class;
using Rational = mpq_class;
/// Extended precision for transcendental models (x87 80-bit on x86-64).
using Real = long double;

template <class T>
inline constexpr bool is_exact_v = std::is_same_v<T, Rational>;

inline Integer binomial(std::uint64_t n, std::uint64_t k) {
  Integer out;
  if (k > n) return out;
  mpz_bin_uiui(out.get_mpz_t(), n, k);
  return out;
}

inline Integer factorial(std::uint64_t n) {
  Integer out;
  mpz_fac_ui(out.get_mpz_t(), n);
  return out;
}

/// num/den in canonical form.
inline Rational ratio(const Integer& num, const Integer& den) {
  if (den == 0) throw Error("division by zero");
  Rational out(num, den);
  out.canonicalize();
  return out;
}

/// k!(N-k)!/(N+1)!: the Shapley weight of a coalition of size k when the
/// explained feature has N other players.
inline Rational shapley_weight(std::uint64_t k, std::uint64_t others) {
  Rational w(Integer(1), Integer(others + 1) * binomial(others, k));
  w.canonicalize();
  return w;
}

namespace detail {

inline Integer pow10(unsigned e) {
  Integer out;
  mpz_ui_pow_ui(out.get_mpz_t(), 10, e);
  return out;
}

// Converts |z| to mantissa * 2^exponent keeping 64 significant bits.
inline Real integer_to_real(const Integer& z) {
  if (z == 0) return 0.0L;
  Integer a = abs(z);
  const std::size_t bits = mpz_sizeinbase(a.get_mpz_t(), 2);
  Real out;
  if (bits <= 64) {
    const auto lo = static_cast<std::uint64_t>(mpz_getlimbn(a.get_mpz_t(), 0));
    out = static_cast<Real>(lo);
  } else {
    Integer top;
    mpz_fdiv_q_2exp(top.get_mpz_t(), a.get_mpz_t(), bits - 64);
    const auto lo = static_cast<std::uint64_t>(mpz_getlimbn(top.get_mpz_t(), 0));
    out = std::ldexp(static_cast<Real>(lo), static_cast<int>(bits - 64));
  }
  return z < 0 ? -out : out;
}

}  // namespace detail

inline Real to_real(const Rational& q) {
  const Integer& num = q.get_num();
  const Integer& den = q.get_den();
  if (num == 0) return 0.0L;
  const long num_bits = static_cast<long>(mpz_sizeinbase(num.get_mpz_t(), 2));
  const long den_bits = static_cast<long>(mpz_sizeinbase(den.get_mpz_t(), 2));
  // Normalize both sides to ~64 bits so huge operands do not overflow.
  Integer n = num;
  Integer d = den;
  long shift = 0;
  if (num_bits > 64) {
    mpz_tdiv_q_2exp(n.get_mpz_t(), num.get_mpz_t(), num_bits - 64);
    shift += num_bits - 64;
  }
  if (den_bits > 64) {
    mpz_tdiv_q_2exp(d.get_mpz_t(), den.get_mpz_t(), den_bits - 64);
    shift -= den_bits - 64;
  }
  return std::ldexp(detail::integer_to_real(n) / detail::integer_to_real(d),
                    static_cast<int>(shift));
}

inline Real to_real(Real x) { return x; }

/// Parses "a", "a/b", or a decimal literal such as "-0.25" or "1.5e-3" exactly.
inline Rational parse_rational(std::string_view text) {
  std::string s(text);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t start = 0;
  while (start < s.size() && std::isspace(static_cast<unsigned char>(s[start]))) ++start;
  s = s.substr(start);
  if (s.empty()) throw Error("empty rational literal");

  auto bad = [&]() { return Error("invalid rational literal '" + s + "'"); };

  if (auto slash = s.find('/'); slash != std::string::npos) {
    Integer num, den;
    if (num.set_str(s.substr(0, slash), 10) != 0) throw bad();
    std::string den_text = s.substr(slash + 1);
    if (den_text.empty() || den_text[0] == '-' || den_text[0] == '+') throw bad();
    if (den.set_str(den_text, 10) != 0) throw bad();
    if (den == 0) throw Error("zero denominator in '" + s + "'");
    Rational q(num, den);
    q.canonicalize();
    return q;
  }

  std::string mantissa = s;
  long exponent = 0;
  if (auto e = s.find_first_of("eE"); e != std::string::npos) {
    mantissa = s.substr(0, e);
    const std::string exp_text = s.substr(e + 1);
    const char* first = exp_text.data();
    const char* last = first + exp_text.size();
    if (!exp_text.empty() && exp_text[0] == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, exponent);
    if (ec != std::errc() || ptr != last) throw bad();
  }
  bool negative = false;
  if (!mantissa.empty() && (mantissa[0] == '-' || mantissa[0] == '+')) {
    negative = mantissa[0] == '-';
    mantissa.erase(0, 1);
  }
  std::string digits;
  long frac_digits = 0;
  bool seen_point = false;
  for (char c : mantissa) {
    if (c == '.') {
      if (seen_point) throw bad();
      seen_point = true;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      digits.push_back(c);
      if (seen_point) ++frac_digits;
    } else {
      throw bad();
    }
  }
  if (digits.empty()) throw bad();
  Integer num(digits, 10);
  if (negative) num = -num;
  const long scale = exponent - frac_digits;
  Rational q;
  if (scale >= 0) {
    q = Rational(num * detail::pow10(static_cast<unsigned>(scale)));
  } else {
    q = Rational(num, detail::pow10(static_cast<unsigned>(-scale)));
    q.canonicalize();
  }
  return q;
}

/// Exact value of the shortest decimal that round-trips to `x`.
inline Rational rational_from_double(double x) {
  if (!std::isfinite(x)) throw Error("non-finite number where a rational was expected");
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw InternalError("to_chars failed");
  return parse_rational(std::string_view(buf, static_cast<std::size_t>(ptr - buf)));
}

inline std::string to_string(const Rational& q) { return q.get_str(10); }

inline std::string to_string(Real x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.21Lg", x);
  return buf;
}

/// Decimal rendering rounded half away from zero to `digits` fractional digits.
inline std::string to_decimal(const Rational& q, unsigned digits) {
  const Integer scale = detail::pow10(digits);
  Integer scaled_num = abs(q.get_num()) * scale * 2 + q.get_den();
  Integer scaled = scaled_num / (2 * q.get_den());
  std::string body = scaled.get_str(10);
  if (digits > 0) {
    if (body.size() <= digits) body.insert(0, digits + 1 - body.size(), '0');
    body.insert(body.size() - digits, ".");
  }
  const bool negative = q < 0 && scaled != 0;
  return negative ? "-" + body : body;
}

inline std::string to_decimal(Real x, unsigned digits) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.*Lf", static_cast<int>(digits), x);
  return buf;
}

/// Numerically stable logistic function.
inline Real sigmoid(Real z) {
  if (z >= 0) return 1.0L / (1.0L + std::exp(-z));
  const Real e = std::exp(z);
  return e / (1.0L + e);
}

/// log(sigmoid(z)) without cancellation.
inline Real log_sigmoid(Real z) {
  if (z >= 0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

}  // namespace shapx
