#pragma once

// Polynomial interpolation on the grid 1, 2, ..., d+1 and exact linear solves.

#include <cstddef>
#include <utility>
#include <vector>

#include "shapx/error.hpp"
#include "shapx/rational.hpp"

namespace shapx {

namespace detail {

// Newton form on nodes 1..d+1 with the given forward-difference table head,
// expanded into monomial coefficients by Horner's scheme.
template <class T>
std::vector<T> newton_to_monomial(const std::vector<T>& newton) {
  const std::size_t d = newton.size() - 1;
  std::vector<T> poly{newton[d]};
  for (std::size_t k = d; k-- > 0;) {
    // poly <- poly * (x - (k+1)) + newton[k]
    const T node = T(static_cast<long>(k + 1));
    std::vector<T> next(poly.size() + 1, T(0));
    for (std::size_t i = 0; i < poly.size(); ++i) {
      next[i + 1] += poly[i];
      next[i] -= poly[i] * node;
    }
    next[0] += newton[k];
    poly = std::move(next);
  }
  return poly;
}

}  // namespace detail

/// Coefficients c_0..c_d of the unique polynomial of degree <= d with
/// P(j+1) = y[j] for j = 0..d.
inline std::vector<Rational> interpolate_unit_grid(const std::vector<Rational>& y) {
  if (y.empty()) return {};
  const std::size_t d = y.size() - 1;
  // Scale to integers so the whole table stays in Z.
  Integer scale = 1;
  for (const auto& v : y) mpz_lcm(scale.get_mpz_t(), scale.get_mpz_t(), v.get_den_mpz_t());
  std::vector<Integer> diff(y.size());
  for (std::size_t j = 0; j <= d; ++j) diff[j] = y[j].get_num() * (scale / y[j].get_den());
  // diff[k] becomes the k-th forward difference at node 1.
  for (std::size_t k = 1; k <= d; ++k)
    for (std::size_t j = d; j >= k; --j) diff[j] -= diff[j - 1];
  // d!/k! * Delta^k keeps the Newton coefficients integral.
  std::vector<Integer> newton(d + 1);
  Integer ratio = 1;  // d!/k!
  for (std::size_t k = d + 1; k-- > 0;) {
    newton[k] = diff[k] * ratio;
    ratio *= static_cast<unsigned long>(k);
  }
  const std::vector<Integer> poly = detail::newton_to_monomial(newton);
  const Integer denom = scale * factorial(d);
  std::vector<Rational> out(d + 1);
  for (std::size_t k = 0; k <= d; ++k) {
    out[k] = Rational(poly[k], denom);
    out[k].canonicalize();
  }
  return out;
}

inline std::vector<Real> interpolate_unit_grid(const std::vector<Real>& y) {
  if (y.empty()) return {};
  const std::size_t d = y.size() - 1;
  std::vector<Real> diff = y;
  for (std::size_t k = 1; k <= d; ++k)
    for (std::size_t j = d; j >= k; --j) diff[j] -= diff[j - 1];
  Real fact = 1;
  for (std::size_t k = 1; k <= d; ++k) {
    fact *= static_cast<Real>(k);
    diff[k] /= fact;
  }
  return detail::newton_to_monomial(diff);
}

template <class T>
T evaluate_polynomial(const std::vector<T>& coeffs, const T& x) {
  T out = 0;
  for (std::size_t k = coeffs.size(); k-- > 0;) out = out * x + coeffs[k];
  return out;
}

/// grid[a][b] = Q(a+1, b+1). Returns coefficients c[l][k] of
/// Q(u, v) = sum c[l][k] u^l v^k.
inline std::vector<std::vector<Rational>> interpolate_tensor_grid(
    const std::vector<std::vector<Rational>>& grid) {
  const std::size_t rows = grid.size();
  if (rows == 0) return {};
  const std::size_t cols = grid.front().size();
  std::vector<std::vector<Rational>> along_v(rows);
  for (std::size_t a = 0; a < rows; ++a) along_v[a] = interpolate_unit_grid(grid[a]);
  std::vector<std::vector<Rational>> out(rows, std::vector<Rational>(cols));
  std::vector<Rational> column(rows);
  for (std::size_t k = 0; k < cols; ++k) {
    for (std::size_t a = 0; a < rows; ++a) column[a] = along_v[a][k];
    const auto coeffs = interpolate_unit_grid(column);
    for (std::size_t l = 0; l < rows; ++l) out[l][k] = coeffs[l];
  }
  return out;
}

using RationalMatrix = std::vector<std::vector<Rational>>;

struct ExactSolution {
  std::vector<Rational> x;
  Rational determinant;
};

/// Gaussian elimination with exact pivoting. A singular matrix is an
/// internal error: every caller solves a system that must be invertible.
inline ExactSolution solve_exact(RationalMatrix a, std::vector<Rational> b) {
  const std::size_t n = a.size();
  if (b.size() != n) throw InternalError("linear system shape mismatch");
  Rational det = 1;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    while (pivot < n && a[pivot][col] == 0) ++pivot;
    if (pivot == n) throw InternalError("linear system is singular (determinant 0)");
    if (pivot != col) {
      std::swap(a[pivot], a[col]);
      std::swap(b[pivot], b[col]);
      det = -det;
    }
    det *= a[col][col];
    for (std::size_t r = col + 1; r < n; ++r) {
      if (a[r][col] == 0) continue;
      const Rational factor = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= factor * a[col][c];
      b[r] -= factor * b[col];
    }
  }
  std::vector<Rational> x(n);
  for (std::size_t r = n; r-- > 0;) {
    Rational acc = b[r];
    for (std::size_t c = r + 1; c < n; ++c) acc -= a[r][c] * x[c];
    x[r] = acc / a[r][r];
  }
  return {std::move(x), det};
}

inline Rational determinant(RationalMatrix a) {
  const std::size_t n = a.size();
  Rational det = 1;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    while (pivot < n && a[pivot][col] == 0) ++pivot;
    if (pivot == n) return 0;
    if (pivot != col) {
      std::swap(a[pivot], a[col]);
      det = -det;
    }
    det *= a[col][col];
    for (std::size_t r = col + 1; r < n; ++r) {
      if (a[r][col] == 0) continue;
      const Rational factor = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= factor * a[col][c];
    }
  }
  return det;
}

}  // namespace shapx
