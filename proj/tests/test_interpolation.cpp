#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "generators.hpp"
#include "shapx/shapx.hpp"

using namespace shapx;

namespace {

// Leibniz expansion; fine for the small sizes used here.
Rational leibniz_det(const RationalMatrix& a) {
  const std::size_t n = a.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rational total = 0;
  do {
    int inversions = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (perm[i] > perm[j]) ++inversions;
    Rational term = inversions % 2 ? -1 : 1;
    for (std::size_t i = 0; i < n; ++i) term *= a[i][perm[i]];
    total += term;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return total;
}

}  // namespace

TEST(Interpolation, RecoversRandomPolynomials) {
  gen::Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = rng() % 12;
    std::vector<Rational> coeffs(d + 1);
    for (auto& c : coeffs) c = gen::small_rational(rng, 20, 7);
    std::vector<Rational> y(d + 1);
    for (std::size_t j = 0; j <= d; ++j) y[j] = evaluate_polynomial(coeffs, Rational(static_cast<long>(j + 1)));
    EXPECT_EQ(interpolate_unit_grid(y), coeffs);
  }
}

TEST(Interpolation, ConstantAndLine) {
  EXPECT_EQ(interpolate_unit_grid(std::vector<Rational>{Rational(7)}), std::vector<Rational>{Rational(7)});
  const auto line = interpolate_unit_grid(std::vector<Rational>{Rational(3), Rational(5)});
  EXPECT_EQ(line, (std::vector<Rational>{Rational(1), Rational(2)}));
}

TEST(Interpolation, FloatingPointAgreesOnModerateDegree) {
  gen::Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = rng() % 8;
    std::vector<Rational> coeffs(d + 1);
    for (auto& c : coeffs) c = gen::small_rational(rng, 5, 3);
    std::vector<Real> y(d + 1);
    for (std::size_t j = 0; j <= d; ++j)
      y[j] = to_real(evaluate_polynomial(coeffs, Rational(static_cast<long>(j + 1))));
    const auto got = interpolate_unit_grid(y);
    for (std::size_t k = 0; k <= d; ++k) EXPECT_NEAR(got[k], to_real(coeffs[k]), 1e-6L);
  }
}

TEST(Interpolation, TensorGridRecoversBivariate) {
  gen::Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t rows = 1 + rng() % 5, cols = 1 + rng() % 5;
    std::vector<std::vector<Rational>> c(rows, std::vector<Rational>(cols));
    for (auto& r : c)
      for (auto& v : r) v = gen::small_rational(rng, 9, 5);
    std::vector<std::vector<Rational>> grid(rows, std::vector<Rational>(cols));
    for (std::size_t a = 0; a < rows; ++a)
      for (std::size_t b = 0; b < cols; ++b) {
        Rational u = static_cast<long>(a + 1), v = static_cast<long>(b + 1), s = 0, up = 1;
        for (std::size_t l = 0; l < rows; ++l, up *= u) {
          Rational vp = 1;
          for (std::size_t k = 0; k < cols; ++k, vp *= v) s += c[l][k] * up * vp;
        }
        grid[a][b] = s;
      }
    EXPECT_EQ(interpolate_tensor_grid(grid), c);
  }
}

TEST(SolveExact, MatchesSubstitutionAndLeibnizDeterminant) {
  gen::Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng() % 6;
    RationalMatrix a(n, std::vector<Rational>(n));
    for (auto& r : a)
      for (auto& v : r) v = gen::small_rational(rng, 6, 3);
    const Rational det = leibniz_det(a);
    EXPECT_EQ(determinant(a), det);
    std::vector<Rational> x(n);
    for (auto& v : x) v = gen::small_rational(rng, 6, 3);
    std::vector<Rational> b(n, Rational(0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) b[i] += a[i][j] * x[j];
    if (det == 0) {
      EXPECT_THROW(solve_exact(a, b), InternalError);
      continue;
    }
    const auto sol = solve_exact(a, b);
    EXPECT_EQ(sol.x, x);
    EXPECT_EQ(sol.determinant, det);
  }
}

TEST(SolveExact, SingularSystemThrows) {
  const RationalMatrix a{{Rational(1), Rational(2)}, {Rational(2), Rational(4)}};
  EXPECT_EQ(determinant(a), 0);
  EXPECT_THROW(solve_exact(a, {Rational(1), Rational(2)}), InternalError);
}

TEST(VandermondeGrid, DeterminantIsProductOfGaps) {
  for (std::size_t size = 1; size <= 7; ++size) {
    RationalMatrix v(size, std::vector<Rational>(size));
    for (std::size_t r = 0; r < size; ++r) {
      Rational p = 1;
      for (std::size_t c = 0; c < size; ++c, p *= static_cast<long>(r + 1)) v[r][c] = p;
    }
    EXPECT_EQ(detail::vandermonde_unit_grid_det(size), leibniz_det(v));
  }
}
