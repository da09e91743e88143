#pragma once

// Tables of v(S) = E[F | x_S] for every subset S, and the two brute-force
// SHAP formulas over such a table. Bit i of the table index is set when
// feature i is conditioned on.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "shapx/distributions.hpp"
#include "shapx/error.hpp"
#include "shapx/rational.hpp"

namespace shapx {

inline constexpr std::size_t kPermutationCap = 8;
inline constexpr std::size_t kSubsetCap = 20;

inline void check_cap(std::size_t n, std::size_t cap, const char* what) {
  if (n > cap)
    throw CapacityError(std::string(what) + " supports at most " + std::to_string(cap) + " features, got " +
                        std::to_string(n));
}

template <class T>
T convert_probability(const Rational& p) {
  if constexpr (is_exact_v<T>)
    return p;
  else
    return to_real(p);
}

/// v(S) for every S under a product distribution, by enumerating the joint
/// table and collapsing one axis at a time into {marginalized, fixed at x_i}.
template <class T, class F>
std::vector<T> product_value_table(const F& f, const ProductDistribution& dist, const Instance& x,
                                   std::size_t cap = kSubsetCap) {
  const std::size_t n = dist.feature_count();
  check_cap(n, cap, "brute-force value table");
  dist.check_instance(x);
  std::size_t size = 1;
  for (std::size_t i = 0; i < n; ++i) {
    size *= dist.domain_size(i);
    if (size > (std::size_t{1} << 26)) throw CapacityError("joint table of the brute-force path is too large");
  }
  std::vector<T> table(size);
  Instance y(n, 0);
  for (std::size_t idx = 0; idx < size; ++idx) {
    std::size_t rest = idx;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rest % dist.domain_size(i));
      rest /= dist.domain_size(i);
    }
    table[idx] = f(y);
  }
  std::size_t inner = 1;  // 2^i after i axes have been collapsed
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t radix = dist.domain_size(i);
    const std::size_t outer = table.size() / (inner * radix);
    std::vector<T> prob(radix);
    for (std::size_t v = 0; v < radix; ++v) prob[v] = convert_probability<T>(dist.prob(i, static_cast<int>(v)));
    std::vector<T> next(inner * 2 * outer);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        T marg = 0;
        for (std::size_t v = 0; v < radix; ++v) marg += prob[v] * table[in + inner * (v + radix * o)];
        next[in + inner * (0 + 2 * o)] = marg;
        next[in + inner * (1 + 2 * o)] = table[in + inner * (static_cast<std::size_t>(x[i]) + radix * o)];
      }
    table = std::move(next);
    inner *= 2;
  }
  return table;
}

namespace detail {

// out[S] = sum over A containing S of in[A].
template <class T>
void superset_sums(std::vector<T>& a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < a.size(); ++s)
      if (!(s & (std::size_t{1} << i))) a[s] += a[s | (std::size_t{1} << i)];
}

}  // namespace detail

/// v(S) = mean of F over rows agreeing with x on S; 0 when no row agrees.
template <class F>
std::vector<Rational> empirical_value_table(const F& f, const EmpiricalDataset& data, const Instance& x,
                                            std::size_t cap = kSubsetCap) {
  const std::size_t n = data.feature_count();
  check_cap(n, cap, "empirical value table");
  check_instance_length(n, x);
  std::vector<Rational> sum(std::size_t{1} << n);
  std::vector<Rational> count(std::size_t{1} << n);
  for (std::size_t r = 0; r < data.row_count(); ++r) {
    std::size_t agree = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (data.row(r)[i] == x[i]) agree |= std::size_t{1} << i;
    sum[agree] += f(data.row(r)) * data.count(r);
    count[agree] += data.count(r);
  }
  detail::superset_sums(sum, n);
  detail::superset_sums(count, n);
  for (std::size_t s = 0; s < sum.size(); ++s) sum[s] = count[s] == 0 ? Rational(0) : Rational(sum[s] / count[s]);
  return sum;
}

/// v(S) over a naive Bayes net; features are X_0, X_1..X_n.
template <class F>
std::vector<Real> nbn_value_table(const F& f, const NaiveBayesNet& nbn, const Instance& x,
                                  std::size_t cap = kSubsetCap) {
  const std::size_t n = nbn.evidence_count() + 1;
  check_cap(n, cap, "naive Bayes value table");
  check_instance_length(n, x);
  check_binary(x, "naive Bayes value table");
  std::vector<Real> sum(std::size_t{1} << n, 0), mass(std::size_t{1} << n, 0);
  Instance y(n);
  for (std::size_t bits = 0; bits < (std::size_t{1} << n); ++bits) {
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>((bits >> i) & 1U);
    Real l = y[0] == 1 ? nbn.log_prior() : nbn.log_prior_complement();
    for (std::size_t i = 1; i < n; ++i) l += nbn.log_cond(i, y[i], y[0]);
    const Real p = std::exp(l);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (y[i] == x[i]) agree |= std::size_t{1} << i;
    sum[agree] += p * f(y);
    mass[agree] += p;
  }
  detail::superset_sums(sum, n);
  detail::superset_sums(mass, n);
  for (std::size_t s = 0; s < sum.size(); ++s) {
    if (mass[s] == 0) throw PreconditionError("value function conditions on a zero-probability event");
    sum[s] /= mass[s];
  }
  return sum;
}

/// Average marginal contribution over all n! arrival orders.
template <class T>
std::vector<T> shap_permutation_from_table(const std::vector<T>& table, std::size_t n) {
  check_cap(n, kPermutationCap, "permutation enumeration");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<T> scores(n, T(0));
  std::size_t orders = 0;
  do {
    std::size_t s = 0;
    for (auto i : order) {
      const std::size_t with = s | (std::size_t{1} << i);
      scores[i] += table[with] - table[s];
      s = with;
    }
    ++orders;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& v : scores) v /= T(static_cast<long>(orders));
  return scores;
}

/// Shapley weights k!(n-1-k)!/n! over subsets of the other features.
template <class T>
std::vector<T> shap_subset_from_table(const std::vector<T>& table, std::size_t n) {
  check_cap(n, kSubsetCap, "subset enumeration");
  if (n == 0) return {};
  std::vector<T> weight(n);
  for (std::size_t k = 0; k < n; ++k) weight[k] = convert_probability<T>(shapley_weight(k, n - 1));
  std::vector<T> scores(n, T(0));
  for (std::size_t s = 0; s < table.size(); ++s) {
    const auto k = static_cast<std::size_t>(__builtin_popcountll(s));
    for (std::size_t i = 0; i < n; ++i) {
      if (s & (std::size_t{1} << i)) continue;
      scores[i] += weight[k] * (table[s | (std::size_t{1} << i)] - table[s]);
    }
  }
  return scores;
}

}  // namespace shapx
