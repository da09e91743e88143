#pragma once

// SHAP over empirical distributions and its equivalence with expectations of
// positive partitioned 2CNF formulas under quasi-symmetric distributions.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "shapx/distributions.hpp"
#include "shapx/error.hpp"
#include "shapx/interpolation.hpp"
#include "shapx/model.hpp"
#include "shapx/parallel.hpp"
#include "shapx/rational.hpp"
#include "shapx/shap.hpp"
#include "shapx/value_function.hpp"

namespace shapx {

using BinaryMatrix = std::vector<std::vector<int>>;
using RowFunction = std::function<Rational(const Instance&)>;

inline constexpr std::size_t kPolynomialCap = 24;

/// Conjunction of clauses (U_i or V_j), one per zero entry of an m x n
/// matrix. Indices are 0-based.
struct Pp2Cnf {
  std::size_t m = 0;
  std::size_t n = 0;
  std::vector<std::pair<std::size_t, std::size_t>> clauses;

  Pp2Cnf() = default;
  Pp2Cnf(std::size_t rows, std::size_t cols, std::vector<std::pair<std::size_t, std::size_t>> cl)
      : m(rows), n(cols), clauses(std::move(cl)) {
    std::sort(clauses.begin(), clauses.end());
    for (std::size_t c = 0; c < clauses.size(); ++c) {
      if (clauses[c].first >= m || clauses[c].second >= n)
        throw ModelError("clause (" + std::to_string(clauses[c].first + 1) + ", " +
                         std::to_string(clauses[c].second + 1) + ") out of range");
      if (c > 0 && clauses[c] == clauses[c - 1])
        throw ModelError("duplicate clause (" + std::to_string(clauses[c].first + 1) + ", " +
                         std::to_string(clauses[c].second + 1) + ")");
    }
  }

  static Pp2Cnf from_matrix(const BinaryMatrix& x) {
    const std::size_t rows = x.size();
    const std::size_t cols = rows == 0 ? 0 : x.front().size();
    std::vector<std::pair<std::size_t, std::size_t>> cl;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j)
        if (x[i][j] == 0) cl.emplace_back(i, j);
    return Pp2Cnf(rows, cols, std::move(cl));
  }

  BinaryMatrix matrix() const {
    BinaryMatrix x(m, std::vector<int>(n, 1));
    for (const auto& [i, j] : clauses) x[i][j] = 0;
    return x;
  }
};

/// Pr(U_i) = p except pinned rows (probability 1); likewise q for V_j.
struct QuasiSymmetricAssignment {
  Rational p = Rational(1, 2);
  Rational q = Rational(1, 2);
  std::vector<std::size_t> pinned_u;
  std::vector<std::size_t> pinned_v;
};

/// a[l][k] = number of column sets S with |S| = k whose matching row set
/// g(S) (rows that are 1 on all of S) has size l.
struct SubsetPolynomial {
  std::vector<std::vector<Integer>> a;

  std::size_t rows() const { return a.size() - 1; }
  std::size_t cols() const { return a.front().size() - 1; }
};

/// Rows that agree with x, as a 0/1 matrix; the explained instance becomes
/// all-ones.
inline BinaryMatrix agreement_matrix(const std::vector<Instance>& rows, const Instance& x) {
  BinaryMatrix out(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    check_instance_length(x.size(), rows[r]);
    out[r].resize(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[r][j] = rows[r][j] == x[j] ? 1 : 0;
  }
  return out;
}

inline Pp2Cnf build_pp2cnf(const EmpiricalDataset& data) { return Pp2Cnf::from_matrix(data.expanded()); }

inline SubsetPolynomial subset_polynomial(const BinaryMatrix& x, std::size_t cap = kPolynomialCap) {
  const std::size_t m = x.size();
  const std::size_t n = m == 0 ? 0 : x.front().size();
  check_cap(n, cap, "subset polynomial enumeration");
  std::vector<std::uint64_t> zeros(m, 0);  // columns where row i is 0
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (x[i][j] == 0) zeros[i] |= std::uint64_t{1} << j;
  std::vector<std::vector<std::uint64_t>> counts(m + 1, std::vector<std::uint64_t>(n + 1, 0));
  for (std::uint64_t s = 0; s < (std::uint64_t{1} << n); ++s) {
    std::size_t l = 0;
    for (auto z : zeros) l += (z & s) == 0 ? 1 : 0;
    ++counts[l][static_cast<std::size_t>(__builtin_popcountll(s))];
  }
  SubsetPolynomial out;
  out.a.assign(m + 1, std::vector<Integer>(n + 1));
  for (std::size_t l = 0; l <= m; ++l)
    for (std::size_t k = 0; k <= n; ++k) out.a[l][k] = static_cast<unsigned long>(counts[l][k]);
  return out;
}

inline SubsetPolynomial subset_polynomial(const EmpiricalDataset& data) {
  return subset_polynomial(data.expanded());
}

/// Coefficients b of Q(u, v) = P(1 + u, v).
inline std::vector<std::vector<Integer>> q_coefficients(const SubsetPolynomial& poly) {
  const std::size_t m = poly.rows(), n = poly.cols();
  std::vector<std::vector<Integer>> b(m + 1, std::vector<Integer>(n + 1));
  for (std::size_t l = 0; l <= m; ++l)
    for (std::size_t lp = 0; lp <= l; ++lp) {
      const Integer c = binomial(l, lp);
      for (std::size_t k = 0; k <= n; ++k) b[lp][k] += poly.a[l][k] * c;
    }
  return b;
}

namespace detail {

inline Rational power(const Rational& base, std::size_t e) {
  Rational out = 1;
  for (std::size_t i = 0; i < e; ++i) out *= base;
  return out;
}

// E[Phi] = sum a[l][k] (1-q)^k q^{n-k} p^{m-l}
inline Rational expectation_from_a(const std::vector<std::vector<Integer>>& a, const Rational& p,
                                   const Rational& q) {
  const std::size_t m = a.size() - 1, n = a.front().size() - 1;
  Rational out = 0;
  for (std::size_t l = 0; l <= m; ++l)
    for (std::size_t k = 0; k <= n; ++k)
      if (a[l][k] != 0) out += Rational(a[l][k]) * power(1 - q, k) * power(q, n - k) * power(p, m - l);
  return out;
}

// The formula with pinned variables folded in: satisfied clauses vanish.
inline BinaryMatrix reduced_matrix(const Pp2Cnf& f, const QuasiSymmetricAssignment& s) {
  std::vector<char> keep_row(f.m, 1), keep_col(f.n, 1);
  for (auto i : s.pinned_u) {
    if (i >= f.m) throw PreconditionError("pinned U index out of range");
    keep_row[i] = 0;
  }
  for (auto j : s.pinned_v) {
    if (j >= f.n) throw PreconditionError("pinned V index out of range");
    keep_col[j] = 0;
  }
  if (s.p == 1) std::fill(keep_row.begin(), keep_row.end(), 0);
  if (s.q == 1) std::fill(keep_col.begin(), keep_col.end(), 0);
  const BinaryMatrix full = f.matrix();
  BinaryMatrix out;
  for (std::size_t i = 0; i < f.m; ++i) {
    if (!keep_row[i]) continue;
    std::vector<int> row;
    for (std::size_t j = 0; j < f.n; ++j)
      if (keep_col[j]) row.push_back(full[i][j]);
    out.push_back(std::move(row));
  }
  return out;
}

inline BinaryMatrix transpose(const BinaryMatrix& x) {
  if (x.empty()) return {};
  BinaryMatrix t(x.front().size(), std::vector<int>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x[i].size(); ++j) t[j][i] = x[i][j];
  return t;
}

}  // namespace detail

/// Exact E[Phi] under a quasi-symmetric assignment, by enumerating subsets
/// of the smaller side of the reduced matrix.
inline Rational pp2cnf_expectation(const Pp2Cnf& formula, const QuasiSymmetricAssignment& s) {
  if (s.p < 0 || s.p > 1 || s.q < 0 || s.q > 1) throw PreconditionError("p and q must lie in [0,1]");
  BinaryMatrix x = detail::reduced_matrix(formula, s);
  if (x.empty() || x.front().empty()) return 1;
  Rational p = s.p, q = s.q;
  if (x.front().size() > x.size()) {
    // Clause (U_i or V_j) is symmetric in the two sides.
    x = detail::transpose(x);
    std::swap(p, q);
  }
  const SubsetPolynomial poly = subset_polynomial(x);
  return detail::expectation_from_a(poly.a, p, q);
}

/// True when row `first` dominates every other row entrywise.
inline bool is_good_matrix(const BinaryMatrix& x, std::size_t first = 0) {
  for (const auto& row : x)
    for (std::size_t j = 0; j < row.size(); ++j)
      if (row[j] > x[first][j]) return false;
  return true;
}

/// v_k = sum_{l >= 1} a[l][k] / l, which equals sum over |S| = k of
/// E[F_1 | X_S = 1] only when the first row dominates.
inline std::vector<Rational> vk_from_subset_polynomial(const std::vector<std::vector<Integer>>& a,
                                                       const BinaryMatrix& x) {
  if (x.empty() || !is_good_matrix(x, 0))
    throw PreconditionError("matrix is not good: its first row does not dominate every other row");
  const std::size_t m = a.size() - 1, n = a.front().size() - 1;
  std::vector<Rational> v(n + 1);
  for (std::size_t k = 0; k <= n; ++k)
    for (std::size_t l = 1; l <= m; ++l) v[k] += ratio(a[l][k], Integer(static_cast<unsigned long>(l)));
  return v;
}

namespace detail {

inline std::vector<std::size_t> agreement_masks(const std::vector<Instance>& rows, const Instance& x) {
  std::vector<std::size_t> out(rows.size(), 0);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t j = 0; j < x.size(); ++j)
      if (rows[r][j] == x[j]) out[r] |= std::size_t{1} << j;
  return out;
}

}  // namespace detail

/// Shap of feature f for each row-indicator function F_r (the function that
/// is 1 on the copies of row r and 0 elsewhere), by enumerating subsets.
inline std::vector<Rational> empirical_row_shap(const EmpiricalDataset& data, const Instance& x, std::size_t f,
                                                std::size_t cap = kSubsetCap) {
  const std::size_t n = data.feature_count();
  check_cap(n, cap, "empirical subset enumeration");
  check_instance_length(n, x);
  if (f >= n) throw PreconditionError("feature index out of range");
  const auto masks = detail::agreement_masks(data.rows(), x);
  // cnt[S] = total count of rows agreeing with x on S.
  std::vector<long> cnt(std::size_t{1} << n, 0);
  for (std::size_t r = 0; r < masks.size(); ++r) cnt[masks[r]] += data.count(r);
  detail::superset_sums(cnt, n);
  std::vector<Rational> weight(n);
  for (std::size_t k = 0; k < n; ++k) weight[k] = shapley_weight(k, n - 1);
  const std::size_t bit = std::size_t{1} << f;
  std::vector<Rational> out(data.row_count());
  for (std::size_t r = 0; r < masks.size(); ++r) {
    // Histogram over S within the agreement set of row r of
    // (|S|, cnt(S ∪ f)) and (|S|, cnt(S)).
    std::map<std::pair<std::size_t, long>, long> plus, minus;
    const std::size_t free = masks[r] & ~bit;
    const bool has_f = (masks[r] & bit) != 0;
    for (std::size_t s = free;; s = (s - 1) & free) {
      const auto k = static_cast<std::size_t>(__builtin_popcountll(s));
      if (has_f) ++plus[{k, cnt[s | bit]}];
      ++minus[{k, cnt[s]}];
      if (s == 0) break;
    }
    Rational score = 0;
    for (const auto& [key, times] : plus) score += weight[key.first] * ratio(times, key.second);
    for (const auto& [key, times] : minus) score -= weight[key.first] * ratio(times, key.second);
    out[r] = score * data.count(r);
  }
  return out;
}

/// Exact SHAP of one feature over the empirical distribution of `data`,
/// recombined from row indicators: sum_r F(row r) Shap_{F_r}.
inline Rational empirical_shap_direct(const EmpiricalDataset& data, const RowFunction& f_model, std::size_t f,
                                      const Instance& x) {
  const auto per_row = empirical_row_shap(data, x, f);
  Rational out = 0;
  for (std::size_t r = 0; r < per_row.size(); ++r)
    if (per_row[r] != 0) out += f_model(data.row(r)) * per_row[r];
  return out;
}

inline Instance all_ones(std::size_t n) { return Instance(n, 1); }

namespace detail {

inline ShapReport<Rational> empirical_report_frame(const EmpiricalDataset& data, const RowFunction& f_model,
                                                   const Instance& x, std::string path) {
  ShapReport<Rational> report;
  report.path = std::move(path);
  report.instance = x;
  const EventMask everything = EventMask::from_instance(x, [&] {
    std::vector<std::size_t> all(x.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }());
  report.prediction = conditional_expectation(f_model, data, everything);
  report.expectation = conditional_expectation(f_model, data, EventMask());
  if (event_probability(data, everything) == 0)
    report.notes.push_back("instance does not occur in the dataset; E[F | x] is taken as 0");
  return report;
}

}  // namespace detail

inline ShapReport<Rational> empirical_shap_direct_all(const EmpiricalDataset& data, const RowFunction& f_model,
                                                      const Instance& x) {
  check_instance_length(data.feature_count(), x);
  auto report = detail::empirical_report_frame(data, f_model, x, "empirical-direct");
  report.scores.resize(x.size());
  parallel_for(x.size(), [&](std::size_t f) { report.scores[f] = empirical_shap_direct(data, f_model, f, x); });
  return publish(report);
}

/// Brute force from the full empirical value table.
inline ShapReport<Rational> empirical_shap_brute(const EmpiricalDataset& data, const RowFunction& f_model,
                                                 const Instance& x, bool permutation = false) {
  const auto table = empirical_value_table(f_model, data, x);
  auto report = detail::empirical_report_frame(data, f_model, x,
                                               permutation ? "empirical-permutation-brute" : "empirical-subset-brute");
  const std::size_t n = x.size();
  report.scores = permutation ? shap_permutation_from_table(table, n) : shap_subset_from_table(table, n);
  return publish(report);
}

using Pp2CnfOracle = std::function<Rational(const Pp2Cnf&, const QuasiSymmetricAssignment&)>;

struct ForwardTrace {
  std::size_t oracle_calls = 0;
  std::vector<Rational> kronecker_determinants;  // one per interpolated grid, all nonzero
};

namespace detail {

inline Rational vandermonde_unit_grid_det(std::size_t size) {
  Rational det = 1;
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = i + 1; j < size; ++j) det *= static_cast<long>(j - i);
  return det;
}

// sum over |S| = k, S within the non-pinned columns, of E[F_r | X_S = 1] on
// the matrix whose rows are `rows` (row 0 is F_r's row), by probing the
// oracle on the full formula with everything else pinned.
inline std::vector<Rational> forward_vk(const Pp2Cnf& formula, const BinaryMatrix& full,
                                        const std::vector<std::size_t>& rows,
                                        const std::vector<std::size_t>& cols, const Pp2CnfOracle& oracle,
                                        ForwardTrace& trace) {
  QuasiSymmetricAssignment pin;
  std::vector<char> row_kept(formula.m, 0), col_kept(formula.n, 0);
  for (auto i : rows) row_kept[i] = 1;
  for (auto j : cols) col_kept[j] = 1;
  for (std::size_t i = 0; i < formula.m; ++i)
    if (!row_kept[i]) pin.pinned_u.push_back(i);
  for (std::size_t j = 0; j < formula.n; ++j)
    if (!col_kept[j]) pin.pinned_v.push_back(j);
  const std::size_t mm = rows.size(), nn = cols.size();
  // Q(u, v) = (1+u)^m (1+v)^n E[Phi] at p = 1/(1+u), q = 1/(1+v).
  std::vector<std::vector<Rational>> grid(mm + 1, std::vector<Rational>(nn + 1));
  for (std::size_t a = 0; a <= mm; ++a)
    for (std::size_t b = 0; b <= nn; ++b) {
      const long u = static_cast<long>(a) + 1, v = static_cast<long>(b) + 1;
      QuasiSymmetricAssignment s = pin;
      s.p = Rational(1, 1 + u);
      s.q = Rational(1, 1 + v);
      const Rational e = oracle(formula, s);
      ++trace.oracle_calls;
      grid[a][b] = e * power(Rational(1 + u), mm) * power(Rational(1 + v), nn);
    }
  const Rational det = power(vandermonde_unit_grid_det(mm + 1), nn + 1) *
                       power(vandermonde_unit_grid_det(nn + 1), mm + 1);
  if (det == 0) throw InternalError("probe system is singular");
  trace.kronecker_determinants.push_back(det);
  const auto b = interpolate_tensor_grid(grid);
  // a[l][k] = sum_{l' >= l} b[l'][k] C(l', l) (-1)^{l'-l}, i.e. P(u, v) = Q(u-1, v).
  std::vector<std::vector<Integer>> a(mm + 1, std::vector<Integer>(nn + 1));
  for (std::size_t l = 0; l <= mm; ++l)
    for (std::size_t k = 0; k <= nn; ++k) {
      Rational acc = 0;
      for (std::size_t lp = l; lp <= mm; ++lp) {
        Rational term = b[lp][k] * Rational(binomial(lp, l));
        if ((lp - l) % 2) term = -term;
        acc += term;
      }
      if (acc.get_den() != 1) throw InternalError("subset polynomial coefficient is not an integer");
      a[l][k] = acc.get_num();
    }
  BinaryMatrix reduced;
  for (auto i : rows) {
    std::vector<int> row;
    for (auto j : cols) row.push_back(full[i][j]);
    reduced.push_back(std::move(row));
  }
  return vk_from_subset_polynomial(a, reduced);
}

}  // namespace detail

/// Shap_{F_r}(X_f) for a single row-indicator of the agreement matrix,
/// using only expectation queries on the matrix's PP2CNF.
inline Rational row_shap_via_pp2cnf(const BinaryMatrix& x, std::size_t r, std::size_t f,
                                    const Pp2CnfOracle& oracle, ForwardTrace& trace) {
  const std::size_t m = x.size(), n = x.front().size();
  // Put row r first; F_r becomes F_1.
  BinaryMatrix swapped = x;
  std::swap(swapped[0], swapped[r]);
  const Pp2Cnf formula = Pp2Cnf::from_matrix(swapped);
  // Column restriction J1: the other columns where the first row is 1.
  std::vector<std::size_t> j1;
  for (std::size_t j = 0; j < n; ++j)
    if (j != f && swapped[0][j] == 1) j1.push_back(j);
  std::vector<std::size_t> all_rows(m);
  for (std::size_t i = 0; i < m; ++i) all_rows[i] = i;
  const auto v0 = detail::forward_vk(formula, swapped, all_rows, j1, oracle, trace);
  std::vector<Rational> v1(j1.size() + 1, Rational(0));
  if (swapped[0][f] == 1) {
    // Condition on X_f = 1: keep only the rows with x_{if} = 1.
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < m; ++i)
      if (swapped[i][f] == 1) rows.push_back(i);
    v1 = detail::forward_vk(formula, swapped, rows, j1, oracle, trace);
  }
  Rational score = 0;
  for (std::size_t k = 0; k <= j1.size(); ++k) score += shapley_weight(k, n - 1) * (v1[k] - v0[k]);
  return score;
}

inline ShapReport<Rational> empirical_shap_via_pp2cnf(const EmpiricalDataset& data, const RowFunction& f_model,
                                                      const Instance& x, const Pp2CnfOracle& oracle = {},
                                                      ForwardTrace* trace_out = nullptr) {
  check_instance_length(data.feature_count(), x);
  const Pp2CnfOracle ask = oracle ? oracle : Pp2CnfOracle(pp2cnf_expectation);
  const std::vector<Instance> rows = data.expanded();
  const BinaryMatrix agree = agreement_matrix(rows, x);
  const std::size_t n = x.size();
  auto report = detail::empirical_report_frame(data, f_model, x, "empirical-via-pp2cnf");
  report.scores.assign(n, Rational(0));
  std::vector<Rational> y(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) y[r] = f_model(rows[r]);
  std::vector<ForwardTrace> traces(n);
  parallel_for(n, [&](std::size_t f) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (y[r] == 0) continue;
      report.scores[f] += y[r] * row_shap_via_pp2cnf(agree, r, f, ask, traces[f]);
    }
  });
  ForwardTrace total;
  for (std::size_t f = 0; f < n; ++f) {
    total.oracle_calls += traces[f].oracle_calls;
    total.kronecker_determinants.insert(total.kronecker_determinants.end(),
                                        traces[f].kronecker_determinants.begin(),
                                        traces[f].kronecker_determinants.end());
    report.notes.push_back("feature " + std::to_string(f) + ": " + std::to_string(traces[f].oracle_calls) +
                           " PP2CNF expectation calls");
  }
  report.oracle_calls = total.oracle_calls;
  if (trace_out) *trace_out = std::move(total);
  return publish(report);
}

/// SHAP oracle used by the reverse reduction: Shap_F(X_f) over a dataset.
using EmpiricalShapOracle = std::function<Rational(const EmpiricalDataset&, const RowFunction&, std::size_t)>;

struct ReverseTrace {
  std::vector<std::vector<Rational>> V;      // V[Gamma-1][Delta]
  std::vector<std::vector<Rational>> v;      // v^{(Gamma)}_k
  std::vector<std::vector<Integer>> a;       // a[l][k] of the reduced matrix
  std::vector<std::vector<Integer>> b;       // coefficients of Q
  Rational delta_determinant;                // det of the Delta system
  Rational gamma_determinant;                // det of the Cauchy system
  std::size_t shap_calls = 0;
};

/// E[Phi] under (p, q) computed only from SHAP queries on derived datasets.
inline Rational pp2cnf_expectation_via_shap(const Pp2Cnf& formula, const QuasiSymmetricAssignment& s,
                                            const EmpiricalShapOracle& oracle = {}, ReverseTrace* trace_out = nullptr) {
  const EmpiricalShapOracle ask =
      oracle ? oracle : EmpiricalShapOracle([](const EmpiricalDataset& d, const RowFunction& f, std::size_t j) {
        return empirical_shap_direct(d, f, j, all_ones(d.feature_count()));
      });
  if (s.p < 0 || s.p > 1 || s.q < 0 || s.q > 1) throw PreconditionError("p and q must lie in [0,1]");
  const BinaryMatrix x = detail::reduced_matrix(formula, s);
  ReverseTrace trace;
  if (x.empty() || x.front().empty()) {
    if (trace_out) *trace_out = std::move(trace);
    return 1;
  }
  const std::size_t m = x.size(), n = x.front().size();
  check_cap(std::max(m, n), 8, "reverse reduction");
  const std::size_t big_n = 2 * n;  // other features of the extended matrices
  // F_1 = X_0: the linear function reading the distinguished column.
  const RowFunction f1 = [](const Instance& row) { return Rational(row[0]); };
  trace.V.assign(m + 1, std::vector<Rational>(n + 1));
  std::vector<std::vector<Rational>> v_gamma(m + 1);
  // Delta system: (2n+1) V^{(Delta)} = sum_k A[Delta][k] v_k.
  RationalMatrix A(n + 1, std::vector<Rational>(n + 1));
  for (std::size_t d = 0; d <= n; ++d)
    for (std::size_t k = 0; k <= n; ++k)
      for (std::size_t q = 0; q <= d; ++q) A[d][k] += ratio(binomial(d, q), binomial(big_n, k + q));
  trace.delta_determinant = determinant(A);
  if (trace.delta_determinant == 0) throw InternalError("Delta system is singular");
  std::vector<Rational> weight(big_n + 1);
  for (std::size_t k = 0; k <= big_n; ++k) weight[k] = shapley_weight(k, big_n);
  for (std::size_t gamma = 1; gamma <= m + 1; ++gamma) {
    std::vector<Rational> rhs(n + 1);
    for (std::size_t delta = 0; delta <= n; ++delta) {
      // Gamma all-ones rows on top, then Delta ones-columns and n - Delta
      // zero-columns, then X_0 in front marking the first row.
      std::vector<Instance> rows;
      for (std::size_t g = 0; g < gamma; ++g) rows.emplace_back(n, 1);
      for (const auto& row : x) rows.push_back(row);
      for (auto& row : rows) {
        for (std::size_t c = 0; c < n; ++c) row.push_back(c < delta ? 1 : 0);
        row.insert(row.begin(), 0);
      }
      rows.front().front() = 1;
      const EmpiricalDataset extended(std::move(rows));
      const Rational shap = ask(extended, f1, 0);
      ++trace.shap_calls;
      // The first row is 1 on exactly n + Delta of the 2n columns.
      Rational first = 0;
      for (std::size_t k = 0; k <= n + delta; ++k) first += weight[k] * Rational(binomial(n + delta, k));
      const Rational V = first - shap;
      trace.V[gamma - 1][delta] = V;
      rhs[delta] = V * static_cast<long>(big_n + 1);
    }
    v_gamma[gamma - 1] = solve_exact(A, rhs).x;
  }
  trace.v = v_gamma;
  // Gamma system (Cauchy): v^{(Gamma)}_k = sum_l a[l][k] / (l + Gamma).
  RationalMatrix C(m + 1, std::vector<Rational>(m + 1));
  for (std::size_t g = 1; g <= m + 1; ++g)
    for (std::size_t l = 0; l <= m; ++l) C[g - 1][l] = Rational(1, static_cast<long>(l + g));
  trace.gamma_determinant = determinant(C);
  if (trace.gamma_determinant == 0) throw InternalError("Gamma system is singular");
  trace.a.assign(m + 1, std::vector<Integer>(n + 1));
  for (std::size_t k = 0; k <= n; ++k) {
    std::vector<Rational> rhs(m + 1);
    for (std::size_t g = 0; g <= m; ++g) rhs[g] = v_gamma[g][k];
    const auto col = solve_exact(C, rhs).x;
    for (std::size_t l = 0; l <= m; ++l) {
      if (col[l].get_den() != 1) throw InternalError("recovered subset count is not an integer");
      trace.a[l][k] = col[l].get_num();
    }
  }
  SubsetPolynomial poly;
  poly.a = trace.a;
  trace.b = q_coefficients(poly);
  // E = p^m q^n Q(u, v) with u = (1-p)/p, v = (1-q)/q, expanded without division.
  Rational e = 0;
  for (std::size_t l = 0; l <= m; ++l)
    for (std::size_t k = 0; k <= n; ++k)
      if (trace.b[l][k] != 0)
        e += Rational(trace.b[l][k]) * detail::power(1 - s.p, l) * detail::power(s.p, m - l) *
             detail::power(1 - s.q, k) * detail::power(s.q, n - k);
  if (trace_out) *trace_out = std::move(trace);
  return e;
}

}  // namespace shapx
