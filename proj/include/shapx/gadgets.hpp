#pragma once

// Number-partitioning gadgets: a logistic model whose expectation under the
// uniform distribution counts balanced partitions, and a naive Bayes net
// whose SHAP score decides whether one exists.

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "shapx/distributions.hpp"
#include "shapx/error.hpp"
#include "shapx/expectation.hpp"
#include "shapx/model.hpp"
#include "shapx/rational.hpp"

namespace shapx {

/// Positive integers k_1..k_n. An odd total is made even by appending
/// sum(k) + 2, which no balanced partition can use.
class NumparInstance {
 public:
  explicit NumparInstance(std::vector<long> k) : original_(std::move(k)) {
    if (original_.empty()) throw PreconditionError("NUMPAR instance needs at least one number");
    for (long v : original_)
      if (v <= 0) throw PreconditionError("NUMPAR numbers must be positive");
    values_ = original_;
    const long sum = std::accumulate(values_.begin(), values_.end(), 0L);
    if (sum % 2 != 0) {
      values_.push_back(sum + 2);
      padded_ = true;
    }
    c_ = std::accumulate(values_.begin(), values_.end(), 0L) / 2;
  }

  const std::vector<long>& original() const { return original_; }
  /// Normalized numbers (with the padding element, if any).
  const std::vector<long>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  long half_sum() const { return c_; }
  bool padded() const { return padded_; }

 private:
  std::vector<long> original_;
  std::vector<long> values_;
  long c_ = 0;
  bool padded_ = false;
};

struct GadgetParams {
  Real m = 0;
  Real epsilon = 0;

  /// 2 sigma(-m/2) <= eps and 1 - sigma(m/2) <= eps.
  bool valid() const {
    return 2 * sigmoid(-m / 2) <= epsilon && 1 - sigmoid(m / 2) <= epsilon;
  }

  /// Twice the smallest m meeting both inequalities, m_min = 2 ln(2/eps - 1).
  static GadgetParams for_epsilon(Real epsilon) {
    GadgetParams g;
    g.epsilon = epsilon;
    g.m = 2 * (2 * std::log(2 / epsilon - 1));
    if (!g.valid()) throw PreconditionError("gadget scale does not meet the epsilon inequalities");
    return g;
  }
};

/// sigma(weight(S)) with weight(S) = -m/2 - m c + m sum_{i in S} k_i.
inline Real gadget_weight(const NumparInstance& inst, const GadgetParams& g, std::uint64_t subset) {
  long sum = 0;
  for (std::size_t i = 0; i < inst.size(); ++i)
    if ((subset >> i) & 1U) sum += inst.values()[i];
  return -g.m / 2 - g.m * static_cast<Real>(inst.half_sum()) + g.m * static_cast<Real>(sum);
}

/// ceil(x) for a value known only to lie in [x - delta, x + delta].
inline long audited_ceiling(Real x, Real delta) {
  const Real lo = std::ceil(x - delta), hi = std::ceil(x + delta);
  if (lo != hi)
    throw PrecisionAuditError("value " + to_string(x) + " +/- " + to_string(delta) +
                              " straddles an integer; the ceiling is not determined");
  return static_cast<long>(lo);
}

struct LogisticGadget {
  NumparInstance instance;
  GadgetParams params;
  LogisticModel model;
};

inline constexpr std::size_t kLogisticGadgetCap = 20;
inline constexpr std::size_t kNbnGadgetCap = 16;

inline LogisticGadget logistic_gadget(const NumparInstance& inst) {
  const std::size_t n = inst.size();
  if (n > kLogisticGadgetCap)
    throw CapacityError("logistic gadget evaluation enumerates 2^n instances; n = " + std::to_string(n) +
                        " exceeds " + std::to_string(kLogisticGadgetCap));
  const Real eps = std::ldexp(Real(1), -static_cast<int>(n + 3));
  LogisticGadget out{inst, GadgetParams::for_epsilon(eps), {}};
  const Real m = out.params.m;
  out.model.weights.push_back(-m / 2 - m * static_cast<Real>(inst.half_sum()));
  for (long k : inst.values()) out.model.weights.push_back(m * static_cast<Real>(k));
  return out;
}

struct PartitionCount {
  long count = 0;
  Real expectation = 0;
  Real lower_bound = 0;  // 2^n - 2^{n+1} E / (1 - eps)
  Real audit_radius = 0;
};

/// |P| = ceil(2^n - 2^{n+1} E[F] / (1 - eps)) with E[F] from the logistic
/// expectation oracle under the uniform distribution.
inline PartitionCount count_partitions_via_expectation(const NumparInstance& inst) {
  const LogisticGadget g = logistic_gadget(inst);
  const std::size_t n = inst.size();
  PartitionCount out;
  ExpectationOptions opt;
  opt.brute_cap = kLogisticGadgetCap;
  out.expectation = expectation(g.model, ProductDistribution::uniform_binary(n), opt);
  const Real two_n = std::ldexp(Real(1), static_cast<int>(n));
  const Real scale = 2 * two_n / (1 - g.params.epsilon);
  out.lower_bound = two_n - scale * out.expectation;
  // Summation of 2^n terms bounded by 2^-n each, a few ulps per sigmoid.
  const Real e_error = (two_n + 16) * LDBL_EPSILON;
  out.audit_radius = scale * e_error + 8 * LDBL_EPSILON * (two_n + std::fabs(out.lower_bound));
  out.count = audited_ceiling(out.lower_bound, out.audit_radius);
  return out;
}

struct NbnGadget {
  NumparInstance instance;
  GadgetParams params;
  NaiveBayesNet nbn;
  Real threshold = 0;  // (1 + eps) / 2
};

/// a_k = k!(n-k)!/(n+1)!; its minimum over k is at k = floor(n/2).
inline Real min_shapley_weight(std::size_t n) { return to_real(shapley_weight(n / 2, n)); }

inline NbnGadget nbn_gadget(const NumparInstance& inst) {
  const std::size_t n = inst.size();
  if (n > kNbnGadgetCap)
    throw CapacityError("naive Bayes gadget enumerates 2^n subsets; n = " + std::to_string(n) + " exceeds " +
                        std::to_string(kNbnGadgetCap));
  const GadgetParams params = GadgetParams::for_epsilon(min_shapley_weight(n));
  const Real m = params.m;
  // Pr(X_0)/Pr(not X_0) = e^{-m/2 - m c} fixes the prior.
  const Real log_prior = log_sigmoid(-m / 2 - m * static_cast<Real>(inst.half_sum()));
  std::vector<Real> log_cond1, log_cond0;
  for (long k : inst.values()) {
    // Pr(X_i | not X_0) = min(1/2, e^{-m k}); Pr(X_i | X_0) = e^{m k} times that.
    const Real l0 = std::min(-std::log(Real(2)), -m * static_cast<Real>(k));
    log_cond0.push_back(l0);
    log_cond1.push_back(std::min(Real(0), l0 + m * static_cast<Real>(k)));
  }
  NbnGadget out{inst, params, NaiveBayesNet(log_prior, log_cond1, log_cond0), (1 + params.epsilon) / 2};
  return out;
}

struct NumparDecision {
  bool solvable = false;
  Real shap = 0;
  Real threshold = 0;
  Real audit_radius = 0;
};

/// SHAP of X_0 for F = X_0 over the gadget net at the all-ones instance:
/// 1 - sum_S a_{|S|} Pr(X_0 | X_S).
inline Real nbn_gadget_shap(const NbnGadget& g) {
  const std::size_t n = g.instance.size();
  std::vector<Real> a(n + 1);
  for (std::size_t k = 0; k <= n; ++k) a[k] = to_real(shapley_weight(k, n));
  Real d = 0;
  std::vector<std::size_t> subset;
  for (std::uint64_t s = 0; s < (std::uint64_t{1} << n); ++s) {
    subset.clear();
    for (std::size_t i = 0; i < n; ++i)
      if ((s >> i) & 1U) subset.push_back(i + 1);
    d += a[subset.size()] * nbn_posterior(g.nbn, subset);
  }
  return 1 - d;
}

inline NumparDecision numpar_decide_via_shap(const NumparInstance& inst) {
  const NbnGadget g = nbn_gadget(inst);
  const std::size_t n = inst.size();
  NumparDecision out;
  out.shap = nbn_gadget_shap(g);
  out.threshold = g.threshold;
  // Rounding in the summation plus the error of log-odds of size up to
  // m (2c + 1) accumulated over n + 1 terms.
  const Real log_odds_scale = g.params.m * static_cast<Real>(2 * inst.half_sum() + 1);
  out.audit_radius = (std::ldexp(Real(1), static_cast<int>(n)) + 16) * 8 * LDBL_EPSILON +
                     log_odds_scale * static_cast<Real>(n + 4) * LDBL_EPSILON;
  if (std::fabs(out.shap - out.threshold) <= out.audit_radius)
    throw PrecisionAuditError("SHAP score " + to_string(out.shap) + " is within " + to_string(out.audit_radius) +
                              " of the threshold " + to_string(out.threshold));
  out.solvable = out.shap > out.threshold;
  return out;
}

}  // namespace shapx
