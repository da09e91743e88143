#pragma once

// Fully-factorized, naive Bayes and empirical distributions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "shapx/error.hpp"
#include "shapx/model.hpp"
#include "shapx/rational.hpp"

namespace shapx {

/// A partial assignment: feature index -> value. For subset events over
/// binary features use EventMask::ones(S).
class EventMask {
 public:
  EventMask() = default;
  explicit EventMask(std::vector<std::pair<std::size_t, int>> fixed) : fixed_(std::move(fixed)) {
    std::sort(fixed_.begin(), fixed_.end());
    for (std::size_t i = 1; i < fixed_.size(); ++i)
      if (fixed_[i].first == fixed_[i - 1].first)
        throw PreconditionError("event mask mentions feature " + std::to_string(fixed_[i].first) +
                                " twice");
  }

  static EventMask ones(const std::vector<std::size_t>& subset) {
    std::vector<std::pair<std::size_t, int>> f;
    f.reserve(subset.size());
    for (auto i : subset) f.emplace_back(i, 1);
    return EventMask(std::move(f));
  }

  /// The event x_S for the given instance.
  static EventMask from_instance(const Instance& x, const std::vector<std::size_t>& subset) {
    std::vector<std::pair<std::size_t, int>> f;
    f.reserve(subset.size());
    for (auto i : subset) f.emplace_back(i, x.at(i));
    return EventMask(std::move(f));
  }

  const std::vector<std::pair<std::size_t, int>>& fixed() const { return fixed_; }
  bool empty() const { return fixed_.empty(); }
  std::size_t size() const { return fixed_.size(); }

  bool matches(const Instance& x) const {
    return std::all_of(fixed_.begin(), fixed_.end(),
                       [&](const auto& f) { return x[f.first] == f.second; });
  }

  void check_range(std::size_t n) const {
    for (const auto& [i, v] : fixed_)
      if (i >= n)
        throw PreconditionError("event mask feature " + std::to_string(i) + " out of range (n = " +
                                std::to_string(n) + ")");
  }

 private:
  std::vector<std::pair<std::size_t, int>> fixed_;
};

/// Independent features with finite domains {0..m_i-1}.
class ProductDistribution {
 public:
  ProductDistribution() = default;
  explicit ProductDistribution(std::vector<std::vector<Rational>> probs) : probs_(std::move(probs)) {
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      if (probs_[i].empty()) throw PreconditionError("feature " + std::to_string(i) + " has an empty domain");
      Rational sum = 0;
      for (const auto& p : probs_[i]) {
        if (p < 0 || p > 1)
          throw PreconditionError("probability " + to_string(p) + " of feature " + std::to_string(i) +
                                  " is outside [0,1]");
        sum += p;
      }
      if (sum != 1)
        throw PreconditionError("probabilities of feature " + std::to_string(i) + " sum to " +
                                to_string(sum) + ", not 1");
    }
  }

  /// Binary features with Pr(X_i = 1) = p[i].
  static ProductDistribution binary(const std::vector<Rational>& p) {
    std::vector<std::vector<Rational>> probs;
    probs.reserve(p.size());
    for (const auto& pi : p) probs.push_back({Rational(1 - pi), pi});
    return ProductDistribution(std::move(probs));
  }

  static ProductDistribution uniform_binary(std::size_t n) {
    return binary(std::vector<Rational>(n, Rational(1, 2)));
  }

  std::size_t feature_count() const { return probs_.size(); }
  std::size_t domain_size(std::size_t i) const { return probs_[i].size(); }
  const Rational& prob(std::size_t i, int v) const { return probs_[i][static_cast<std::size_t>(v)]; }
  const std::vector<Rational>& feature(std::size_t i) const { return probs_[i]; }
  const std::vector<std::vector<Rational>>& probs() const { return probs_; }

  bool is_binary() const {
    return std::all_of(probs_.begin(), probs_.end(), [](const auto& p) { return p.size() == 2; });
  }

  Rational mean(std::size_t i) const {
    Rational out = 0;
    for (std::size_t v = 0; v < probs_[i].size(); ++v) out += probs_[i][v] * static_cast<long>(v);
    return out;
  }

  /// Copy with the features of the mask pinned to their values.
  ProductDistribution pinned(const EventMask& mask) const {
    mask.check_range(feature_count());
    auto probs = probs_;
    for (const auto& [i, v] : mask.fixed()) {
      check_value(i, v);
      std::fill(probs[i].begin(), probs[i].end(), Rational(0));
      probs[i][static_cast<std::size_t>(v)] = 1;
    }
    ProductDistribution out;
    out.probs_ = std::move(probs);
    return out;
  }

  void check_value(std::size_t i, int v) const {
    if (v < 0 || static_cast<std::size_t>(v) >= probs_[i].size())
      throw SignatureError("value " + std::to_string(v) + " of feature " + std::to_string(i) +
                           " is outside its domain of size " + std::to_string(probs_[i].size()));
  }

  void check_instance(const Instance& x) const {
    check_instance_length(feature_count(), x);
    for (std::size_t i = 0; i < x.size(); ++i) check_value(i, x[i]);
  }

 private:
  std::vector<std::vector<Rational>> probs_;
};

/// Class variable X_0 plus binary features X_1..X_n that are independent
/// given X_0. Stored as natural logs so gadget-scale parameters such as
/// e^{-m k_i} stay representable.
class NaiveBayesNet {
 public:
  NaiveBayesNet() = default;
  /// Parameters given as log-probabilities: log Pr(X_0=1), and per feature
  /// log Pr(X_i=1 | X_0=1), log Pr(X_i=1 | X_0=0).
  NaiveBayesNet(Real log_prior, std::vector<Real> log_cond1, std::vector<Real> log_cond0)
      : log_prior_(log_prior), log_cond1_(std::move(log_cond1)), log_cond0_(std::move(log_cond0)) {
    if (log_cond1_.size() != log_cond0_.size())
      throw PreconditionError("cond1 and cond0 must have the same length");
    if (!(log_prior_ < 0) || std::isinf(log_prior_) || !(log_complement(log_prior_) > -inf()))
      throw PreconditionError("prior Pr(X_0=1) must lie in (0,1)");
    for (std::size_t i = 0; i < log_cond1_.size(); ++i)
      for (Real l : {log_cond1_[i], log_cond0_[i]})
        if (std::isnan(l) || l > 0)
          throw PreconditionError("conditional probability of feature " + std::to_string(i + 1) +
                                  " outside [0,1]");
  }

  static NaiveBayesNet from_probabilities(Real prior, const std::vector<Real>& cond1,
                                          const std::vector<Real>& cond0) {
    auto logs = [](const std::vector<Real>& v) {
      std::vector<Real> out;
      out.reserve(v.size());
      for (Real p : v) out.push_back(std::log(p));
      return out;
    };
    return NaiveBayesNet(std::log(prior), logs(cond1), logs(cond0));
  }

  /// Number of evidence features X_1..X_n (X_0 excluded).
  std::size_t evidence_count() const { return log_cond1_.size(); }
  Real log_prior() const { return log_prior_; }
  Real log_prior_complement() const { return log_complement(log_prior_); }
  const std::vector<Real>& log_cond1() const { return log_cond1_; }
  const std::vector<Real>& log_cond0() const { return log_cond0_; }

  /// log Pr(X_i = v | X_0 = c) for evidence feature i in 1..n.
  Real log_cond(std::size_t i, int v, int c) const {
    const Real l = (c == 1 ? log_cond1_ : log_cond0_).at(i - 1);
    return v == 1 ? l : log_complement(l);
  }

  /// log(1 - e^l) computed without cancellation.
  static Real log_complement(Real l) {
    if (l == -inf()) return 0;
    if (l > -0.6931471805599453094L) return std::log(-std::expm1(l));
    return std::log1p(-std::exp(l));
  }

  static Real inf() { return std::numeric_limits<Real>::infinity(); }

 private:
  Real log_prior_ = 0;
  std::vector<Real> log_cond1_;
  std::vector<Real> log_cond0_;
};

inline Real log_add_exp(Real a, Real b) {
  if (a == -NaiveBayesNet::inf()) return b;
  if (b == -NaiveBayesNet::inf()) return a;
  const Real hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

/// Pr(X_0 = 1 | X_i = 1 for i in S) from the odds-product formula.
/// S holds evidence indices in 1..n.
inline Real nbn_posterior(const NaiveBayesNet& nbn, const std::vector<std::size_t>& subset) {
  Real num = nbn.log_prior();
  Real den = nbn.log_prior_complement();
  for (auto i : subset) {
    if (i < 1 || i > nbn.evidence_count())
      throw PreconditionError("posterior evidence index " + std::to_string(i) + " out of range");
    num += nbn.log_cond(i, 1, 1);
    den += nbn.log_cond(i, 1, 0);
  }
  if (num == -NaiveBayesNet::inf() && den == -NaiveBayesNet::inf())
    throw PreconditionError("posterior is 0/0: the evidence has probability zero");
  if (num == -NaiveBayesNet::inf()) return 0;
  if (den == -NaiveBayesNet::inf()) return 1;
  return sigmoid(num - den);
}

/// Uniform distribution over the rows of a binary matrix; a row with count
/// c has probability c / total.
class EmpiricalDataset {
 public:
  EmpiricalDataset() = default;
  EmpiricalDataset(std::vector<Instance> rows, std::vector<long> counts = {},
                   std::vector<std::string> names = {})
      : rows_(std::move(rows)), counts_(std::move(counts)), names_(std::move(names)) {
    if (rows_.empty()) throw PreconditionError("dataset needs at least one row");
    const std::size_t n = rows_.front().size();
    if (n == 0) throw PreconditionError("dataset needs at least one column");
    if (counts_.empty()) counts_.assign(rows_.size(), 1);
    if (counts_.size() != rows_.size()) throw PreconditionError("one count per row is required");
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      if (rows_[r].size() != n)
        throw PreconditionError("row " + std::to_string(r) + " has " + std::to_string(rows_[r].size()) +
                                " entries, expected " + std::to_string(n));
      for (int v : rows_[r])
        if (v != 0 && v != 1) throw PreconditionError("dataset entries must be 0 or 1");
      if (counts_[r] < 1) throw PreconditionError("row counts must be positive");
    }
    if (names_.empty())
      for (std::size_t j = 0; j < n; ++j) names_.push_back("X" + std::to_string(j + 1));
    if (names_.size() != n) throw PreconditionError("one name per column is required");
  }

  std::size_t row_count() const { return rows_.size(); }
  std::size_t feature_count() const { return rows_.front().size(); }
  const std::vector<Instance>& rows() const { return rows_; }
  const Instance& row(std::size_t r) const { return rows_[r]; }
  long count(std::size_t r) const { return counts_[r]; }
  const std::vector<long>& counts() const { return counts_; }
  const std::vector<std::string>& names() const { return names_; }

  long total() const { return std::accumulate(counts_.begin(), counts_.end(), 0L); }

  /// Rows repeated according to their counts.
  std::vector<Instance> expanded() const {
    std::vector<Instance> out;
    out.reserve(static_cast<std::size_t>(total()));
    for (std::size_t r = 0; r < rows_.size(); ++r)
      for (long c = 0; c < counts_[r]; ++c) out.push_back(rows_[r]);
    return out;
  }

 private:
  std::vector<Instance> rows_;
  std::vector<long> counts_;
  std::vector<std::string> names_;
};

inline Rational event_probability(const ProductDistribution& dist, const EventMask& mask) {
  mask.check_range(dist.feature_count());
  Rational out = 1;
  for (const auto& [i, v] : mask.fixed()) {
    dist.check_value(i, v);
    out *= dist.prob(i, v);
  }
  return out;
}

inline Rational event_probability(const EmpiricalDataset& data, const EventMask& mask) {
  mask.check_range(data.feature_count());
  long hits = 0;
  for (std::size_t r = 0; r < data.row_count(); ++r)
    if (mask.matches(data.row(r))) hits += data.count(r);
  return ratio(hits, data.total());
}

/// Feature 0 of the mask is X_0, features 1..n are the evidence.
inline Real event_probability(const NaiveBayesNet& nbn, const EventMask& mask) {
  mask.check_range(nbn.evidence_count() + 1);
  Real total = -NaiveBayesNet::inf();
  for (int c : {0, 1}) {
    Real l = c == 1 ? nbn.log_prior() : nbn.log_prior_complement();
    bool possible = true;
    for (const auto& [i, v] : mask.fixed()) {
      if (i == 0) {
        possible = possible && v == c;
      } else {
        l += nbn.log_cond(i, v, c);
      }
    }
    if (possible) total = log_add_exp(total, l);
  }
  return std::exp(total);
}

/// E[F | event] over an empirical distribution; 0 when no row matches.
template <class F>
Rational conditional_expectation(const F& f, const EmpiricalDataset& data, const EventMask& mask) {
  mask.check_range(data.feature_count());
  Rational sum = 0;
  long hits = 0;
  for (std::size_t r = 0; r < data.row_count(); ++r) {
    if (!mask.matches(data.row(r))) continue;
    sum += f(data.row(r)) * data.count(r);
    hits += data.count(r);
  }
  if (hits == 0) return 0;
  return sum / hits;
}

inline Rational conditional_expectation(const Model& model, const EmpiricalDataset& data,
                                        const EventMask& mask) {
  if (feature_count(model) != data.feature_count())
    throw SignatureError("model has " + std::to_string(feature_count(model)) +
                         " features, dataset has " + std::to_string(data.feature_count()));
  if (std::holds_alternative<LogisticModel>(model))
    throw SignatureError("empirical conditional expectations need a rational-valued model");
  return conditional_expectation(
      [&](const Instance& x) { return std::get<Rational>(evaluate(model, x)); }, data, mask);
}

}  // namespace shapx
