#pragma once

// Exact SHAP scores under product distributions, computed from expectation
// queries by polynomial interpolation.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "shapx/distributions.hpp"
#include "shapx/error.hpp"
#include "shapx/expectation.hpp"
#include "shapx/interpolation.hpp"
#include "shapx/model.hpp"
#include "shapx/parallel.hpp"
#include "shapx/rational.hpp"
#include "shapx/value_function.hpp"

namespace shapx {

template <class T>
struct ShapReport {
  std::vector<T> scores;
  std::string path;  // reduction | permutation-brute | subset-brute | empirical-direct | ...
  std::size_t oracle_calls = 0;
  Instance instance;
  T prediction = 0;
  T expectation = 0;
  std::vector<std::string> notes;
};

using AnyShapReport = std::variant<ShapReport<Rational>, ShapReport<Real>>;

/// Hook called with every report any engine produces. Test suites use it to
/// assert the sum rule globally.
template <class T>
std::function<void(const ShapReport<T>&)>& report_observer() {
  static std::function<void(const ShapReport<T>&)> observer;
  return observer;
}

template <class T>
const ShapReport<T>& publish(const ShapReport<T>& report) {
  if (auto& obs = report_observer<T>()) obs(report);
  return report;
}

/// sum of scores == F(x) - E[F]; exact for rationals, relative tolerance for reals.
template <class T>
bool sum_rule_holds(const ShapReport<T>& r, Real tolerance = 1e-9L) {
  T sum = 0;
  for (const auto& s : r.scores) sum += s;
  const T gap = r.prediction - r.expectation;
  if constexpr (is_exact_v<T>) {
    return sum == gap;
  } else {
    const Real scale = std::max<Real>(1, std::fabs(gap));
    return std::fabs(sum - gap) <= tolerance * scale;
  }
}

struct ShapOptions {
  /// Re-query the oracle at one extra probe and compare with the
  /// interpolated polynomial. Costs 2 calls per feature.
  bool self_check = false;
  ExpectationOptions expectation;
};

/// E[G] of a function over binary features, queried at q_i = Pr(feature i
/// is "on"). Every query increments the call counter; a restricted batch
/// counts two calls per feature.
template <class T>
class ExpectationOracle {
 public:
  struct Restricted {
    std::vector<T> on;   // q_i := 1
    std::vector<T> off;  // q_i := 0
  };

  explicit ExpectationOracle(std::size_t n) : n_(n) {}
  ExpectationOracle(const ExpectationOracle&) = delete;
  ExpectationOracle& operator=(const ExpectationOracle&) = delete;
  virtual ~ExpectationOracle() = default;

  std::size_t feature_count() const { return n_; }
  std::size_t calls() const { return calls_.load(); }

  T expectation(const std::vector<Rational>& q) const {
    calls_ += 1;
    return compute(q);
  }

  /// Indexed like `features`.
  Restricted restricted(const std::vector<Rational>& q, const std::vector<std::size_t>& features) const {
    calls_ += 2 * features.size();
    return compute_restricted(q, features);
  }

 protected:
  virtual T compute(const std::vector<Rational>& q) const = 0;

  virtual Restricted compute_restricted(const std::vector<Rational>& q,
                                        const std::vector<std::size_t>& features) const {
    Restricted out;
    std::vector<Rational> r = q;
    for (auto i : features) {
      r[i] = 1;
      out.on.push_back(compute(r));
      r[i] = 0;
      out.off.push_back(compute(r));
      r[i] = q[i];
    }
    return out;
  }

 private:
  std::size_t n_;
  mutable std::atomic<std::size_t> calls_{0};
};

/// Oracle from a plain function of q.
template <class T>
class FunctionOracle final : public ExpectationOracle<T> {
 public:
  FunctionOracle(std::size_t n, std::function<T(const std::vector<Rational>&)> f)
      : ExpectationOracle<T>(n), f_(std::move(f)) {}

 protected:
  T compute(const std::vector<Rational>& q) const override { return f_(q); }

 private:
  std::function<T(const std::vector<Rational>&)> f_;
};

/// p'_i = (p_i + z) / (1 + z)
inline std::vector<Rational> shift_probabilities(const std::vector<Rational>& p, long z) {
  std::vector<Rational> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = (p[i] + z) / (1 + z);
  return out;
}

namespace detail {

template <class T>
T from_value(const Value& v) {
  if constexpr (is_exact_v<T>) {
    if (const auto* r = std::get_if<Rational>(&v)) return *r;
    throw InternalError("exact engine received a floating-point value");
  } else {
    if (const auto* r = std::get_if<Rational>(&v)) return to_real(*r);
    return std::get<Real>(v);
  }
}

template <class T>
T power_of(long base, std::size_t e) {
  if constexpr (is_exact_v<T>) {
    Integer out;
    mpz_ui_pow_ui(out.get_mpz_t(), static_cast<unsigned long>(base), e);
    return Rational(out);
  } else {
    return std::pow(static_cast<Real>(base), static_cast<Real>(e));
  }
}

template <class T>
void check_match(const T& expected, const T& got, const char* what) {
  bool ok;
  if constexpr (is_exact_v<T>)
    ok = expected == got;
  else
    ok = std::fabs(expected - got) <= 1e-6L * std::max<Real>(1, std::fabs(expected));
  if (!ok) throw InternalError(std::string("interpolation self-check failed for ") + what);
}

inline void check_positive(const std::vector<Rational>& p) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0)
      throw PreconditionError("feature " + std::to_string(i) +
                              " has probability 0 at the explained value; conditioning is undefined");
    if (p[i] > 1) throw PreconditionError("probability above 1 for feature " + std::to_string(i));
  }
}

}  // namespace detail

/// v_k = sum over |S| = k of E[G | X_S = 1], k = 0..n, from n+1 oracle
/// calls: (1+z)^n E_z[G] = sum_k v_k z^k at z = 1..n+1.
template <class T>
std::vector<T> collect_vk(const std::function<T(const std::vector<Rational>&)>& oracle,
                          const std::vector<Rational>& p, bool self_check = false) {
  detail::check_positive(p);
  const std::size_t n = p.size();
  std::vector<T> y(n + 1);
  for (std::size_t j = 0; j <= n; ++j) {
    const long z = static_cast<long>(j) + 1;
    y[j] = detail::power_of<T>(1 + z, n) * oracle(shift_probabilities(p, z));
  }
  std::vector<T> v = interpolate_unit_grid(y);
  if (self_check) {
    const long z = static_cast<long>(n) + 2;
    const T fresh = detail::power_of<T>(1 + z, n) * oracle(shift_probabilities(p, z));
    detail::check_match<T>(fresh, evaluate_polynomial(v, T(z)), "collect_vk");
  }
  return v;
}

namespace detail {

// Scores of the requested features from restricted batches at probes
// z = 1..n (n - 1 other features, so degree n - 1).
template <class T>
std::vector<T> reduction_scores(const ExpectationOracle<T>& oracle, const std::vector<Rational>& q,
                                const std::vector<std::size_t>& features, const ShapOptions& opt) {
  check_positive(q);
  const std::size_t n = q.size();
  if (features.empty()) return {};
  const std::size_t others = n - 1;
  const std::size_t probes = others + 1 + (opt.self_check ? 1 : 0);
  std::vector<typename ExpectationOracle<T>::Restricted> batches(probes);
  parallel_for(probes, [&](std::size_t j) {
    const long z = static_cast<long>(j) + 1;
    batches[j] = oracle.restricted(shift_probabilities(q, z), features);
  });
  std::vector<T> weight(others + 1);
  for (std::size_t k = 0; k <= others; ++k) weight[k] = convert_probability<T>(shapley_weight(k, others));
  std::vector<T> scores(features.size());
  parallel_for(features.size(), [&](std::size_t f) {
    std::vector<T> y1(others + 1), y0(others + 1);
    for (std::size_t j = 0; j <= others; ++j) {
      const T scale = power_of<T>(static_cast<long>(j) + 2, others);
      y1[j] = scale * batches[j].on[f];
      y0[j] = scale * batches[j].off[f];
    }
    const std::vector<T> v1 = interpolate_unit_grid(y1);
    const std::vector<T> v0 = interpolate_unit_grid(y0);
    if (opt.self_check) {
      const long z = static_cast<long>(others) + 2;
      const T scale = power_of<T>(1 + z, others);
      check_match<T>(scale * batches[others + 1].on[f], evaluate_polynomial(v1, T(z)), "F[X:=1]");
      check_match<T>(scale * batches[others + 1].off[f], evaluate_polynomial(v0, T(z)), "F[X:=0]");
    }
    const T gap = T(1) - convert_probability<T>(q[features[f]]);
    T score = 0;
    for (std::size_t k = 0; k <= others; ++k) score += weight[k] * gap * (v1[k] - v0[k]);
    scores[f] = score;
  });
  return scores;
}

}  // namespace detail

/// SHAP of one feature of a binary-feature function given by its
/// expectation oracle, with q_i = Pr(feature i on) and the instance all-on.
template <class T>
T shap_reduction(const ExpectationOracle<T>& oracle, const std::vector<Rational>& q, std::size_t feature,
                 const ShapOptions& opt = {}) {
  if (feature >= q.size()) throw PreconditionError("feature index out of range");
  return detail::reduction_scores(oracle, q, {feature}, opt).front();
}

/// Binary view of a multi-valued product distribution around an instance:
/// feature i is "on" when X_i = x_i. Maps binary probabilities q to the
/// multi-valued distribution p' whose expectation answers the binary query.
struct ProjectionContext {
  std::vector<Rational> pi;  // Pr(X_i = x_i): the projected binary distribution
  std::vector<Rational> w;   // (1 - q_i) / q_i, empty unless every q_i > 0
  Rational z = 1;            // prod q_i
  Rational big_w = 1;        // prod (1 + w_i)
  ProductDistribution projected;

  /// E_pi[F_pi] at q equals z * big_w * E'[F].
  Rational transfer_factor() const { return z * big_w; }
};

inline std::vector<Rational> instance_probabilities(const ProductDistribution& dist, const Instance& x) {
  dist.check_instance(x);
  std::vector<Rational> pi(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) pi[i] = dist.prob(i, x[i]);
  return pi;
}

inline ProjectionContext make_projection(const ProductDistribution& base, const Instance& x,
                                         const std::vector<Rational>& q) {
  ProjectionContext ctx;
  ctx.pi = instance_probabilities(base, x);
  const std::size_t n = x.size();
  if (q.size() != n) throw SignatureError("projection query has the wrong length");
  std::vector<std::vector<Rational>> probs(n);
  const bool weighted = std::all_of(q.begin(), q.end(), [](const Rational& v) { return v > 0; });
  for (std::size_t i = 0; i < n; ++i) {
    if (q[i] < 0 || q[i] > 1) throw PreconditionError("projection query outside [0,1]");
    const std::size_t m = base.domain_size(i);
    probs[i].assign(m, Rational(0));
    const auto xi = static_cast<std::size_t>(x[i]);
    probs[i][xi] = q[i];
    if (q[i] != 1) {
      const Rational rest = 1 - ctx.pi[i];
      if (rest == 0)
        throw PreconditionError("feature " + std::to_string(i) + " is deterministic and cannot be switched off");
      for (std::size_t v = 0; v < m; ++v)
        if (v != xi) probs[i][v] = base.feature(i)[v] * (1 - q[i]) / rest;
    }
    if (weighted) {
      ctx.w.push_back((1 - q[i]) / q[i]);
      ctx.z *= q[i];
      ctx.big_w *= 1 + ctx.w.back();
    }
  }
  ctx.projected = ProductDistribution(std::move(probs));
  return ctx;
}

/// Binary-query oracle backed by a model and a multi-valued product
/// distribution, one model expectation per query.
template <class T>
class ModelOracle final : public ExpectationOracle<T> {
 public:
  ModelOracle(const Model& model, const ProductDistribution& dist, const Instance& x,
              ExpectationOptions opt = {})
      : ExpectationOracle<T>(x.size()), model_(&model), dist_(&dist), x_(x), opt_(opt) {
    check_signature(feature_count(model), dist);
    dist.check_instance(x);
    if (std::holds_alternative<LogisticModel>(model))
      check_brute_cap(feature_count(model), opt_.brute_cap, "logistic");
    if (std::holds_alternative<CnfFormula>(model)) check_brute_cap(feature_count(model), opt_.brute_cap, "CNF");
    if constexpr (is_exact_v<T>)
      if (std::holds_alternative<LogisticModel>(model))
        throw SignatureError("logistic models need the floating-point engine");
    if (const auto* c = std::get_if<DdnnfCircuit>(&model)) {
      check_binary_distribution(dist, "d-DNNF");
      ddnnf_.emplace(*c);
    }
  }

  // The oracle refers to model and distribution; temporaries would dangle.
  ModelOracle(Model&&, const ProductDistribution&, const Instance&, ExpectationOptions = {}) = delete;
  ModelOracle(const Model&, ProductDistribution&&, const Instance&, ExpectationOptions = {}) = delete;

  const PassCost& pass_cost() const { return cost_; }

 protected:
  T compute(const std::vector<Rational>& q) const override {
    const ProjectionContext ctx = make_projection(*dist_, x_, q);
    return detail::from_value<T>(shapx::expectation(*model_, ctx.projected, opt_));
  }

  typename ExpectationOracle<T>::Restricted compute_restricted(
      const std::vector<Rational>& q, const std::vector<std::size_t>& features) const override {
    if constexpr (is_exact_v<T>) {
      if (ddnnf_) {
        std::vector<Rational> p1(q.size());
        for (std::size_t v = 0; v < q.size(); ++v) p1[v] = x_[v] == 1 ? q[v] : Rational(1 - q[v]);
        PassCost local;
        auto batch = ddnnf_->restricted(p1, &local);
        {
          std::lock_guard<std::mutex> lock(cost_mutex_);
          cost_.forward_edges += local.forward_edges;
          cost_.backward_edges += local.backward_edges;
          cost_.passes += local.passes;
        }
        typename ExpectationOracle<T>::Restricted out;
        for (auto i : features) {
          out.on.push_back(x_[i] == 1 ? batch.on[i] : batch.off[i]);
          out.off.push_back(x_[i] == 1 ? batch.off[i] : batch.on[i]);
        }
        return out;
      }
    }
    return ExpectationOracle<T>::compute_restricted(q, features);
  }

 private:
  const Model* model_;
  const ProductDistribution* dist_;
  Instance x_;
  ExpectationOptions opt_;
  std::optional<DdnnfEvaluator> ddnnf_;
  mutable std::mutex cost_mutex_;
  mutable PassCost cost_;
};

enum class Engine { kAuto, kReduction, kBrute, kPermutation };

namespace detail {

template <class T>
T predict(const Model& model, const Instance& x) {
  return from_value<T>(evaluate(model, x));
}

template <class T>
ShapReport<T> reduction_report(const Model& model, const ProductDistribution& dist, const Instance& x,
                               const ShapOptions& opt) {
  ModelOracle<T> oracle(model, dist, x, opt.expectation);
  const std::vector<Rational> pi = instance_probabilities(dist, x);
  ShapReport<T> report;
  report.path = "reduction";
  report.instance = x;
  report.scores.assign(x.size(), T(0));
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (pi[i] == 0)
      throw PreconditionError("feature " + std::to_string(i) + " has probability 0 at value " +
                              std::to_string(x[i]));
    if (pi[i] == 1)
      report.notes.push_back("feature " + std::to_string(i) + " is deterministic and scores 0");
    else
      active.push_back(i);
  }
  const std::vector<T> scores = reduction_scores(oracle, pi, active, opt);
  for (std::size_t f = 0; f < active.size(); ++f) report.scores[active[f]] = scores[f];
  report.expectation = oracle.expectation(pi);
  report.prediction = predict<T>(model, x);
  report.oracle_calls = oracle.calls();
  return report;
}

template <class T>
ShapReport<T> brute_report(const Model& model, const ProductDistribution& dist, const Instance& x,
                           bool permutation, const ShapOptions& opt) {
  const std::size_t n = x.size();
  check_signature(feature_count(model), dist);
  dist.check_instance(x);
  if (is_intractable_class(model)) {
    check_brute_cap(n, opt.expectation.brute_cap, model_class_name(model));
  }
  for (std::size_t i = 0; i < n; ++i)
    if (dist.prob(i, x[i]) == 0)
      throw PreconditionError("feature " + std::to_string(i) + " has probability 0 at value " +
                              std::to_string(x[i]));
  const auto table = product_value_table<T>([&](const Instance& y) { return predict<T>(model, y); }, dist, x);
  ShapReport<T> report;
  report.path = permutation ? "permutation-brute" : "subset-brute";
  report.instance = x;
  report.scores = permutation ? shap_permutation_from_table(table, n) : shap_subset_from_table(table, n);
  report.prediction = table.back();
  report.expectation = table.front();
  return report;
}

}  // namespace detail

/// SHAP of every feature over a multi-valued product distribution: each
/// feature is projected onto "X_i = x_i" and the binary reduction runs on
/// top of the model's own expectation oracle.
template <class T>
ShapReport<T> project_and_shap(const Model& model, const ProductDistribution& dist, const Instance& x,
                               const ShapOptions& opt = {}) {
  return publish(detail::reduction_report<T>(model, dist, x, opt));
}

/// Brute-force SHAP from the full value table; `permutation` selects the
/// n!-order formula, otherwise the subset-weight formula.
template <class T>
ShapReport<T> shap_brute(const Model& model, const ProductDistribution& dist, const Instance& x,
                         bool permutation = false, const ShapOptions& opt = {}) {
  return publish(detail::brute_report<T>(model, dist, x, permutation, opt));
}

/// Brute-force SHAP over a naive Bayes net; features are X_0, X_1..X_n.
template <class F>
ShapReport<Real> nbn_shap_brute(const F& f, const NaiveBayesNet& nbn, const Instance& x) {
  const auto table = nbn_value_table(f, nbn, x);
  ShapReport<Real> report;
  report.path = "nbn-subset-brute";
  report.instance = x;
  report.scores = shap_subset_from_table(table, x.size());
  report.prediction = table.back();
  report.expectation = table.front();
  return publish(report);
}

/// Full report for any model. Auto picks the reduction for tractable
/// classes and enumeration (within caps) for logistic and CNF models.
inline AnyShapReport shap_all(const Model& model, const ProductDistribution& dist, const Instance& x,
                              Engine engine = Engine::kAuto, const ShapOptions& opt = {}) {
  const bool real = std::holds_alternative<LogisticModel>(model);
  if (engine == Engine::kAuto) engine = is_intractable_class(model) ? Engine::kBrute : Engine::kReduction;
  auto run = [&](auto tag) -> AnyShapReport {
    using T = decltype(tag);
    switch (engine) {
      case Engine::kReduction:
        return project_and_shap<T>(model, dist, x, opt);
      case Engine::kPermutation:
        return shap_brute<T>(model, dist, x, true, opt);
      default:
        return shap_brute<T>(model, dist, x, false, opt);
    }
  };
  return real ? run(Real{}) : run(Rational{});
}

}  // namespace shapx
