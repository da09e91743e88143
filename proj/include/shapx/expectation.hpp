#pragma once

// Expectations of each model class under a product distribution.

#include <cstddef>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "shapx/distributions.hpp"
#include "shapx/error.hpp"
#include "shapx/model.hpp"
#include "shapx/rational.hpp"

namespace shapx {

struct ExpectationOptions {
  /// Largest feature count for which enumeration over all instances is allowed.
  std::size_t brute_cap = 25;
};

/// Work counters of the d-DNNF passes.
struct PassCost {
  std::size_t forward_edges = 0;
  std::size_t backward_edges = 0;
  std::size_t passes = 0;
};

inline void check_signature(std::size_t model_features, const ProductDistribution& dist) {
  if (model_features != dist.feature_count())
    throw SignatureError("model has " + std::to_string(model_features) + " features, distribution has " +
                         std::to_string(dist.feature_count()));
}

inline void check_binary_distribution(const ProductDistribution& dist, const char* what) {
  for (std::size_t i = 0; i < dist.feature_count(); ++i)
    if (dist.domain_size(i) != 2)
      throw SignatureError(std::string(what) + " needs binary features; feature " + std::to_string(i) +
                           " has " + std::to_string(dist.domain_size(i)) + " values");
}

inline void check_brute_cap(std::size_t n, std::size_t cap, const std::string& cls) {
  if (n > cap)
    throw CapacityError("expectation of a " + cls + " model with " + std::to_string(n) +
                        " features needs enumeration of all instances; the " + cls +
                        " class is #P-hard under product distributions (limit " + std::to_string(cap) +
                        " features, raise it with --cap)");
}

/// Sum of f(x) Pr(x) over every instance of the product space.
template <class T, class F>
T brute_expectation(const F& f, const ProductDistribution& dist) {
  const std::size_t n = dist.feature_count();
  std::vector<std::vector<T>> p(n);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& q : dist.feature(i)) {
      if constexpr (is_exact_v<T>)
        p[i].push_back(q);
      else
        p[i].push_back(to_real(q));
    }
  Instance x(n, 0);
  T total = 0;
  std::function<void(std::size_t, const T&)> walk = [&](std::size_t i, const T& weight) {
    if (i == n) {
      total += weight * f(x);
      return;
    }
    for (std::size_t v = 0; v < p[i].size(); ++v) {
      if (p[i][v] == 0) continue;
      x[i] = static_cast<int>(v);
      walk(i + 1, T(weight * p[i][v]));
    }
  };
  walk(0, T(1));
  return total;
}

inline Rational expectation(const LinearModel& m, const ProductDistribution& dist) {
  check_signature(m.feature_count(), dist);
  Rational out = m.bias;
  for (std::size_t i = 0; i < m.weights.size(); ++i) out += m.weights[i] * dist.mean(i);
  return out;
}

inline Rational expectation(const TreeModel& m, const ProductDistribution& dist) {
  if (m.feature_count() > dist.feature_count())
    throw SignatureError("tree splits on more features than the distribution has");
  // Allowed value range per feature on the current path, and the path
  // probability. Paths to different leaves are mutually exclusive.
  const std::size_t n = dist.feature_count();
  std::vector<int> lo(n, 0), hi(n);
  for (std::size_t i = 0; i < n; ++i) hi[i] = static_cast<int>(dist.domain_size(i)) - 1;
  auto mass = [&](std::size_t f, int a, int b) {
    Rational s = 0;
    for (int v = a; v <= b; ++v) s += dist.prob(f, v);
    return s;
  };
  Rational total = 0;
  std::function<void(std::size_t, const Rational&)> walk = [&](std::size_t j, const Rational& prob) {
    if (m.is_leaf(j)) {
      total += prob * m.leaf_value(j);
      return;
    }
    const auto f = static_cast<std::size_t>(m.feature(j));
    const int saved_lo = lo[f], saved_hi = hi[f];
    const Rational range = mass(f, saved_lo, saved_hi);
    // Largest integer value going left: floor(t).
    Integer cut;
    mpz_fdiv_q(cut.get_mpz_t(), m.threshold(j).get_num_mpz_t(), m.threshold(j).get_den_mpz_t());
    const long split = cut.fits_slong_p() ? cut.get_si() : (cut < 0 ? -1L : static_cast<long>(saved_hi));
    const int left_hi = static_cast<int>(std::min<long>(saved_hi, split));
    const int right_lo = static_cast<int>(std::max<long>(saved_lo, split + 1));
    if (left_hi >= saved_lo) {
      const Rational part = mass(f, saved_lo, left_hi);
      if (part != 0) {
        hi[f] = left_hi;
        walk(static_cast<std::size_t>(m.left(j)), prob * part / range);
        hi[f] = saved_hi;
      }
    }
    if (right_lo <= saved_hi) {
      const Rational part = mass(f, right_lo, saved_hi);
      if (part != 0) {
        lo[f] = right_lo;
        walk(static_cast<std::size_t>(m.right(j)), prob * part / range);
        lo[f] = saved_lo;
      }
    }
  };
  walk(0, Rational(1));
  return total;
}

inline Rational expectation(const EnsembleModel& m, const ProductDistribution& dist) {
  check_signature(m.feature_count(), dist);
  Rational out = 0;
  for (const auto& member : m.members) out += member.coefficient * expectation(member.tree, dist);
  return out;
}

inline Rational expectation(const FactorizationMachine& m, const ProductDistribution& dist) {
  check_signature(m.feature_count(), dist);
  std::vector<Rational> mu(m.feature_count());
  for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = dist.mean(i);
  Rational out = m.bias;
  for (std::size_t i = 0; i < mu.size(); ++i) out += m.weights[i] * mu[i];
  // E[X_i X_j] = mu_i mu_j for i != j.
  for (std::size_t f = 0; f < m.factor_dim(); ++f) {
    Rational sum = 0, sum_sq = 0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      Rational t = m.factors[i][f] * mu[i];
      sum += t;
      sum_sq += t * t;
    }
    out += (sum * sum - sum_sq) / 2;
  }
  return out;
}

/// Weighted model counting over a d-DNNF in scaled integer arithmetic.
/// With L the common denominator of Pr(X_v = 1), node g carries the integer
/// I(g) = Pr(g) * L^{|vars(g)|}, so the whole pass avoids gcd reductions.
class DdnnfEvaluator {
 public:
  explicit DdnnfEvaluator(const DdnnfCircuit& circuit) : c_(&circuit) {}
  // Keeps a pointer to the circuit; a temporary would dangle.
  explicit DdnnfEvaluator(DdnnfCircuit&&) = delete;

  struct Restricted {
    Rational base;
    std::vector<Rational> on;   // E[F | X_v = 1]
    std::vector<Rational> off;  // E[F | X_v = 0]
  };

  Rational expectation(const std::vector<Rational>& p1, PassCost* cost = nullptr) const {
    Scaled s = scale(p1);
    const std::vector<Integer> val = forward(s, cost);
    Rational out(val.back(), s.power[c_->var_count(c_->root())]);
    out.canonicalize();
    return out;
  }

  /// Expectation plus every single-variable restriction, from one forward
  /// and one backward pass.
  Restricted restricted(const std::vector<Rational>& p1, PassCost* cost = nullptr) const {
    Scaled s = scale(p1);
    const std::vector<Integer> val = forward(s, cost);
    const std::size_t n = c_->feature_count();
    std::vector<Integer> adj(c_->size());
    std::vector<Integer> adj_pos(n), adj_neg(n);
    adj.back() = 1;
    std::vector<Integer> prefix, suffix;
    for (std::size_t i = c_->size(); i-- > 0;) {
      const auto& g = c_->node(i);
      switch (g.kind) {
        case DdnnfCircuit::Kind::kLiteral: {
          const auto v = static_cast<std::size_t>(std::abs(g.literal) - 1);
          (g.literal > 0 ? adj_pos[v] : adj_neg[v]) += adj[i];
          break;
        }
        case DdnnfCircuit::Kind::kConstant:
          break;
        case DdnnfCircuit::Kind::kOr:
          for (auto ch : g.children) {
            adj[ch] += adj[i] * s.power[c_->var_count(i) - c_->var_count(ch)];
            if (cost) ++cost->backward_edges;
          }
          break;
        case DdnnfCircuit::Kind::kAnd: {
          const std::size_t k = g.children.size();
          prefix.assign(k + 1, Integer(1));
          suffix.assign(k + 1, Integer(1));
          for (std::size_t j = 0; j < k; ++j) prefix[j + 1] = prefix[j] * val[g.children[j]];
          for (std::size_t j = k; j-- > 0;) suffix[j] = suffix[j + 1] * val[g.children[j]];
          for (std::size_t j = 0; j < k; ++j) {
            adj[g.children[j]] += adj[i] * prefix[j] * suffix[j + 1];
            if (cost) ++cost->backward_edges;
          }
          break;
        }
      }
    }
    const Integer& total = val.back();
    const Integer& denom = s.power[c_->var_count(c_->root())];
    Restricted out;
    out.base = Rational(total, denom);
    out.base.canonicalize();
    out.on.resize(n);
    out.off.resize(n);
    for (std::size_t v = 0; v < n; ++v) {
      const Integer delta = adj_pos[v] - adj_neg[v];
      out.on[v] = Rational(total + (s.scale - s.pos[v]) * delta, denom);
      out.on[v].canonicalize();
      out.off[v] = Rational(total - s.pos[v] * delta, denom);
      out.off[v].canonicalize();
    }
    return out;
  }

 private:
  struct Scaled {
    Integer scale;                // L
    std::vector<Integer> pos;     // L * Pr(X_v = 1)
    std::vector<Integer> power;   // L^0 .. L^n
  };

  Scaled scale(const std::vector<Rational>& p1) const {
    const std::size_t n = c_->feature_count();
    if (p1.size() != n)
      throw SignatureError("circuit has " + std::to_string(n) + " variables, distribution has " +
                           std::to_string(p1.size()));
    Scaled s;
    s.scale = 1;
    for (const auto& p : p1) mpz_lcm(s.scale.get_mpz_t(), s.scale.get_mpz_t(), p.get_den_mpz_t());
    s.pos.resize(n);
    for (std::size_t v = 0; v < n; ++v) s.pos[v] = p1[v].get_num() * (s.scale / p1[v].get_den());
    s.power.resize(n + 1);
    s.power[0] = 1;
    for (std::size_t k = 1; k <= n; ++k) s.power[k] = s.power[k - 1] * s.scale;
    return s;
  }

  std::vector<Integer> forward(const Scaled& s, PassCost* cost) const {
    std::vector<Integer> val(c_->size());
    std::size_t edges = 0;
    for (std::size_t i = 0; i < c_->size(); ++i) {
      const auto& g = c_->node(i);
      switch (g.kind) {
        case DdnnfCircuit::Kind::kLiteral: {
          const auto v = static_cast<std::size_t>(std::abs(g.literal) - 1);
          val[i] = g.literal > 0 ? s.pos[v] : Integer(s.scale - s.pos[v]);
          break;
        }
        case DdnnfCircuit::Kind::kConstant:
          val[i] = g.literal != 0 ? 1 : 0;
          break;
        case DdnnfCircuit::Kind::kAnd:
          val[i] = 1;
          for (auto ch : g.children) {
            val[i] *= val[ch];
            ++edges;
          }
          break;
        case DdnnfCircuit::Kind::kOr:
          val[i] = 0;
          for (auto ch : g.children) {
            val[i] += val[ch] * s.power[c_->var_count(i) - c_->var_count(ch)];
            ++edges;
          }
          break;
      }
    }
    if (edges != c_->edge_count()) throw InternalError("d-DNNF pass did not visit every edge once");
    if (cost) {
      cost->forward_edges += edges;
      ++cost->passes;
    }
    return val;
  }

  const DdnnfCircuit* c_;
};

inline std::vector<Rational> binary_probabilities(const ProductDistribution& dist) {
  std::vector<Rational> p1(dist.feature_count());
  for (std::size_t i = 0; i < p1.size(); ++i) p1[i] = dist.prob(i, 1);
  return p1;
}

inline Rational expectation(const DdnnfCircuit& m, const ProductDistribution& dist,
                            PassCost* cost = nullptr) {
  check_signature(m.feature_count(), dist);
  check_binary_distribution(dist, "d-DNNF expectation");
  return DdnnfEvaluator(m).expectation(binary_probabilities(dist), cost);
}

inline Real expectation(const LogisticModel& m, const ProductDistribution& dist,
                        const ExpectationOptions& opt = {}) {
  check_signature(m.feature_count(), dist);
  check_brute_cap(m.feature_count(), opt.brute_cap, "logistic");
  return brute_expectation<Real>([&](const Instance& x) { return evaluate(m, x); }, dist);
}

inline Rational expectation(const CnfFormula& m, const ProductDistribution& dist,
                            const ExpectationOptions& opt = {}) {
  check_signature(m.feature_count(), dist);
  check_binary_distribution(dist, "CNF expectation");
  check_brute_cap(m.feature_count(), opt.brute_cap, "CNF");
  return brute_expectation<Rational>([&](const Instance& x) { return evaluate(m, x); }, dist);
}

inline Value expectation(const Model& model, const ProductDistribution& dist,
                         const ExpectationOptions& opt = {}) {
  struct Visitor {
    const ProductDistribution& dist;
    const ExpectationOptions& opt;
    Value operator()(const LinearModel& m) const { return expectation(m, dist); }
    Value operator()(const TreeModel& m) const {
      check_signature(m.feature_count(), dist);
      return expectation(m, dist);
    }
    Value operator()(const EnsembleModel& m) const { return expectation(m, dist); }
    Value operator()(const FactorizationMachine& m) const { return expectation(m, dist); }
    Value operator()(const DdnnfCircuit& m) const { return expectation(m, dist); }
    Value operator()(const LogisticModel& m) const { return expectation(m, dist, opt); }
    Value operator()(const CnfFormula& m) const { return expectation(m, dist, opt); }
  };
  return std::visit(Visitor{dist, opt}, model);
}

/// E[F | event] under a product distribution. Conditioning on an event of
/// probability zero is an error.
inline Value conditional_expectation(const Model& model, const ProductDistribution& dist,
                                     const EventMask& mask, const ExpectationOptions& opt = {}) {
  if (event_probability(dist, mask) == 0)
    throw PreconditionError("conditioning on an event of probability zero");
  return expectation(model, dist.pinned(mask), opt);
}

}  // namespace shapx
