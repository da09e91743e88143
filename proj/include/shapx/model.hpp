#pragma once

// Model intermediate representation and point evaluation.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "shapx/error.hpp"
#include "shapx/rational.hpp"

namespace shapx {

/// Feature values of one data instance. Values are 0-based codes into each
/// feature's finite domain; binary features use {0, 1}.
using Instance = std::vector<int>;

struct LinearModel {
  Rational bias;
  std::vector<Rational> weights;

  std::size_t feature_count() const { return weights.size(); }
};

/// Binary decision tree in the flat {v, a, b, t, r, d} layout. Node 0 is the
/// root. An internal node has no value; a split sends x to the left child
/// when x[feature] <= threshold.
class TreeModel {
 public:
  TreeModel() = default;
  TreeModel(std::vector<std::optional<Rational>> value, std::vector<int> left,
            std::vector<int> right, std::vector<Rational> threshold,
            std::vector<Rational> cover, std::vector<int> feature,
            std::optional<std::size_t> num_features = std::nullopt)
      : value_(std::move(value)),
        left_(std::move(left)),
        right_(std::move(right)),
        threshold_(std::move(threshold)),
        cover_(std::move(cover)),
        feature_(std::move(feature)) {
    validate(num_features);
  }

  std::size_t size() const { return value_.size(); }
  std::size_t feature_count() const { return num_features_; }
  bool is_leaf(std::size_t j) const { return value_[j].has_value(); }
  const Rational& leaf_value(std::size_t j) const { return *value_[j]; }
  int left(std::size_t j) const { return left_[j]; }
  int right(std::size_t j) const { return right_[j]; }
  const Rational& threshold(std::size_t j) const { return threshold_[j]; }
  int feature(std::size_t j) const { return feature_[j]; }
  bool has_covers() const { return !cover_.empty(); }
  const Rational& cover(std::size_t j) const { return cover_[j]; }

  const std::vector<std::optional<Rational>>& values() const { return value_; }
  const std::vector<int>& lefts() const { return left_; }
  const std::vector<int>& rights() const { return right_; }
  const std::vector<Rational>& thresholds() const { return threshold_; }
  const std::vector<Rational>& covers() const { return cover_; }
  const std::vector<int>& features() const { return feature_; }

  /// Copy of this tree with covers replaced.
  TreeModel with_covers(std::vector<Rational> cover) const {
    TreeModel out = *this;
    out.cover_ = std::move(cover);
    out.validate(num_features_);
    return out;
  }

  /// Index of the leaf reached by x.
  std::size_t leaf_for(const Instance& x) const {
    std::size_t j = 0;
    while (!is_leaf(j)) {
      const auto f = static_cast<std::size_t>(feature_[j]);
      j = static_cast<std::size_t>(Rational(x.at(f)) <= threshold_[j] ? left_[j] : right_[j]);
    }
    return j;
  }

 private:
  void validate(std::optional<std::size_t> num_features) {
    const std::size_t n = value_.size();
    if (n == 0) throw ModelError("tree has no nodes");
    if (left_.size() != n || right_.size() != n || threshold_.size() != n ||
        feature_.size() != n || (!cover_.empty() && cover_.size() != n))
      throw ModelError("tree arrays v, a, b, t, r, d must have equal length");
    std::vector<int> parents(n, 0);
    int max_feature = -1;
    for (std::size_t j = 0; j < n; ++j) {
      if (!cover_.empty() && cover_[j] < 0)
        throw ModelError("tree node " + std::to_string(j) + " has a negative cover");
      if (is_leaf(j)) continue;
      for (int child : {left_[j], right_[j]}) {
        if (child < 0 || static_cast<std::size_t>(child) >= n)
          throw ModelError("internal node " + std::to_string(j) + " lacks a valid child");
        if (child == 0) throw ModelError("the root cannot be a child");
        ++parents[static_cast<std::size_t>(child)];
      }
      if (feature_[j] < 0) throw ModelError("internal node " + std::to_string(j) + " has no split feature");
      max_feature = std::max(max_feature, feature_[j]);
    }
    // Every non-root node has exactly one parent and is reachable from the
    // root, which rules out cycles and forests.
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> stack{0};
    std::size_t reached = 0;
    while (!stack.empty()) {
      const std::size_t j = stack.back();
      stack.pop_back();
      if (seen[j]) throw ModelError("tree contains a cycle or shared subtree");
      seen[j] = 1;
      ++reached;
      if (!is_leaf(j)) {
        stack.push_back(static_cast<std::size_t>(left_[j]));
        stack.push_back(static_cast<std::size_t>(right_[j]));
      }
    }
    for (std::size_t j = 1; j < n; ++j)
      if (parents[j] != 1) throw ModelError("tree node " + std::to_string(j) + " does not have exactly one parent");
    if (reached != n) throw ModelError("tree has unreachable nodes");
    const auto used = static_cast<std::size_t>(max_feature + 1);
    if (num_features && *num_features < used)
      throw ModelError("tree splits on feature " + std::to_string(max_feature) +
                       " but declares only " + std::to_string(*num_features) + " features");
    num_features_ = num_features.value_or(used);
  }

  std::vector<std::optional<Rational>> value_;
  std::vector<int> left_;
  std::vector<int> right_;
  std::vector<Rational> threshold_;
  std::vector<Rational> cover_;
  std::vector<int> feature_;
  std::size_t num_features_ = 0;
};

struct EnsembleMember {
  Rational coefficient;
  TreeModel tree;
};

struct EnsembleModel {
  std::vector<EnsembleMember> members;

  std::size_t feature_count() const {
    std::size_t n = 0;
    for (const auto& m : members) n = std::max(n, m.tree.feature_count());
    return n;
  }
};

/// bias + sum_i w_i x_i + sum_{i<j} <v_i, v_j> x_i x_j
struct FactorizationMachine {
  Rational bias;
  std::vector<Rational> weights;
  std::vector<std::vector<Rational>> factors;  // one row of dimension k per feature

  std::size_t feature_count() const { return weights.size(); }
  std::size_t factor_dim() const { return factors.empty() ? 0 : factors.front().size(); }
};

/// sigma(w_0 + sum_i w_i x_i)
struct LogisticModel {
  std::vector<Real> weights;  // w_0 .. w_n

  std::size_t feature_count() const { return weights.empty() ? 0 : weights.size() - 1; }
};

/// Clauses of signed 1-based literals over binary features (DIMACS style).
struct CnfFormula {
  std::size_t num_vars = 0;
  std::vector<std::vector<int>> clauses;

  std::size_t feature_count() const { return num_vars; }
};

/// Deterministic decomposable NNF circuit over binary features, stored as a
/// topologically ordered node list whose last node is the root. Literal
/// +v / -v means feature v-1 equals 1 / 0.
class DdnnfCircuit {
 public:
  enum class Kind : std::uint8_t { kLiteral, kConstant, kAnd, kOr };
  enum class Determinism : std::uint8_t { kNotApplicable, kVerified, kTrusted };

  struct Node {
    Kind kind = Kind::kConstant;
    int literal = 0;  // signed variable for literals; 1/0 for constants
    std::vector<std::uint32_t> children;
    int decision_var = 0;  // 1-based decision variable of an OR gate, 0 = none
  };

  static Node literal_node(int lit) { return Node{Kind::kLiteral, lit, {}, 0}; }
  static Node constant_node(bool value) { return Node{Kind::kConstant, value ? 1 : 0, {}, 0}; }
  static Node and_node(std::vector<std::uint32_t> children) {
    return Node{Kind::kAnd, 0, std::move(children), 0};
  }
  static Node or_node(std::vector<std::uint32_t> children, int decision_var = 0) {
    return Node{Kind::kOr, 0, std::move(children), decision_var};
  }

  DdnnfCircuit() = default;
  DdnnfCircuit(std::size_t num_vars, std::vector<Node> nodes)
      : num_vars_(num_vars), nodes_(std::move(nodes)) {
    validate();
  }

  std::size_t feature_count() const { return num_vars_; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t root() const { return nodes_.size() - 1; }
  std::size_t edge_count() const { return edges_; }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  const std::vector<Node>& nodes() const { return nodes_; }
  /// Number of distinct variables mentioned below node i.
  std::size_t var_count(std::size_t i) const { return var_count_[i]; }
  Determinism determinism(std::size_t i) const { return determinism_[i]; }

  std::size_t trusted_or_gates() const {
    return static_cast<std::size_t>(
        std::count(determinism_.begin(), determinism_.end(), Determinism::kTrusted));
  }

  bool evaluate(const Instance& x) const {
    std::vector<char> val(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& g = nodes_[i];
      switch (g.kind) {
        case Kind::kLiteral: {
          const int v = x.at(static_cast<std::size_t>(std::abs(g.literal) - 1));
          val[i] = g.literal > 0 ? v == 1 : v == 0;
          break;
        }
        case Kind::kConstant:
          val[i] = g.literal != 0;
          break;
        case Kind::kAnd:
          val[i] = 1;
          for (auto c : g.children) val[i] = val[i] && val[c];
          break;
        case Kind::kOr:
          val[i] = 0;
          for (auto c : g.children) val[i] = val[i] || val[c];
          break;
      }
    }
    return val.back() != 0;
  }

  /// Checks every OR gate for mutual exclusivity of its children by
  /// enumerating all 2^n assignments. Marks trusted gates as verified.
  void verify_determinism_exhaustively(std::size_t cap = 20) {
    if (num_vars_ > cap)
      throw CapacityError("exhaustive determinism check needs n <= " + std::to_string(cap) +
                          ", circuit has " + std::to_string(num_vars_) + " variables");
    std::vector<char> val(nodes_.size());
    Instance x(num_vars_, 0);
    for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << num_vars_); ++bits) {
      for (std::size_t v = 0; v < num_vars_; ++v) x[v] = static_cast<int>((bits >> v) & 1U);
      for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& g = nodes_[i];
        if (g.kind == Kind::kLiteral) {
          const int v = x[static_cast<std::size_t>(std::abs(g.literal) - 1)];
          val[i] = g.literal > 0 ? v == 1 : v == 0;
        } else if (g.kind == Kind::kConstant) {
          val[i] = g.literal != 0;
        } else if (g.kind == Kind::kAnd) {
          val[i] = 1;
          for (auto c : g.children) val[i] = val[i] && val[c];
        } else {
          int true_children = 0;
          for (auto c : g.children) true_children += val[c] ? 1 : 0;
          if (true_children > 1)
            throw ModelError("OR gate " + std::to_string(i) + " is not deterministic");
          val[i] = true_children > 0;
        }
      }
    }
    for (auto& d : determinism_)
      if (d == Determinism::kTrusted) d = Determinism::kVerified;
  }

 private:
  using VarSet = std::vector<std::uint64_t>;

  // Sign (+1/-1) of the literal on `var` that child c forces, 0 if none.
  int forced_sign(std::size_t c, int var) const {
    const Node& g = nodes_[c];
    if (g.kind == Kind::kLiteral && std::abs(g.literal) == var) return g.literal > 0 ? 1 : -1;
    if (g.kind == Kind::kAnd) {
      for (auto cc : g.children) {
        const Node& h = nodes_[cc];
        if (h.kind == Kind::kLiteral && std::abs(h.literal) == var) return h.literal > 0 ? 1 : -1;
      }
    }
    return 0;
  }

  void validate() {
    if (nodes_.empty()) throw ModelError("d-DNNF circuit has no nodes");
    const std::size_t words = (num_vars_ + 63) / 64;
    std::vector<VarSet> vars(nodes_.size(), VarSet(words, 0));
    var_count_.assign(nodes_.size(), 0);
    determinism_.assign(nodes_.size(), Determinism::kNotApplicable);
    edges_ = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& g = nodes_[i];
      switch (g.kind) {
        case Kind::kLiteral: {
          const int v = std::abs(g.literal);
          if (v < 1 || static_cast<std::size_t>(v) > num_vars_)
            throw ModelError("literal " + std::to_string(g.literal) + " out of range at node " +
                             std::to_string(i));
          vars[i][static_cast<std::size_t>(v - 1) / 64] |= std::uint64_t{1} << ((v - 1) % 64);
          break;
        }
        case Kind::kConstant:
          break;
        case Kind::kAnd:
        case Kind::kOr:
          for (auto c : g.children) {
            if (c >= i)
              throw ModelError("node " + std::to_string(i) +
                               " references a later node; circuit must be topologically ordered");
            ++edges_;
            for (std::size_t w = 0; w < words; ++w) {
              if (g.kind == Kind::kAnd && (vars[i][w] & vars[c][w]) != 0)
                throw ModelError("AND gate " + std::to_string(i) + " is not decomposable");
              vars[i][w] |= vars[c][w];
            }
          }
          break;
      }
      if (g.kind == Kind::kOr) {
        if (g.decision_var == 0) {
          determinism_[i] = g.children.size() <= 1 ? Determinism::kVerified : Determinism::kTrusted;
        } else {
          if (g.decision_var < 0 || static_cast<std::size_t>(g.decision_var) > num_vars_)
            throw ModelError("OR gate " + std::to_string(i) + " has an out-of-range decision variable");
          if (g.children.size() != 2)
            throw ModelError("decision OR gate " + std::to_string(i) + " must have two children");
          const int s0 = forced_sign(g.children[0], g.decision_var);
          const int s1 = forced_sign(g.children[1], g.decision_var);
          if (s0 == 0 || s1 == 0 || s0 == s1)
            throw ModelError("OR gate " + std::to_string(i) + " does not decide on variable " +
                             std::to_string(g.decision_var));
          determinism_[i] = Determinism::kVerified;
        }
      }
      std::size_t count = 0;
      for (auto w : vars[i]) count += static_cast<std::size_t>(__builtin_popcountll(w));
      var_count_[i] = count;
    }
  }

  std::size_t num_vars_ = 0;
  std::vector<Node> nodes_;
  std::vector<std::size_t> var_count_;
  std::vector<Determinism> determinism_;
  std::size_t edges_ = 0;
};

using Model = std::variant<LinearModel, TreeModel, EnsembleModel, FactorizationMachine,
                           DdnnfCircuit, LogisticModel, CnfFormula>;

inline std::size_t feature_count(const Model& m) {
  return std::visit([](const auto& x) { return x.feature_count(); }, m);
}

inline std::string model_class_name(const Model& m) {
  struct Namer {
    std::string operator()(const LinearModel&) const { return "linear"; }
    std::string operator()(const TreeModel&) const { return "tree"; }
    std::string operator()(const EnsembleModel&) const { return "ensemble"; }
    std::string operator()(const FactorizationMachine&) const { return "fm"; }
    std::string operator()(const DdnnfCircuit&) const { return "ddnnf"; }
    std::string operator()(const LogisticModel&) const { return "logistic"; }
    std::string operator()(const CnfFormula&) const { return "cnf"; }
  };
  return std::visit(Namer{}, m);
}

/// True for the classes whose expectations are computed by enumeration.
inline bool is_intractable_class(const Model& m) {
  return std::holds_alternative<LogisticModel>(m) || std::holds_alternative<CnfFormula>(m);
}

inline void check_instance_length(std::size_t n, const Instance& x) {
  if (x.size() != n)
    throw SignatureError("instance has " + std::to_string(x.size()) + " values, model expects " +
                         std::to_string(n));
}

inline void check_binary(const Instance& x, const char* what) {
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] != 0 && x[i] != 1)
      throw SignatureError(std::string(what) + " requires binary features; feature " +
                           std::to_string(i) + " has value " + std::to_string(x[i]));
}

inline Rational evaluate(const LinearModel& m, const Instance& x) {
  check_instance_length(m.feature_count(), x);
  Rational out = m.bias;
  for (std::size_t i = 0; i < x.size(); ++i) out += m.weights[i] * x[i];
  return out;
}

inline Rational evaluate(const TreeModel& m, const Instance& x) {
  check_instance_length(m.feature_count(), x);
  return m.leaf_value(m.leaf_for(x));
}

inline Rational evaluate(const EnsembleModel& m, const Instance& x) {
  check_instance_length(m.feature_count(), x);
  Rational out = 0;
  for (const auto& member : m.members) {
    Instance sub(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(member.tree.feature_count()));
    out += member.coefficient * evaluate(member.tree, sub);
  }
  return out;
}

inline Rational evaluate(const FactorizationMachine& m, const Instance& x) {
  check_instance_length(m.feature_count(), x);
  Rational out = m.bias;
  for (std::size_t i = 0; i < x.size(); ++i) out += m.weights[i] * x[i];
  for (std::size_t f = 0; f < m.factor_dim(); ++f) {
    Rational sum = 0, sum_sq = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      Rational t = m.factors[i][f] * x[i];
      sum += t;
      sum_sq += t * t;
    }
    out += (sum * sum - sum_sq) / 2;
  }
  return out;
}

inline Rational evaluate(const DdnnfCircuit& m, const Instance& x) {
  check_instance_length(m.feature_count(), x);
  check_binary(x, "d-DNNF evaluation");
  return m.evaluate(x) ? Rational(1) : Rational(0);
}

inline Rational evaluate(const CnfFormula& m, const Instance& x) {
  check_instance_length(m.feature_count(), x);
  check_binary(x, "CNF evaluation");
  for (const auto& clause : m.clauses) {
    bool sat = false;
    for (int lit : clause) {
      const int v = x[static_cast<std::size_t>(std::abs(lit) - 1)];
      if ((lit > 0 && v == 1) || (lit < 0 && v == 0)) {
        sat = true;
        break;
      }
    }
    if (!sat) return 0;
  }
  return 1;
}

inline Real evaluate(const LogisticModel& m, const Instance& x) {
  check_instance_length(m.feature_count(), x);
  Real z = m.weights.at(0);
  for (std::size_t i = 0; i < x.size(); ++i) z += m.weights[i + 1] * x[i];
  return sigmoid(z);
}

/// Either an exact rational or an extended-precision real prediction.
using Value = std::variant<Rational, Real>;

inline Value evaluate(const Model& m, const Instance& x) {
  return std::visit([&](const auto& model) -> Value { return evaluate(model, x); }, m);
}

/// Structural checks that do not fit a constructor.
inline void validate_model(const Model& m) {
  if (const auto* e = std::get_if<EnsembleModel>(&m); e && e->members.empty())
    throw ModelError("ensemble needs at least one member");
  if (const auto* fm = std::get_if<FactorizationMachine>(&m)) {
    if (fm->factors.size() != fm->weights.size())
      throw ModelError("factorization machine needs one factor vector per feature");
    for (const auto& row : fm->factors)
      if (row.size() != fm->factor_dim() || row.empty())
        throw ModelError("factor vectors must share a dimension k >= 1");
  }
  if (const auto* lg = std::get_if<LogisticModel>(&m)) {
    if (lg->weights.empty()) throw ModelError("logistic model needs w_0");
    for (Real w : lg->weights)
      if (!std::isfinite(w)) throw ModelError("logistic weights must be finite");
  }
  if (const auto* cnf = std::get_if<CnfFormula>(&m)) {
    for (const auto& clause : cnf->clauses)
      for (int lit : clause)
        if (lit == 0 || static_cast<std::size_t>(std::abs(lit)) > cnf->num_vars)
          throw ModelError("CNF literal " + std::to_string(lit) + " out of range");
  }
}

}  // namespace shapx
