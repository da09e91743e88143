#pragma once

// The cover-weighted tree recursion used by TreeSHAP for E[F | x_S], and an
// audit comparing it with the true conditional expectation over a dataset.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "shapx/distributions.hpp"
#include "shapx/error.hpp"
#include "shapx/model.hpp"
#include "shapx/parallel.hpp"
#include "shapx/rational.hpp"

namespace shapx {

/// Algorithm as published: splits on features in S follow x, other splits
/// average both children weighted by cover. Not a conditional expectation.
inline Rational expvalue(const TreeModel& tree, const Instance& x, const std::vector<std::size_t>& subset) {
  check_instance_length(tree.feature_count(), x);
  if (!tree.has_covers()) throw ModelError("tree has no covers r");
  std::vector<char> in_s(tree.feature_count(), 0);
  for (auto i : subset) {
    if (i >= in_s.size()) throw PreconditionError("condition set mentions feature " + std::to_string(i));
    in_s[i] = 1;
  }
  auto g = [&](auto&& self, std::size_t j) -> Rational {
    if (tree.is_leaf(j)) return tree.leaf_value(j);
    const auto d = static_cast<std::size_t>(tree.feature(j));
    const auto a = static_cast<std::size_t>(tree.left(j));
    const auto b = static_cast<std::size_t>(tree.right(j));
    if (in_s[d]) return Rational(x[d]) <= tree.threshold(j) ? self(self, a) : self(self, b);
    if (tree.cover(j) == 0) throw PreconditionError("zero cover at node " + std::to_string(j));
    // A child nobody reached carries weight 0; its subtree is never entered.
    Rational sum(0);
    if (tree.cover(a) != 0) sum += self(self, a) * tree.cover(a);
    if (tree.cover(b) != 0) sum += self(self, b) * tree.cover(b);
    return sum / tree.cover(j);
  };
  return g(g, 0);
}

/// Number of dataset rows (with multiplicity) reaching each node.
inline std::vector<Rational> dataset_covers(const TreeModel& tree, const EmpiricalDataset& data) {
  check_instance_length(tree.feature_count(), data.row(0));
  std::vector<Rational> cover(tree.size(), Rational(0));
  for (std::size_t r = 0; r < data.row_count(); ++r) {
    std::size_t j = 0;
    cover[0] += data.count(r);
    while (!tree.is_leaf(j)) {
      const auto f = static_cast<std::size_t>(tree.feature(j));
      j = static_cast<std::size_t>(Rational(data.row(r)[f]) <= tree.threshold(j) ? tree.left(j) : tree.right(j));
      cover[j] += data.count(r);
    }
  }
  return cover;
}

/// E[F | x_S] over the dataset, with the empirical zero convention.
inline Rational correct_expvalue(const EmpiricalDataset& data, const TreeModel& tree, const Instance& x,
                                 const std::vector<std::size_t>& subset) {
  check_instance_length(data.feature_count(), x);
  return conditional_expectation([&](const Instance& row) { return evaluate(tree, row); }, data,
                                 EventMask::from_instance(x, subset));
}

struct AuditFinding {
  std::size_t tree_id = 0;
  Instance instance;
  std::vector<std::size_t> subset;
  Rational expvalue;
  Rational correct;
  Rational discrepancy;
  std::string error;  // set when the recursion divided by a zero cover
};

inline constexpr std::size_t kAuditCap = 16;

/// One finding per condition set S where the recursion disagrees with the
/// true conditional expectation. Covers are recomputed from the dataset.
inline std::vector<AuditFinding> audit(const TreeModel& tree, const EmpiricalDataset& data, const Instance& x,
                                       std::size_t tree_id = 0) {
  const std::size_t n = data.feature_count();
  if (n > kAuditCap)
    throw CapacityError("audit sweeps 2^n condition sets; n = " + std::to_string(n) + " exceeds " +
                        std::to_string(kAuditCap));
  if (tree.feature_count() != n)
    throw SignatureError("tree has " + std::to_string(tree.feature_count()) + " features, dataset has " +
                         std::to_string(n));
  const TreeModel covered = tree.with_covers(dataset_covers(tree, data));
  const std::size_t sets = std::size_t{1} << n;
  std::vector<std::vector<AuditFinding>> found(sets);
  parallel_for(sets, [&](std::size_t s) {
    std::vector<std::size_t> subset;
    for (std::size_t i = 0; i < n; ++i)
      if ((s >> i) & 1U) subset.push_back(i);
    const Rational want = correct_expvalue(data, tree, x, subset);
    try {
      const Rational got = expvalue(covered, x, subset);
      if (got != want) found[s].push_back({tree_id, x, subset, got, want, abs(got - want), {}});
    } catch (const PreconditionError& e) {
      found[s].push_back({tree_id, x, subset, Rational(0), want, Rational(0), e.what()});
    }
  });
  std::vector<AuditFinding> out;
  for (auto& f : found)
    for (auto& item : f) out.push_back(std::move(item));
  return out;
}

}  // namespace shapx
