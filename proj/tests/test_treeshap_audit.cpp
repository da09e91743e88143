#include <gtest/gtest.h>

#include <array>

#include "generators.hpp"
#include "oracle.hpp"
#include "shapx/shapx.hpp"

using namespace shapx;

namespace {

// X1 at the root, X2 below; leaves F00, F01, F10, F11 left to right.
TreeModel two_level_tree(Rational f00, Rational f01, Rational f10, Rational f11) {
  return TreeModel({std::nullopt, std::nullopt, std::nullopt, f00, f01, f10, f11}, {1, 3, 5, -1, -1, -1, -1},
                   {2, 4, 6, -1, -1, -1, -1}, {Rational(1, 2), Rational(1, 2), Rational(1, 2), 0, 0, 0, 0}, {},
                   {0, 1, 1, -1, -1, -1, -1}, 2);
}

EmpiricalDataset skewed_data() { return EmpiricalDataset({{0, 0}, {0, 1}, {1, 0}, {1, 1}}, {2, 1, 1, 2}); }

}  // namespace

TEST(Expvalue, CoverRecursionCounterexample) {
  const Rational f00(5), f01(-1), f10(2), f11(9);
  const TreeModel tree = two_level_tree(f00, f01, f10, f11);
  const auto data = skewed_data();
  const TreeModel covered = tree.with_covers(dataset_covers(tree, data));
  for (int x1 : {0, 1}) {
    const Instance x{x1, 0};
    EXPECT_EQ(expvalue(covered, x, {1}), (f00 + f10) / 2);
    EXPECT_EQ(correct_expvalue(data, tree, x, {1}), Rational(2, 3) * f00 + Rational(1, 3) * f10);
  }
}

TEST(Expvalue, CoversAreRowCounts) {
  const TreeModel tree = two_level_tree(0, 0, 0, 0);
  const auto covers = dataset_covers(tree, skewed_data());
  EXPECT_EQ(covers, (std::vector<Rational>{6, 3, 3, 2, 1, 1, 2}));
}

TEST(Expvalue, StumpAveragesByCover) {
  const TreeModel stump({std::nullopt, Rational(0), Rational(4)}, {1, -1, -1}, {2, -1, -1},
                        {Rational(1, 2), 0, 0}, {Rational(4), Rational(3), Rational(1)}, {0, -1, -1}, 1);
  EXPECT_EQ(expvalue(stump, {1}, {}), 1);
  EXPECT_EQ(expvalue(stump, {1}, {0}), 4);
  EXPECT_EQ(expvalue(stump, {0}, {0}), 0);
}

TEST(Expvalue, FullConditioningIsEvaluation) {
  gen::Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const std::vector<std::size_t> domains{2, 2, 2, 2};
    const TreeModel tree = gen::tree(rng, domains, 5);
    const auto data = gen::dataset(rng, 8, 4);
    const TreeModel covered = tree.with_covers(dataset_covers(tree, data));
    const Instance x = data.row(rng() % data.row_count());
    EXPECT_EQ(expvalue(covered, x, {0, 1, 2, 3}), evaluate(tree, x));
  }
}

TEST(Expvalue, EmptySetIsDatasetMean) {
  gen::Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const TreeModel tree = gen::tree(rng, {2, 2, 2}, 4);
    const auto data = gen::dataset(rng, 6, 3);
    const TreeModel covered = tree.with_covers(dataset_covers(tree, data));
    Rational mean = 0;
    for (std::size_t r = 0; r < data.row_count(); ++r) mean += evaluate(tree, data.row(r)) * data.count(r);
    mean /= data.total();
    const Instance x = gen::binary_instance(rng, 3);
    EXPECT_EQ(expvalue(covered, x, {}), mean);
    EXPECT_EQ(correct_expvalue(data, tree, x, {}), mean);
  }
}

TEST(Expvalue, ZeroCoverOnThePathIsAnError) {
  // The only row takes the left branch; x goes right and then meets a split
  // outside S whose cover is zero.
  const TreeModel tree({std::nullopt, Rational(1), std::nullopt, Rational(2), Rational(3)}, {1, -1, 3, -1, -1},
                       {2, -1, 4, -1, -1}, {Rational(1, 2), 0, Rational(1, 2), 0, 0}, {}, {0, -1, 1, -1, -1}, 2);
  const EmpiricalDataset data(std::vector<Instance>{{0, 0}});
  const TreeModel covered = tree.with_covers(dataset_covers(tree, data));
  EXPECT_THROW(expvalue(covered, {1, 0}, {0}), PreconditionError);
  EXPECT_EQ(expvalue(covered, {1, 0}, {}), 1);
  EXPECT_THROW(expvalue(tree, {1, 0}, {0}), ModelError);
}

TEST(Audit, SkewedDataDiscrepancyOfOne) {
  const TreeModel tree = two_level_tree(0, 0, 6, 0);
  const auto findings = audit(tree, skewed_data(), {1, 0});
  ASSERT_EQ(findings.size(), 1u);
  EXPECT_EQ(findings[0].subset, (std::vector<std::size_t>{1}));
  EXPECT_EQ(findings[0].expvalue, 3);
  EXPECT_EQ(findings[0].correct, 2);
  EXPECT_EQ(findings[0].discrepancy, 1);
  EXPECT_TRUE(findings[0].error.empty());
}

TEST(Audit, DiscrepancyIsOneSixthOfLeafGap) {
  gen::Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Rational f00 = gen::small_rational(rng), f10 = gen::small_rational(rng);
    const TreeModel tree = two_level_tree(f00, gen::small_rational(rng), f10, gen::small_rational(rng));
    Rational want = abs(f10 - f00) / 6;
    const auto findings = audit(tree, skewed_data(), {0, 0});
    bool found = false;
    for (const auto& f : findings)
      if (f.subset == std::vector<std::size_t>{1}) {
        found = true;
        EXPECT_EQ(f.discrepancy, want);
      }
    EXPECT_EQ(found, want != 0);
  }
}

TEST(Audit, ProductDatasetsHaveNoFindings) {
  gen::Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng() % 3;
    // Row counts factor as a product of per-feature weights, so features are
    // independent under the data and every cover ratio is a conditional one.
    std::vector<std::array<long, 2>> w(n);
    for (auto& p : w) p = {gen::uniform(rng, 1, 3), gen::uniform(rng, 1, 3)};
    std::vector<Instance> rows;
    std::vector<long> counts;
    for (std::size_t s = 0; s < (std::size_t{1} << n); ++s) {
      Instance r(n);
      long c = 1;
      for (std::size_t i = 0; i < n; ++i) {
        r[i] = static_cast<int>((s >> i) & 1U);
        c *= w[i][static_cast<std::size_t>(r[i])];
      }
      rows.push_back(r);
      counts.push_back(c);
    }
    const EmpiricalDataset data(rows, counts);
    const TreeModel tree = gen::tree(rng, std::vector<std::size_t>(n, 2), 5);
    for (const auto& x : rows) EXPECT_TRUE(audit(tree, data, x).empty());
  }
}

TEST(Audit, SingleRowDatasetHasNoFindings) {
  gen::Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const TreeModel tree = gen::tree(rng, {2, 2, 2}, 5);
    const Instance row = gen::binary_instance(rng, 3);
    const auto findings = audit(tree, EmpiricalDataset(std::vector<Instance>{row}), row);
    EXPECT_TRUE(findings.empty());
  }
}

TEST(Audit, FindingsMatchIndependentSweep) {
  gen::Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const TreeModel tree = gen::tree(rng, {2, 2, 2}, 4);
    const auto data = gen::dataset(rng, 6, 3);
    const Instance x = data.row(0);
    const auto findings = audit(tree, data, x, 7);
    const auto rows = data.expanded();
    const std::vector<oracle::Point> plain(rows.begin(), rows.end());
    const auto f = [&](const oracle::Point& y) { return evaluate(tree, y); };
    for (const auto& item : findings) {
      EXPECT_EQ(item.tree_id, 7u);
      std::uint64_t s = 0;
      for (auto i : item.subset) s |= std::uint64_t{1} << i;
      EXPECT_EQ(item.correct, oracle::empirical_conditional(f, plain, x, s));
      if (item.error.empty()) {
        EXPECT_NE(item.expvalue, item.correct);
        EXPECT_EQ(item.discrepancy, abs(item.expvalue - item.correct));
      }
    }
  }
}

TEST(Audit, Caps) {
  const TreeModel stump({std::nullopt, Rational(0), Rational(1)}, {1, -1, -1}, {2, -1, -1}, {Rational(1, 2), 0, 0},
                        {}, {0, -1, -1}, 17);
  EXPECT_THROW(audit(stump, EmpiricalDataset(std::vector<Instance>{Instance(17, 0)}), Instance(17, 0)), CapacityError);
  const TreeModel small({std::nullopt, Rational(0), Rational(1)}, {1, -1, -1}, {2, -1, -1}, {Rational(1, 2), 0, 0},
                        {}, {0, -1, -1}, 2);
  EXPECT_THROW(audit(small, EmpiricalDataset(std::vector<Instance>{Instance(3, 0)}), Instance(3, 0)), SignatureError);
}
