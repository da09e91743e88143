#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "oracle.hpp"
#include "shapx/shapx.hpp"

using namespace shapx;

namespace {

using C = DdnnfCircuit;

C xor2() {
  return C(2, {C::literal_node(1), C::literal_node(-2), C::and_node({0, 1}), C::literal_node(-1),
               C::literal_node(2), C::and_node({3, 4}), C::or_node({2, 5}, 1)});
}

C and2() { return C(2, {C::literal_node(1), C::literal_node(2), C::and_node({0, 1})}); }

std::vector<std::vector<Rational>> probs_of(const ProductDistribution& d) {
  std::vector<std::vector<Rational>> out;
  for (std::size_t i = 0; i < d.feature_count(); ++i) out.push_back(d.feature(i));
  return out;
}

template <class T>
const ShapReport<T>& as(const AnyShapReport& r) {
  return std::get<ShapReport<T>>(r);
}

std::vector<Rational> oracle_scores(const Model& m, const ProductDistribution& d, const Instance& x) {
  const auto f = [&](const oracle::Point& y) { return std::get<Rational>(evaluate(m, y)); };
  return oracle::shap<Rational>(f, probs_of(d), x);
}

ShapOptions checked() {
  ShapOptions opt;
  opt.self_check = true;
  return opt;
}

// A random rational model of a random tractable class over binary or
// small multi-valued domains.
struct Case {
  Model model;
  ProductDistribution dist;
  Instance x;
};

Case random_case(gen::Rng& rng, std::size_t n) {
  const int cls = static_cast<int>(rng() % 5);
  std::vector<std::size_t> domains(n, 2);
  if (cls == 1 || cls == 2)
    for (auto& d : domains) d = 2 + rng() % 2;
  Case c;
  switch (cls) {
    case 0: c.model = gen::linear(rng, n); break;
    case 1: c.model = gen::tree(rng, domains, 4); break;
    case 2: c.model = gen::ensemble(rng, domains); break;
    case 3: c.model = gen::fm(rng, n); break;
    default: c.model = gen::ddnnf(rng, n, 5); break;
  }
  c.dist = gen::multi_ind(rng, domains);
  c.x = gen::instance(rng, domains);
  return c;
}

}  // namespace

TEST(ShapBrute, ConstantScoresZero) {
  const Model m = LinearModel{Rational(7), {Rational(0), Rational(0), Rational(0)}};
  const auto d = ProductDistribution::binary({Rational(1, 3), Rational(1, 2), Rational(4, 5)});
  for (bool perm : {true, false}) {
    const auto r = shap_brute<Rational>(m, d, {1, 0, 1}, perm);
    for (const auto& s : r.scores) EXPECT_EQ(s, 0);
  }
  for (const auto& s : project_and_shap<Rational>(m, d, {1, 1, 1}).scores) EXPECT_EQ(s, 0);
}

TEST(ShapBrute, SingleFeatureIndicator) {
  const Model m = LinearModel{Rational(0), {Rational(1), Rational(0)}};
  const auto d = ProductDistribution::binary({Rational(3, 10), Rational(1, 2)});
  const auto perm = shap_brute<Rational>(m, d, {1, 1}, true);
  const auto subset = shap_brute<Rational>(m, d, {1, 1}, false);
  const auto red = project_and_shap<Rational>(m, d, {1, 1}, checked());
  for (const auto* r : {&perm, &subset, &red}) {
    EXPECT_EQ(r->scores[0], Rational(7, 10));
    EXPECT_EQ(r->scores[1], 0);
  }
}

TEST(ShapBrute, XorAtAllOnes) {
  const Model m = xor2();
  const auto d = ProductDistribution::uniform_binary(2);
  const auto perm = shap_brute<Rational>(m, d, {1, 1}, true);
  const auto subset = shap_brute<Rational>(m, d, {1, 1}, false);
  const auto red = project_and_shap<Rational>(m, d, {1, 1}, checked());
  for (const auto* r : {&perm, &subset, &red}) {
    EXPECT_EQ(r->scores[0], Rational(-1, 4));
    EXPECT_EQ(r->scores[1], Rational(-1, 4));
  }
  EXPECT_EQ(perm.path, "permutation-brute");
  EXPECT_EQ(subset.path, "subset-brute");
  EXPECT_EQ(red.path, "reduction");
}

TEST(ShapBrute, CapsAreEnforced) {
  const Model m = LinearModel{Rational(0), std::vector<Rational>(9, Rational(1))};
  const auto d = ProductDistribution::uniform_binary(9);
  EXPECT_THROW(shap_brute<Rational>(m, d, Instance(9, 1), true), CapacityError);
  EXPECT_NO_THROW(shap_brute<Rational>(m, d, Instance(9, 1), false));
  const Model big = LinearModel{Rational(0), std::vector<Rational>(21, Rational(1))};
  EXPECT_THROW(shap_brute<Rational>(big, ProductDistribution::uniform_binary(21), Instance(21, 1)),
               CapacityError);
}

TEST(CollectVk, ConjunctionValues) {
  const C circuit = and2();
  const DdnnfEvaluator eval(circuit);
  const std::function<Rational(const std::vector<Rational>&)> g = [&](const std::vector<Rational>& p) {
    return eval.expectation(p);
  };
  const auto v = collect_vk<Rational>(g, {Rational(1, 2), Rational(1, 2)}, true);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0], Rational(1, 4));
  EXPECT_EQ(v[1], 1);
  EXPECT_EQ(v[2], 1);
}

TEST(CollectVk, EndpointsMatchOracle) {
  gen::Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng() % 7;
    const auto circuit = gen::ddnnf(rng, n, 5);
    const DdnnfEvaluator eval(circuit);
    std::vector<Rational> p(n);
    for (auto& v : p) v = gen::open_probability(rng);
    const std::function<Rational(const std::vector<Rational>&)> g = [&](const std::vector<Rational>& q) {
      return eval.expectation(q);
    };
    const auto v = collect_vk<Rational>(g, p, true);
    const auto d = ProductDistribution::binary(p);
    const auto f = [&](const oracle::Point& y) { return Rational(circuit.evaluate(y) ? 1 : 0); };
    // v_k = sum over |S| = k of E[G | X_S = 1]
    const Instance ones(n, 1);
    for (std::size_t k = 0; k <= n; ++k) {
      Rational want = 0;
      for (std::uint64_t s = 0; s < (std::uint64_t{1} << n); ++s)
        if (static_cast<std::size_t>(__builtin_popcountll(s)) == k)
          want += oracle::conditional<Rational>(f, probs_of(d), ones, s);
      EXPECT_EQ(v[k], want) << "k = " << k;
    }
  }
}

TEST(CollectVk, ZeroProbabilityIsRejected) {
  const std::function<Rational(const std::vector<Rational>&)> g = [](const std::vector<Rational>&) {
    return Rational(1);
  };
  EXPECT_THROW(collect_vk<Rational>(g, {Rational(0), Rational(1, 2)}), PreconditionError);
}

TEST(ShapReduction, LinearClosedForm) {
  gen::Rng rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng() % 8;
    const auto m = gen::linear(rng, n);
    std::vector<Rational> p(n);
    for (auto& v : p) v = gen::open_probability(rng);
    const auto r = project_and_shap<Rational>(m, ProductDistribution::binary(p), Instance(n, 1), checked());
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(r.scores[i], m.weights[i] * (1 - p[i]));
  }
}

TEST(ShapReduction, SingleFeatureOracle) {
  const Model m = and2();
  const auto d = ProductDistribution::binary({Rational(1, 3), Rational(3, 4)});
  ModelOracle<Rational> oracle(m, d, {1, 1});
  const Rational s = shap_reduction(oracle, {Rational(1, 3), Rational(3, 4)}, 0);
  EXPECT_EQ(s, oracle_scores(m, d, {1, 1})[0]);
  EXPECT_EQ(oracle.calls(), 2u * 2u);
}

TEST(ShapEngines, AgreeOnRandomModels) {
  gen::Rng rng(51);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t n = 1 + rng() % 6;
    const Case c = random_case(rng, n);
    const auto red = project_and_shap<Rational>(c.model, c.dist, c.x, checked());
    const auto perm = shap_brute<Rational>(c.model, c.dist, c.x, true);
    const auto subset = shap_brute<Rational>(c.model, c.dist, c.x, false);
    const auto want = oracle_scores(c.model, c.dist, c.x);
    ASSERT_EQ(red.scores, want) << "trial " << trial;
    ASSERT_EQ(perm.scores, want) << "trial " << trial;
    ASSERT_EQ(subset.scores, want) << "trial " << trial;
    EXPECT_TRUE(sum_rule_holds(red));
  }
}

TEST(ShapEngines, BinaryProjectionIsIdentity) {
  gen::Rng rng(52);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng() % 4;
    const Model circuit = gen::ddnnf(rng, n, 5);
    std::vector<Rational> p(n);
    for (auto& v : p) v = gen::open_probability(rng);
    const Instance ones(n, 1);
    const auto d = ProductDistribution::binary(p);
    ModelOracle<Rational> oracle(circuit, d, ones);
    std::vector<Rational> scores;
    for (std::size_t i = 0; i < n; ++i) scores.push_back(shap_reduction(oracle, p, i));
    EXPECT_EQ(project_and_shap<Rational>(circuit, d, ones).scores, scores);
  }
}

TEST(Projection, TernaryFeatureMatchingIndicator) {
  // F = [X_0 == 1] + 2 [X_1 == 1]; every other value of X_0 looks the same.
  const TreeModel t0({std::nullopt, Rational(0), std::nullopt, Rational(1), Rational(0)}, {1, -1, 3, -1, -1},
                     {2, -1, 4, -1, -1}, {Rational(1, 2), 0, Rational(3, 2), 0, 0}, {}, {0, -1, 0, -1, -1}, 2);
  const TreeModel t1({std::nullopt, Rational(0), std::nullopt, Rational(2), Rational(0)}, {1, -1, 3, -1, -1},
                     {2, -1, 4, -1, -1}, {Rational(1, 2), 0, Rational(3, 2), 0, 0}, {}, {1, -1, 1, -1, -1}, 2);
  const Model m = EnsembleModel{{{Rational(1), t0}, {Rational(1), t1}}};
  const ProductDistribution d({{Rational(1, 5), Rational(1, 2), Rational(3, 10)},
                               {Rational(1, 3), Rational(1, 6), Rational(1, 2)}});
  const Instance x{1, 1};
  const auto r = project_and_shap<Rational>(m, d, x, checked());
  // Induced binary function on "X_i == x_i" with Pr = (1/2, 1/6) is additive.
  EXPECT_EQ(r.scores[0], Rational(1) * (1 - Rational(1, 2)));
  EXPECT_EQ(r.scores[1], Rational(2) * (1 - Rational(1, 6)));
  EXPECT_EQ(r.scores, oracle_scores(m, d, x));
}

TEST(Projection, TransferIdentity) {
  gen::Rng rng(61);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng() % 4;
    std::vector<std::size_t> domains(n);
    for (auto& v : domains) v = 2 + rng() % 2;
    const Model m = gen::tree(rng, domains, 4);
    const auto d = gen::multi_ind(rng, domains);
    const Instance x = gen::instance(rng, domains);
    std::vector<Rational> q(n);
    for (auto& v : q) v = gen::open_probability(rng);
    const auto ctx = make_projection(d, x, q);
    const Rational projected = std::get<Rational>(expectation(m, ctx.projected));

    // E_pi[F_pi]: y_i = 1 stands for X_i = x_i, y_i = 0 for X_i != x_i.
    const auto probs = probs_of(d);
    Rational want = 0;
    oracle::for_each_point(std::vector<std::size_t>(n, 2), [&](const oracle::Point& y) {
      Rational weight = 1;
      for (std::size_t i = 0; i < n; ++i) weight *= y[i] ? q[i] : Rational(1 - q[i]);
      Rational num = 0, den = 0;
      oracle::for_each_point(domains, [&](const oracle::Point& z) {
        for (std::size_t i = 0; i < n; ++i)
          if ((z[i] == x[i]) != (y[i] == 1)) return;
        const Rational p = oracle::point_probability(probs, z);
        num += p * std::get<Rational>(evaluate(m, z));
        den += p;
      });
      want += weight * num / den;
    });
    EXPECT_EQ(ctx.transfer_factor(), 1);
    EXPECT_EQ(ctx.transfer_factor() * projected, want);
    for (std::size_t i = 0; i < n; ++i) {
      Rational sum = 0;
      for (const auto& p : ctx.projected.feature(i)) sum += p;
      EXPECT_EQ(sum, 1);
    }
  }
}

TEST(Projection, DeterministicFeatureScoresZero) {
  const Model m = LinearModel{Rational(1), {Rational(3), Rational(-2), Rational(5)}};
  const ProductDistribution d({{Rational(0), Rational(1)}, {Rational(1, 4), Rational(3, 4)},
                               {Rational(1, 2), Rational(1, 2)}});
  const auto r = project_and_shap<Rational>(m, d, {1, 1, 1}, checked());
  EXPECT_EQ(r.scores[0], 0);
  EXPECT_EQ(r.scores[1], Rational(-2) * Rational(1, 4));
  EXPECT_EQ(r.scores[2], Rational(5, 2));
  EXPECT_FALSE(r.notes.empty());
  EXPECT_EQ(r.scores, oracle_scores(m, d, {1, 1, 1}));
}

TEST(Projection, ZeroProbabilityInstanceValueThrows) {
  const Model m = LinearModel{Rational(0), {Rational(1), Rational(1)}};
  const ProductDistribution d({{Rational(1), Rational(0)}, {Rational(1, 2), Rational(1, 2)}});
  EXPECT_THROW(project_and_shap<Rational>(m, d, {1, 1}), PreconditionError);
  EXPECT_THROW(shap_brute<Rational>(m, d, {1, 1}), PreconditionError);
}

TEST(ShapAll, CallCountBound) {
  gen::Rng rng(71);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng() % 8;
    const Case c = random_case(rng, n);
    const auto r = as<Rational>(shap_all(c.model, c.dist, c.x));
    EXPECT_LE(r.oracle_calls, 2 * n * (n + 1) + 2);
    EXPECT_TRUE(sum_rule_holds(r));
  }
}

TEST(ShapAll, Linearity) {
  gen::Rng rng(81);
  for (int trial = 0; trial < 30; ++trial) {
    const std::vector<std::size_t> domains{2, 3, 2, 2};
    const auto e = gen::ensemble(rng, domains);
    const auto d = gen::multi_ind(rng, domains);
    const Instance x = gen::instance(rng, domains);
    const auto whole = as<Rational>(shap_all(e, d, x));
    std::vector<Rational> combined(domains.size(), Rational(0));
    for (const auto& member : e.members) {
      const auto part = as<Rational>(shap_all(member.tree, d, x));
      for (std::size_t i = 0; i < combined.size(); ++i) combined[i] += member.coefficient * part.scores[i];
    }
    EXPECT_EQ(whole.scores, combined);
  }
}

TEST(ShapAll, DummyFeaturesScoreZero) {
  gen::Rng rng(91);
  for (int trial = 0; trial < 20; ++trial) {
    // Tree over features 0..2 embedded in a 5-feature space.
    const TreeModel small = gen::tree(rng, {2, 2, 2}, 4);
    std::vector<std::optional<Rational>> v;
    std::vector<int> a, b, dd;
    std::vector<Rational> t;
    for (std::size_t j = 0; j < small.size(); ++j) {
      v.push_back(small.is_leaf(j) ? std::optional<Rational>(small.leaf_value(j)) : std::nullopt);
      a.push_back(small.left(j));
      b.push_back(small.right(j));
      dd.push_back(small.feature(j));
      t.push_back(small.threshold(j));
    }
    const Model wide = TreeModel(v, a, b, t, {}, dd, 5);
    const auto d = gen::binary_ind(rng, 5);
    const auto r = as<Rational>(shap_all(wide, d, gen::binary_instance(rng, 5)));
    EXPECT_EQ(r.scores[3], 0);
    EXPECT_EQ(r.scores[4], 0);
  }
}

TEST(ShapAll, AutoPicksEngineByClass) {
  const Model lin = LinearModel{Rational(0), {Rational(1), Rational(2)}};
  const auto d = ProductDistribution::uniform_binary(2);
  EXPECT_EQ(as<Rational>(shap_all(lin, d, {1, 1})).path, "reduction");
  const Model cnf = CnfFormula{2, {{1, 2}}};
  EXPECT_EQ(as<Rational>(shap_all(cnf, d, {1, 1})).path, "subset-brute");
  EXPECT_EQ(as<Rational>(shap_all(cnf, d, {1, 1}, Engine::kPermutation)).path, "permutation-brute");
}

TEST(ShapAll, LogisticUsesFloatingPoint) {
  gen::Rng rng(101);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng() % 5;
    LogisticModel m;
    for (std::size_t i = 0; i <= n; ++i) m.weights.push_back(static_cast<Real>(gen::uniform(rng, -30, 30)) / 10);
    const auto d = gen::binary_ind(rng, n);
    const Instance x = gen::binary_instance(rng, n);
    std::vector<std::vector<long double>> probs;
    for (const auto& row : probs_of(d)) probs.push_back({to_real(row[0]), to_real(row[1])});
    const auto f = [&](const oracle::Point& y) { return std::get<Real>(evaluate(Model(m), y)); };
    const auto want = oracle::shap<long double>(f, probs, x);
    for (Engine e : {Engine::kAuto, Engine::kReduction, Engine::kPermutation}) {
      const auto r = as<Real>(shap_all(m, d, x, e));
      EXPECT_TRUE(sum_rule_holds(r));
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(r.scores[i], want[i], 1e-12L);
    }
  }
}

TEST(ShapAll, DdnnfReductionWithSelfCheck) {
  gen::Rng rng(111);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng() % 7;
    const auto circuit = gen::ddnnf(rng, n, 6);
    const auto d = gen::binary_ind(rng, n);
    const Instance x = gen::binary_instance(rng, n);
    const auto r = as<Rational>(shap_all(circuit, d, x, Engine::kReduction, checked()));
    EXPECT_EQ(r.scores, oracle_scores(circuit, d, x));
  }
}
