// shapx command-line tool: SHAP scores, expectations, tree audits, NUMPAR
// gadgets and the empirical/PP2CNF reductions.

#include <cstdio>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "shapx/shapx.hpp"

namespace {

using namespace shapx;
using io::Json;

enum class Format { kJson, kTable };

struct RunConfig {
  std::string model_path, dist_path, data_path, nbn_path, pp2cnf_path, tree_path;
  std::string instance_text;
  std::string engine = "auto";
  std::size_t cap = ExpectationOptions{}.brute_cap;
  std::string format = "table";
  unsigned precision = 6;
  std::uint64_t seed = 1;
  bool verify_determinism = false;
  bool self_check = false;
  bool verbose = false;
  std::string direction = "shap-from-pp2cnf";
  std::string via = "expectation";
  std::string p_text = "1/2", q_text = "1/2";
  std::string gadget_kind;
  std::vector<long> numbers;
  bool emit = false;

  Format fmt() const { return format == "json" ? Format::kJson : Format::kTable; }
};

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

Model load_model(const RunConfig& cfg) {
  const std::string text = io::read_file(cfg.model_path);
  Model model = ends_with(cfg.model_path, ".nnf") ? Model(io::parse_nnf(text))
                                                  : io::model_from_json(io::parse_json(text));
  if (cfg.verify_determinism) {
    auto* c = std::get_if<DdnnfCircuit>(&model);
    if (!c) throw PreconditionError("--verify-determinism applies to d-DNNF models only");
    c->verify_determinism_exhaustively();
  }
  return model;
}

std::vector<std::string> default_names(std::size_t n, std::size_t first = 1) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("X" + std::to_string(i + first));
  return out;
}

Instance instance_or_ones(const RunConfig& cfg, std::size_t n) {
  if (cfg.instance_text.empty()) return all_ones(n);
  Instance x = io::parse_instance(cfg.instance_text);
  check_instance_length(n, x);
  return x;
}

RowFunction exact_row_function(const Model& model) {
  if (std::holds_alternative<LogisticModel>(model))
    throw SignatureError("empirical SHAP is exact; logistic models are not supported over datasets");
  return [&model](const Instance& row) { return std::get<Rational>(evaluate(model, row)); };
}

template <class T>
void emit_report(const RunConfig& cfg, const ShapReport<T>& r, const std::vector<std::string>& names) {
  if (cfg.fmt() == Format::kJson)
    std::cout << io::report_to_json(r, names, cfg.precision).dump(2) << '\n';
  else
    std::cout << io::report_to_table(r, names, cfg.precision);
}

void emit_value(const RunConfig& cfg, const std::string& label, const Value& v, Json extra = Json::object()) {
  const std::string dec = std::visit([&](const auto& x) { return to_decimal(x, cfg.precision); }, v);
  if (cfg.fmt() == Format::kJson) {
    extra[label] = io::value_to_json(v);
    extra["decimal"] = dec;
    std::cout << extra.dump(2) << '\n';
    return;
  }
  std::cout << label << " = " << dec;
  if (const auto* q = std::get_if<Rational>(&v)) std::cout << "  (" << to_string(*q) << ")";
  std::cout << '\n';
}

Engine parse_engine(const std::string& e) {
  if (e == "reduction") return Engine::kReduction;
  if (e == "brute") return Engine::kBrute;
  if (e == "permutation") return Engine::kPermutation;
  return Engine::kAuto;
}

// ---------------------------------------------------------------------------

int cmd_shap(const RunConfig& cfg) {
  const Model model = load_model(cfg);
  const std::size_t n = feature_count(model);
  if (!cfg.data_path.empty()) {
    const EmpiricalDataset data = io::parse_csv(io::read_file(cfg.data_path));
    if (data.feature_count() != n)
      throw SignatureError("model has " + std::to_string(n) + " features, dataset has " +
                           std::to_string(data.feature_count()));
    const Instance x = instance_or_ones(cfg, n);
    const RowFunction f = exact_row_function(model);
    ShapReport<Rational> r;
    if (cfg.engine == "brute" || cfg.engine == "permutation")
      r = empirical_shap_brute(data, f, x, cfg.engine == "permutation");
    else if (cfg.engine == "reduction")
      r = empirical_shap_via_pp2cnf(data, f, x);
    else
      r = empirical_shap_direct_all(data, f, x);
    emit_report(cfg, r, data.names());
    return 0;
  }
  if (!cfg.nbn_path.empty()) {
    const NaiveBayesNet nbn = io::nbn_from_json(io::parse_json(io::read_file(cfg.nbn_path)));
    if (nbn.evidence_count() + 1 != n)
      throw SignatureError("model has " + std::to_string(n) + " features, the net has X_0.." +
                           std::to_string(nbn.evidence_count()));
    if (cfg.engine == "reduction")
      throw PreconditionError("naive Bayes nets are not product distributions; use --engine brute or auto");
    const Instance x = instance_or_ones(cfg, n);
    ShapReport<Real> r = nbn_shap_brute(
        [&](const Instance& y) { return std::visit([](const auto& v) { return to_real(v); }, evaluate(model, y)); },
        nbn, x);
    emit_report(cfg, r, default_names(n, 0));
    return 0;
  }
  ProductDistribution dist = cfg.dist_path.empty()
                                 ? ProductDistribution::uniform_binary(n)
                                 : io::product_from_json(io::parse_json(io::read_file(cfg.dist_path)));
  const Instance x = instance_or_ones(cfg, n);
  ShapOptions opt;
  opt.self_check = cfg.self_check;
  opt.expectation.brute_cap = cfg.cap;
  const Engine engine = parse_engine(cfg.engine);
  AnyShapReport r = shap_all(model, dist, x, engine, opt);
  std::visit(
      [&](auto& rep) {
        if (cfg.dist_path.empty()) rep.notes.push_back("no --dist given; using the uniform binary distribution");
        if (std::holds_alternative<TreeModel>(model) || std::holds_alternative<EnsembleModel>(model))
          if (!dist.is_binary())
            rep.notes.push_back("tree splits compare integer value codes: x <= t goes left");
        emit_report(cfg, rep, default_names(n));
      },
      r);
  return 0;
}

int cmd_expect(const RunConfig& cfg) {
  if (!cfg.pp2cnf_path.empty()) {
    const Pp2Cnf f = io::parse_pp2cnf(io::read_file(cfg.pp2cnf_path));
    const QuasiSymmetricAssignment s{parse_rational(cfg.p_text), parse_rational(cfg.q_text), {}, {}};
    const Rational direct = pp2cnf_expectation(f, s);
    if (cfg.via == "shap") {
      const Rational via = pp2cnf_expectation_via_shap(f, s);
      if (via != direct) {
        std::cerr << "MISMATCH: via SHAP " << via << " vs direct " << direct << '\n';
        return 1;
      }
    }
    emit_value(cfg, "expectation", direct, Json{{"m", f.m}, {"n", f.n}, {"clauses", f.clauses.size()}});
    return 0;
  }
  const Model model = load_model(cfg);
  const std::size_t n = feature_count(model);
  if (!cfg.data_path.empty()) {
    const EmpiricalDataset data = io::parse_csv(io::read_file(cfg.data_path));
    if (data.feature_count() != n) throw SignatureError("model and dataset disagree on feature count");
    emit_value(cfg, "expectation", conditional_expectation(exact_row_function(model), data, EventMask()));
    return 0;
  }
  if (!cfg.nbn_path.empty()) {
    const NaiveBayesNet nbn = io::nbn_from_json(io::parse_json(io::read_file(cfg.nbn_path)));
    const auto table = nbn_value_table(
        [&](const Instance& y) { return std::visit([](const auto& v) { return to_real(v); }, evaluate(model, y)); },
        nbn, all_ones(n));
    emit_value(cfg, "expectation", Value(table.front()));
    return 0;
  }
  const ProductDistribution dist = cfg.dist_path.empty()
                                       ? ProductDistribution::uniform_binary(n)
                                       : io::product_from_json(io::parse_json(io::read_file(cfg.dist_path)));
  ExpectationOptions opt;
  opt.brute_cap = cfg.cap;
  emit_value(cfg, "expectation", expectation(model, dist, opt));
  return 0;
}

int cmd_audit(const RunConfig& cfg) {
  const Model model = io::model_from_json(io::parse_json(io::read_file(cfg.tree_path)));
  std::vector<TreeModel> trees;
  if (const auto* t = std::get_if<TreeModel>(&model))
    trees.push_back(*t);
  else if (const auto* e = std::get_if<EnsembleModel>(&model))
    for (const auto& m : e->members) trees.push_back(m.tree);
  else
    throw PreconditionError("audit-treeshap expects a tree or ensemble model");
  const EmpiricalDataset data = io::parse_csv(io::read_file(cfg.data_path));
  std::vector<Instance> instances;
  if (!cfg.instance_text.empty()) {
    instances.push_back(instance_or_ones(cfg, data.feature_count()));
  } else {
    instances = data.rows();
    std::sort(instances.begin(), instances.end());
    instances.erase(std::unique(instances.begin(), instances.end()), instances.end());
  }
  std::vector<AuditFinding> findings;
  for (std::size_t t = 0; t < trees.size(); ++t)
    for (const auto& x : instances) {
      auto f = audit(trees[t], data, x, t);
      findings.insert(findings.end(), f.begin(), f.end());
    }
  if (cfg.fmt() == Format::kJson) {
    std::cout << Json{{"findings", io::findings_to_json(findings)}, {"instances", instances.size()},
                      {"trees", trees.size()}}
                     .dump(2)
              << '\n';
  } else {
    std::cout << "audited " << trees.size() << (trees.size() == 1 ? " tree" : " trees") << " at "
              << instances.size() << (instances.size() == 1 ? " instance\n" : " instances\n");
    std::cout << io::findings_to_table(findings, data.names());
  }
  return findings.empty() ? 0 : 1;
}

int cmd_gadget(const RunConfig& cfg) {
  if (cfg.gadget_kind != "numpar") throw PreconditionError("unknown gadget '" + cfg.gadget_kind + "'");
  const NumparInstance inst(cfg.numbers);
  if (cfg.via == "shap") {
    const NbnGadget g = nbn_gadget(inst);
    if (cfg.emit) {
      std::cout << io::nbn_to_json(g.nbn).dump(2) << '\n';
      return 0;
    }
    const NumparDecision d = numpar_decide_via_shap(inst);
    if (cfg.fmt() == Format::kJson) {
      std::cout << Json{{"solvable", d.solvable},       {"shap", io::real_to_json(d.shap)},
                        {"threshold", io::real_to_json(d.threshold)}, {"m", io::real_to_json(g.params.m)},
                        {"epsilon", io::real_to_json(g.params.epsilon)}, {"audit_radius", io::real_to_json(d.audit_radius)},
                        {"padded", inst.padded()}}
                       .dump(2)
                << '\n';
    } else {
      std::cout << "solvable: " << (d.solvable ? "yes" : "no") << '\n'
                << "Shap(X0) = " << to_string(d.shap) << "  threshold = " << to_string(d.threshold) << '\n'
                << "m = " << to_string(g.params.m) << "  eps = " << to_string(g.params.epsilon) << '\n';
      if (inst.padded()) std::cout << "note: odd total padded with " << inst.values().back() << '\n';
    }
    return 0;
  }
  const LogisticGadget g = logistic_gadget(inst);
  if (cfg.emit) {
    std::cout << io::model_to_json(g.model).dump(2) << '\n';
    return 0;
  }
  const PartitionCount c = count_partitions_via_expectation(inst);
  if (cfg.fmt() == Format::kJson) {
    std::cout << Json{{"count", c.count},
                      {"expectation", io::real_to_json(c.expectation)},
                      {"lower_bound", io::real_to_json(c.lower_bound)},
                      {"audit_radius", io::real_to_json(c.audit_radius)},
                      {"m", io::real_to_json(g.params.m)},
                      {"epsilon", io::real_to_json(g.params.epsilon)},
                      {"padded", inst.padded()}}
                     .dump(2)
              << '\n';
  } else {
    std::cout << "|P| = " << c.count << '\n'
              << "E[F] = " << to_string(c.expectation) << "  bound = " << to_string(c.lower_bound) << " +/- "
              << to_string(c.audit_radius) << '\n'
              << "m = " << to_string(g.params.m) << "  eps = " << to_string(g.params.epsilon) << '\n';
    if (inst.padded()) std::cout << "note: odd total padded with " << inst.values().back() << '\n';
  }
  return 0;
}

int cmd_reduce(const RunConfig& cfg) {
  if (cfg.direction == "shap-from-pp2cnf") {
    if (cfg.data_path.empty()) throw PreconditionError("--data is required");
    const EmpiricalDataset data = io::parse_csv(io::read_file(cfg.data_path));
    const std::size_t n = data.feature_count();
    std::optional<Model> model;
    RowFunction f = [](const Instance& row) { return Rational(row[0]); };
    if (!cfg.model_path.empty()) {
      model = load_model(cfg);
      if (feature_count(*model) != n) throw SignatureError("model and dataset disagree on feature count");
      f = exact_row_function(*model);
    }
    const Instance x = instance_or_ones(cfg, n);
    ForwardTrace trace;
    const auto via = empirical_shap_via_pp2cnf(data, f, x, {}, &trace);
    const auto direct = empirical_shap_direct_all(data, f, x);
    const bool match = via.scores == direct.scores;
    if (cfg.fmt() == Format::kJson) {
      Json out = io::report_to_json(via, data.names(), cfg.precision);
      out["match"] = match;
      out["direct"] = io::report_to_json(direct, data.names(), cfg.precision);
      if (cfg.verbose) {
        Json dets = Json::array();
        for (const auto& d : trace.kronecker_determinants) dets.push_back(io::rational_to_json(d));
        out["kronecker_determinants"] = dets;
      }
      std::cout << out.dump(2) << '\n';
    } else {
      std::cout << (match ? "MATCH" : "MISMATCH") << ": SHAP via PP2CNF expectations vs direct\n";
      if (cfg.model_path.empty()) std::cout << "model: F = " << data.names().front() << '\n';
      std::cout << io::report_to_table(via, data.names(), cfg.precision);
      if (cfg.verbose) {
        std::cout << "Kronecker-Vandermonde determinants:";
        for (const auto& d : trace.kronecker_determinants) std::cout << ' ' << d;
        std::cout << '\n';
      }
    }
    if (!match) {
      std::cerr << "MISMATCH between the reduction and the direct computation\n";
      return 1;
    }
    return 0;
  }
  if (cfg.direction == "pp2cnf-from-shap") {
    Pp2Cnf f;
    if (!cfg.pp2cnf_path.empty())
      f = io::parse_pp2cnf(io::read_file(cfg.pp2cnf_path));
    else if (!cfg.data_path.empty())
      f = build_pp2cnf(io::parse_csv(io::read_file(cfg.data_path)));
    else
      throw PreconditionError("--pp2cnf or --data is required");
    const QuasiSymmetricAssignment s{parse_rational(cfg.p_text), parse_rational(cfg.q_text), {}, {}};
    ReverseTrace trace;
    const Rational via = pp2cnf_expectation_via_shap(f, s, {}, &trace);
    const Rational direct = pp2cnf_expectation(f, s);
    const bool match = via == direct;
    if (cfg.fmt() == Format::kJson) {
      Json out{{"match", match},
               {"via_shap", io::rational_to_json(via)},
               {"direct", io::rational_to_json(direct)},
               {"shap_calls", trace.shap_calls}};
      if (cfg.verbose) {
        Json V = Json::array(), v = Json::array(), a = Json::array(), b = Json::array();
        for (const auto& row : trace.V) {
          Json r = Json::array();
          for (const auto& q : row) r.push_back(io::rational_to_json(q));
          V.push_back(r);
        }
        for (const auto& row : trace.v) {
          Json r = Json::array();
          for (const auto& q : row) r.push_back(io::rational_to_json(q));
          v.push_back(r);
        }
        for (const auto& row : trace.a) {
          Json r = Json::array();
          for (const auto& q : row) r.push_back(q.get_str());
          a.push_back(r);
        }
        for (const auto& row : trace.b) {
          Json r = Json::array();
          for (const auto& q : row) r.push_back(q.get_str());
          b.push_back(r);
        }
        out["V"] = V;
        out["v"] = v;
        out["a"] = a;
        out["b"] = b;
        out["delta_determinant"] = io::rational_to_json(trace.delta_determinant);
        out["gamma_determinant"] = io::rational_to_json(trace.gamma_determinant);
      }
      std::cout << out.dump(2) << '\n';
    } else {
      std::cout << (match ? "MATCH" : "MISMATCH") << ": E[PP2CNF] via SHAP vs direct\n"
                << "E = " << to_decimal(via, cfg.precision) << "  (" << via << ")\n"
                << "SHAP calls: " << trace.shap_calls << '\n';
      if (cfg.verbose) {
        for (std::size_t g = 0; g < trace.V.size(); ++g) {
          std::cout << "V[Gamma=" << g + 1 << "]:";
          for (const auto& q : trace.V[g]) std::cout << ' ' << q;
          std::cout << "\nv[Gamma=" << g + 1 << "]:";
          for (const auto& q : trace.v[g]) std::cout << ' ' << q;
          std::cout << '\n';
        }
        std::cout << "det Delta system = " << trace.delta_determinant
                  << "\ndet Gamma system = " << trace.gamma_determinant << '\n';
      }
    }
    if (!match) {
      std::cerr << "MISMATCH: via SHAP " << via << " vs direct " << direct << '\n';
      return 1;
    }
    return 0;
  }
  throw PreconditionError("unknown direction '" + cfg.direction + "'");
}

// ---------------------------------------------------------------------------
// selftest: small seeded cross-checks between independent code paths.

TreeModel random_tree(std::mt19937_64& rng, std::size_t n, int depth) {
  std::vector<std::optional<Rational>> v;
  std::vector<int> a, b, d;
  std::vector<Rational> t;
  auto grow = [&](auto& self, int level) -> int {
    const int id = static_cast<int>(v.size());
    v.emplace_back();
    a.push_back(-1);
    b.push_back(-1);
    d.push_back(-1);
    t.emplace_back(0);
    if (level == depth || rng() % 4 == 0) {
      v[id] = Rational(static_cast<long>(rng() % 7) - 3);
      return id;
    }
    d[id] = static_cast<int>(rng() % n);
    t[id] = Rational(1, 2);
    const int l = self(self, level + 1);
    const int r = self(self, level + 1);
    a[id] = l;
    b[id] = r;
    return id;
  };
  grow(grow, 0);
  return TreeModel(std::move(v), std::move(a), std::move(b), std::move(t), {}, std::move(d), n);
}

int cmd_selftest(const RunConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  int failures = 0;
  auto report = [&](const std::string& name, bool ok) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << '\n';
    if (!ok) ++failures;
  };
  auto guarded = [&](const std::string& name, auto&& body) {
    try {
      report(name, body());
    } catch (const std::exception& e) {
      std::cout << "FAIL " << name << ": " << e.what() << '\n';
      ++failures;
    }
  };
  guarded("d-DNNF X1 and X2 has expectation 1/4", [] {
    const DdnnfCircuit c(2, {DdnnfCircuit::literal_node(1), DdnnfCircuit::literal_node(2),
                             DdnnfCircuit::and_node({0, 1})});
    return std::get<Rational>(expectation(Model(c), ProductDistribution::uniform_binary(2))) == Rational(1, 4);
  });
  guarded("reduction equals permutation brute force on random trees", [&] {
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 1 + rng() % 5;
      const Model m = random_tree(rng, n, 3);
      std::vector<Rational> p;
      for (std::size_t i = 0; i < n; ++i) p.push_back(ratio(Integer(1 + static_cast<long>(rng() % 9)), 10));
      const auto dist = ProductDistribution::binary(p);
      Instance x(n);
      for (auto& v : x) v = static_cast<int>(rng() % 2);
      const auto a = std::get<ShapReport<Rational>>(shap_all(m, dist, x, Engine::kReduction));
      const auto b = std::get<ShapReport<Rational>>(shap_all(m, dist, x, Engine::kPermutation));
      if (a.scores != b.scores) return false;
    }
    return true;
  });
  guarded("tree cover recursion differs from the conditional expectation", [] {
    const TreeModel t({std::nullopt, std::nullopt, std::nullopt, Rational(0), Rational(0), Rational(6), Rational(0)},
                      {1, 3, 5, -1, -1, -1, -1}, {2, 4, 6, -1, -1, -1, -1},
                      {Rational(1, 2), Rational(1, 2), Rational(1, 2), 0, 0, 0, 0}, {}, {0, 1, 1, -1, -1, -1, -1}, 2);
    const EmpiricalDataset data({{0, 0}, {0, 1}, {1, 0}, {1, 1}}, {2, 1, 1, 2});
    const TreeModel covered = t.with_covers(dataset_covers(t, data));
    return expvalue(covered, {0, 0}, {1}) == 3 && correct_expvalue(data, t, {0, 0}, {1}) == 2;
  });
  guarded("empirical SHAP via PP2CNF equals the direct computation", [&] {
    for (int trial = 0; trial < 5; ++trial) {
      const std::size_t m = 1 + rng() % 4, n = 1 + rng() % 4;
      std::vector<Instance> rows(m, Instance(n));
      for (auto& r : rows)
        for (auto& v : r) v = static_cast<int>(rng() % 2);
      const EmpiricalDataset data(rows);
      const RowFunction f = [](const Instance& r) { return Rational(r[0] + 2 * r.back()); };
      const Instance x = all_ones(n);
      if (empirical_shap_via_pp2cnf(data, f, x).scores != empirical_shap_direct_all(data, f, x).scores) return false;
    }
    return true;
  });
  guarded("PP2CNF expectation via SHAP equals the direct count", [&] {
    for (int trial = 0; trial < 3; ++trial) {
      const std::size_t m = 1 + rng() % 3, n = 1 + rng() % 3;
      BinaryMatrix x(m, std::vector<int>(n));
      for (auto& r : x)
        for (auto& v : r) v = static_cast<int>(rng() % 2);
      const Pp2Cnf f = Pp2Cnf::from_matrix(x);
      const QuasiSymmetricAssignment s{ratio(1 + static_cast<long>(rng() % 5), 7), ratio(1 + static_cast<long>(rng() % 5), 6), {}, {}};
      if (pp2cnf_expectation_via_shap(f, s) != pp2cnf_expectation(f, s)) return false;
    }
    return true;
  });
  guarded("NUMPAR gadgets on (1, 1, 2)", [] {
    const NumparInstance inst({1, 1, 2});
    return count_partitions_via_expectation(inst).count == 2 && numpar_decide_via_shap(inst).solvable;
  });
  std::cout << (failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact SHAP scores, expectations and reductions"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--format", cfg.format, "Output format")->check(CLI::IsMember({"json", "table"}));
    sub->add_option("--precision", cfg.precision, "Decimal digits")->check(CLI::Range(1u, 200u));
    sub->add_option("--seed", cfg.seed, "Random seed");
    sub->add_flag("--verbose", cfg.verbose, "Print intermediate quantities");
  };
  auto inputs = [&](CLI::App* sub) {
    sub->add_option("--model", cfg.model_path, "Model JSON or NNF file");
    sub->add_option("--dist", cfg.dist_path, "Product distribution JSON");
    sub->add_option("--data", cfg.data_path, "Dataset CSV (empirical distribution)");
    sub->add_option("--nbn", cfg.nbn_path, "Naive Bayes net JSON");
    sub->add_option("--instance", cfg.instance_text, "Instance to explain, e.g. 1,0,1 (default all ones)");
    sub->add_option("--cap", cfg.cap, "Feature cap for exponential enumeration")->check(CLI::PositiveNumber);
    sub->add_flag("--verify-determinism", cfg.verify_determinism, "Check OR-gate determinism by enumeration");
  };

  auto* shap = app.add_subcommand("shap", "SHAP scores of every feature");
  inputs(shap);
  common(shap);
  shap->add_option("--engine", cfg.engine, "auto | reduction | brute | permutation")
      ->check(CLI::IsMember({"auto", "reduction", "brute", "permutation"}));
  shap->add_flag("--self-check", cfg.self_check, "Re-probe the interpolated polynomials");

  auto* expect = app.add_subcommand("expect", "Expectation of a model or PP2CNF formula");
  inputs(expect);
  common(expect);
  expect->add_option("--pp2cnf", cfg.pp2cnf_path, "PP2CNF formula file");
  expect->add_option("--p", cfg.p_text, "Pr(U_i) for PP2CNF");
  expect->add_option("--q", cfg.q_text, "Pr(V_j) for PP2CNF");
  expect->add_option("--via", cfg.via, "direct | shap (PP2CNF only)")->check(CLI::IsMember({"direct", "shap"}));

  auto* auditc = app.add_subcommand("audit-treeshap", "Compare the cover recursion with true expectations");
  common(auditc);
  auditc->add_option("--tree", cfg.tree_path, "Tree or ensemble JSON")->required();
  auditc->add_option("--data", cfg.data_path, "Dataset CSV")->required();
  auditc->add_option("--instance", cfg.instance_text, "Audit one instance (default: every dataset row)");

  auto* gadget = app.add_subcommand("gadget", "NUMPAR gadgets");
  common(gadget);
  gadget->add_option("kind", cfg.gadget_kind, "Gadget family (numpar)")->required();
  gadget->add_option("numbers", cfg.numbers, "Positive integers k_1..k_n")->required();
  gadget->add_option("--via", cfg.via, "expectation (count) | shap (decide)")
      ->check(CLI::IsMember({"expectation", "shap"}));
  gadget->add_flag("--emit", cfg.emit, "Print the constructed model or net as JSON");

  auto* reduce = app.add_subcommand("reduce", "Run a reduction and cross-check it");
  common(reduce);
  reduce->add_option("--direction", cfg.direction, "shap-from-pp2cnf | pp2cnf-from-shap")
      ->check(CLI::IsMember({"shap-from-pp2cnf", "pp2cnf-from-shap"}));
  reduce->add_option("--data", cfg.data_path, "Dataset CSV");
  reduce->add_option("--model", cfg.model_path, "Model evaluated on rows (default: first column)");
  reduce->add_option("--instance", cfg.instance_text, "Instance to explain (default all ones)");
  reduce->add_option("--pp2cnf", cfg.pp2cnf_path, "PP2CNF formula file");
  reduce->add_option("--p", cfg.p_text, "Pr(U_i)");
  reduce->add_option("--q", cfg.q_text, "Pr(V_j)");

  auto* selftest = app.add_subcommand("selftest", "Seeded cross-checks between independent code paths");
  common(selftest);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*shap) {
      if (cfg.model_path.empty()) throw PreconditionError("--model is required");
      return cmd_shap(cfg);
    }
    if (*expect) {
      if (cfg.model_path.empty() && cfg.pp2cnf_path.empty())
        throw PreconditionError("--model or --pp2cnf is required");
      return cmd_expect(cfg);
    }
    if (*auditc) return cmd_audit(cfg);
    if (*gadget) return cmd_gadget(cfg);
    if (*reduce) return cmd_reduce(cfg);
    if (*selftest) return cmd_selftest(cfg);
  } catch (const shapx::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
