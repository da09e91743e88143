#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "shapx/io.hpp"
#include "shapx/shapx.hpp"

using namespace shapx;
using Json = io::Json;

namespace {

struct Run {
  std::string out;
  int code = -1;
};

// Runs the CLI from the data directory; stderr is folded into out when asked.
Run cli(const std::string& args, bool with_stderr = false, const std::string& env = "") {
  const std::string cmd = "cd '" + std::string(SHAPX_DATA_DIR) + "' && " + env + " '" + SHAPX_CLI + "' " + args +
                          (with_stderr ? " 2>&1" : " 2>/dev/null");
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t got = 0;
  while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

bool contains(const std::string& s, const std::string& what) { return s.find(what) != std::string::npos; }

std::string temp_file(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / ("shapx_cli_" + name);
  std::ofstream(path) << text;
  return path.string();
}

std::vector<Rational> scores_of(const Json& report) {
  std::vector<Rational> out;
  for (const auto& s : report.at("scores")) out.push_back(io::rational_from_json(s.at("value")));
  return out;
}

}  // namespace

TEST(Cli, LinearScoresSumToGap) {
  const auto r = cli("shap --model linear.json --dist ind3.json --format json");
  ASSERT_EQ(r.code, 0);
  const Json j = Json::parse(r.out);
  const auto scores = scores_of(j);
  ASSERT_EQ(scores.size(), 3u);
  Rational sum = 0;
  for (const auto& s : scores) sum += s;
  EXPECT_EQ(sum, io::rational_from_json(j.at("prediction")) - io::rational_from_json(j.at("expectation")));
  // Independent check against the model and distribution files.
  const auto m = std::get<LinearModel>(io::model_from_json(io::parse_json(io::read_file(std::string(SHAPX_DATA_DIR) + "/linear.json"))));
  const auto d = io::product_from_json(io::parse_json(io::read_file(std::string(SHAPX_DATA_DIR) + "/ind3.json")));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(scores[i], m.weights[i] * (1 - d.prob(i, 1)));
}

TEST(Cli, EmpiricalBruteMatchesReduction) {
  const auto brute = cli("shap --model tree3.json --data d.csv --engine brute --format json");
  const auto autop = cli("shap --model tree3.json --data d.csv --format json");
  ASSERT_EQ(brute.code, 0);
  ASSERT_EQ(autop.code, 0);
  EXPECT_EQ(scores_of(Json::parse(brute.out)), scores_of(Json::parse(autop.out)));
}

TEST(Cli, ConstantModelScoresZero) {
  const auto r = cli("shap --model const.json --dist ind3.json --format json");
  ASSERT_EQ(r.code, 0);
  for (const auto& s : scores_of(Json::parse(r.out))) EXPECT_EQ(s, 0);
}

TEST(Cli, AutoAndBruteAgreeOnEveryInstance) {
  const std::vector<std::pair<std::string, std::string>> cases{{"linear.json", "ind3.json"},
                                                               {"tree3.json", "ind3.json"},
                                                               {"fm.json", "ind3.json"},
                                                               {"and2.nnf", "ind2.json"},
                                                               {"const.json", "ind3.json"}};
  for (const auto& [model, dist] : cases) {
    const std::size_t n = dist == "ind2.json" ? 2 : 3;
    for (std::uint64_t s = 0; s < (std::uint64_t{1} << n); ++s) {
      std::string inst;
      for (std::size_t i = 0; i < n; ++i) inst += ((s >> i) & 1U) ? '1' : '0';
      const std::string base = "shap --model " + model + " --dist " + dist + " --instance " + inst + " --format json";
      const auto a = cli(base + " --engine auto"), b = cli(base + " --engine brute");
      ASSERT_EQ(a.code, 0) << base;
      ASSERT_EQ(b.code, 0) << base;
      Json ja = Json::parse(a.out), jb = Json::parse(b.out);
      for (auto* j : {&ja, &jb}) {
        j->erase("path");
        j->erase("oracle_calls");
        j->erase("notes");
      }
      EXPECT_EQ(ja, jb) << base;
    }
  }
}

TEST(Cli, ThreadCapDoesNotChangeOutput) {
  for (const std::string args : {"shap --model tree3.json --dist ind3.json --format json",
                                 "shap --model tree3.json --data d.csv --format json",
                                 "reduce --data d.csv --direction shap-from-pp2cnf --format json"}) {
    const auto one = cli(args, false, "SHAPX_THREADS=1");
    const auto many = cli(args, false, "SHAPX_THREADS=8");
    ASSERT_EQ(one.code, 0) << args;
    EXPECT_EQ(one.out, many.out) << args;
  }
}

TEST(Cli, JsonReportRoundTripsThroughTheLibrary) {
  const auto r = cli("shap --model tree3.json --dist ind3.json --instance 101 --format json");
  ASSERT_EQ(r.code, 0);
  const Json j = Json::parse(r.out);
  const Model m = io::model_from_json(io::parse_json(io::read_file(std::string(SHAPX_DATA_DIR) + "/tree3.json")));
  const auto d = io::product_from_json(io::parse_json(io::read_file(std::string(SHAPX_DATA_DIR) + "/ind3.json")));
  const auto report = shap_brute<Rational>(m, d, {1, 0, 1}, true);
  EXPECT_EQ(scores_of(j), report.scores);
  EXPECT_EQ(io::rational_from_json(j.at("expectation")), report.expectation);
  EXPECT_EQ(j.at("instance").get<std::vector<int>>(), (std::vector<int>{1, 0, 1}));
}

TEST(Cli, Expectations) {
  auto r = cli("expect --model and2.nnf --dist ind2.json --format json");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(io::rational_from_json(Json::parse(r.out).at("expectation")), Rational(1, 4));
  r = cli("expect --pp2cnf empty.pp2cnf --format json");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(io::rational_from_json(Json::parse(r.out).at("expectation")), 1);
}

TEST(Cli, LogisticGadgetCeilingGivesTwo) {
  const auto emitted = cli("gadget numpar 1 1 --emit");
  ASSERT_EQ(emitted.code, 0);
  const std::string path = temp_file("gadget11.json", emitted.out);
  const auto r = cli("expect --model '" + path + "' --dist ind2.json --format json --precision 30");
  ASSERT_EQ(r.code, 0) << r.out;
  const Real e = io::real_from_json(Json::parse(r.out).at("expectation").at("real"));
  // k = (1, 1): eps = 2^-(n+3) with n = 2.
  const Real eps = 1.0L / 32;
  EXPECT_EQ(std::ceil(4 - 8 * e / (1 - eps)), 2);
  const auto count = cli("gadget numpar 1 1 --via expectation");
  EXPECT_TRUE(contains(count.out, "|P| = 2")) << count.out;
}

TEST(Cli, GadgetCountAndDecision) {
  auto r = cli("gadget numpar 1 1 2 --via expectation");
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(contains(r.out, "|P| = 2")) << r.out;
  // A "no" answer is a result, not a failure.
  r = cli("gadget numpar 1 3 --via shap");
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(contains(r.out, "solvable: no")) << r.out;
  r = cli("gadget numpar 1 1 2 --via shap");
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(contains(r.out, "solvable: yes")) << r.out;
}

TEST(Cli, AuditReportsTheCounterexample) {
  const auto r = cli("audit-treeshap --tree skewed_tree.json --data skewed.csv --format json");
  EXPECT_EQ(r.code, 1);
  const Json j = Json::parse(r.out);
  const Json& findings = j.contains("findings") ? j.at("findings") : j;
  ASSERT_FALSE(findings.empty());
  bool seen = false;
  for (const auto& f : findings)
    if (f.at("instance") == Json::array({0, 0}) && f.at("subset") == Json::array({1})) {
      seen = true;
      EXPECT_EQ(io::rational_from_json(f.at("expvalue")), 3);
      EXPECT_EQ(io::rational_from_json(f.at("correct")), 2);
    }
  EXPECT_TRUE(seen);
  const auto table = cli("audit-treeshap --tree skewed_tree.json --data skewed.csv");
  EXPECT_EQ(table.code, 1);
  EXPECT_TRUE(contains(table.out, "{X2}"));
}

TEST(Cli, ReductionsMatch) {
  auto r = cli("reduce --data d.csv --direction shap-from-pp2cnf");
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(contains(r.out, "MATCH")) << r.out;
  r = cli("reduce --pp2cnf small.pp2cnf --p 1/3 --q 1/4 --direction pp2cnf-from-shap --format json");
  ASSERT_EQ(r.code, 0);
  // (U1 or V1)(U2 or V2) with independent variables.
  const Rational p(1, 3), q(1, 4), one_clause = 1 - (1 - p) * (1 - q);
  EXPECT_TRUE(contains(r.out, "MATCH") || Json::parse(r.out).value("match", false)) << r.out;
  const auto direct = cli("expect --pp2cnf small.pp2cnf --p 1/3 --q 1/4 --format json");
  ASSERT_EQ(direct.code, 0);
  EXPECT_EQ(io::rational_from_json(Json::parse(direct.out).at("expectation")), one_clause * one_clause);
}

TEST(Cli, Selftest) {
  const auto r = cli("selftest");
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(contains(r.out, "selftest passed"));
  EXPECT_FALSE(contains(r.out, "FAIL"));
}

TEST(Cli, ExitCodesForErrors) {
  auto r = cli("shap --model missing.json --dist ind3.json", true);
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(contains(r.out, "error:"));
  r = cli("shap --model linear.json --dist ind2.json", true);
  EXPECT_EQ(r.code, 2);
  r = cli("shap --no-such-flag", true);
  EXPECT_EQ(r.code, 2);
  const std::string bad = temp_file("bad.csv", "X1,X2\n0,1\n0,7\n");
  r = cli("shap --model linear.json --data '" + bad + "'", true);
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(contains(r.out, "line 3")) << r.out;
  EXPECT_TRUE(contains(r.out, "column 3")) << r.out;
}

TEST(Cli, LogisticReductionFailsFast) {
  std::string w = R"({"type": "logistic", "weights": ["1/2")", d = "[";
  for (int i = 0; i < 40; ++i) {
    w += R"(, "1")";
    d += std::string(i ? "," : "") + R"(["1/2", "1/2"])";
  }
  const std::string model = temp_file("l40.json", w + "]}"), dist = temp_file("u40.json", d + "]");
  const auto start = std::chrono::steady_clock::now();
  const auto r = cli("shap --model '" + model + "' --dist '" + dist + "' --engine reduction", true);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(contains(r.out, "#P-hard")) << r.out;
  EXPECT_LT(secs, 5.0);
}
