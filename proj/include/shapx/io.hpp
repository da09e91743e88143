#pragma once

// Readers and writers for models, distributions, datasets, circuits and
// reports. See docs/formats.md for the byte-level layouts.

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "shapx/distributions.hpp"
#include "shapx/empirical.hpp"
#include "shapx/error.hpp"
#include "shapx/model.hpp"
#include "shapx/rational.hpp"
#include "shapx/shap.hpp"
#include "shapx/treeshap_audit.hpp"

namespace shapx::io {

using Json = nlohmann::json;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

namespace detail {

inline std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t offset) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

[[noreturn]] inline void schema(const std::string& where, const std::string& what) {
  throw ModelError(where + ": " + what);
}

inline const Json& field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object()) schema(where, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) schema(where, std::string("missing field '") + key + "'");
  return *it;
}

inline const Json& array_field(const Json& j, const char* key, const std::string& where) {
  const Json& a = field(j, key, where);
  if (!a.is_array()) schema(where + "." + key, "expected an array");
  return a;
}

inline long long integer(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) schema(where, "expected an integer");
  return j.get<long long>();
}

inline std::string pos(const std::string& where, std::size_t i) {
  return where + "[" + std::to_string(i) + "]";
}

}  // namespace detail

/// Parses JSON text, converting syntax errors to ParseError with line/column.
inline Json parse_json(std::string_view text) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    // e.byte is 1-based and points just past the offending character.
    const std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
    auto [line, col] = detail::line_col(text, offset);
    std::string msg = e.what();
    if (auto p = msg.find("syntax error"); p != std::string::npos) msg = msg.substr(p);
    throw ParseError("invalid JSON: " + msg, line, col);
  }
}

// ---------------------------------------------------------------------------
// Scalars

/// Accepts "a/b" or decimal strings, JSON integers, JSON floats (read as the
/// shortest decimal that round-trips) and {"num": .., "den": ..} objects.
inline Rational rational_from_json(const Json& j, const std::string& where = "value") {
  try {
    if (j.is_string()) return parse_rational(j.get<std::string>());
    if (j.is_number_integer()) return Rational(Integer(j.dump()));
    if (j.is_number_float()) return rational_from_double(j.get<double>());
    if (j.is_object() && j.contains("num") && j.contains("den")) {
      auto text = [](const Json& x) { return x.is_string() ? x.get<std::string>() : x.dump(); };
      return parse_rational(text(j.at("num")) + "/" + text(j.at("den")));
    }
  } catch (const ModelError&) {
    throw;
  } catch (const Error& e) {
    detail::schema(where, e.what());
  }
  detail::schema(where, "expected a rational (string, number or {num, den})");
}

inline Json rational_to_json(const Rational& q) {
  return Json{{"num", q.get_num().get_str()}, {"den", q.get_den().get_str()}};
}

/// Compact string form used inside model files: "a" or "a/b".
inline Json rational_to_string_json(const Rational& q) { return to_string(q); }

inline Real parse_real(const std::string& s, const std::string& where) {
  errno = 0;
  char* end = nullptr;
  const Real x = std::strtold(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
    detail::schema(where, "invalid real '" + s + "'");
  return x;
}

inline Real real_from_json(const Json& j, const std::string& where = "value") {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s.find('/') != std::string::npos) return to_real(rational_from_json(j, where));
    return parse_real(s, where);
  }
  if (j.is_object() && j.contains("num")) return to_real(rational_from_json(j, where));
  detail::schema(where, "expected a real number");
}

/// Probability given directly or as {"log": x}; returns its natural log.
inline Real log_probability_from_json(const Json& j, const std::string& where) {
  if (j.is_object() && j.contains("log")) return real_from_json(j.at("log"), where + ".log");
  const Real p = real_from_json(j, where);
  if (!(p >= 0 && p <= 1)) detail::schema(where, "probability outside [0,1]");
  return std::log(p);
}

inline Json real_to_json(Real x) { return to_string(x); }

template <class T>
Json value_to_json(const T& v) {
  if constexpr (is_exact_v<T>)
    return rational_to_json(v);
  else
    return Json{{"real", to_string(v)}};
}

inline Json value_to_json(const Value& v) {
  return std::visit([](const auto& x) { return value_to_json(x); }, v);
}

// ---------------------------------------------------------------------------
// Models

namespace detail {

inline std::vector<Rational> rationals(const Json& a, const std::string& where) {
  if (!a.is_array()) schema(where, "expected an array");
  std::vector<Rational> out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(rational_from_json(a[i], pos(where, i)));
  return out;
}

inline Json rationals_to_json(const std::vector<Rational>& v) {
  Json out = Json::array();
  for (const auto& q : v) out.push_back(rational_to_string_json(q));
  return out;
}

inline std::vector<int> ints(const Json& a, const std::string& where) {
  if (!a.is_array()) schema(where, "expected an array");
  std::vector<int> out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].is_null()) {
      out.push_back(-1);
      continue;
    }
    out.push_back(static_cast<int>(integer(a[i], pos(where, i))));
  }
  return out;
}

inline TreeModel tree_from_json(const Json& j, const std::string& where) {
  const Json& v = array_field(j, "v", where);
  std::vector<std::optional<Rational>> value;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i].is_null() || (v[i].is_string() && v[i].get<std::string>() == "internal"))
      value.emplace_back(std::nullopt);
    else
      value.emplace_back(rational_from_json(v[i], pos(where + ".v", i)));
  }
  std::vector<int> a = ints(array_field(j, "a", where), where + ".a");
  std::vector<int> b = ints(array_field(j, "b", where), where + ".b");
  std::vector<int> d = ints(array_field(j, "d", where), where + ".d");
  const Json& t = array_field(j, "t", where);
  std::vector<Rational> thresholds;
  for (std::size_t i = 0; i < t.size(); ++i)
    thresholds.push_back(t[i].is_null() ? Rational(0) : rational_from_json(t[i], pos(where + ".t", i)));
  std::vector<Rational> cover;
  if (j.contains("r") && !j.at("r").is_null()) cover = rationals(j.at("r"), where + ".r");
  std::optional<std::size_t> n;
  if (j.contains("num_features")) {
    const long long k = integer(j.at("num_features"), where + ".num_features");
    if (k < 0) schema(where + ".num_features", "must be non-negative");
    n = static_cast<std::size_t>(k);
  }
  try {
    return TreeModel(std::move(value), std::move(a), std::move(b), std::move(thresholds), std::move(cover),
                     std::move(d), n);
  } catch (const Error& e) {
    schema(where, e.what());
  }
}

inline Json tree_to_json(const TreeModel& tree) {
  Json v = Json::array(), t = Json::array(), r = Json::array();
  for (std::size_t i = 0; i < tree.size(); ++i) {
    v.push_back(tree.is_leaf(i) ? rational_to_string_json(tree.leaf_value(i)) : Json(nullptr));
    t.push_back(tree.is_leaf(i) ? Json(nullptr) : rational_to_string_json(tree.threshold(i)));
  }
  Json out{{"num_features", tree.feature_count()}, {"v", v}, {"a", tree.lefts()},
           {"b", tree.rights()},                   {"t", t}, {"d", tree.features()}};
  if (tree.has_covers()) out["r"] = rationals_to_json(tree.covers());
  return out;
}

inline DdnnfCircuit ddnnf_from_json(const Json& j, const std::string& where) {
  const long long vars = integer(field(j, "num_vars", where), where + ".num_vars");
  if (vars < 0) schema(where + ".num_vars", "must be non-negative");
  const Json& nodes = array_field(j, "nodes", where);
  std::vector<DdnnfCircuit::Node> out;
  out.reserve(nodes.size());
  auto children = [&](const Json& c, const std::string& w) {
    std::vector<std::uint32_t> ch;
    if (!c.is_array()) schema(w, "expected an array of node indices");
    for (std::size_t i = 0; i < c.size(); ++i) {
      const long long k = integer(c[i], pos(w, i));
      if (k < 0) schema(pos(w, i), "negative node index");
      ch.push_back(static_cast<std::uint32_t>(k));
    }
    return ch;
  };
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Json& node = nodes[i];
    const std::string w = pos(where + ".nodes", i);
    if (!node.is_object()) schema(w, "expected an object");
    if (node.contains("lit")) {
      out.push_back(DdnnfCircuit::literal_node(static_cast<int>(integer(node.at("lit"), w + ".lit"))));
    } else if (node.contains("const")) {
      if (!node.at("const").is_boolean()) schema(w + ".const", "expected true or false");
      out.push_back(DdnnfCircuit::constant_node(node.at("const").get<bool>()));
    } else if (node.contains("and")) {
      out.push_back(DdnnfCircuit::and_node(children(node.at("and"), w + ".and")));
    } else if (node.contains("or")) {
      int decision = 0;
      if (node.contains("decision")) decision = static_cast<int>(integer(node.at("decision"), w + ".decision"));
      out.push_back(DdnnfCircuit::or_node(children(node.at("or"), w + ".or"), decision));
    } else {
      schema(w, "node needs one of lit, const, and, or");
    }
  }
  try {
    return DdnnfCircuit(static_cast<std::size_t>(vars), std::move(out));
  } catch (const Error& e) {
    schema(where, e.what());
  }
}

inline Json ddnnf_to_json(const DdnnfCircuit& c) {
  Json nodes = Json::array();
  for (const auto& node : c.nodes()) {
    switch (node.kind) {
      case DdnnfCircuit::Kind::kLiteral:
        nodes.push_back({{"lit", node.literal}});
        break;
      case DdnnfCircuit::Kind::kConstant:
        nodes.push_back({{"const", node.literal != 0}});
        break;
      case DdnnfCircuit::Kind::kAnd:
        nodes.push_back({{"and", node.children}});
        break;
      case DdnnfCircuit::Kind::kOr: {
        Json o{{"or", node.children}};
        if (node.decision_var != 0) o["decision"] = node.decision_var;
        nodes.push_back(o);
        break;
      }
    }
  }
  return Json{{"type", "ddnnf"}, {"num_vars", c.feature_count()}, {"nodes", nodes}};
}

}  // namespace detail

inline Model model_from_json(const Json& j) {
  const std::string where = "model";
  const Json& type = detail::field(j, "type", where);
  if (!type.is_string()) detail::schema(where + ".type", "expected a string");
  const std::string kind = type.get<std::string>();
  if (kind == "linear") {
    LinearModel m;
    m.bias = j.contains("bias") ? rational_from_json(j.at("bias"), "model.bias") : Rational(0);
    m.weights = detail::rationals(detail::array_field(j, "weights", where), "model.weights");
    return m;
  }
  if (kind == "tree") return detail::tree_from_json(j, where);
  if (kind == "ensemble") {
    EnsembleModel m;
    const Json& members = detail::array_field(j, "members", where);
    for (std::size_t i = 0; i < members.size(); ++i) {
      const std::string w = detail::pos("model.members", i);
      const Rational coef = members[i].contains("coefficient")
                                ? rational_from_json(members[i].at("coefficient"), w + ".coefficient")
                                : Rational(1);
      m.members.push_back({coef, detail::tree_from_json(detail::field(members[i], "tree", w), w + ".tree")});
    }
    return m;
  }
  if (kind == "fm") {
    FactorizationMachine m;
    m.bias = j.contains("bias") ? rational_from_json(j.at("bias"), "model.bias") : Rational(0);
    m.weights = detail::rationals(detail::array_field(j, "weights", where), "model.weights");
    const Json& f = detail::array_field(j, "factors", where);
    for (std::size_t i = 0; i < f.size(); ++i)
      m.factors.push_back(detail::rationals(f[i], detail::pos("model.factors", i)));
    return m;
  }
  if (kind == "ddnnf") return detail::ddnnf_from_json(j, where);
  if (kind == "logistic") {
    LogisticModel m;
    const Json& w = detail::array_field(j, "weights", where);
    if (w.empty()) detail::schema("model.weights", "needs at least the bias w0");
    for (std::size_t i = 0; i < w.size(); ++i)
      m.weights.push_back(real_from_json(w[i], detail::pos("model.weights", i)));
    return m;
  }
  if (kind == "cnf") {
    CnfFormula f;
    const long long n = detail::integer(detail::field(j, "num_vars", where), "model.num_vars");
    if (n < 0) detail::schema("model.num_vars", "must be non-negative");
    f.num_vars = static_cast<std::size_t>(n);
    const Json& cl = detail::array_field(j, "clauses", where);
    for (std::size_t i = 0; i < cl.size(); ++i)
      f.clauses.push_back(detail::ints(cl[i], detail::pos("model.clauses", i)));
    return f;
  }
  detail::schema(where + ".type", "unknown model type '" + kind + "'");
}

inline Json model_to_json(const Model& model) {
  struct Writer {
    Json operator()(const LinearModel& m) const {
      return {{"type", "linear"}, {"bias", rational_to_string_json(m.bias)},
              {"weights", detail::rationals_to_json(m.weights)}};
    }
    Json operator()(const TreeModel& m) const {
      Json out = detail::tree_to_json(m);
      out["type"] = "tree";
      return out;
    }
    Json operator()(const EnsembleModel& m) const {
      Json members = Json::array();
      for (const auto& mem : m.members)
        members.push_back({{"coefficient", rational_to_string_json(mem.coefficient)},
                           {"tree", detail::tree_to_json(mem.tree)}});
      return {{"type", "ensemble"}, {"members", members}};
    }
    Json operator()(const FactorizationMachine& m) const {
      Json f = Json::array();
      for (const auto& row : m.factors) f.push_back(detail::rationals_to_json(row));
      return {{"type", "fm"}, {"bias", rational_to_string_json(m.bias)},
              {"weights", detail::rationals_to_json(m.weights)}, {"factors", f}};
    }
    Json operator()(const DdnnfCircuit& m) const { return detail::ddnnf_to_json(m); }
    Json operator()(const LogisticModel& m) const {
      Json w = Json::array();
      for (Real x : m.weights) w.push_back(real_to_json(x));
      return {{"type", "logistic"}, {"weights", w}};
    }
    Json operator()(const CnfFormula& m) const {
      return {{"type", "cnf"}, {"num_vars", m.num_vars}, {"clauses", m.clauses}};
    }
  };
  return std::visit(Writer{}, model);
}

// ---------------------------------------------------------------------------
// NNF text

namespace detail {

class LineScanner {
 public:
  LineScanner(std::string_view line, std::size_t number) : line_(line), number_(number) {}

  bool at_end() {
    skip();
    return at_ >= line_.size();
  }

  std::string_view token() {
    skip();
    const std::size_t start = at_;
    while (at_ < line_.size() && !std::isspace(static_cast<unsigned char>(line_[at_]))) ++at_;
    last_ = start;
    if (start == at_) fail("unexpected end of line");
    return line_.substr(start, at_ - start);
  }

  long long number() {
    const std::string_view t = token();
    long long v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size()) fail("expected an integer, got '" + std::string(t) + "'");
    return v;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, number_, last_ + 1); }

  void expect_end() {
    if (!at_end()) {
      last_ = at_;
      fail("trailing tokens");
    }
  }

 private:
  void skip() {
    while (at_ < line_.size() && std::isspace(static_cast<unsigned char>(line_[at_]))) ++at_;
    last_ = at_;
  }

  std::string_view line_;
  std::size_t number_;
  std::size_t at_ = 0;
  std::size_t last_ = 0;
};

// Splits text into lines, dropping a trailing '\r'.
inline std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    if (end == text.size()) break;
    start = end + 1;
  }
  return out;
}

inline bool blank_or_comment(std::string_view line) {
  for (char c : line) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    return c == 'c';
  }
  return true;
}

}  // namespace detail

/// c2d-style NNF: "nnf V E N" header then one node per line, "L lit",
/// "A k c1..ck", "O j k c1..ck" (j = decision variable or 0). "A 0" is true
/// and "O 0 0" is false. Lines starting with 'c' are comments.
inline DdnnfCircuit parse_nnf(std::string_view text) {
  const auto lines = detail::lines_of(text);
  std::vector<DdnnfCircuit::Node> nodes;
  long long declared_nodes = -1, declared_edges = 0, declared_vars = 0;
  std::size_t edges = 0, header_line = 0;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    if (detail::blank_or_comment(lines[li])) continue;
    detail::LineScanner sc(lines[li], li + 1);
    const std::string_view tag = sc.token();
    if (declared_nodes < 0) {
      if (tag != "nnf") sc.fail("expected header 'nnf V E N'");
      declared_nodes = sc.number();
      declared_edges = sc.number();
      declared_vars = sc.number();
      if (declared_nodes < 1 || declared_edges < 0 || declared_vars < 0) sc.fail("header counts out of range");
      sc.expect_end();
      header_line = li + 1;
      continue;
    }
    if (tag == "L") {
      const long long lit = sc.number();
      if (lit == 0 || std::llabs(lit) > declared_vars) sc.fail("literal out of range");
      nodes.push_back(DdnnfCircuit::literal_node(static_cast<int>(lit)));
    } else if (tag == "A" || tag == "O") {
      long long decision = 0;
      if (tag == "O") {
        decision = sc.number();
        if (decision < 0 || decision > declared_vars) sc.fail("decision variable out of range");
      }
      const long long k = sc.number();
      if (k < 0) sc.fail("negative child count");
      std::vector<std::uint32_t> ch;
      for (long long c = 0; c < k; ++c) {
        const long long idx = sc.number();
        if (idx < 0 || static_cast<std::size_t>(idx) >= nodes.size())
          sc.fail("child " + std::to_string(idx) + " does not refer to an earlier node");
        ch.push_back(static_cast<std::uint32_t>(idx));
      }
      edges += ch.size();
      if (tag == "A" && ch.empty())
        nodes.push_back(DdnnfCircuit::constant_node(true));
      else if (tag == "O" && ch.empty())
        nodes.push_back(DdnnfCircuit::constant_node(false));
      else if (tag == "A")
        nodes.push_back(DdnnfCircuit::and_node(std::move(ch)));
      else
        nodes.push_back(DdnnfCircuit::or_node(std::move(ch), static_cast<int>(decision)));
    } else {
      sc.fail("unknown node kind '" + std::string(tag) + "'");
    }
    sc.expect_end();
  }
  if (declared_nodes < 0) throw ParseError("missing 'nnf' header", 1, 1);
  if (nodes.size() != static_cast<std::size_t>(declared_nodes))
    throw ParseError("header declares " + std::to_string(declared_nodes) + " nodes, found " +
                         std::to_string(nodes.size()),
                     header_line, 1);
  if (edges != static_cast<std::size_t>(declared_edges))
    throw ParseError("header declares " + std::to_string(declared_edges) + " edges, found " +
                         std::to_string(edges),
                     header_line, 1);
  return DdnnfCircuit(static_cast<std::size_t>(declared_vars), std::move(nodes));
}

inline std::string write_nnf(const DdnnfCircuit& c) {
  std::size_t edges = 0;
  for (const auto& node : c.nodes()) edges += node.children.size();
  std::ostringstream out;
  out << "nnf " << c.size() << ' ' << edges << ' ' << c.feature_count() << '\n';
  for (const auto& node : c.nodes()) {
    switch (node.kind) {
      case DdnnfCircuit::Kind::kLiteral:
        out << "L " << node.literal;
        break;
      case DdnnfCircuit::Kind::kConstant:
        out << (node.literal ? "A 0" : "O 0 0");
        break;
      case DdnnfCircuit::Kind::kAnd:
        out << "A " << node.children.size();
        break;
      case DdnnfCircuit::Kind::kOr:
        out << "O " << node.decision_var << ' ' << node.children.size();
        break;
    }
    for (auto ch : node.children) out << ' ' << ch;
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// PP2CNF text

/// "p pp2cnf m n" header then one 1-based "i j" pair per line for the clause
/// (U_i or V_j). Lines starting with 'c' are comments.
inline Pp2Cnf parse_pp2cnf(std::string_view text) {
  const auto lines = detail::lines_of(text);
  long long m = -1, n = -1;
  std::size_t header_line = 0;
  std::vector<std::pair<std::size_t, std::size_t>> clauses;
  std::vector<std::size_t> clause_lines;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    if (detail::blank_or_comment(lines[li])) continue;
    detail::LineScanner sc(lines[li], li + 1);
    if (m < 0) {
      if (sc.token() != "p") sc.fail("expected header 'p pp2cnf m n'");
      if (sc.token() != "pp2cnf") sc.fail("expected format name 'pp2cnf'");
      m = sc.number();
      n = sc.number();
      if (m < 0 || n < 0) sc.fail("negative dimension");
      sc.expect_end();
      header_line = li + 1;
      continue;
    }
    const long long i = sc.number();
    if (i < 1 || i > m) sc.fail("row index out of range 1.." + std::to_string(m));
    const long long j = sc.number();
    if (j < 1 || j > n) sc.fail("column index out of range 1.." + std::to_string(n));
    sc.expect_end();
    clauses.emplace_back(static_cast<std::size_t>(i - 1), static_cast<std::size_t>(j - 1));
    clause_lines.push_back(li + 1);
  }
  if (m < 0) throw ParseError("missing 'p pp2cnf' header", 1, 1);
  (void)header_line;
  for (std::size_t a = 0; a < clauses.size(); ++a)
    for (std::size_t b = 0; b < a; ++b)
      if (clauses[a] == clauses[b]) throw ParseError("duplicate clause", clause_lines[a], 1);
  return Pp2Cnf(static_cast<std::size_t>(m), static_cast<std::size_t>(n), std::move(clauses));
}

inline std::string write_pp2cnf(const Pp2Cnf& f) {
  std::ostringstream out;
  out << "p pp2cnf " << f.m << ' ' << f.n << '\n';
  for (const auto& [i, j] : f.clauses) out << i + 1 << ' ' << j + 1 << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Distributions

/// Array of per-feature probability arrays indexed by value, or
/// {"type": "ind", "probs": [...]}.
inline ProductDistribution product_from_json(const Json& j) {
  const Json* probs = &j;
  if (j.is_object()) probs = &detail::array_field(j, "probs", "distribution");
  if (!probs->is_array()) detail::schema("distribution", "expected an array of probability arrays");
  std::vector<std::vector<Rational>> out;
  for (std::size_t i = 0; i < probs->size(); ++i)
    out.push_back(detail::rationals((*probs)[i], detail::pos("distribution", i)));
  try {
    return ProductDistribution(std::move(out));
  } catch (const Error& e) {
    detail::schema("distribution", e.what());
  }
}

inline Json product_to_json(const ProductDistribution& d) {
  Json out = Json::array();
  for (std::size_t i = 0; i < d.feature_count(); ++i) out.push_back(detail::rationals_to_json(d.feature(i)));
  return out;
}

/// {"prior": p, "cond1": [...], "cond0": [...]}; any entry may be {"log": x}.
inline NaiveBayesNet nbn_from_json(const Json& j) {
  const std::string where = "nbn";
  const Real prior = log_probability_from_json(detail::field(j, "prior", where), "nbn.prior");
  auto logs = [&](const char* key) {
    const Json& a = detail::array_field(j, key, where);
    std::vector<Real> out;
    for (std::size_t i = 0; i < a.size(); ++i)
      out.push_back(log_probability_from_json(a[i], detail::pos(std::string("nbn.") + key, i)));
    return out;
  };
  try {
    return NaiveBayesNet(prior, logs("cond1"), logs("cond0"));
  } catch (const PreconditionError& e) {
    detail::schema(where, e.what());
  }
}

inline Json nbn_to_json(const NaiveBayesNet& nbn) {
  auto logs = [](const std::vector<Real>& v) {
    Json out = Json::array();
    for (Real l : v) out.push_back({{"log", real_to_json(l)}});
    return out;
  };
  return {{"prior", {{"log", real_to_json(nbn.log_prior())}}},
          {"cond1", logs(nbn.log_cond1())},
          {"cond0", logs(nbn.log_cond0())}};
}

// ---------------------------------------------------------------------------
// CSV datasets

/// Header of feature names, one 0/1 row per line. A column named "count" or
/// "#" holds positive row multiplicities.
inline EmpiricalDataset parse_csv(std::string_view text) {
  const auto lines = detail::lines_of(text);
  std::vector<std::string> names;
  std::optional<std::size_t> count_col;
  std::vector<Instance> rows;
  std::vector<long> counts;
  bool header = false;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const std::string_view line = lines[li];
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    std::vector<std::pair<std::string, std::size_t>> cells;  // text, column
    std::size_t start = 0;
    while (true) {
      std::size_t end = line.find(',', start);
      if (end == std::string_view::npos) end = line.size();
      std::string_view cell = line.substr(start, end - start);
      std::size_t lead = 0;
      while (lead < cell.size() && std::isspace(static_cast<unsigned char>(cell[lead]))) ++lead;
      cell.remove_prefix(lead);
      while (!cell.empty() && std::isspace(static_cast<unsigned char>(cell.back()))) cell.remove_suffix(1);
      cells.emplace_back(std::string(cell), start + lead + 1);
      if (end == line.size()) break;
      start = end + 1;
    }
    if (!header) {
      header = true;
      for (std::size_t c = 0; c < cells.size(); ++c) {
        std::string lower = cells[c].first;
        for (char& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        if (lower == "count" || lower == "#") {
          if (count_col) throw ParseError("more than one count column", li + 1, cells[c].second);
          count_col = c;
        } else {
          if (cells[c].first.empty()) throw ParseError("empty column name", li + 1, cells[c].second);
          names.push_back(cells[c].first);
        }
      }
      if (names.empty()) throw ParseError("no feature columns", li + 1, 1);
      continue;
    }
    const std::size_t width = names.size() + (count_col ? 1 : 0);
    if (cells.size() != width)
      throw ParseError("expected " + std::to_string(width) + " fields, found " + std::to_string(cells.size()),
                       li + 1, cells.back().second);
    Instance row;
    long count = 1;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto& [cell, col] = cells[c];
      if (count_col && c == *count_col) {
        auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), count);
        if (ec != std::errc() || ptr != cell.data() + cell.size() || count < 1)
          throw ParseError("count must be a positive integer, got '" + cell + "'", li + 1, col);
        continue;
      }
      if (cell != "0" && cell != "1") throw ParseError("expected 0 or 1, got '" + cell + "'", li + 1, col);
      row.push_back(cell == "1" ? 1 : 0);
    }
    rows.push_back(std::move(row));
    counts.push_back(count);
  }
  if (!header) throw ParseError("missing header row", 1, 1);
  if (rows.empty()) throw ParseError("dataset has no rows", lines.size(), 1);
  return EmpiricalDataset(std::move(rows), std::move(counts), std::move(names));
}

inline std::string write_csv(const EmpiricalDataset& data) {
  std::ostringstream out;
  for (const auto& name : data.names()) out << name << ',';
  out << "count\n";
  for (std::size_t r = 0; r < data.row_count(); ++r) {
    for (int v : data.row(r)) out << v << ',';
    out << data.count(r) << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Instances and reports

/// "1,0,1" or "101" into an instance.
inline Instance parse_instance(std::string_view text) {
  Instance out;
  const bool commas = text.find(',') != std::string_view::npos;
  std::size_t col = 0;
  auto bad = [&](const std::string& what) -> ParseError { return ParseError(what, 1, col + 1); };
  if (!commas) {
    for (; col < text.size(); ++col) {
      const char c = text[col];
      if (std::isspace(static_cast<unsigned char>(c))) continue;
      if (!std::isdigit(static_cast<unsigned char>(c))) throw bad("expected a digit");
      out.push_back(c - '0');
    }
    if (out.empty()) throw bad("empty instance");
    return out;
  }
  std::size_t start = 0;
  while (true) {
    std::size_t end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view cell = text.substr(start, end - start);
    while (!cell.empty() && cell.front() == ' ') {
      cell.remove_prefix(1);
      ++start;
    }
    while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
    col = start;
    int v = 0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || v < 0)
      throw bad("expected a non-negative integer");
    out.push_back(v);
    if (end == text.size()) break;
    start = end + 1;
  }
  return out;
}

template <class T>
Json report_to_json(const ShapReport<T>& r, const std::vector<std::string>& names = {}, unsigned precision = 6) {
  Json scores = Json::array();
  T sum = 0;
  for (std::size_t i = 0; i < r.scores.size(); ++i) {
    sum += r.scores[i];
    scores.push_back({{"feature", i},
                      {"name", i < names.size() ? names[i] : "X" + std::to_string(i + 1)},
                      {"value", value_to_json(r.scores[i])},
                      {"decimal", to_decimal(r.scores[i], precision)}});
  }
  return {{"path", r.path},
          {"oracle_calls", r.oracle_calls},
          {"instance", r.instance},
          {"prediction", value_to_json(r.prediction)},
          {"expectation", value_to_json(r.expectation)},
          {"scores", scores},
          {"sum", value_to_json(sum)},
          {"sum_rule", sum_rule_holds(r)},
          {"notes", r.notes}};
}

template <class T>
std::string report_to_table(const ShapReport<T>& r, const std::vector<std::string>& names = {},
                            unsigned precision = 6) {
  std::ostringstream out;
  out << "path: " << r.path << "  oracle calls: " << r.oracle_calls << '\n';
  out << "instance:";
  for (int v : r.instance) out << ' ' << v;
  out << '\n';
  auto exact = [](const T& v) {
    if constexpr (is_exact_v<T>)
      return to_string(v);
    else
      return std::string("-");
  };
  std::size_t width = 7;
  for (std::size_t i = 0; i < r.scores.size(); ++i)
    width = std::max(width, (i < names.size() ? names[i] : "X" + std::to_string(i + 1)).size());
  out << std::left;
  out << std::setw(static_cast<int>(width)) << "feature" << "  " << std::setw(static_cast<int>(precision) + 8)
      << "decimal" << "  exact\n";
  T sum = 0;
  for (std::size_t i = 0; i < r.scores.size(); ++i) {
    sum += r.scores[i];
    const std::string name = i < names.size() ? names[i] : "X" + std::to_string(i + 1);
    out << std::setw(static_cast<int>(width)) << name << "  " << std::setw(static_cast<int>(precision) + 8)
        << to_decimal(r.scores[i], precision) << "  " << exact(r.scores[i]) << '\n';
  }
  out << "F(x) = " << to_decimal(r.prediction, precision) << "  E[F] = " << to_decimal(r.expectation, precision)
      << "  sum = " << to_decimal(sum, precision) << (sum_rule_holds(r) ? "  (sum rule ok)" : "  (SUM RULE FAILS)")
      << '\n';
  for (const auto& note : r.notes) out << "note: " << note << '\n';
  return out.str();
}

inline Json findings_to_json(const std::vector<AuditFinding>& findings) {
  Json out = Json::array();
  for (const auto& f : findings) {
    Json item{{"tree", f.tree_id}, {"instance", f.instance}, {"subset", f.subset},
              {"correct", rational_to_json(f.correct)}};
    if (f.error.empty()) {
      item["expvalue"] = rational_to_json(f.expvalue);
      item["discrepancy"] = rational_to_json(f.discrepancy);
    } else {
      item["error"] = f.error;
    }
    out.push_back(item);
  }
  return out;
}

inline std::string findings_to_table(const std::vector<AuditFinding>& findings,
                                     const std::vector<std::string>& names = {}) {
  std::ostringstream out;
  out << std::left << std::setw(6) << "tree" << std::setw(12) << "x" << std::setw(18) << "S" << std::setw(12)
      << "expvalue" << std::setw(12) << "correct" << "|diff|\n";
  for (const auto& f : findings) {
    std::string x = "(";
    for (std::size_t i = 0; i < f.instance.size(); ++i) x += (i ? "," : "") + std::to_string(f.instance[i]);
    x += ")";
    std::string s = "{";
    for (std::size_t k = 0; k < f.subset.size(); ++k) {
      const std::size_t i = f.subset[k];
      s += (k ? "," : "") + (i < names.size() ? names[i] : "X" + std::to_string(i + 1));
    }
    s += "}";
    out << std::setw(6) << f.tree_id << std::setw(12) << x << std::setw(18) << s;
    if (f.error.empty())
      out << std::setw(12) << to_string(f.expvalue) << std::setw(12) << to_string(f.correct)
          << to_string(f.discrepancy) << '\n';
    else
      out << std::setw(12) << "error" << std::setw(12) << to_string(f.correct) << f.error << '\n';
  }
  out << findings.size() << (findings.size() == 1 ? " finding\n" : " findings\n");
  return out.str();
}

}  // namespace shapx::io
