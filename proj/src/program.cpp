#include "gem/program.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "gem/error.hpp"
#include "gem/reader.hpp"

namespace gem {

const char* code_token(ErrorCode code) {
  switch (code) {
    case ErrorCode::Syntax: return "E_SYNTAX";
    case ErrorCode::Usage: return "E_USAGE";
    case ErrorCode::Io: return "E_IO";
    case ErrorCode::InvalidProgram: return "E_INVALID_PROGRAM";
    case ErrorCode::UnknownSwitch: return "E_UNKNOWN_SWITCH";
    case ErrorCode::NonGround: return "E_NON_GROUND";
    case ErrorCode::Instantiation: return "E_INSTANTIATION";
    case ErrorCode::Type: return "E_TYPE";
    case ErrorCode::DepthExceeded: return "E_DEPTH";
    case ErrorCode::EnumerationCap: return "E_ENUM_CAP";
    case ErrorCode::AcyclicSupport: return "E_CYCLE";
    case ErrorCode::ZeroProbability: return "E_ZERO_PROB";
    case ErrorCode::NumericDegeneracy: return "E_NUMERIC";
    case ErrorCode::EmptySupport: return "E_EMPTY_SUPPORT";
    case ErrorCode::UniquenessViolation: return "E_UNIQUENESS";
    case ErrorCode::InvalidModel: return "E_INVALID_MODEL";
  }
  return "E_UNKNOWN";
}

PredicateKey predicate_of(const Term& goal) {
  if (!goal.is_compound())
    throw Error(ErrorCode::Type, "not a callable term: " + to_string(goal));
  return PredicateKey{goal.functor(), goal.arity()};
}

bool is_builtin(const PredicateKey& key) {
  static const std::set<std::pair<std::string, size_t>> builtins = {
      {"is", 2}, {"<", 2}, {">", 2}, {"=<", 2}, {">=", 2}, {"=:=", 2}, {"=\\=", 2},
      {"=", 2},  {"\\=", 2}, {"between", 3}, {"length", 2}};
  return builtins.contains({key.name.str(), key.arity});
}

LiteralKind classify_goal(const Term& goal) {
  if (goal.is_compound()) {
    const std::string& f = goal.functor().str();
    if ((f == "," || f == ";") && goal.arity() == 2) return LiteralKind::Control;
    if (f == "true" && goal.arity() == 0) return LiteralKind::Control;
    if (f == "msw" && goal.arity() == 3) return LiteralKind::Msw;
    if (is_builtin(predicate_of(goal))) return LiteralKind::Builtin;
  }
  return LiteralKind::User;
}

Clause fresh_rename(const Clause& c, ScopeCounter& counter) {
  uint32_t scope = counter.next();
  Clause out;
  out.head = rename(c.head, scope);
  out.body.reserve(c.body.size());
  for (const auto& lit : c.body) out.body.push_back({lit.kind, rename(lit.term, scope)});
  return out;
}

std::optional<size_t> SwitchDeclaration::value_index(const Term& v) const {
  for (size_t i = 0; i < values.size(); ++i)
    if (values[i] == v) return i;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// ParameterStore

ParameterStore::ParameterStore(std::vector<SwitchDeclaration> decls) : decls_(std::move(decls)) {
  defaults_.reserve(decls_.size());
  for (const auto& d : decls_) {
    std::vector<double> row(d.values.size(), d.values.empty() ? 0.0 : 1.0 / static_cast<double>(d.values.size()));
    defaults_.push_back(std::move(row));
  }
}

std::optional<size_t> ParameterStore::match(const Term& name) const {
  for (size_t i = 0; i < decls_.size(); ++i) {
    const Term& pat = decls_[i].pattern;
    if (pat.is_ground()) {
      if (pat == name) return i;
      continue;
    }
    if (pat.is_compound() && name.is_compound() &&
        (pat.functor() != name.functor() || pat.arity() != name.arity()))
      continue;
    Substitution s;
    if (unify_in_place(pat, name, s)) return i;
  }
  return std::nullopt;
}

size_t ParameterStore::require_match(const Term& name) const {
  auto m = match(name);
  if (!m) throw Error(ErrorCode::UnknownSwitch, "no values declaration matches switch " + to_string(name));
  return *m;
}

std::span<const Term> ParameterStore::values(const Term& name) const {
  return decls_[require_match(name)].values;
}

std::vector<double> ParameterStore::row(const Term& name) const {
  auto it = rows_.find(name);
  if (it != rows_.end()) return it->second;
  return defaults_[require_match(name)];
}

double ParameterStore::prob(const Term& name, const Term& value) const {
  size_t d = require_match(name);
  auto idx = decls_[d].value_index(value);
  if (!idx)
    throw Error(ErrorCode::UnknownSwitch,
                "value " + to_string(value) + " is not declared for switch " + to_string(name));
  auto it = rows_.find(name);
  if (it != rows_.end()) return it->second[*idx];
  return defaults_[d][*idx];
}

void ParameterStore::set_row(const Term& name, std::vector<double> probs) {
  if (!name.is_ground()) throw Error(ErrorCode::NonGround, "switch name must be ground: " + to_string(name));
  size_t d = require_match(name);
  if (probs.size() != decls_[d].values.size())
    throw Error(ErrorCode::InvalidProgram, "parameter row for " + to_string(name) + " has " +
                                               std::to_string(probs.size()) + " entries, expected " +
                                               std::to_string(decls_[d].values.size()));
  rows_.insert_or_assign(name, std::move(probs));
}

void ParameterStore::set_prob(const Term& name, const Term& value, double p) {
  std::vector<double> r = row(name);
  size_t d = require_match(name);
  auto idx = decls_[d].value_index(value);
  if (!idx)
    throw Error(ErrorCode::UnknownSwitch,
                "value " + to_string(value) + " is not declared for switch " + to_string(name));
  r[*idx] = p;
  set_row(name, std::move(r));
}

void ParameterStore::set_default(size_t decl, std::vector<double> probs) {
  if (probs.size() != decls_.at(decl).values.size())
    throw Error(ErrorCode::InvalidProgram, "default row size mismatch for " + to_string(decls_[decl].pattern));
  defaults_[decl] = std::move(probs);
}

std::vector<std::pair<Term, std::vector<double>>> ParameterStore::snapshot() const {
  std::map<Term, std::vector<double>, TermLess> all = rows_;
  for (size_t i = 0; i < decls_.size(); ++i)
    if (decls_[i].pattern.is_ground() && !all.contains(decls_[i].pattern))
      all.emplace(decls_[i].pattern, defaults_[i]);
  return {all.begin(), all.end()};
}

namespace {

void check_row(const std::string& what, const std::vector<double>& row, double tol,
               std::vector<std::string>& out) {
  double sum = 0.0;
  for (double p : row) {
    if (!(p >= 0.0 && p <= 1.0)) {
      out.push_back("parameter of " + what + " outside [0,1]: " + std::to_string(p));
      return;
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > tol) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", sum);
    out.push_back("parameters of " + what + " sum to " + buf + ", not 1");
  }
}

}  // namespace

std::vector<std::string> ParameterStore::normalization_errors(double tol) const {
  std::vector<std::string> out;
  for (size_t i = 0; i < decls_.size(); ++i)
    if (!rows_.contains(decls_[i].pattern)) check_row("switch " + to_string(decls_[i].pattern), defaults_[i], tol, out);
  for (const auto& [name, row] : rows_) check_row("switch " + to_string(name), row, tol, out);
  return out;
}

// ---------------------------------------------------------------------------
// Program

void Program::reindex() {
  index_.clear();
  for (size_t i = 0; i < rules.size(); ++i) index_[predicate_of(rules[i].head)].push_back(i);
}

std::span<const size_t> Program::clauses_for(const PredicateKey& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) return {};
  return it->second;
}

namespace {

void flatten_body(const Term& t, std::vector<BodyLiteral>& out, int line) {
  if (t.is_var())
    throw Error(ErrorCode::InvalidProgram,
                "line " + std::to_string(line) + ": variable goals are not supported: " + to_string(t));
  if (t.is_int())
    throw Error(ErrorCode::InvalidProgram, "line " + std::to_string(line) + ": integer is not a goal");
  if (t.has_functor(",", 2)) {
    flatten_body(t.arg(0), out, line);
    flatten_body(t.arg(1), out, line);
    return;
  }
  out.push_back({classify_goal(t), t});
}

void add_table_spec(const Term& spec, Program& p, int line) {
  if (spec.has_functor(",", 2)) {
    add_table_spec(spec.arg(0), p, line);
    add_table_spec(spec.arg(1), p, line);
    return;
  }
  if (!spec.has_functor("/", 2) || !spec.arg(0).is_constant() || !spec.arg(1).is_int() ||
      spec.arg(1).int_value() < 0)
    throw Error(ErrorCode::Syntax,
                "line " + std::to_string(line) + ": table directive expects name/arity, got " + to_string(spec));
  p.table_preds.insert(PredicateKey{spec.arg(0).functor(), static_cast<size_t>(spec.arg(1).int_value())});
}

std::vector<Term> list_items(const Term& list, int line) {
  std::vector<Term> out;
  Term cur = list;
  while (cur.is_cons()) {
    out.push_back(cur.arg(0));
    cur = cur.arg(1);
  }
  if (!cur.is_nil())
    throw Error(ErrorCode::Syntax, "line " + std::to_string(line) + ": expected a proper list, got " + to_string(list));
  return out;
}

bool patterns_overlap(const Term& a, const Term& b) {
  // patterns from different declarations share variable names only by accident
  Term rb = rename(b, 0xFFFFFFFFu);
  Substitution s;
  return unify_in_place(a, rb, s);
}

}  // namespace

Program parse_program(std::string_view text) {
  Program p;
  TermReader reader(text);
  while (auto t = reader.next_clause()) {
    int line = reader.clause_line();
    if (t->has_functor(":-", 1)) {
      const Term& d = t->arg(0);
      if (d.has_functor("table", 1)) {
        add_table_spec(d.arg(0), p, line);
        continue;
      }
      throw Error(ErrorCode::Syntax, "line " + std::to_string(line) + ": unknown directive " + to_string(d));
    }
    if (t->has_functor("values", 2)) {
      SwitchDeclaration decl{t->arg(0), list_items(t->arg(1), line)};
      if (decl.values.empty())
        throw Error(ErrorCode::InvalidProgram,
                    "line " + std::to_string(line) + ": empty value set for " + to_string(decl.pattern));
      for (size_t i = 0; i < decl.values.size(); ++i) {
        if (!decl.values[i].is_ground())
          throw Error(ErrorCode::InvalidProgram,
                      "line " + std::to_string(line) + ": switch values must be ground: " + to_string(decl.values[i]));
        for (size_t j = 0; j < i; ++j)
          if (decl.values[j] == decl.values[i])
            throw Error(ErrorCode::InvalidProgram, "line " + std::to_string(line) + ": duplicate value " +
                                                       to_string(decl.values[i]) + " for " + to_string(decl.pattern));
      }
      for (const auto& other : p.switch_decls)
        if (patterns_overlap(other.pattern, decl.pattern))
          throw Error(ErrorCode::InvalidProgram, "line " + std::to_string(line) +
                                                     ": duplicate values declaration: " + to_string(decl.pattern) +
                                                     " overlaps " + to_string(other.pattern));
      p.switch_decls.push_back(std::move(decl));
      continue;
    }
    Clause c;
    if (t->has_functor(":-", 2)) {
      c.head = t->arg(0);
      flatten_body(t->arg(1), c.body, line);
    } else {
      c.head = *t;
    }
    if (!c.head.is_compound())
      throw Error(ErrorCode::InvalidProgram, "line " + std::to_string(line) + ": clause head is not callable: " +
                                                 to_string(c.head));
    LiteralKind hk = classify_goal(c.head);
    if (hk == LiteralKind::Msw)
      throw Error(ErrorCode::InvalidProgram,
                  "line " + std::to_string(line) + ": clause head named msw: " + to_string(c.head));
    if (hk != LiteralKind::User)
      throw Error(ErrorCode::InvalidProgram,
                  "line " + std::to_string(line) + ": clause head redefines a built-in: " + to_string(c.head));
    p.rules.push_back(std::move(c));
  }
  p.params = ParameterStore(p.switch_decls);
  p.reindex();
  return p;
}

std::string print_program(const Program& p) {
  std::ostringstream out;
  for (const auto& d : p.switch_decls) out << "values(" << to_string(d.pattern) << ", " << to_string(Term::list(d.values)) << ").\n";
  if (!p.table_preds.empty()) {
    out << ":- table ";
    bool first = true;
    for (const auto& k : p.table_preds) {
      if (!first) out << ", ";
      first = false;
      out << to_string(Term::constant(k.name)) << "/" << k.arity;
    }
    out << ".\n";
  }
  for (const auto& c : p.rules) {
    out << to_string(c.head);
    if (!c.body.empty()) {
      out << " :-";
      for (size_t i = 0; i < c.body.size(); ++i) {
        out << (i ? ",\n    " : "\n    ");
        const Term& g = c.body[i].term;
        bool paren = g.has_functor(";", 2) || g.has_functor(",", 2);
        out << (paren ? "(" : "") << to_string(g) << (paren ? ")" : "");
      }
    }
    out << ".\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Validation

bool Report::ok() const {
  for (const auto& d : items)
    if (d.severity == Severity::Error) return false;
  return true;
}

bool Report::has(std::string_view code) const {
  for (const auto& d : items)
    if (d.code == code) return true;
  return false;
}

std::string Report::str() const {
  std::string out;
  for (const auto& d : items)
    out += std::string(d.severity == Severity::Error ? "error " : "warning ") + d.code + ": " + d.message + "\n";
  return out;
}

namespace {

void check_goal_term(const Program& p, const Term& g, const Term& head, Report& r, std::set<std::string>& seen) {
  if (g.is_var() || g.is_int()) return;
  switch (classify_goal(g)) {
    case LiteralKind::Control:
      for (const auto& a : g.args()) check_goal_term(p, a, head, r, seen);
      return;
    case LiteralKind::Builtin:
      return;
    case LiteralKind::Msw: {
      const Term& name = g.arg(0);
      bool ok = false;
      if (name.is_ground()) {
        ok = p.params.match(name).has_value();
      } else {
        for (const auto& d : p.switch_decls)
          if (patterns_overlap(d.pattern, name)) ok = true;
      }
      if (!ok && seen.insert("sw:" + to_string(name)).second)
        r.items.push_back({Severity::Error, "unmatched_switch",
                           "switch " + to_string(name) + " in clause for " + to_string(head) +
                               " matches no values declaration"});
      return;
    }
    case LiteralKind::User: {
      PredicateKey k = predicate_of(g);
      if (!p.defines(k) && seen.insert("pred:" + k.str()).second)
        r.items.push_back({Severity::Error, "undefined_predicate",
                           "predicate " + k.str() + " is called but not defined"});
      return;
    }
  }
}

}  // namespace

Report validate(const Program& p) {
  Report r;
  std::set<std::string> seen;
  for (const auto& c : p.rules)
    for (const auto& lit : c.body) check_goal_term(p, lit.term, c.head, r, seen);
  for (size_t i = 0; i < p.switch_decls.size(); ++i)
    for (size_t j = 0; j < i; ++j)
      if (patterns_overlap(p.switch_decls[i].pattern, p.switch_decls[j].pattern))
        r.items.push_back({Severity::Error, "overlapping_declarations",
                           to_string(p.switch_decls[i].pattern) + " overlaps " + to_string(p.switch_decls[j].pattern)});
  for (const auto& msg : p.params.normalization_errors()) r.items.push_back({Severity::Error, "not_normalized", msg});
  for (const auto& k : p.table_preds)
    if (!p.defines(k))
      r.items.push_back({Severity::Error, "undefined_table_predicate", "table predicate " + k.str() + " has no clauses"});
  return r;
}

ParameterStore init_parameters(const Program& p, InitMode mode, uint64_t seed) {
  ParameterStore store(p.switch_decls);
  std::mt19937_64 rng(seed);
  for (size_t i = 0; i < p.switch_decls.size(); ++i) {
    size_t k = p.switch_decls[i].values.size();
    if (k == 0) throw Error(ErrorCode::InvalidProgram, "empty value set for " + to_string(p.switch_decls[i].pattern));
    std::vector<double> row(k);
    if (mode == InitMode::Uniform) {
      for (auto& x : row) x = 1.0 / static_cast<double>(k);
    } else {
      double sum = 0.0;
      for (auto& x : row) {
        x = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
        sum += x;
      }
      for (auto& x : row) x /= sum;
    }
    double rest = 0.0;
    for (size_t j = 0; j + 1 < k; ++j) rest += row[j];
    row[k - 1] = 1.0 - rest;
    store.set_default(i, std::move(row));
  }
  return store;
}

// ---------------------------------------------------------------------------
// Parameter and observation files

namespace {

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> lines_of(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in{std::string(text)};
  while (std::getline(in, cur)) out.push_back(cur);
  return out;
}

}  // namespace

ParameterStore parse_parameters(std::string_view text, const std::vector<SwitchDeclaration>& decls) {
  ParameterStore store(decls);
  std::map<Term, std::vector<std::optional<double>>, TermLess> pending;
  auto lines = lines_of(text);
  for (size_t ln = 0; ln < lines.size(); ++ln) {
    std::string line = trim(lines[ln]);
    if (line.empty() || line[0] == '%') continue;
    auto where = "parameter file line " + std::to_string(ln + 1);
    if (line.rfind("param", 0) != 0 || line.size() < 6 || !std::isspace(static_cast<unsigned char>(line[5])))
      throw Error(ErrorCode::Syntax, where + ": expected 'param <switch> <value> <probability>'");
    size_t last_space = line.find_last_of(" \t");
    std::string prob_text = line.substr(last_space + 1);
    std::string middle = line.substr(5, last_space - 5);
    double prob = 0.0;
    auto [ptr, ec] = std::from_chars(prob_text.data(), prob_text.data() + prob_text.size(), prob);
    if (ec != std::errc() || ptr != prob_text.data() + prob_text.size())
      throw Error(ErrorCode::Syntax, where + ": bad probability '" + prob_text + "'");
    middle += " .";
    TermReader reader(middle);
    Term name = reader.read_term();
    Term value = reader.read_term();
    if (!name.is_ground() || !value.is_ground())
      throw Error(ErrorCode::NonGround, where + ": switch name and value must be ground");
    size_t d = store.require_match(name);
    auto idx = decls[d].value_index(value);
    if (!idx)
      throw Error(ErrorCode::UnknownSwitch, where + ": value " + to_string(value) + " not declared for " + to_string(name));
    auto& row = pending[name];
    row.resize(decls[d].values.size());
    row[*idx] = prob;
  }
  for (auto& [name, row] : pending) {
    std::vector<double> probs(row.size());
    double rest = 0.0;
    for (size_t j = 0; j + 1 < row.size(); ++j) {
      if (!row[j])
        throw Error(ErrorCode::InvalidProgram, "parameter file: missing value " +
                                                   to_string(decls[store.require_match(name)].values[j]) + " for " +
                                                   to_string(name));
      probs[j] = *row[j];
      rest += probs[j];
    }
    probs.back() = 1.0 - rest;
    if (row.back() && std::abs(*row.back() - probs.back()) > 1e-6)
      throw Error(ErrorCode::InvalidProgram, "parameter file: row for " + to_string(name) + " does not sum to 1");
    store.set_row(name, std::move(probs));
  }
  return store;
}

std::string print_parameters(const ParameterStore& store) {
  std::string out;
  char buf[64];
  for (const auto& [name, row] : store.snapshot()) {
    const auto& values = store.declarations()[store.require_match(name)].values;
    for (size_t j = 0; j < row.size(); ++j) {
      std::string v = to_string(values[j]);
      if (!v.empty() && v[0] == '-') v = "(" + v + ")";
      std::snprintf(buf, sizeof buf, "%.17g", row[j]);
      out += "param " + to_string(name) + " " + v + " " + buf + "\n";
    }
  }
  return out;
}

int64_t ObservationSet::total() const {
  int64_t t = 0;
  for (const auto& o : items) t += o.count;
  return t;
}

ObservationSet parse_observations(std::string_view text) {
  ObservationSet obs;
  auto lines = lines_of(text);
  for (size_t ln = 0; ln < lines.size(); ++ln) {
    std::string line = trim(lines[ln]);
    if (line.empty() || line[0] == '%') continue;
    auto where = "observation line " + std::to_string(ln + 1);
    int64_t count = 1;
    size_t i = 0;
    bool negative = line[0] == '-' && line.size() > 1 && std::isdigit(static_cast<unsigned char>(line[1]));
    if (negative || std::isdigit(static_cast<unsigned char>(line[0]))) {
      i = negative ? 1 : 0;
      while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
      if (i == line.size() || !std::isspace(static_cast<unsigned char>(line[i])))
        throw Error(ErrorCode::Syntax, where + ": expected whitespace after count");
      count = std::stoll(line.substr(0, i));
      if (count <= 0) throw Error(ErrorCode::InvalidProgram, where + ": count must be positive");
    }
    std::string rest = trim(line.substr(i));
    if (rest.empty() || rest.back() != '.') throw Error(ErrorCode::Syntax, where + ": expected '.' at end of goal");
    Term goal;
    try {
      goal = parse_term(rest);
    } catch (const Error& e) {
      throw Error(ErrorCode::Syntax, where + ": " + e.what());
    }
    if (!goal.is_compound()) throw Error(ErrorCode::Syntax, where + ": goal is not an atom");
    if (!goal.is_ground()) throw Error(ErrorCode::NonGround, where + ": observation is not ground: " + to_string(goal));
    obs.items.push_back({goal, count});
  }
  return obs;
}

}  // namespace gem
