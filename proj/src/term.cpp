#include "gem/term.hpp"

#include <cctype>
#include <mutex>
#include <stdexcept>

namespace gem {

namespace {

// Names live in fixed chunks that never move, so lookups by id need no lock.
struct SymbolTable {
  static constexpr uint32_t kChunkBits = 12;
  static constexpr uint32_t kChunkSize = 1u << kChunkBits;
  static constexpr uint32_t kChunks = 1u << 12;

  std::mutex mu;
  std::unordered_map<std::string_view, uint32_t> ids;
  std::vector<std::unique_ptr<std::string[]>> chunks = std::vector<std::unique_ptr<std::string[]>>(kChunks);
  uint32_t count = 0;

  SymbolTable() { intern(""); }

  uint32_t intern(std::string_view text) {
    std::lock_guard lock(mu);
    auto it = ids.find(text);
    if (it != ids.end()) return it->second;
    uint32_t id = count;
    if ((id >> kChunkBits) >= kChunks) throw std::length_error("symbol table full");
    auto& chunk = chunks[id >> kChunkBits];
    if (!chunk) chunk = std::make_unique<std::string[]>(kChunkSize);
    chunk[id & (kChunkSize - 1)] = std::string(text);
    ids.emplace(chunk[id & (kChunkSize - 1)], id);
    ++count;
    return id;
  }

  const std::string& name(uint32_t id) const { return chunks[id >> kChunkBits][id & (kChunkSize - 1)]; }
};

SymbolTable& symbols() {
  static SymbolTable table;
  return table;
}

size_t mix(size_t h, size_t v) {
  return h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
}

}  // namespace

Symbol::Symbol(std::string_view text) : id_(symbols().intern(text)) {}

const std::string& Symbol::str() const { return symbols().name(id_); }

struct Term::Node {
  TermKind kind;
  bool ground;
  size_t hash;
  VarId var;
  int64_t value = 0;
  Symbol functor;
  std::vector<Term> args;
};

namespace {

const Symbol& nil_symbol() {
  static const Symbol s("[]");
  return s;
}

const Symbol& cons_symbol() {
  static const Symbol s(".");
  return s;
}

}  // namespace

Term::Term() : Term(nil()) {}

Term Term::var(Symbol name, uint32_t scope) {
  auto n = std::make_shared<Node>();
  n->kind = TermKind::Var;
  n->ground = false;
  n->var = VarId{name, scope};
  n->hash = mix(mix(1, name.id()), scope);
  return Term(std::move(n));
}

Term Term::integer(int64_t value) {
  auto n = std::make_shared<Node>();
  n->kind = TermKind::Int;
  n->ground = true;
  n->value = value;
  n->hash = mix(2, std::hash<int64_t>{}(value));
  return Term(std::move(n));
}

Term Term::compound(Symbol functor, std::vector<Term> args) {
  auto n = std::make_shared<Node>();
  n->kind = TermKind::Compound;
  n->functor = functor;
  size_t h = mix(mix(3, functor.id()), args.size());
  bool ground = true;
  for (const auto& a : args) {
    h = mix(h, a.hash());
    ground = ground && a.is_ground();
  }
  n->ground = ground;
  n->hash = h;
  n->args = std::move(args);
  return Term(std::move(n));
}

Term Term::nil() {
  static const Term t = compound(nil_symbol(), {});
  return t;
}

Term Term::cons(Term head, Term tail) {
  return compound(cons_symbol(), {std::move(head), std::move(tail)});
}

Term Term::list(std::span<const Term> items, std::optional<Term> tail) {
  Term out = tail ? *tail : nil();
  for (auto it = items.rbegin(); it != items.rend(); ++it) out = cons(*it, out);
  return out;
}

TermKind Term::kind() const { return node_->kind; }
bool Term::is_ground() const { return node_->ground; }
VarId Term::var_id() const { return node_->var; }
int64_t Term::int_value() const { return node_->value; }
Symbol Term::functor() const { return node_->functor; }
size_t Term::arity() const { return node_->args.size(); }
const Term& Term::arg(size_t i) const { return node_->args[i]; }
std::span<const Term> Term::args() const { return node_->args; }
size_t Term::hash() const { return node_->hash; }

bool Term::is_nil() const { return is_compound() && arity() == 0 && functor() == nil_symbol(); }
bool Term::is_cons() const { return is_compound() && arity() == 2 && functor() == cons_symbol(); }

bool Term::has_functor(std::string_view name, size_t n) const {
  return is_compound() && arity() == n && functor().str() == name;
}

bool operator==(const Term& a, const Term& b) {
  if (a.node_ == b.node_) return true;
  if (a.node_->hash != b.node_->hash || a.node_->kind != b.node_->kind) return false;
  switch (a.node_->kind) {
    case TermKind::Var: return a.node_->var == b.node_->var;
    case TermKind::Int: return a.node_->value == b.node_->value;
    case TermKind::Compound:
      if (a.node_->functor != b.node_->functor || a.arity() != b.arity()) return false;
      for (size_t i = 0; i < a.arity(); ++i)
        if (a.arg(i) != b.arg(i)) return false;
      return true;
  }
  return false;
}

int compare(const Term& a, const Term& b) {
  if (a.same_node(b)) return 0;
  auto rank = [](TermKind k) { return static_cast<int>(k); };
  if (a.kind() != b.kind()) return rank(a.kind()) < rank(b.kind()) ? -1 : 1;
  switch (a.kind()) {
    case TermKind::Var: {
      int c = a.var_id().name.str().compare(b.var_id().name.str());
      if (c != 0) return c < 0 ? -1 : 1;
      if (a.var_id().scope != b.var_id().scope) return a.var_id().scope < b.var_id().scope ? -1 : 1;
      return 0;
    }
    case TermKind::Int:
      if (a.int_value() == b.int_value()) return 0;
      return a.int_value() < b.int_value() ? -1 : 1;
    case TermKind::Compound: {
      if (a.arity() != b.arity()) return a.arity() < b.arity() ? -1 : 1;
      if (a.functor() != b.functor()) {
        int c = a.functor().str().compare(b.functor().str());
        return c < 0 ? -1 : 1;
      }
      for (size_t i = 0; i < a.arity(); ++i) {
        int c = compare(a.arg(i), b.arg(i));
        if (c != 0) return c;
      }
      return 0;
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Printing

namespace {

struct OpInfo {
  int priority;
  int left_max;
  int right_max;
};

std::optional<OpInfo> infix_op(const std::string& name) {
  if (name == ";") return OpInfo{1100, 1099, 1100};
  if (name == ",") return OpInfo{1000, 999, 1000};
  if (name == "is" || name == "=" || name == "\\=" || name == "<" || name == ">" ||
      name == "=<" || name == ">=" || name == "=:=" || name == "=\\=")
    return OpInfo{700, 699, 699};
  if (name == "+" || name == "-") return OpInfo{500, 500, 499};
  if (name == "*" || name == "//" || name == "/" || name == "mod") return OpInfo{400, 400, 399};
  return std::nullopt;
}

bool plain_atom(const std::string& s) {
  if (s.empty() || !std::islower(static_cast<unsigned char>(s[0]))) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

bool symbol_atom(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (std::string_view("+-*/\\^<>=~:.?@#&$").find(c) == std::string_view::npos) return false;
  return true;
}

std::string quote_atom(const std::string& s) {
  if (plain_atom(s) || s == "[]" || s == "!" || s == ";" || symbol_atom(s)) return s;
  std::string out = "'";
  for (char c : s) {
    if (c == '\'' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('\'');
  return out;
}

void print(const Term& t, int max_priority, std::string& out);

void print_args(const Term& t, std::string& out) {
  out.push_back('(');
  for (size_t i = 0; i < t.arity(); ++i) {
    if (i) out.push_back(',');
    print(t.arg(i), 999, out);
  }
  out.push_back(')');
}

void print(const Term& t, int max_priority, std::string& out) {
  switch (t.kind()) {
    case TermKind::Var:
      out += t.var_id().name.str();
      if (t.var_id().scope != 0) out += "_" + std::to_string(t.var_id().scope);
      return;
    case TermKind::Int:
      out += std::to_string(t.int_value());
      return;
    case TermKind::Compound:
      break;
  }
  if (t.is_cons()) {
    out.push_back('[');
    Term cur = t;
    bool first = true;
    while (cur.is_cons()) {
      if (!first) out.push_back(',');
      first = false;
      print(cur.arg(0), 999, out);
      cur = cur.arg(1);
    }
    if (!cur.is_nil()) {
      out.push_back('|');
      print(cur, 999, out);
    }
    out.push_back(']');
    return;
  }
  const std::string& name = t.functor().str();
  if (t.arity() == 2) {
    if (auto op = infix_op(name)) {
      bool parens = op->priority > max_priority;
      if (parens) out.push_back('(');
      print(t.arg(0), op->left_max, out);
      bool alpha = std::isalpha(static_cast<unsigned char>(name[0]));
      if (alpha || name == "-" || name == "=" || name == ";") {
        out += " " + name + " ";
      } else if (name == ",") {
        out += ", ";
      } else {
        out += name;
      }
      print(t.arg(1), op->right_max, out);
      if (parens) out.push_back(')');
      return;
    }
  }
  out += quote_atom(name);
  if (t.arity() > 0) print_args(t, out);
}

}  // namespace

std::string to_string(const Term& t) {
  std::string out;
  print(t, 1200, out);
  return out;
}

// ---------------------------------------------------------------------------
// Substitution and unification

const Term* Substitution::lookup(const VarId& v) const {
  auto it = map_.find(v.key());
  return it == map_.end() ? nullptr : &it->second.second;
}

Term Substitution::walk(const Term& t) const {
  Term cur = t;
  while (cur.is_var()) {
    const Term* next = lookup(cur.var_id());
    if (!next) break;
    cur = *next;
  }
  return cur;
}

void Substitution::bind(const VarId& v, Term t) {
  map_.insert_or_assign(v.key(), std::make_pair(v, std::move(t)));
  trail_.push_back(v.key());
}

void Substitution::undo_to(size_t mark) {
  while (trail_.size() > mark) {
    map_.erase(trail_.back());
    trail_.pop_back();
  }
}

std::vector<VarId> Substitution::domain() const {
  std::vector<VarId> out;
  out.reserve(trail_.size());
  for (uint64_t k : trail_) out.push_back(map_.at(k).first);
  return out;
}

bool occurs_in(const VarId& v, const Term& t, const Substitution& s) {
  Term w = s.walk(t);
  if (w.is_var()) return w.var_id() == v;
  if (w.is_ground() || !w.is_compound()) return false;
  for (const auto& a : w.args())
    if (occurs_in(v, a, s)) return true;
  return false;
}

namespace {

bool unify_rec(const Term& a, const Term& b, Substitution& s) {
  Term x = s.walk(a);
  Term y = s.walk(b);
  if (x.same_node(y)) return true;
  if (x.is_var()) {
    if (y.is_var() && x.var_id() == y.var_id()) return true;
    if (occurs_in(x.var_id(), y, s)) return false;
    s.bind(x.var_id(), y);
    return true;
  }
  if (y.is_var()) {
    if (occurs_in(y.var_id(), x, s)) return false;
    s.bind(y.var_id(), x);
    return true;
  }
  if (x.is_int() || y.is_int()) return x.is_int() && y.is_int() && x.int_value() == y.int_value();
  if (x.functor() != y.functor() || x.arity() != y.arity()) return false;
  if (x.is_ground() && y.is_ground()) return x == y;
  for (size_t i = 0; i < x.arity(); ++i)
    if (!unify_rec(x.arg(i), y.arg(i), s)) return false;
  return true;
}

}  // namespace

bool unify_in_place(const Term& a, const Term& b, Substitution& s) {
  size_t m = s.mark();
  if (unify_rec(a, b, s)) return true;
  s.undo_to(m);
  return false;
}

std::optional<Substitution> unify(const Term& a, const Term& b, const Substitution& s) {
  Substitution out = s;
  if (!unify_in_place(a, b, out)) return std::nullopt;
  return out;
}

Term apply(const Term& t, const Substitution& s) {
  if (t.is_ground()) return t;
  Term w = s.walk(t);
  if (w.is_var() || w.is_ground()) return w;
  std::vector<Term> args;
  args.reserve(w.arity());
  bool changed = false;
  for (const auto& a : w.args()) {
    args.push_back(apply(a, s));
    changed = changed || !args.back().same_node(a);
  }
  if (!changed) return w;
  return Term::compound(w.functor(), std::move(args));
}

void collect_vars(const Term& t, std::vector<VarId>& out) {
  if (t.is_ground()) return;
  if (t.is_var()) {
    for (const auto& v : out)
      if (v == t.var_id()) return;
    out.push_back(t.var_id());
    return;
  }
  for (const auto& a : t.args()) collect_vars(a, out);
}

Term rename(const Term& t, uint32_t scope) {
  if (t.is_ground()) return t;
  if (t.is_var()) return Term::var(t.var_id().name, scope);
  std::vector<Term> args;
  args.reserve(t.arity());
  for (const auto& a : t.args()) args.push_back(rename(a, scope));
  return Term::compound(t.functor(), std::move(args));
}

}  // namespace gem
