#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gem {

/// Interned name. Equal symbols compare by id; the table is process-wide.
class Symbol {
 public:
  Symbol() = default;
  explicit Symbol(std::string_view text);

  [[nodiscard]] const std::string& str() const;
  [[nodiscard]] uint32_t id() const { return id_; }

  friend bool operator==(Symbol a, Symbol b) { return a.id_ == b.id_; }
  friend bool operator!=(Symbol a, Symbol b) { return a.id_ != b.id_; }

 private:
  uint32_t id_ = 0;  // 0 is the empty string
};

enum class TermKind : uint8_t { Var, Int, Compound };

/// Identity of a logical variable: its source name plus the renaming scope.
struct VarId {
  Symbol name;
  uint32_t scope = 0;

  friend bool operator==(const VarId&, const VarId&) = default;
  [[nodiscard]] uint64_t key() const {
    return (static_cast<uint64_t>(name.id()) << 32) | scope;
  }
};

/// Immutable first-order term with shared structure. Copies are cheap.
class Term {
 public:
  Term();  // the constant `[]`

  static Term var(Symbol name, uint32_t scope = 0);
  static Term var(std::string_view name, uint32_t scope = 0) { return var(Symbol(name), scope); }
  static Term integer(int64_t value);
  static Term compound(Symbol functor, std::vector<Term> args);
  static Term compound(std::string_view functor, std::vector<Term> args) {
    return compound(Symbol(functor), std::move(args));
  }
  static Term constant(Symbol name) { return compound(name, {}); }
  static Term constant(std::string_view name) { return compound(Symbol(name), {}); }
  static Term nil();
  static Term cons(Term head, Term tail);
  static Term list(std::span<const Term> items, std::optional<Term> tail = std::nullopt);

  [[nodiscard]] TermKind kind() const;
  [[nodiscard]] bool is_var() const { return kind() == TermKind::Var; }
  [[nodiscard]] bool is_int() const { return kind() == TermKind::Int; }
  [[nodiscard]] bool is_compound() const { return kind() == TermKind::Compound; }
  [[nodiscard]] bool is_constant() const { return is_compound() && arity() == 0; }
  [[nodiscard]] bool is_ground() const;

  [[nodiscard]] VarId var_id() const;
  [[nodiscard]] int64_t int_value() const;
  [[nodiscard]] Symbol functor() const;
  [[nodiscard]] size_t arity() const;
  [[nodiscard]] const Term& arg(size_t i) const;
  [[nodiscard]] std::span<const Term> args() const;

  [[nodiscard]] bool is_nil() const;
  [[nodiscard]] bool is_cons() const;
  /// True when this is a compound with the given name/arity.
  [[nodiscard]] bool has_functor(std::string_view name, size_t arity) const;

  /// Structural hash, cached at construction.
  [[nodiscard]] size_t hash() const;

  /// Structural identity (variables compared by VarId).
  friend bool operator==(const Term& a, const Term& b);
  friend bool operator!=(const Term& a, const Term& b) { return !(a == b); }

  [[nodiscard]] bool same_node(const Term& other) const { return node_ == other.node_; }

  struct Node;

 private:
  explicit Term(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

/// Standard order: Var < Int < Compound; compounds by arity, name, then args.
int compare(const Term& a, const Term& b);

struct TermHash {
  size_t operator()(const Term& t) const { return t.hash(); }
};

struct TermLess {
  bool operator()(const Term& a, const Term& b) const { return compare(a, b) < 0; }
};

/// Prolog-style text. Quotes constants that are not plain lowercase identifiers.
std::string to_string(const Term& t);

/// Finite map from variables to terms, kept in triangular form.
///
/// `bind` and `undo_to` give the resolution engine trail-based backtracking;
/// the free functions below offer a value-semantics interface on top.
class Substitution {
 public:
  [[nodiscard]] const Term* lookup(const VarId& v) const;
  [[nodiscard]] bool empty() const { return map_.empty(); }
  [[nodiscard]] size_t size() const { return map_.size(); }

  /// Follows variable bindings until an unbound variable or a non-variable.
  [[nodiscard]] Term walk(const Term& t) const;

  void bind(const VarId& v, Term t);
  [[nodiscard]] size_t mark() const { return trail_.size(); }
  void undo_to(size_t mark);

  /// Bound variables in binding order.
  [[nodiscard]] std::vector<VarId> domain() const;

 private:
  std::unordered_map<uint64_t, std::pair<VarId, Term>> map_;
  std::vector<uint64_t> trail_;
};

/// Most general unifier extending `s`, or nullopt. Occurs check always on.
std::optional<Substitution> unify(const Term& a, const Term& b, const Substitution& s);

/// In-place variant: on failure the substitution is restored to its prior state.
bool unify_in_place(const Term& a, const Term& b, Substitution& s);

/// Replaces every bound variable by its (fully resolved) value.
Term apply(const Term& t, const Substitution& s);

bool occurs_in(const VarId& v, const Term& t, const Substitution& s);

void collect_vars(const Term& t, std::vector<VarId>& out);

/// Monotone source of fresh scope ids. One per search.
class ScopeCounter {
 public:
  explicit ScopeCounter(uint32_t first = 1) : next_(first) {}
  uint32_t next() { return next_++; }

 private:
  uint32_t next_;
};

/// Copies `t` with every variable moved into `scope`.
Term rename(const Term& t, uint32_t scope);

}  // namespace gem

template <>
struct std::hash<gem::Term> {
  size_t operator()(const gem::Term& t) const { return t.hash(); }
};
