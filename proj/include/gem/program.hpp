#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gem/term.hpp"

namespace gem {

struct PredicateKey {
  Symbol name;
  size_t arity = 0;

  friend bool operator==(const PredicateKey&, const PredicateKey&) = default;
  friend bool operator<(const PredicateKey& a, const PredicateKey& b) {
    if (a.name != b.name) return a.name.str() < b.name.str();
    return a.arity < b.arity;
  }
  [[nodiscard]] std::string str() const { return name.str() + "/" + std::to_string(arity); }
};

struct PredicateKeyHash {
  size_t operator()(const PredicateKey& k) const { return (size_t{k.name.id()} << 8) ^ k.arity; }
};

/// Predicate key of a callable term (compound); throws on variables and integers.
PredicateKey predicate_of(const Term& goal);

enum class LiteralKind { User, Msw, Builtin, Control };

struct BodyLiteral {
  LiteralKind kind = LiteralKind::User;
  Term term;
};

LiteralKind classify_goal(const Term& goal);
bool is_builtin(const PredicateKey& key);

struct Clause {
  Term head;
  std::vector<BodyLiteral> body;
};

/// Variant of `c` whose variables live in a fresh scope from `counter`.
Clause fresh_rename(const Clause& c, ScopeCounter& counter);

/// `values(Pattern, [v1,...,vk])`.
struct SwitchDeclaration {
  Term pattern;
  std::vector<Term> values;

  [[nodiscard]] std::optional<size_t> value_index(const Term& v) const;
};

/// theta_{i,v} for every ground switch name i.
///
/// Rows are created on demand from the matching declaration's default row, so
/// every instance of a pattern like `tr(_)` starts from the same values but is
/// then updated independently.
class ParameterStore {
 public:
  ParameterStore() = default;
  explicit ParameterStore(std::vector<SwitchDeclaration> decls);

  [[nodiscard]] const std::vector<SwitchDeclaration>& declarations() const { return decls_; }

  /// Declaration index whose pattern matches the ground switch name.
  [[nodiscard]] std::optional<size_t> match(const Term& name) const;
  /// As `match`, throwing UnknownSwitch when nothing matches.
  [[nodiscard]] size_t require_match(const Term& name) const;

  [[nodiscard]] std::span<const Term> values(const Term& name) const;

  /// Current row for a ground switch name (explicit row or declaration default).
  [[nodiscard]] std::vector<double> row(const Term& name) const;
  [[nodiscard]] double prob(const Term& name, const Term& value) const;

  void set_row(const Term& name, std::vector<double> probs);
  void set_prob(const Term& name, const Term& value, double p);
  void set_default(size_t decl, std::vector<double> probs);
  [[nodiscard]] const std::vector<double>& default_row(size_t decl) const { return defaults_[decl]; }

  /// Explicit rows in standard term order.
  [[nodiscard]] const std::map<Term, std::vector<double>, TermLess>& rows() const { return rows_; }
  [[nodiscard]] bool has_row(const Term& name) const { return rows_.contains(name); }

  /// Rows worth persisting: every explicit row plus defaults of ground patterns.
  [[nodiscard]] std::vector<std::pair<Term, std::vector<double>>> snapshot() const;

  /// Problems with the sum-to-one and [0,1] invariants; one message per row.
  [[nodiscard]] std::vector<std::string> normalization_errors(double tol = 1e-12) const;

 private:
  std::vector<SwitchDeclaration> decls_;
  std::vector<std::vector<double>> defaults_;
  std::map<Term, std::vector<double>, TermLess> rows_;
};

struct Program {
  std::vector<Clause> rules;
  std::vector<SwitchDeclaration> switch_decls;
  std::set<PredicateKey> table_preds;
  ParameterStore params;

  /// Rebuilds the per-predicate clause index. Called by the parser.
  void reindex();
  [[nodiscard]] std::span<const size_t> clauses_for(const PredicateKey& key) const;
  [[nodiscard]] bool defines(const PredicateKey& key) const { return index_.contains(key); }
  [[nodiscard]] bool is_tabled(const PredicateKey& key) const { return table_preds.contains(key); }

 private:
  std::unordered_map<PredicateKey, std::vector<size_t>, PredicateKeyHash> index_;
};

/// Parses the program file format (clauses, `values/2` and `:- table` directives).
Program parse_program(std::string_view text);

/// Printable program text; `parse_program(print_program(p))` reproduces `p`.
std::string print_program(const Program& p);

enum class Severity { Warning, Error };

struct Diagnostic {
  Severity severity = Severity::Error;
  std::string code;
  std::string message;
};

struct Report {
  std::vector<Diagnostic> items;

  [[nodiscard]] bool ok() const;
  [[nodiscard]] bool has(std::string_view code) const;
  [[nodiscard]] std::string str() const;
};

/// Static checks: undefined predicates, unmatched switch names, parameter
/// normalization, table predicates with no clauses.
Report validate(const Program& p);

enum class InitMode { Uniform, Random };

/// Fresh parameters for every declaration. Random mode draws k uniforms in
/// (0,1) per declaration and normalizes; the last entry absorbs rounding.
ParameterStore init_parameters(const Program& p, InitMode mode, uint64_t seed = 0);

/// Parameter file: `param <switch> <value> <probability>` per line.
ParameterStore parse_parameters(std::string_view text, const std::vector<SwitchDeclaration>& decls);
std::string print_parameters(const ParameterStore& store);

struct Observation {
  Term goal;
  int64_t count = 1;
};

struct ObservationSet {
  std::vector<Observation> items;

  [[nodiscard]] int64_t total() const;
};

/// Observation file: `[count] <ground atom>.` per line.
ObservationSet parse_observations(std::string_view text);

}  // namespace gem
