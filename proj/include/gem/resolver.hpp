#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "gem/program.hpp"
#include "gem/term.hpp"

namespace gem {

/// One conjunct of a (t-)explanation: a ground switch instance `msw(i,n,v)`
/// or a ground table atom.
struct ExplNode {
  Term term;
  bool table = false;

  friend bool operator==(const ExplNode& a, const ExplNode& b) {
    return a.table == b.table && a.term == b.term;
  }
};

enum class SearchMode {
  Exhaustive,  // msw branches over every value; tabling ignored
  Tabled,      // as Exhaustive, but ground table calls are delegated
  Sample,      // msw draws one value per (i,n), never retracted
};

struct SearchLimits {
  /// Resolution steps along one derivation path.
  uint64_t max_depth = 1'000'000;
};

/// Answers calls to table predicates during a tabled search.
class TableOracle {
 public:
  virtual ~TableOracle() = default;
  /// True when `atom` (ground) has at least one t-explanation, or is still
  /// being solved further up the call chain.
  virtual bool call_table(const Term& atom) = 0;
};

/// Random state of one sampling execution: each switch trial (i,n) is drawn
/// at most once and the draw is never retracted.
class SampleRun {
 public:
  SampleRun(const ParameterStore& params, uint64_t seed) : params_(&params), rng_(seed) {}
  SampleRun(const ParameterStore& params, std::mt19937_64 rng) : params_(&params), rng_(rng) {}

  /// Value of trial (name, trial), drawing from theta_name on first use.
  const Term& value(const Term& name, const Term& trial);
  [[nodiscard]] const std::unordered_map<Term, Term, TermHash>& draws() const { return drawn_; }
  void clear_draws() { drawn_.clear(); }
  std::mt19937_64& rng() { return rng_; }

 private:
  const ParameterStore* params_;
  std::mt19937_64 rng_;
  std::unordered_map<Term, Term, TermHash> drawn_;
};

/// Depth-first SLD resolution with an explicit choicepoint stack. Goals run
/// left to right, clauses in source order.
class Machine {
 public:
  Machine(const Program& program, SearchMode mode, SearchLimits limits = {});
  ~Machine();
  Machine(const Machine&) = delete;
  Machine& operator=(const Machine&) = delete;

  void set_table_oracle(TableOracle* oracle) { oracle_ = oracle; }
  /// Sampling mode takes switch values from this run.
  void set_sampler(SampleRun* run) { sampler_ = run; }

  /// Proves `goal`, calling `on_solution` at each success until it returns
  /// false. Returns the number of solutions reported. In tabled mode the goal
  /// itself is resolved against its clauses even when its predicate is tabled.
  size_t run(const Term& goal, const std::function<bool()>& on_solution);

  [[nodiscard]] const Substitution& bindings() const { return subst_; }
  [[nodiscard]] Term resolve(const Term& t) const { return apply(t, subst_); }
  /// Nodes collected along the current derivation, in order of first use.
  [[nodiscard]] std::span<const ExplNode> nodes() const { return nodes_; }

 private:
  struct Cell;
  using Goals = std::shared_ptr<const Cell>;
  struct Choice;

  bool step(const Term& goal, Goals rest);
  bool backtrack();
  bool resume(Choice& c);
  bool try_clause(Choice& c, size_t idx);
  bool call_user(const Term& goal, Goals rest);
  bool call_msw(const Term& goal, Goals rest);
  bool call_builtin(const Term& goal, Goals rest);
  bool call_table(const Term& goal, Goals rest);
  bool take_value(const Term& key, const Term& name, const Term& trial, const Term& value_var, const Term& value);
  int64_t eval(const Term& t) const;
  void push_choice(Choice c);
  [[nodiscard]] Term ground_arg(const Term& t, const char* what, const Term& goal) const;

  const Program& program_;
  SearchMode mode_;
  SearchLimits limits_;
  TableOracle* oracle_ = nullptr;
  SampleRun* sampler_ = nullptr;

  ScopeCounter scopes_;
  Substitution subst_;
  Goals goals_;
  uint64_t depth_ = 0;
  bool root_pending_ = false;  // the goal passed to run() is resolved, never tabled
  std::vector<Choice> choices_;
  std::vector<ExplNode> nodes_;
  // (i,n) -> v for switch instances on the current path, with an undo log
  std::unordered_map<Term, Term, TermHash> path_trials_;
  std::vector<Term> trial_log_;
};

/// Key identifying a switch trial (i,n).
Term trial_key(const Term& name, const Term& trial);

}  // namespace gem
