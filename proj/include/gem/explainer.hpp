#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "gem/program.hpp"
#include "gem/resolver.hpp"

namespace gem {

/// A set of ground switch instances msw(i,n,v), sorted in standard order.
using Explanation = std::vector<Term>;

/// One alternative proof step for a table atom: switch and table nodes in
/// order of first use.
struct TExplanation {
  std::vector<ExplNode> nodes;
};

/// Ground table atoms with their t-explanation lists, in the order the
/// atoms were first called.
class SolutionTable {
 public:
  struct Entry {
    Term atom;
    std::vector<TExplanation> explanations;
  };

  [[nodiscard]] const Entry* find(const Term& atom) const;
  [[nodiscard]] const std::vector<Entry>& entries() const { return entries_; }
  [[nodiscard]] size_t size() const { return entries_.size(); }
  [[nodiscard]] size_t explanation_count() const;

  size_t add(const Term& atom);
  Entry& at(size_t i) { return entries_[i]; }
  [[nodiscard]] std::optional<size_t> index_of(const Term& atom) const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<Term, size_t, TermHash> index_;
};

/// Table atoms tau_0..tau_K, ordered so every table node inside a
/// t-explanation of tau_k refers to some tau_j with j > k.
struct SupportGraph {
  std::vector<Term> atoms;
  std::vector<std::vector<TExplanation>> explanations;

  [[nodiscard]] const Term& goal() const { return atoms.front(); }
  [[nodiscard]] size_t explanation_count() const;
  /// Atoms plus node occurrences across all t-explanations.
  [[nodiscard]] size_t node_count() const;
};

struct ExplainOptions {
  SearchLimits limits;
  size_t max_explanations = 1'000'000;
};

/// All explanations of a ground goal by untabled search, deduplicated and
/// sorted. Switch trials already fixed on the path are reused, so no
/// explanation assigns two values to one (i,n).
std::vector<Explanation> enumerate_explanations_exhaustive(const Program& p, const Term& goal,
                                                           const ExplainOptions& opts = {});

/// Memoized search. The goal itself is always entry 0; every call to a
/// tabled predicate must be ground.
SolutionTable tabled_search(const Program& p, const Term& goal, const SearchLimits& limits = {});

/// Orders the table atoms reachable from `goal`. Throws AcyclicSupport with a
/// cycle witness when table atoms depend on each other circularly.
SupportGraph build_support_graph(const SolutionTable& table, const Term& goal);

/// tabled_search followed by build_support_graph.
SupportGraph explain(const Program& p, const Term& goal, const SearchLimits& limits = {});

/// Expands table nodes into full explanations (cross product of alternatives).
std::vector<Explanation> flatten(const SupportGraph& graph, size_t cap = 1'000'000);

/// Pairwise check that distinct explanations disagree on some trial.
Report check_exclusiveness_bruteforce(const Program& p, const Term& goal, const ExplainOptions& opts = {});

/// Best-effort independence diagnostic: flags t-explanations whose parts can
/// reach the same switch trial (i,n).
Report check_independence(const SupportGraph& graph);

std::string format_explanation(const Explanation& e);
std::string format_support_graph(const SupportGraph& graph);
/// One cluster per table atom, one chain per t-explanation; table nodes are
/// drawn double-circled.
std::string support_graph_dot(const SupportGraph& graph);

}  // namespace gem
