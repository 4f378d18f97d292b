#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <unordered_map>
#include <vector>

#include "gem/explainer.hpp"
#include "gem/program.hpp"

namespace gem {

/// Dense numbering of (switch name, value) pairs: one contiguous row of slots
/// per ground switch name.
class ParamIndex {
 public:
  /// Slot of switch instance msw(i,n,v); registers row i on first use.
  uint32_t slot(const Term& msw, const ParameterStore& store);

  [[nodiscard]] size_t slot_count() const { return slot_count_; }
  [[nodiscard]] size_t row_count() const { return names_.size(); }
  [[nodiscard]] const Term& row_name(size_t r) const { return names_[r]; }
  [[nodiscard]] size_t row_offset(size_t r) const { return offsets_[r]; }
  [[nodiscard]] size_t row_size(size_t r) const { return sizes_[r]; }

  [[nodiscard]] std::vector<double> gather(const ParameterStore& store) const;
  void scatter(std::span<const double> theta, ParameterStore& store) const;
  /// Per-row view of a slot vector, keyed by switch name.
  [[nodiscard]] std::map<Term, std::vector<double>, TermLess> by_row(std::span<const double> values) const;

 private:
  std::unordered_map<Term, uint32_t, TermHash> rows_;
  std::vector<Term> names_;
  std::vector<size_t> offsets_;
  std::vector<size_t> sizes_;
  size_t slot_count_ = 0;
};

/// A support graph flattened into index arrays.
struct CompiledGraph {
  Term goal;
  size_t atoms = 0;
  std::vector<uint32_t> expl_begin;  // atoms + 1 entries
  std::vector<uint32_t> node_begin;  // explanations + 1 entries
  std::vector<int64_t> nodes;        // >= 0: local slot; < 0: ~(atom index)
  std::vector<uint32_t> slots;       // local slot -> ParamIndex slot

  [[nodiscard]] size_t explanation_count() const { return node_begin.size() - 1; }
  /// Atoms plus node occurrences; the unit of per-iteration cost.
  [[nodiscard]] size_t size() const { return atoms + nodes.size(); }
};

CompiledGraph compile(const SupportGraph& graph, ParamIndex& index, const ParameterStore& store);

struct InsideTable {
  std::vector<double> atom;  // P[tau_k]
  std::vector<double> expl;  // R per t-explanation
};

/// Inside probabilities bottom-up (tau_K first). `theta` is indexed by ParamIndex slot.
InsideTable inside_probs(const CompiledGraph& g, std::span<const double> theta);

struct OutsideTable {
  std::vector<double> atom;  // Q[tau_k]; Q[tau_0] = 1
  std::vector<double> eta;   // expected counts per local slot, not yet divided by P[tau_0]
};

OutsideTable expectations(const CompiledGraph& g, std::span<const double> theta, const InsideTable& inside);

/// Term-level view of one support graph's inside/outside quantities.
struct GraphAnalysis {
  std::map<Term, double, TermLess> inside;   // beta per table atom
  std::map<Term, double, TermLess> outside;  // alpha(goal, atom)
  /// alpha(goal, msw(i,n,v)) and mu = alpha * theta per switch instance.
  std::map<Term, double, TermLess> switch_outside;
  std::map<Term, double, TermLess> switch_expectation;
  /// eta[i, v] for this goal, rows keyed by switch name.
  std::map<Term, std::vector<double>, TermLess> eta;
};

GraphAnalysis analyze(const SupportGraph& graph, const ParameterStore& store);

/// P(goal | theta): support graph of the goal, then one inside pass.
double goal_probability(const Program& p, const Term& goal, const ParameterStore& store,
                        const SearchLimits& limits = {});
double goal_probability(const SupportGraph& graph, const ParameterStore& store);

struct LearnConfig {
  double epsilon = 1e-6;
  size_t max_iterations = 1000;
  /// Skip the convergence test and run all max_iterations.
  bool run_all_iterations = false;
  InitMode init = InitMode::Uniform;
  uint64_t seed = 0;
  /// Worker threads for the E-step; results do not depend on this.
  unsigned jobs = 1;
  bool record_history = false;
  SearchLimits limits;
  std::function<void(size_t, double)> on_iteration;
};

struct LearnSnapshot {
  double loglik = 0.0;
  std::map<Term, std::vector<double>, TermLess> theta;
  /// Aggregated counts that produced `theta` (empty for the initial snapshot).
  std::map<Term, std::vector<double>, TermLess> eta;
};

struct LearnResult {
  ParameterStore params;
  std::vector<double> trace;  // lambda(0), lambda(1), ...
  size_t iterations = 0;
  bool converged = false;
  std::map<Term, std::vector<double>, TermLess> eta;
  std::vector<LearnSnapshot> history;
};

/// Graphical EM over support graphs built once from the observations.
class GraphicalEM {
 public:
  GraphicalEM(const Program& p, const ObservationSet& obs, const ParameterStore& initial, unsigned jobs = 1,
              const SearchLimits& limits = {});

  /// One inside pass over every graph; returns the log-likelihood.
  double inside_pass();
  /// E-step and M-step from the current inside tables, then a fresh inside
  /// pass. Returns the new log-likelihood.
  double iterate();

  [[nodiscard]] ParameterStore params() const;
  [[nodiscard]] std::map<Term, std::vector<double>, TermLess> theta_rows() const { return index_.by_row(theta_); }
  [[nodiscard]] std::map<Term, std::vector<double>, TermLess> eta_rows() const { return index_.by_row(eta_); }
  [[nodiscard]] size_t total_size() const;
  [[nodiscard]] const std::vector<CompiledGraph>& graphs() const { return graphs_; }

 private:
  template <class F>
  void for_each_graph(F&& f);

  ParameterStore base_;
  ParamIndex index_;
  std::vector<CompiledGraph> graphs_;
  std::vector<int64_t> counts_;
  std::vector<InsideTable> inside_;
  std::vector<double> theta_;
  std::vector<double> eta_;
  unsigned jobs_;
};

/// Graphical EM: lambda(0) from the initial parameters, then
/// expectations, update, inside pass, until the gain drops below epsilon.
LearnResult learn_gem(const Program& p, const ObservationSet& obs, const LearnConfig& cfg,
                      const ParameterStore* initial = nullptr);

/// EM over full explanation sets (exhaustive enumeration per goal).
LearnResult learn_naive(const Program& p, const ObservationSet& obs, const LearnConfig& cfg,
                        const ParameterStore* initial = nullptr);

struct ViterbiResult {
  Explanation explanation;
  double probability = 0.0;
};

/// Most probable explanation by max-product over the graph; ties go to the
/// earliest t-explanation.
ViterbiResult viterbi(const SupportGraph& graph, const ParameterStore& store);

}  // namespace gem
