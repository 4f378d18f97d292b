#pragma once

#include <cstdint>

#include "gem/explainer.hpp"
#include "gem/program.hpp"
#include "gem/resolver.hpp"

namespace gem {

struct SampleResult {
  bool success = false;
  /// The goal instantiated by the successful derivation.
  Term goal;
  /// Switch instances used by that derivation, sorted.
  Explanation explanation;
  /// Distinct trials drawn during the run, including ones on failed branches.
  size_t draws = 0;

  /// The run drew switches and still failed: the goal does not cover every
  /// outcome of the draws, which the uniqueness condition forbids.
  [[nodiscard]] bool uniqueness_violation() const { return !success && draws > 0; }
};

/// Single-trial semantics of msw(i,n,v): unifies `value` with the value of
/// trial (name, trial), drawing it first if needed.
bool sample_switch(SampleRun& run, const Term& name, const Term& trial, const Term& value, Substitution& s);

/// One sampling execution of `goal`. Draws are memoized for the run; clause
/// choices backtrack, draws never do.
SampleResult sample_goal(const Program& p, const Term& goal, SampleRun& run, const SearchLimits& limits = {});
SampleResult sample_goal(const Program& p, const Term& goal, const ParameterStore& params, uint64_t seed,
                         const SearchLimits& limits = {});

}  // namespace gem
