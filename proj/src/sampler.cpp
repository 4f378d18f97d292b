#include "gem/sampler.hpp"

#include <algorithm>

#include "gem/error.hpp"

namespace gem {

bool sample_switch(SampleRun& run, const Term& name, const Term& trial, const Term& value, Substitution& s) {
  Term i = apply(name, s);
  Term n = apply(trial, s);
  if (!i.is_ground() || !n.is_ground())
    throw Error(ErrorCode::NonGround, "switch name and trial must be ground: msw(" + to_string(i) + "," +
                                          to_string(n) + ",_)");
  return unify_in_place(value, run.value(i, n), s);
}

SampleResult sample_goal(const Program& p, const Term& goal, SampleRun& run, const SearchLimits& limits) {
  run.clear_draws();
  Machine m(p, SearchMode::Sample, limits);
  m.set_sampler(&run);
  SampleResult r;
  m.run(goal, [&] {
    r.success = true;
    r.goal = m.resolve(goal);
    for (const auto& n : m.nodes()) r.explanation.push_back(n.term);
    std::sort(r.explanation.begin(), r.explanation.end(), TermLess{});
    return false;
  });
  r.draws = run.draws().size();
  return r;
}

SampleResult sample_goal(const Program& p, const Term& goal, const ParameterStore& params, uint64_t seed,
                         const SearchLimits& limits) {
  SampleRun run(params, seed);
  return sample_goal(p, goal, run, limits);
}

}  // namespace gem
