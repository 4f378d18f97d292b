#include "gem/resolver.hpp"

#include "gem/error.hpp"

namespace gem {

namespace {

struct Syms {
  Symbol comma{","}, semi{";"}, truth{"true"}, msw{"msw"};
  Symbol is{"is"}, lt{"<"}, gt{">"}, le{"=<"}, ge{">="}, num_eq{"=:="}, num_ne{"=\\="};
  Symbol eq{"="}, neq{"\\="}, between{"between"}, length{"length"};
  Symbol plus{"+"}, minus{"-"}, times{"*"}, idiv{"//"}, div{"/"}, mod{"mod"};
  Symbol trial{"trial"};
};

const Syms& syms() {
  static const Syms s;
  return s;
}

// Cheap rejection of clauses whose head cannot match: compares the outer
// shape of each argument without renaming the clause.
bool may_match(const Term& head, const Term& goal, const Substitution& s) {
  for (size_t i = 0; i < head.arity(); ++i) {
    const Term& h = head.arg(i);
    if (h.is_var()) continue;
    Term g = s.walk(goal.arg(i));
    if (g.is_var()) continue;
    if (h.kind() != g.kind()) return false;
    if (h.is_int()) {
      if (h.int_value() != g.int_value()) return false;
    } else if (h.functor() != g.functor() || h.arity() != g.arity()) {
      return false;
    }
  }
  return true;
}

}  // namespace

Term trial_key(const Term& name, const Term& trial) {
  return Term::compound(syms().trial, {name, trial});
}

const Term& SampleRun::value(const Term& name, const Term& trial) {
  Term key = trial_key(name, trial);
  auto it = drawn_.find(key);
  if (it != drawn_.end()) return it->second;
  auto values = params_->values(name);
  std::vector<double> row = params_->row(name);
  double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  size_t pick = values.size() - 1;
  double acc = 0.0;
  for (size_t i = 0; i < values.size(); ++i) {
    acc += row[i];
    if (u < acc) {
      pick = i;
      break;
    }
  }
  while (pick > 0 && row[pick] == 0.0) --pick;
  return drawn_.emplace(std::move(key), values[pick]).first->second;
}

struct Machine::Cell {
  Term goal;
  Goals next;
};

struct Machine::Choice {
  enum Kind { Clauses, Values, Alt, Between } kind = Clauses;
  Term goal;
  Goals rest;
  size_t trail_mark = 0;
  size_t node_mark = 0;
  size_t log_mark = 0;
  uint64_t depth = 0;
  size_t next = 0;
  std::span<const size_t> clauses;
  // Values
  Term key, name, trial;
  std::span<const Term> values;
  // Between
  int64_t cur = 0;
  int64_t hi = 0;
};

Machine::Machine(const Program& program, SearchMode mode, SearchLimits limits)
    : program_(program), mode_(mode), limits_(limits) {}

Machine::~Machine() = default;

size_t Machine::run(const Term& goal, const std::function<bool()>& on_solution) {
  subst_ = Substitution();
  choices_.clear();
  nodes_.clear();
  path_trials_.clear();
  trial_log_.clear();
  depth_ = 0;
  root_pending_ = true;
  goals_ = std::make_shared<const Cell>(Cell{goal, nullptr});
  size_t solutions = 0;
  bool ok = true;
  for (;;) {
    if (!ok && !backtrack()) break;
    if (!goals_) {
      ++solutions;
      if (!on_solution()) break;
      ok = false;
      continue;
    }
    Goals cell = goals_;
    ok = step(cell->goal, cell->next);
  }
  choices_.clear();
  return solutions;
}

void Machine::push_choice(Choice c) {
  c.trail_mark = subst_.mark();
  c.node_mark = nodes_.size();
  c.log_mark = trial_log_.size();
  c.depth = depth_;
  choices_.push_back(std::move(c));
}

bool Machine::backtrack() {
  while (!choices_.empty())
    if (resume(choices_.back())) return true;
  return false;
}

bool Machine::resume(Choice& c) {
  auto restore = [&] {
    subst_.undo_to(c.trail_mark);
    nodes_.resize(c.node_mark);
    while (trial_log_.size() > c.log_mark) {
      path_trials_.erase(trial_log_.back());
      trial_log_.pop_back();
    }
    depth_ = c.depth;
  };
  switch (c.kind) {
    case Choice::Clauses:
      while (c.next < c.clauses.size()) {
        restore();
        size_t idx = c.clauses[c.next++];
        bool last = c.next == c.clauses.size();
        if (try_clause(c, idx)) {
          if (last) choices_.pop_back();
          return true;
        }
      }
      break;
    case Choice::Values:
      while (c.next < c.values.size()) {
        restore();
        const Term& v = c.values[c.next++];
        bool last = c.next == c.values.size();
        if (unify_in_place(c.goal, v, subst_)) {
          path_trials_.emplace(c.key, v);
          trial_log_.push_back(c.key);
          nodes_.push_back({Term::compound(syms().msw, {c.name, c.trial, v}), false});
          goals_ = c.rest;
          if (last) choices_.pop_back();
          return true;
        }
      }
      break;
    case Choice::Alt:
      restore();
      goals_ = std::make_shared<const Cell>(Cell{c.goal, c.rest});
      choices_.pop_back();
      return true;
    case Choice::Between:
      while (c.cur < c.hi) {
        restore();
        int64_t x = c.cur++;
        bool last = c.cur >= c.hi;
        if (unify_in_place(c.goal, Term::integer(x), subst_)) {
          goals_ = c.rest;
          if (last) choices_.pop_back();
          return true;
        }
      }
      break;
  }
  choices_.pop_back();
  return false;
}

bool Machine::step(const Term& raw, Goals rest) {
  const Syms& s = syms();
  bool root = root_pending_;
  root_pending_ = false;
  Term g = subst_.walk(raw);
  if (g.is_var()) throw Error(ErrorCode::Instantiation, "goal is an unbound variable");
  if (g.is_int()) throw Error(ErrorCode::Type, "integer is not callable: " + to_string(g));
  Symbol f = g.functor();
  size_t n = g.arity();
  if (n == 0 && f == s.truth) {
    goals_ = std::move(rest);
    return true;
  }
  if (n == 2 && f == s.comma) {
    goals_ = std::make_shared<const Cell>(Cell{g.arg(0), std::make_shared<const Cell>(Cell{g.arg(1), rest})});
    return true;
  }
  if (n == 2 && f == s.semi) {
    Choice c;
    c.kind = Choice::Alt;
    c.goal = g.arg(1);
    c.rest = rest;
    push_choice(std::move(c));
    goals_ = std::make_shared<const Cell>(Cell{g.arg(0), std::move(rest)});
    return true;
  }
  if (n == 3 && f == s.msw) return call_msw(g, std::move(rest));
  if (is_builtin(PredicateKey{f, n})) return call_builtin(g, std::move(rest));
  if (mode_ == SearchMode::Tabled && !root && program_.is_tabled(PredicateKey{f, n})) return call_table(g, std::move(rest));
  return call_user(g, std::move(rest));
}

bool Machine::call_user(const Term& goal, Goals rest) {
  PredicateKey key{goal.functor(), goal.arity()};
  if (!program_.defines(key)) throw Error(ErrorCode::InvalidProgram, "undefined predicate " + key.str());
  if (depth_ + 1 > limits_.max_depth)
    throw Error(ErrorCode::DepthExceeded,
                "depth bound of " + std::to_string(limits_.max_depth) + " resolution steps exceeded at " +
                    to_string(resolve(goal)));
  Choice c;
  c.kind = Choice::Clauses;
  c.goal = goal;
  c.rest = std::move(rest);
  c.clauses = program_.clauses_for(key);
  push_choice(std::move(c));
  return resume(choices_.back());
}

bool Machine::try_clause(Choice& c, size_t idx) {
  const Clause& clause = program_.rules[idx];
  if (!may_match(clause.head, c.goal, subst_)) return false;
  uint32_t scope = scopes_.next();
  if (!unify_in_place(rename(clause.head, scope), c.goal, subst_)) return false;
  Goals goals = c.rest;
  for (auto it = clause.body.rbegin(); it != clause.body.rend(); ++it)
    goals = std::make_shared<const Cell>(Cell{rename(it->term, scope), std::move(goals)});
  goals_ = std::move(goals);
  depth_ = c.depth + 1;
  return true;
}

Term Machine::ground_arg(const Term& t, const char* what, const Term& goal) const {
  Term r = apply(t, subst_);
  if (!r.is_ground())
    throw Error(ErrorCode::NonGround, std::string(what) + " must be ground when msw is called: " +
                                          to_string(apply(goal, subst_)));
  return r;
}

bool Machine::take_value(const Term& key, const Term& name, const Term& trial, const Term& value_var,
                         const Term& value) {
  if (!unify_in_place(value_var, value, subst_)) return false;
  path_trials_.emplace(key, value);
  trial_log_.push_back(key);
  nodes_.push_back({Term::compound(syms().msw, {name, trial, value}), false});
  return true;
}

bool Machine::call_msw(const Term& goal, Goals rest) {
  Term name = ground_arg(goal.arg(0), "switch name", goal);
  Term trial = ground_arg(goal.arg(1), "trial id", goal);
  const Term& value_var = goal.arg(2);
  Term key = trial_key(name, trial);

  if (auto it = path_trials_.find(key); it != path_trials_.end()) {
    if (!unify_in_place(value_var, it->second, subst_)) return false;
    goals_ = std::move(rest);
    return true;
  }

  if (mode_ == SearchMode::Sample) {
    if (!sampler_) throw Error(ErrorCode::Usage, "sampling machine has no sample run");
    if (!take_value(key, name, trial, value_var, sampler_->value(name, trial))) return false;
    goals_ = std::move(rest);
    return true;
  }

  auto values = program_.params.values(name);
  Term v = subst_.walk(value_var);
  if (v.is_ground()) {
    for (const auto& candidate : values)
      if (candidate == v) {
        take_value(key, name, trial, value_var, candidate);
        goals_ = std::move(rest);
        return true;
      }
    return false;
  }
  Choice c;
  c.kind = Choice::Values;
  c.goal = value_var;
  c.rest = std::move(rest);
  c.key = key;
  c.name = name;
  c.trial = trial;
  c.values = values;
  push_choice(std::move(c));
  return resume(choices_.back());
}

bool Machine::call_table(const Term& goal, Goals rest) {
  Term atom = apply(goal, subst_);
  if (!atom.is_ground()) throw Error(ErrorCode::NonGround, "non-ground table call: " + to_string(atom));
  if (!oracle_) throw Error(ErrorCode::Usage, "tabled machine has no table oracle");
  if (!oracle_->call_table(atom)) return false;
  bool seen = false;
  for (const auto& n : nodes_)
    if (n.table && n.term == atom) seen = true;
  if (!seen) nodes_.push_back({atom, true});
  goals_ = std::move(rest);
  return true;
}

int64_t Machine::eval(const Term& t) const {
  const Syms& s = syms();
  Term w = subst_.walk(t);
  if (w.is_int()) return w.int_value();
  if (w.is_var()) throw Error(ErrorCode::Instantiation, "arithmetic on an unbound variable");
  Symbol f = w.functor();
  if (w.arity() == 1 && f == s.minus) return -eval(w.arg(0));
  if (w.arity() == 2) {
    int64_t a = eval(w.arg(0));
    int64_t b = eval(w.arg(1));
    if (f == s.plus) return a + b;
    if (f == s.minus) return a - b;
    if (f == s.times) return a * b;
    if (f == s.idiv || f == s.div || f == s.mod) {
      if (b == 0) throw Error(ErrorCode::Type, "division by zero in " + to_string(resolve(w)));
      if (f == s.mod) {
        int64_t m = a % b;
        return (m != 0 && ((m < 0) != (b < 0))) ? m + b : m;
      }
      return a / b;
    }
  }
  throw Error(ErrorCode::Type, "not an integer expression: " + to_string(resolve(w)));
}

bool Machine::call_builtin(const Term& goal, Goals rest) {
  const Syms& s = syms();
  Symbol f = goal.functor();
  bool ok = false;
  if (f == s.is) {
    ok = unify_in_place(goal.arg(0), Term::integer(eval(goal.arg(1))), subst_);
  } else if (f == s.lt || f == s.gt || f == s.le || f == s.ge || f == s.num_eq || f == s.num_ne) {
    int64_t a = eval(goal.arg(0));
    int64_t b = eval(goal.arg(1));
    if (f == s.lt) ok = a < b;
    else if (f == s.gt) ok = a > b;
    else if (f == s.le) ok = a <= b;
    else if (f == s.ge) ok = a >= b;
    else if (f == s.num_eq) ok = a == b;
    else ok = a != b;
  } else if (f == s.eq) {
    ok = unify_in_place(goal.arg(0), goal.arg(1), subst_);
  } else if (f == s.neq) {
    Term a = resolve(goal.arg(0));
    Term b = resolve(goal.arg(1));
    if (!a.is_ground() || !b.is_ground())
      throw Error(ErrorCode::Instantiation, "\\= needs ground arguments: " + to_string(resolve(goal)));
    ok = a != b;
  } else if (f == s.between) {
    int64_t lo = eval(goal.arg(0));
    int64_t hi = eval(goal.arg(2));
    Term x = subst_.walk(goal.arg(1));
    if (x.is_int()) {
      ok = lo < x.int_value() && x.int_value() < hi;
    } else if (x.is_var()) {
      if (lo + 1 >= hi) return false;
      Choice c;
      c.kind = Choice::Between;
      c.goal = x;
      c.rest = std::move(rest);
      c.cur = lo + 1;
      c.hi = hi;
      push_choice(std::move(c));
      return resume(choices_.back());
    } else {
      throw Error(ErrorCode::Type, "between/3 expects an integer: " + to_string(resolve(goal)));
    }
  } else if (f == s.length) {
    Term cur = subst_.walk(goal.arg(0));
    int64_t count = 0;
    while (cur.is_cons()) {
      ++count;
      cur = subst_.walk(cur.arg(1));
    }
    if (cur.is_nil()) {
      ok = unify_in_place(goal.arg(1), Term::integer(count), subst_);
    } else if (cur.is_var()) {
      Term n = subst_.walk(goal.arg(1));
      if (!n.is_int()) throw Error(ErrorCode::Instantiation, "length/2 of a partial list needs an integer length");
      if (n.int_value() < count) return false;
      uint32_t scope = scopes_.next();
      std::vector<Term> fresh;
      for (int64_t i = count; i < n.int_value(); ++i) fresh.push_back(Term::var("_L" + std::to_string(i), scope));
      ok = unify_in_place(cur, Term::list(fresh), subst_);
    } else {
      throw Error(ErrorCode::Type, "length/2 expects a list: " + to_string(resolve(goal)));
    }
  } else {
    throw Error(ErrorCode::InvalidProgram, "unsupported built-in " + to_string(goal));
  }
  if (ok) goals_ = std::move(rest);
  return ok;
}

}  // namespace gem
