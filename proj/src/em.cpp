#include "gem/em.hpp"

#include <atomic>
#include <cmath>
#include <set>
#include <thread>

#include "gem/error.hpp"

namespace gem {

// ---------------------------------------------------------------------------
// ParamIndex

uint32_t ParamIndex::slot(const Term& msw, const ParameterStore& store) {
  const Term& name = msw.arg(0);
  const Term& value = msw.arg(2);
  size_t decl = store.require_match(name);
  const auto& d = store.declarations()[decl];
  auto [it, inserted] = rows_.emplace(name, static_cast<uint32_t>(names_.size()));
  if (inserted) {
    names_.push_back(name);
    offsets_.push_back(slot_count_);
    sizes_.push_back(d.values.size());
    slot_count_ += d.values.size();
  }
  auto v = d.value_index(value);
  if (!v) throw Error(ErrorCode::UnknownSwitch, "value " + to_string(value) + " not declared for " + to_string(name));
  return static_cast<uint32_t>(offsets_[it->second] + *v);
}

std::vector<double> ParamIndex::gather(const ParameterStore& store) const {
  std::vector<double> theta(slot_count_);
  for (size_t r = 0; r < names_.size(); ++r) {
    auto row = store.row(names_[r]);
    std::copy(row.begin(), row.end(), theta.begin() + static_cast<std::ptrdiff_t>(offsets_[r]));
  }
  return theta;
}

void ParamIndex::scatter(std::span<const double> theta, ParameterStore& store) const {
  for (size_t r = 0; r < names_.size(); ++r) {
    auto first = theta.begin() + static_cast<std::ptrdiff_t>(offsets_[r]);
    store.set_row(names_[r], std::vector<double>(first, first + static_cast<std::ptrdiff_t>(sizes_[r])));
  }
}

std::map<Term, std::vector<double>, TermLess> ParamIndex::by_row(std::span<const double> values) const {
  std::map<Term, std::vector<double>, TermLess> out;
  for (size_t r = 0; r < names_.size(); ++r) {
    auto first = values.begin() + static_cast<std::ptrdiff_t>(offsets_[r]);
    out.emplace(names_[r], std::vector<double>(first, first + static_cast<std::ptrdiff_t>(sizes_[r])));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Compiled graphs and the two passes

CompiledGraph compile(const SupportGraph& graph, ParamIndex& index, const ParameterStore& store) {
  CompiledGraph g;
  g.goal = graph.atoms.empty() ? Term() : graph.goal();
  g.atoms = graph.atoms.size();
  std::unordered_map<Term, size_t, TermHash> atom_index;
  for (size_t k = 0; k < graph.atoms.size(); ++k) atom_index.emplace(graph.atoms[k], k);
  std::unordered_map<uint32_t, uint32_t> local;
  g.expl_begin.push_back(0);
  g.node_begin.push_back(0);
  for (size_t k = 0; k < graph.atoms.size(); ++k) {
    for (const auto& te : graph.explanations[k]) {
      for (const auto& n : te.nodes) {
        if (n.table) {
          auto it = atom_index.find(n.term);
          if (it == atom_index.end() || it->second <= k)
            throw Error(ErrorCode::InvalidProgram,
                        "support graph is not topologically ordered at " + to_string(n.term));
          g.nodes.push_back(~static_cast<int64_t>(it->second));
        } else {
          uint32_t global = index.slot(n.term, store);
          auto [it, inserted] = local.emplace(global, static_cast<uint32_t>(g.slots.size()));
          if (inserted) g.slots.push_back(global);
          g.nodes.push_back(it->second);
        }
      }
      g.node_begin.push_back(static_cast<uint32_t>(g.nodes.size()));
    }
    g.expl_begin.push_back(static_cast<uint32_t>(g.node_begin.size() - 1));
  }
  return g;
}

InsideTable inside_probs(const CompiledGraph& g, std::span<const double> theta) {
  InsideTable t;
  t.atom.assign(g.atoms, 0.0);
  t.expl.assign(g.explanation_count(), 0.0);
  for (size_t k = g.atoms; k-- > 0;) {
    double sum = 0.0;
    for (uint32_t e = g.expl_begin[k]; e < g.expl_begin[k + 1]; ++e) {
      double r = 1.0;
      for (uint32_t i = g.node_begin[e]; i < g.node_begin[e + 1]; ++i) {
        int64_t n = g.nodes[i];
        r *= n >= 0 ? theta[g.slots[static_cast<size_t>(n)]] : t.atom[static_cast<size_t>(~n)];
      }
      t.expl[e] = r;
      sum += r;
    }
    t.atom[k] = sum;
  }
  return t;
}

OutsideTable expectations(const CompiledGraph& g, std::span<const double>, const InsideTable& inside) {
  OutsideTable out;
  out.atom.assign(g.atoms, 0.0);
  out.eta.assign(g.slots.size(), 0.0);
  if (g.atoms == 0) return out;
  out.atom[0] = 1.0;
  for (size_t k = 0; k < g.atoms; ++k) {
    double q = out.atom[k];
    for (uint32_t e = g.expl_begin[k]; e < g.expl_begin[k + 1]; ++e) {
      double w = q * inside.expl[e];
      if (w == 0.0) continue;
      for (uint32_t i = g.node_begin[e]; i < g.node_begin[e + 1]; ++i) {
        int64_t n = g.nodes[i];
        if (n >= 0) {
          out.eta[static_cast<size_t>(n)] += w;
        } else {
          auto a = static_cast<size_t>(~n);
          if (inside.atom[a] == 0.0)
            throw Error(ErrorCode::NumericDegeneracy, "zero inside probability for a used table atom");
          out.atom[a] += w / inside.atom[a];
        }
      }
    }
  }
  return out;
}

GraphAnalysis analyze(const SupportGraph& graph, const ParameterStore& store) {
  ParamIndex index;
  CompiledGraph g = compile(graph, index, store);
  std::vector<double> theta = index.gather(store);
  InsideTable in = inside_probs(g, theta);
  OutsideTable out = expectations(g, theta, in);
  GraphAnalysis a;
  for (size_t k = 0; k < g.atoms; ++k) {
    a.inside[graph.atoms[k]] = in.atom[k];
    a.outside[graph.atoms[k]] = out.atom[k];
    for (uint32_t e = g.expl_begin[k]; e < g.expl_begin[k + 1]; ++e) {
      const auto& te = graph.explanations[k][e - g.expl_begin[k]];
      for (uint32_t i = g.node_begin[e]; i < g.node_begin[e + 1]; ++i) {
        if (g.nodes[i] < 0) continue;
        double others = out.atom[k];
        for (uint32_t j = g.node_begin[e]; j < g.node_begin[e + 1]; ++j) {
          if (j == i) continue;
          int64_t n = g.nodes[j];
          others *= n >= 0 ? theta[g.slots[static_cast<size_t>(n)]] : in.atom[static_cast<size_t>(~n)];
        }
        const Term& m = te.nodes[i - g.node_begin[e]].term;
        a.switch_outside[m] += others;
        a.switch_expectation[m] += out.atom[k] * in.expl[e];
      }
    }
  }
  std::vector<double> eta(index.slot_count(), 0.0);
  for (size_t j = 0; j < g.slots.size(); ++j) eta[g.slots[j]] += out.eta[j];
  a.eta = index.by_row(eta);
  return a;
}

double goal_probability(const SupportGraph& graph, const ParameterStore& store) {
  if (graph.atoms.empty()) return 0.0;
  ParamIndex index;
  CompiledGraph g = compile(graph, index, store);
  return inside_probs(g, index.gather(store)).atom[0];
}

double goal_probability(const Program& p, const Term& goal, const ParameterStore& store, const SearchLimits& limits) {
  return goal_probability(explain(p, goal, limits), store);
}

// ---------------------------------------------------------------------------
// Learning

namespace {

struct MergedObservations {
  std::vector<Term> goals;
  std::vector<int64_t> counts;
};

MergedObservations merge(const ObservationSet& obs) {
  MergedObservations m;
  std::unordered_map<Term, size_t, TermHash> where;
  for (const auto& o : obs.items) {
    auto [it, inserted] = where.emplace(o.goal, m.goals.size());
    if (inserted) {
      m.goals.push_back(o.goal);
      m.counts.push_back(o.count);
    } else {
      m.counts[it->second] += o.count;
    }
  }
  return m;
}

void check_config(const LearnConfig& cfg) {
  if (!(cfg.epsilon > 0.0)) throw Error(ErrorCode::Usage, "epsilon must be positive");
  if (cfg.max_iterations < 1) throw Error(ErrorCode::Usage, "max iterations must be at least 1");
}

double log_likelihood(std::span<const double> probs, std::span<const int64_t> counts, std::span<const Term> goals) {
  double lambda = 0.0;
  for (size_t t = 0; t < probs.size(); ++t) {
    if (!(probs[t] > 0.0))
      throw Error(ErrorCode::ZeroProbability, "observation has zero probability: " + to_string(goals[t]));
    lambda += static_cast<double>(counts[t]) * std::log(probs[t]);
  }
  if (!std::isfinite(lambda)) throw Error(ErrorCode::NumericDegeneracy, "log-likelihood is not finite");
  return lambda;
}

// theta_{i,v} = eta[i,v] / sum_v' eta[i,v']; rows with no expected count keep their values
void maximize(const ParamIndex& index, std::span<const double> eta, std::vector<double>& theta) {
  for (size_t r = 0; r < index.row_count(); ++r) {
    size_t off = index.row_offset(r);
    size_t n = index.row_size(r);
    double sum = 0.0;
    for (size_t j = 0; j < n; ++j) sum += eta[off + j];
    if (!(sum > 0.0)) continue;
    for (size_t j = 0; j < n; ++j) theta[off + j] = eta[off + j] / sum;
  }
}

template <class Engine>
LearnResult run_em(Engine& engine, const LearnConfig& cfg) {
  LearnResult res;
  double lambda = engine.inside_pass();
  res.trace.push_back(lambda);
  if (cfg.on_iteration) cfg.on_iteration(0, lambda);
  if (cfg.record_history) res.history.push_back({lambda, engine.theta_rows(), {}});
  for (size_t m = 1; m <= cfg.max_iterations; ++m) {
    double next = engine.iterate();
    res.trace.push_back(next);
    res.iterations = m;
    if (cfg.on_iteration) cfg.on_iteration(m, next);
    if (cfg.record_history) res.history.push_back({next, engine.theta_rows(), engine.eta_rows()});
    bool done = !cfg.run_all_iterations && next - lambda < cfg.epsilon;
    lambda = next;
    if (done) {
      res.converged = true;
      break;
    }
  }
  res.params = engine.params();
  res.eta = engine.eta_rows();
  return res;
}

class NaiveEM {
 public:
  NaiveEM(const Program& p, const ObservationSet& obs, const ParameterStore& initial, const SearchLimits& limits)
      : base_(initial) {
    auto merged = merge(obs);
    goals_ = merged.goals;
    counts_ = merged.counts;
    ExplainOptions opts;
    opts.limits = limits;
    for (const auto& goal : goals_) {
      std::vector<std::vector<uint32_t>> slots;
      for (const auto& e : enumerate_explanations_exhaustive(p, goal, opts)) {
        std::vector<uint32_t> s;
        for (const auto& m : e) s.push_back(index_.slot(m, base_));
        slots.push_back(std::move(s));
      }
      expls_.push_back(std::move(slots));
    }
    theta_ = index_.gather(base_);
    eta_.assign(index_.slot_count(), 0.0);
  }

  double inside_pass() {
    probs_.assign(goals_.size(), 0.0);
    for (size_t t = 0; t < goals_.size(); ++t)
      for (const auto& s : expls_[t]) probs_[t] += product(s);
    return log_likelihood(probs_, counts_, goals_);
  }

  double iterate() {
    std::fill(eta_.begin(), eta_.end(), 0.0);
    for (size_t t = 0; t < goals_.size(); ++t) {
      double f = static_cast<double>(counts_[t]) / probs_[t];
      for (const auto& s : expls_[t]) {
        double ps = product(s);
        for (uint32_t slot : s) eta_[slot] += f * ps;
      }
    }
    maximize(index_, eta_, theta_);
    return inside_pass();
  }

  [[nodiscard]] ParameterStore params() const {
    ParameterStore out = base_;
    index_.scatter(theta_, out);
    return out;
  }
  [[nodiscard]] std::map<Term, std::vector<double>, TermLess> theta_rows() const { return index_.by_row(theta_); }
  [[nodiscard]] std::map<Term, std::vector<double>, TermLess> eta_rows() const { return index_.by_row(eta_); }

 private:
  [[nodiscard]] double product(const std::vector<uint32_t>& s) const {
    double p = 1.0;
    for (uint32_t slot : s) p *= theta_[slot];
    return p;
  }

  ParameterStore base_;
  ParamIndex index_;
  std::vector<Term> goals_;
  std::vector<int64_t> counts_;
  std::vector<std::vector<std::vector<uint32_t>>> expls_;
  std::vector<double> probs_;
  std::vector<double> theta_;
  std::vector<double> eta_;
};

}  // namespace

GraphicalEM::GraphicalEM(const Program& p, const ObservationSet& obs, const ParameterStore& initial, unsigned jobs,
                         const SearchLimits& limits)
    : base_(initial), jobs_(std::max(1u, jobs)) {
  auto merged = merge(obs);
  counts_ = merged.counts;
  for (const auto& goal : merged.goals) graphs_.push_back(compile(explain(p, goal, limits), index_, base_));
  theta_ = index_.gather(base_);
  eta_.assign(index_.slot_count(), 0.0);
  inside_.resize(graphs_.size());
}

template <class F>
void GraphicalEM::for_each_graph(F&& f) {
  if (jobs_ <= 1 || graphs_.size() < 2) {
    for (size_t t = 0; t < graphs_.size(); ++t) f(t);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      size_t t = next.fetch_add(1);
      if (t >= graphs_.size() || failed.load()) return;
      try {
        f(t);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  unsigned n = std::min<unsigned>(jobs_, static_cast<unsigned>(graphs_.size()));
  for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

double GraphicalEM::inside_pass() {
  for_each_graph([&](size_t t) { inside_[t] = inside_probs(graphs_[t], theta_); });
  std::vector<double> probs(graphs_.size());
  std::vector<Term> goals(graphs_.size());
  for (size_t t = 0; t < graphs_.size(); ++t) {
    probs[t] = graphs_[t].atoms ? inside_[t].atom[0] : 0.0;
    goals[t] = graphs_[t].goal;
  }
  return log_likelihood(probs, counts_, goals);
}

double GraphicalEM::iterate() {
  std::vector<OutsideTable> outside(graphs_.size());
  for_each_graph([&](size_t t) { outside[t] = expectations(graphs_[t], theta_, inside_[t]); });
  // fixed summation order keeps results independent of the worker count
  std::fill(eta_.begin(), eta_.end(), 0.0);
  for (size_t t = 0; t < graphs_.size(); ++t) {
    double f = static_cast<double>(counts_[t]) / inside_[t].atom[0];
    const auto& g = graphs_[t];
    for (size_t j = 0; j < g.slots.size(); ++j) eta_[g.slots[j]] += f * outside[t].eta[j];
  }
  maximize(index_, eta_, theta_);
  return inside_pass();
}

ParameterStore GraphicalEM::params() const {
  ParameterStore out = base_;
  index_.scatter(theta_, out);
  return out;
}

size_t GraphicalEM::total_size() const {
  size_t n = 0;
  for (const auto& g : graphs_) n += g.size();
  return n;
}

LearnResult learn_gem(const Program& p, const ObservationSet& obs, const LearnConfig& cfg,
                      const ParameterStore* initial) {
  check_config(cfg);
  ParameterStore start = initial ? *initial : init_parameters(p, cfg.init, cfg.seed);
  GraphicalEM engine(p, obs, start, cfg.jobs, cfg.limits);
  return run_em(engine, cfg);
}

LearnResult learn_naive(const Program& p, const ObservationSet& obs, const LearnConfig& cfg,
                        const ParameterStore* initial) {
  check_config(cfg);
  ParameterStore start = initial ? *initial : init_parameters(p, cfg.init, cfg.seed);
  NaiveEM engine(p, obs, start, cfg.limits);
  return run_em(engine, cfg);
}

// ---------------------------------------------------------------------------
// Viterbi

ViterbiResult viterbi(const SupportGraph& graph, const ParameterStore& store) {
  if (graph.atoms.empty()) throw Error(ErrorCode::EmptySupport, "empty support graph");
  std::unordered_map<Term, size_t, TermHash> index;
  for (size_t k = 0; k < graph.atoms.size(); ++k) index.emplace(graph.atoms[k], k);
  std::vector<double> best(graph.atoms.size(), 0.0);
  std::vector<std::ptrdiff_t> choice(graph.atoms.size(), -1);
  for (size_t k = graph.atoms.size(); k-- > 0;) {
    const auto& list = graph.explanations[k];
    for (size_t e = 0; e < list.size(); ++e) {
      double p = 1.0;
      for (const auto& n : list[e].nodes)
        p *= n.table ? best[index.at(n.term)] : store.prob(n.term.arg(0), n.term.arg(2));
      if (choice[k] < 0 || p > best[k]) {
        best[k] = p;
        choice[k] = static_cast<std::ptrdiff_t>(e);
      }
    }
  }
  if (choice[0] < 0) throw Error(ErrorCode::EmptySupport, "no explanation for " + to_string(graph.goal()));
  std::set<Term, TermLess> switches;
  std::vector<bool> seen(graph.atoms.size(), false);
  std::vector<size_t> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    size_t k = stack.back();
    stack.pop_back();
    for (const auto& n : graph.explanations[k][static_cast<size_t>(choice[k])].nodes) {
      if (!n.table) {
        switches.insert(n.term);
        continue;
      }
      size_t j = index.at(n.term);
      if (!seen[j]) {
        seen[j] = true;
        stack.push_back(j);
      }
    }
  }
  return ViterbiResult{{switches.begin(), switches.end()}, best[0]};
}

}  // namespace gem
