#include "gem/explainer.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <set>
#include <unordered_set>

#include "gem/error.hpp"

namespace gem {

namespace {

struct ExplanationLess {
  bool operator()(const Explanation& a, const Explanation& b) const {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), TermLess{});
  }
};

Explanation sorted_switches(std::span<const ExplNode> nodes) {
  Explanation e;
  e.reserve(nodes.size());
  for (const auto& n : nodes)
    if (!n.table) e.push_back(n.term);
  std::sort(e.begin(), e.end(), TermLess{});
  return e;
}

// Node-set identity of a t-explanation, independent of node order.
std::vector<std::pair<bool, Term>> node_set(std::span<const ExplNode> nodes) {
  std::vector<std::pair<bool, Term>> key;
  key.reserve(nodes.size());
  for (const auto& n : nodes) key.emplace_back(n.table, n.term);
  std::sort(key.begin(), key.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return compare(a.second, b.second) < 0;
  });
  return key;
}

struct NodeSetLess {
  bool operator()(const std::vector<std::pair<bool, Term>>& a, const std::vector<std::pair<bool, Term>>& b) const {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), [](const auto& x, const auto& y) {
      if (x.first != y.first) return x.first < y.first;
      return compare(x.second, y.second) < 0;
    });
  }
};

class TableBuilder final : public TableOracle {
 public:
  TableBuilder(const Program& p, const SearchLimits& limits) : program_(p), limits_(limits) {}

  bool call_table(const Term& atom) override {
    if (auto idx = table_.index_of(atom)) {
      if (in_progress_.contains(atom)) return true;
      return !table_.at(*idx).explanations.empty();
    }
    size_t idx = table_.add(atom);
    in_progress_.insert(atom);
    std::vector<TExplanation> found;
    std::set<std::vector<std::pair<bool, Term>>, NodeSetLess> seen;
    Machine m(program_, SearchMode::Tabled, limits_);
    m.set_table_oracle(this);
    m.run(atom, [&] {
      auto nodes = m.nodes();
      if (seen.insert(node_set(nodes)).second) found.push_back(TExplanation{{nodes.begin(), nodes.end()}});
      return true;
    });
    in_progress_.erase(atom);
    bool any = !found.empty();
    table_.at(idx).explanations = std::move(found);
    return any;
  }

  SolutionTable take() { return std::move(table_); }

 private:
  const Program& program_;
  SearchLimits limits_;
  SolutionTable table_;
  std::unordered_set<Term, TermHash> in_progress_;
};

const Term& trial_name(const Term& msw) { return msw.arg(0); }
const Term& trial_id(const Term& msw) { return msw.arg(1); }

// Union of two sorted explanations; nullopt when some trial gets two values.
std::optional<Explanation> merge_consistent(const Explanation& a, const Explanation& b) {
  Explanation out;
  out.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out), TermLess{});
  out.erase(std::unique(out.begin(), out.end()), out.end());
  for (size_t i = 1; i < out.size(); ++i)
    if (trial_name(out[i]) == trial_name(out[i - 1]) && trial_id(out[i]) == trial_id(out[i - 1])) return std::nullopt;
  return out;
}

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

const SolutionTable::Entry* SolutionTable::find(const Term& atom) const {
  auto it = index_.find(atom);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

std::optional<size_t> SolutionTable::index_of(const Term& atom) const {
  auto it = index_.find(atom);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

size_t SolutionTable::add(const Term& atom) {
  auto [it, inserted] = index_.emplace(atom, entries_.size());
  if (inserted) entries_.push_back(Entry{atom, {}});
  return it->second;
}

size_t SolutionTable::explanation_count() const {
  size_t n = 0;
  for (const auto& e : entries_) n += e.explanations.size();
  return n;
}

size_t SupportGraph::explanation_count() const {
  size_t n = 0;
  for (const auto& list : explanations) n += list.size();
  return n;
}

size_t SupportGraph::node_count() const {
  size_t n = atoms.size();
  for (const auto& list : explanations)
    for (const auto& e : list) n += e.nodes.size();
  return n;
}

std::vector<Explanation> enumerate_explanations_exhaustive(const Program& p, const Term& goal,
                                                           const ExplainOptions& opts) {
  if (!goal.is_ground()) throw Error(ErrorCode::NonGround, "goal must be ground: " + to_string(goal));
  std::set<Explanation, ExplanationLess> found;
  Machine m(p, SearchMode::Exhaustive, opts.limits);
  m.run(goal, [&] {
    found.insert(sorted_switches(m.nodes()));
    if (found.size() > opts.max_explanations)
      throw Error(ErrorCode::EnumerationCap, "more than " + std::to_string(opts.max_explanations) +
                                                 " explanations for " + to_string(goal));
    return true;
  });
  return {found.begin(), found.end()};
}

SolutionTable tabled_search(const Program& p, const Term& goal, const SearchLimits& limits) {
  if (!goal.is_ground()) throw Error(ErrorCode::NonGround, "goal must be ground: " + to_string(goal));
  TableBuilder builder(p, limits);
  builder.call_table(goal);
  return builder.take();
}

SupportGraph build_support_graph(const SolutionTable& table, const Term& goal) {
  auto root = table.index_of(goal);
  if (!root) throw Error(ErrorCode::InvalidProgram, "goal has no solution-table entry: " + to_string(goal));
  const auto& entries = table.entries();

  auto children = [&](size_t k) {
    std::vector<size_t> out;
    for (const auto& e : entries[k].explanations)
      for (const auto& n : e.nodes)
        if (n.table) {
          auto j = table.index_of(n.term);
          if (!j) throw Error(ErrorCode::InvalidProgram, "table node without entry: " + to_string(n.term));
          out.push_back(*j);
        }
    return out;
  };

  // depth-first reachability with cycle detection
  enum Color : uint8_t { White, Gray, Black };
  std::vector<Color> color(entries.size(), White);
  std::vector<std::vector<size_t>> kids(entries.size());
  std::vector<std::pair<size_t, size_t>> stack{{*root, 0}};
  color[*root] = Gray;
  kids[*root] = children(*root);
  while (!stack.empty()) {
    auto& [k, pos] = stack.back();
    if (pos == kids[k].size()) {
      color[k] = Black;
      stack.pop_back();
      continue;
    }
    size_t j = kids[k][pos++];
    if (color[j] == Gray) {
      std::string witness;
      bool on = false;
      for (const auto& [s, _] : stack) {
        if (s == j) on = true;
        if (on) witness += to_string(entries[s].atom) + " -> ";
      }
      witness += to_string(entries[j].atom);
      throw Error(ErrorCode::AcyclicSupport, "acyclic support condition violated: " + witness);
    }
    if (color[j] == White) {
      color[j] = Gray;
      kids[j] = children(j);
      stack.emplace_back(j, 0);
    }
  }

  // topological order, ties broken by first-call order
  std::vector<size_t> indegree(entries.size(), 0);
  for (size_t k = 0; k < entries.size(); ++k)
    if (color[k] == Black) {
      std::set<size_t> distinct(kids[k].begin(), kids[k].end());
      for (size_t j : distinct) ++indegree[j];
    }
  std::priority_queue<size_t, std::vector<size_t>, std::greater<>> ready;
  ready.push(*root);
  SupportGraph g;
  while (!ready.empty()) {
    size_t k = ready.top();
    ready.pop();
    g.atoms.push_back(entries[k].atom);
    g.explanations.push_back(entries[k].explanations);
    std::set<size_t> distinct(kids[k].begin(), kids[k].end());
    for (size_t j : distinct)
      if (--indegree[j] == 0) ready.push(j);
  }
  return g;
}

SupportGraph explain(const Program& p, const Term& goal, const SearchLimits& limits) {
  return build_support_graph(tabled_search(p, goal, limits), goal);
}

std::vector<Explanation> flatten(const SupportGraph& graph, size_t cap) {
  std::unordered_map<Term, size_t, TermHash> index;
  for (size_t k = 0; k < graph.atoms.size(); ++k) index.emplace(graph.atoms[k], k);
  std::vector<std::vector<Explanation>> full(graph.atoms.size());
  for (size_t k = graph.atoms.size(); k-- > 0;) {
    std::set<Explanation, ExplanationLess> acc;
    for (const auto& te : graph.explanations[k]) {
      std::vector<Explanation> partial{sorted_switches(te.nodes)};
      for (const auto& n : te.nodes) {
        if (!n.table) continue;
        std::vector<Explanation> next;
        for (const auto& left : partial)
          for (const auto& right : full[index.at(n.term)])
            if (auto merged = merge_consistent(left, right)) {
              next.push_back(std::move(*merged));
              if (next.size() > cap)
                throw Error(ErrorCode::EnumerationCap,
                            "flattening exceeds " + std::to_string(cap) + " explanations at " + to_string(graph.atoms[k]));
            }
        partial = std::move(next);
      }
      acc.insert(partial.begin(), partial.end());
      if (acc.size() > cap)
        throw Error(ErrorCode::EnumerationCap,
                    "flattening exceeds " + std::to_string(cap) + " explanations at " + to_string(graph.atoms[k]));
    }
    full[k].assign(acc.begin(), acc.end());
  }
  return graph.atoms.empty() ? std::vector<Explanation>{} : full[0];
}

Report check_exclusiveness_bruteforce(const Program& p, const Term& goal, const ExplainOptions& opts) {
  auto expls = enumerate_explanations_exhaustive(p, goal, opts);
  Report r;
  size_t violations = 0;
  for (size_t a = 0; a < expls.size(); ++a)
    for (size_t b = a + 1; b < expls.size(); ++b) {
      std::map<Term, Term, TermLess> trials;
      for (const auto& m : expls[a]) trials.emplace(trial_key(m.arg(0), m.arg(1)), m.arg(2));
      bool exclusive = false;
      for (const auto& m : expls[b]) {
        auto it = trials.find(trial_key(m.arg(0), m.arg(1)));
        if (it != trials.end() && it->second != m.arg(2)) {
          exclusive = true;
          break;
        }
      }
      if (!exclusive && ++violations <= 10)
        r.items.push_back({Severity::Error, "non_exclusive",
                           "explanations " + format_explanation(expls[a]) + " and " + format_explanation(expls[b]) +
                               " of " + to_string(goal) + " can hold together"});
    }
  if (violations > 10)
    r.items.push_back({Severity::Error, "non_exclusive",
                       std::to_string(violations - 10) + " further non-exclusive pairs not listed"});
  return r;
}

Report check_independence(const SupportGraph& graph) {
  Report r;
  std::unordered_map<Term, size_t, TermHash> index;
  for (size_t k = 0; k < graph.atoms.size(); ++k) index.emplace(graph.atoms[k], k);
  std::vector<std::set<Term, TermLess>> reach(graph.atoms.size());
  for (size_t k = graph.atoms.size(); k-- > 0;) {
    for (const auto& te : graph.explanations[k]) {
      std::map<Term, size_t, TermLess> owner;  // trial -> which part of te reaches it
      bool flagged = false;
      for (size_t part = 0; part < te.nodes.size(); ++part) {
        const auto& n = te.nodes[part];
        std::vector<Term> trials;
        if (n.table) {
          const auto& sub = reach[index.at(n.term)];
          trials.assign(sub.begin(), sub.end());
        } else {
          trials.push_back(trial_key(n.term.arg(0), n.term.arg(1)));
        }
        for (const auto& t : trials) {
          reach[k].insert(t);
          auto [it, inserted] = owner.emplace(t, part);
          if (!inserted && it->second != part && !flagged && (n.table || te.nodes[it->second].table)) {
            flagged = true;
            r.items.push_back({Severity::Warning, "independence_suspect",
                               "a t-explanation of " + to_string(graph.atoms[k]) + " reaches switch trial " +
                                   to_string(t.arg(0)) + " at " + to_string(t.arg(1)) + " from two parts"});
          }
        }
      }
    }
  }
  return r;
}

std::string format_explanation(const Explanation& e) {
  std::string out = "{";
  for (size_t i = 0; i < e.size(); ++i) out += (i ? ", " : "") + to_string(e[i]);
  return out + "}";
}

std::string format_support_graph(const SupportGraph& graph) {
  std::string out;
  for (size_t k = 0; k < graph.atoms.size(); ++k) {
    out += "tau " + std::to_string(k) + ": " + to_string(graph.atoms[k]) + "  [" +
           std::to_string(graph.explanations[k].size()) + " t-explanations]\n";
    for (const auto& te : graph.explanations[k]) {
      out += "  ";
      for (size_t i = 0; i < te.nodes.size(); ++i)
        out += (i ? " & " : "") + (te.nodes[i].table ? "<" + to_string(te.nodes[i].term) + ">" : to_string(te.nodes[i].term));
      if (te.nodes.empty()) out += "true";
      out += "\n";
    }
  }
  return out;
}

std::string support_graph_dot(const SupportGraph& graph) {
  std::string out = "digraph support {\n  rankdir=LR;\n  node [shape=box];\n";
  for (size_t k = 0; k < graph.atoms.size(); ++k) {
    std::string c = "c" + std::to_string(k);
    out += "  subgraph cluster_" + std::to_string(k) + " {\n";
    out += "    label=\"" + dot_escape(to_string(graph.atoms[k])) + "\";\n";
    out += "    " + c + "_start [shape=point];\n    " + c + "_end [shape=point];\n";
    for (size_t e = 0; e < graph.explanations[k].size(); ++e) {
      const auto& te = graph.explanations[k][e];
      std::string prev = c + "_start";
      for (size_t i = 0; i < te.nodes.size(); ++i) {
        std::string id = c + "_" + std::to_string(e) + "_" + std::to_string(i);
        out += "    " + id + " [label=\"" + dot_escape(to_string(te.nodes[i].term)) + "\"" +
               (te.nodes[i].table ? ", shape=doublecircle" : "") + "];\n";
        out += "    " + prev + " -> " + id + ";\n";
        prev = id;
      }
      out += "    " + prev + " -> " + c + "_end;\n";
    }
    out += "  }\n";
  }
  out += "}\n";
  return out;
}

}  // namespace gem
