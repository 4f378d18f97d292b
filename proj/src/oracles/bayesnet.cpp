#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <numeric>
#include <queue>
#include <sstream>

#include "gem/error.hpp"
#include "gem/oracles.hpp"
#include "text_util.hpp"

namespace gem::oracle {

namespace {

size_t node_index(const BayesNet& b, const std::string& name) {
  for (size_t i = 0; i < b.size(); ++i)
    if (b.names[i] == name) return i;
  throw Error(ErrorCode::InvalidModel, "bayesnet: unknown node '" + name + "'");
}

std::vector<double> random_row(size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> row(k);
  double sum = 0;
  for (auto& x : row) sum += (x = u(rng));
  for (auto& x : row) x /= sum;
  return row;
}

void random_cpts(BayesNet& b, std::mt19937_64& rng) {
  b.cpt.assign(b.size(), {});
  for (size_t i = 0; i < b.size(); ++i)
    for (size_t c = 0; c < b.configurations(i); ++c) {
      auto row = random_row(b.values[i].size(), rng);
      b.cpt[i].insert(b.cpt[i].end(), row.begin(), row.end());
    }
}

BayesNet binary_nodes(size_t nodes) {
  BayesNet b;
  for (size_t i = 0; i < nodes; ++i) {
    b.names.push_back("x" + std::to_string(i + 1));
    b.values.push_back({"t", "f"});
  }
  b.parents.assign(nodes, {});
  return b;
}

std::string var_of(const std::string& name) {
  std::string v = name;
  v[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(v[0])));
  return v;
}

std::string list_of(const std::vector<std::string>& xs) {
  std::string s = "[";
  for (size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + xs[i];
  return s + "]";
}

std::string value_declarations(const BayesNet& b) {
  std::ostringstream out;
  for (size_t i = 0; i < b.size(); ++i) {
    std::vector<std::string> anon(b.parents[i].size(), "_");
    out << "values(par(" << b.names[i] << ", " << list_of(anon) << "), " << list_of(b.values[i]) << ").\n";
  }
  return out.str();
}

Program parse_with_params(const BayesNet& b, const std::string& text) {
  Program p = parse_program(text);
  p.params = bn_parameters(b, p);
  return p;
}

}  // namespace

size_t BayesNet::configurations(size_t node) const {
  size_t c = 1;
  for (size_t p : parents[node]) c *= values[p].size();
  return c;
}

size_t BayesNet::config_index(size_t node, const std::vector<int>& assignment) const {
  size_t c = 0;
  for (size_t p : parents[node]) c = c * values[p].size() + static_cast<size_t>(assignment[p]);
  return c;
}

std::vector<size_t> BayesNet::topological_order() const {
  std::vector<size_t> indegree(size());
  std::vector<std::vector<size_t>> children(size());
  for (size_t i = 0; i < size(); ++i)
    for (size_t p : parents[i]) {
      ++indegree[i];
      children[p].push_back(i);
    }
  std::priority_queue<size_t, std::vector<size_t>, std::greater<>> ready;
  for (size_t i = 0; i < size(); ++i)
    if (indegree[i] == 0) ready.push(i);
  std::vector<size_t> order;
  while (!ready.empty()) {
    size_t i = ready.top();
    ready.pop();
    order.push_back(i);
    for (size_t c : children[i])
      if (--indegree[c] == 0) ready.push(c);
  }
  if (order.size() != size()) throw Error(ErrorCode::InvalidModel, "bayesnet: graph has a directed cycle");
  return order;
}

BayesNet parse_bayesnet(std::string_view text) {
  BayesNet b;
  std::vector<std::vector<std::string>> parent_names;
  std::vector<std::vector<std::string>> cpt_lines;
  for (auto& line : detail::split_lines(text)) {
    auto w = detail::split_words(line);
    if (w.empty()) continue;
    if (w[0] == "node" && w.size() >= 3) {
      auto bar = std::find(w.begin(), w.end(), "|");
      b.names.push_back(w[1]);
      b.values.emplace_back(w.begin() + 2, bar);
      parent_names.emplace_back(bar == w.end() ? bar : bar + 1, w.end());
      if (b.values.back().empty()) throw Error(ErrorCode::InvalidModel, "bayesnet: node '" + w[1] + "' has no values");
    } else if (w[0] == "cpt" && w.size() >= 3) {
      cpt_lines.push_back(w);
    } else {
      throw Error(ErrorCode::Syntax, "bayesnet: unrecognized line '" + line + "'");
    }
  }
  for (auto& ps : parent_names) {
    b.parents.emplace_back();
    for (auto& name : ps) b.parents.back().push_back(node_index(b, name));
  }
  (void)b.topological_order();

  b.cpt.resize(b.size());
  for (size_t i = 0; i < b.size(); ++i) b.cpt[i].assign(b.configurations(i) * b.values[i].size(), -1.0);
  for (auto& w : cpt_lines) {
    size_t i = node_index(b, w[1]);
    auto colon = std::find(w.begin(), w.end(), ":");
    if (colon == w.end()) throw Error(ErrorCode::Syntax, "bayesnet: cpt line for '" + w[1] + "' lacks ':'");
    std::vector<std::string> config(w.begin() + 2, colon);
    if (config.size() != b.parents[i].size())
      throw Error(ErrorCode::InvalidModel, "bayesnet: cpt line for '" + w[1] + "' has wrong parent count");
    size_t c = 0;
    for (size_t k = 0; k < config.size(); ++k) {
      const auto& pv = b.values[b.parents[i][k]];
      auto it = std::find(pv.begin(), pv.end(), config[k]);
      if (it == pv.end()) throw Error(ErrorCode::InvalidModel, "bayesnet: unknown parent value '" + config[k] + "'");
      c = c * pv.size() + static_cast<size_t>(it - pv.begin());
    }
    auto row = detail::parse_doubles(w, static_cast<size_t>(colon - w.begin()) + 1);
    if (row.size() != b.values[i].size())
      throw Error(ErrorCode::InvalidModel, "bayesnet: cpt row for '" + w[1] + "' has wrong length");
    std::copy(row.begin(), row.end(), b.cpt[i].begin() + static_cast<long>(c * row.size()));
  }
  for (size_t i = 0; i < b.size(); ++i) {
    size_t k = b.values[i].size();
    for (size_t c = 0; c < b.configurations(i); ++c) {
      double sum = 0;
      for (size_t v = 0; v < k; ++v) {
        double x = b.cpt[i][c * k + v];
        if (x < 0.0) throw Error(ErrorCode::InvalidModel, "bayesnet: missing cpt row for '" + b.names[i] + "'");
        sum += x;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw Error(ErrorCode::InvalidModel, "bayesnet: cpt row for '" + b.names[i] + "' does not sum to 1");
    }
  }
  return b;
}

std::string print_bayesnet(const BayesNet& b) {
  std::ostringstream out;
  for (size_t i = 0; i < b.size(); ++i) {
    out << "node " << b.names[i];
    for (auto& v : b.values[i]) out << ' ' << v;
    if (!b.parents[i].empty()) {
      out << " |";
      for (size_t p : b.parents[i]) out << ' ' << b.names[p];
    }
    out << '\n';
  }
  for (size_t i = 0; i < b.size(); ++i) {
    size_t k = b.values[i].size();
    for (size_t c = 0; c < b.configurations(i); ++c) {
      out << "cpt " << b.names[i];
      size_t rest = c;
      std::vector<std::string> config(b.parents[i].size());
      for (size_t q = b.parents[i].size(); q-- > 0;) {
        const auto& pv = b.values[b.parents[i][q]];
        config[q] = pv[rest % pv.size()];
        rest /= pv.size();
      }
      for (auto& v : config) out << ' ' << v;
      out << " :";
      for (size_t v = 0; v < k; ++v) out << ' ' << detail::format_double(b.cpt[i][c * k + v]);
      out << '\n';
    }
  }
  return out.str();
}

BayesNet random_dag(size_t nodes, double edge_prob, size_t max_parents, std::mt19937_64& rng) {
  BayesNet b = binary_nodes(nodes);
  std::bernoulli_distribution edge(edge_prob);
  for (size_t i = 1; i < nodes; ++i) {
    std::vector<size_t> order(i);
    std::iota(order.begin(), order.end(), size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t j : order)
      if (b.parents[i].size() < max_parents && edge(rng)) b.parents[i].push_back(j);
    std::sort(b.parents[i].begin(), b.parents[i].end());
  }
  random_cpts(b, rng);
  return b;
}

BayesNet random_polytree(size_t nodes, std::mt19937_64& rng) {
  BayesNet b = binary_nodes(nodes);
  std::bernoulli_distribution down(0.5);
  for (size_t i = 1; i < nodes; ++i) {
    size_t j = std::uniform_int_distribution<size_t>(0, i - 1)(rng);
    if (down(rng))
      b.parents[i].push_back(j);
    else
      b.parents[j].push_back(i);
  }
  random_cpts(b, rng);
  return b;
}

BayesNet random_chain(size_t nodes, std::mt19937_64& rng) {
  BayesNet b = binary_nodes(nodes);
  for (size_t i = 1; i < nodes; ++i) b.parents[i].push_back(i - 1);
  random_cpts(b, rng);
  return b;
}

double bn_joint(const BayesNet& b, const std::vector<int>& assignment) {
  double p = 1.0;
  for (size_t i = 0; i < b.size(); ++i)
    p *= b.cpt[i][b.config_index(i, assignment) * b.values[i].size() + static_cast<size_t>(assignment[i])];
  return p;
}

double bn_joint_enumerate(const BayesNet& b, const std::vector<int>& partial, size_t max_states) {
  std::vector<size_t> free;
  size_t states = 1;
  for (size_t i = 0; i < b.size(); ++i)
    if (partial[i] < 0) {
      free.push_back(i);
      states *= b.values[i].size();
      if (states > max_states) throw Error(ErrorCode::EnumerationCap, "bayesnet: enumeration exceeds state cap");
    }
  std::vector<int> a = partial;
  for (size_t i : free) a[i] = 0;
  double sum = 0;
  while (true) {
    sum += bn_joint(b, a);
    size_t k = 0;
    for (; k < free.size(); ++k) {
      size_t i = free[k];
      if (static_cast<size_t>(++a[i]) < b.values[i].size()) break;
      a[i] = 0;
    }
    if (k == free.size()) break;
  }
  return sum;
}

std::string encode_bn_text(const BayesNet& b) {
  std::ostringstream out;
  out << value_declarations(b) << "\nbn(";
  for (size_t i = 0; i < b.size(); ++i) out << (i ? "," : "") << var_of(b.names[i]);
  out << ") :-";
  auto order = b.topological_order();
  for (size_t k = 0; k < order.size(); ++k) {
    size_t i = order[k];
    std::vector<std::string> pv;
    for (size_t p : b.parents[i]) pv.push_back(var_of(b.names[p]));
    out << (k ? ",\n    " : "\n    ") << "msw(par(" << b.names[i] << ", " << list_of(pv) << "), once, "
        << var_of(b.names[i]) << ")";
  }
  out << ".\n";
  return out.str();
}

Program encode_bn(const BayesNet& b) { return parse_with_params(b, encode_bn_text(b)); }

std::string marginal_clause(const BayesNet& b, const std::vector<size_t>& keep) {
  std::ostringstream out;
  out << "marg(";
  for (size_t k = 0; k < keep.size(); ++k) out << (k ? "," : "") << var_of(b.names[keep[k]]);
  out << ") :- bn(";
  for (size_t i = 0; i < b.size(); ++i) out << (i ? "," : "") << var_of(b.names[i]);
  out << ").\n";
  return out.str();
}

Term bn_goal(const BayesNet& b, const std::vector<int>& assignment) {
  std::vector<Term> args;
  for (size_t i = 0; i < b.size(); ++i) args.push_back(Term::constant(b.values[i][static_cast<size_t>(assignment[i])]));
  return Term::compound("bn", args);
}

Term marginal_goal(const BayesNet& b, const std::vector<size_t>& keep, const std::vector<int>& values) {
  std::vector<Term> args;
  for (size_t k = 0; k < keep.size(); ++k)
    args.push_back(Term::constant(b.values[keep[k]][static_cast<size_t>(values[k])]));
  return Term::compound("marg", args);
}

std::string compile_bn_polytree_text(const BayesNet& b, size_t evidence_node) {
  const size_t n = b.size();
  std::vector<std::vector<size_t>> children(n);
  std::vector<size_t> root(n);
  std::iota(root.begin(), root.end(), size_t{0});
  std::function<size_t(size_t)> find = [&](size_t x) { return root[x] == x ? x : root[x] = find(root[x]); };
  for (size_t i = 0; i < n; ++i)
    for (size_t p : b.parents[i]) {
      children[p].push_back(i);
      size_t a = find(p), c = find(i);
      if (a == c) throw Error(ErrorCode::InvalidModel, "bayesnet: network is multiply connected");
      root[a] = c;
    }

  auto var = [](size_t node) { return "V" + std::to_string(node + 1); };
  auto call = [&](size_t from, size_t to) { return "call_" + b.names[from] + "_" + b.names[to]; };

  std::ostringstream clauses;
  std::vector<std::string> tabled{"tbn/1"};
  std::vector<bool> seen(n, false);

  // Body visiting node z, coming from neighbor `from` (n for the root).
  std::function<std::string(size_t, size_t)> body = [&](size_t z, size_t from) {
    seen[z] = true;
    std::vector<std::string> lits;
    std::vector<std::string> pv;
    for (size_t p : b.parents[z]) {
      pv.push_back(var(p));
      if (p == from) continue;
      lits.push_back("val_" + b.names[p] + "(" + var(p) + ")");
      lits.push_back(call(z, p) + "(" + var(p) + ")");
    }
    lits.push_back("msw(par(" + b.names[z] + ", " + list_of(pv) + "), once, " + var(z) + ")");
    for (size_t c : children[z])
      if (c != from) lits.push_back(call(z, c) + "(" + var(z) + ")");
    std::string s;
    for (size_t k = 0; k < lits.size(); ++k) s += (k ? ", " : "") + lits[k];
    return s;
  };

  std::function<void(size_t, size_t)> emit = [&](size_t from, size_t z) {
    bool z_is_child = std::find(b.parents[z].begin(), b.parents[z].end(), from) != b.parents[z].end();
    std::string arg = z_is_child ? var(from) : var(z);
    tabled.push_back(call(from, z) + "/1");
    clauses << call(from, z) << "(" << arg << ") :- " << body(z, from) << ".\n";
    for (size_t p : b.parents[z])
      if (p != from) emit(z, p);
    for (size_t c : children[z])
      if (c != from) emit(z, c);
  };

  clauses << "tbn(" << var(evidence_node) << ") :- " << body(evidence_node, n) << ".\n";
  for (size_t p : b.parents[evidence_node]) emit(evidence_node, p);
  for (size_t c : children[evidence_node]) emit(evidence_node, c);

  std::ostringstream out;
  out << value_declarations(b) << "\n:- table ";
  for (size_t k = 0; k < tabled.size(); ++k) out << (k ? ", " : "") << tabled[k];
  out << ".\n\n" << clauses.str() << '\n';
  for (size_t i = 0; i < n; ++i)
    if (seen[i])
      for (auto& v : b.values[i]) out << "val_" << b.names[i] << "(" << v << ").\n";
  return out.str();
}

Program compile_bn_polytree(const BayesNet& b, size_t evidence_node) {
  return parse_with_params(b, compile_bn_polytree_text(b, evidence_node));
}

Term polytree_goal(const BayesNet& b, size_t evidence_node, int value) {
  return Term::compound("tbn", {Term::constant(b.values[evidence_node][static_cast<size_t>(value)])});
}

ParameterStore bn_parameters(const BayesNet& b, const Program& p) {
  ParameterStore store = p.params;
  for (size_t i = 0; i < b.size(); ++i) {
    size_t k = b.values[i].size();
    for (size_t c = 0; c < b.configurations(i); ++c) {
      std::vector<Term> config(b.parents[i].size());
      size_t rest = c;
      for (size_t q = b.parents[i].size(); q-- > 0;) {
        const auto& pv = b.values[b.parents[i][q]];
        config[q] = Term::constant(pv[rest % pv.size()]);
        rest /= pv.size();
      }
      Term name = Term::compound("par", {Term::constant(b.names[i]), Term::list(config)});
      store.set_row(name, std::vector<double>(b.cpt[i].begin() + static_cast<long>(c * k),
                                              b.cpt[i].begin() + static_cast<long>((c + 1) * k)));
    }
  }
  return store;
}

}  // namespace gem::oracle
