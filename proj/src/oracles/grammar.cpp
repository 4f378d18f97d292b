#include <algorithm>
#include <cmath>
#include <sstream>

#include "gem/error.hpp"
#include "gem/oracles.hpp"
#include "text_util.hpp"

namespace gem::oracle {

namespace {

bool is_number(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

size_t nonterminal(const CnfGrammar& g, const std::string& s) {
  if (!is_number(s)) throw Error(ErrorCode::Syntax, "grammar: expected nonterminal number, got '" + s + "'");
  size_t i = std::stoul(s);
  if (i < 1 || i > g.n) throw Error(ErrorCode::InvalidModel, "grammar: nonterminal " + s + " out of range");
  return i - 1;
}

// Chart of inside probabilities; e[(s*(L+1) + t)*n + i] for the span [s,t).
struct Chart {
  size_t len = 0, n = 0;
  std::vector<double> cells;
  double& at(size_t s, size_t t, size_t i) { return cells[(s * (len + 1) + t) * n + i]; }
};

Chart inside_chart(const CnfGrammar& g, const std::vector<int>& words) {
  Chart e{words.size(), g.n, std::vector<double>((words.size() + 1) * (words.size() + 1) * g.n, 0.0)};
  const size_t len = words.size(), n = g.n;
  for (size_t s = 0; s < len; ++s)
    for (size_t i = 0; i < n; ++i) e.at(s, s + 1, i) = g.lex(i, static_cast<size_t>(words[s]));
  for (size_t width = 2; width <= len; ++width)
    for (size_t s = 0; s + width <= len; ++s) {
      size_t t = s + width;
      for (size_t i = 0; i < n; ++i) {
        double sum = 0;
        for (size_t j = 0; j < n; ++j)
          for (size_t k = 0; k < n; ++k) {
            double r = g.rule(i, j, k);
            if (r == 0.0) continue;
            for (size_t m = s + 1; m < t; ++m) sum += r * e.at(s, m, j) * e.at(m, t, k);
          }
        e.at(s, t, i) = sum;
      }
    }
  return e;
}

}  // namespace

CnfGrammar parse_grammar(std::string_view text) {
  CnfGrammar g;
  bool have_terminals = false;
  struct Pending {
    std::vector<std::string> words;
    std::string line;
  };
  std::vector<Pending> rules;
  for (auto& line : detail::split_lines(text)) {
    auto w = detail::split_words(line);
    if (w.empty()) continue;
    if (w[0] == "nonterminals" && w.size() == 2 && is_number(w[1])) {
      g.n = std::stoul(w[1]);
    } else if (w[0] == "terminals") {
      g.terminals.assign(w.begin() + 1, w.end());
      have_terminals = true;
    } else if (w[0] == "rule" && (w.size() == 5 || w.size() == 6) && w[2] == "->") {
      rules.push_back({w, line});
    } else {
      throw Error(ErrorCode::Syntax, "grammar: unrecognized line '" + line + "'");
    }
  }
  if (g.n == 0 || !have_terminals || g.terminals.empty())
    throw Error(ErrorCode::InvalidModel, "grammar: nonterminals and terminals are required");
  for (auto& t : g.terminals)
    if (is_number(t)) throw Error(ErrorCode::InvalidModel, "grammar: terminal '" + t + "' looks like a nonterminal");
  g.binary.assign(g.n * g.n * g.n, 0.0);
  g.lexical.assign(g.n * g.terminals.size(), 0.0);
  for (auto& r : rules) {
    size_t i = nonterminal(g, r.words[1]);
    double p = detail::parse_double(r.words.back());
    if (r.words.size() == 6) {
      g.rule(i, nonterminal(g, r.words[3]), nonterminal(g, r.words[4])) = p;
    } else {
      auto it = std::find(g.terminals.begin(), g.terminals.end(), r.words[3]);
      if (it == g.terminals.end()) throw Error(ErrorCode::InvalidModel, "grammar: unknown terminal in '" + r.line + "'");
      g.lex(i, static_cast<size_t>(it - g.terminals.begin())) = p;
    }
  }
  for (size_t i = 0; i < g.n; ++i) {
    double sum = 0;
    for (size_t j = 0; j < g.n * g.n; ++j) sum += g.binary[i * g.n * g.n + j];
    for (size_t w = 0; w < g.terminals.size(); ++w) sum += g.lex(i, w);
    if (std::abs(sum - 1.0) > 1e-9)
      throw Error(ErrorCode::InvalidModel, "grammar: rules of nonterminal " + std::to_string(i + 1) + " do not sum to 1");
  }
  return g;
}

std::string print_grammar(const CnfGrammar& g) {
  std::ostringstream out;
  out << "nonterminals " << g.n << "\nterminals";
  for (auto& t : g.terminals) out << ' ' << t;
  out << '\n';
  for (size_t i = 0; i < g.n; ++i) {
    for (size_t j = 0; j < g.n; ++j)
      for (size_t k = 0; k < g.n; ++k)
        if (g.rule(i, j, k) != 0.0)
          out << "rule " << i + 1 << " -> " << j + 1 << ' ' << k + 1 << ' ' << detail::format_double(g.rule(i, j, k))
              << '\n';
    for (size_t w = 0; w < g.terminals.size(); ++w)
      if (g.lex(i, w) != 0.0) out << "rule " << i + 1 << " -> " << g.terminals[w] << ' ' << detail::format_double(g.lex(i, w)) << '\n';
  }
  return out.str();
}

CnfGrammar random_grammar(size_t nonterminals, size_t terminals, double binary_mass, std::mt19937_64& rng) {
  CnfGrammar g;
  g.n = nonterminals;
  for (size_t w = 0; w < terminals; ++w) g.terminals.push_back(std::string(1, static_cast<char>('a' + w)));
  g.binary.assign(g.n * g.n * g.n, 0.0);
  g.lexical.assign(g.n * terminals, 0.0);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (size_t i = 0; i < g.n; ++i) {
    double mass = binary_mass * std::uniform_real_distribution<double>(0.5, 1.0)(rng);
    double bsum = 0, lsum = 0;
    for (size_t j = 0; j < g.n * g.n; ++j) bsum += (g.binary[i * g.n * g.n + j] = u(rng));
    for (size_t w = 0; w < terminals; ++w) lsum += (g.lex(i, w) = u(rng));
    for (size_t j = 0; j < g.n * g.n; ++j) g.binary[i * g.n * g.n + j] *= mass / bsum;
    for (size_t w = 0; w < terminals; ++w) g.lex(i, w) *= (1.0 - mass) / lsum;
  }
  return g;
}

std::vector<int> sample_sentence(const CnfGrammar& g, std::mt19937_64& rng, size_t max_nodes) {
  std::vector<int> words;
  std::vector<size_t> stack{0};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  size_t nodes = 0;
  const size_t nn = g.n * g.n, nt = g.terminals.size();
  while (!stack.empty()) {
    if (++nodes > max_nodes) return {};
    size_t i = stack.back();
    stack.pop_back();
    double r = u(rng);
    size_t pick = nn + nt - 1;
    for (size_t c = 0; c < nn + nt; ++c) {
      double p = c < nn ? g.binary[i * nn + c] : g.lex(i, c - nn);
      if (r < p) {
        pick = c;
        break;
      }
      r -= p;
    }
    if (pick < nn) {
      stack.push_back(pick % g.n);
      stack.push_back(pick / g.n);
    } else {
      words.push_back(static_cast<int>(pick - nn));
    }
  }
  return words;
}

double sentence_probability(const CnfGrammar& g, const std::vector<int>& words) {
  if (words.empty()) return 0.0;
  Chart e = inside_chart(g, words);
  return e.at(0, words.size(), 0);
}

GrammarStep inside_outside_step(const CnfGrammar& g, const std::vector<Sentence>& data) {
  const size_t n = g.n, nt = g.terminals.size();
  std::vector<double> bin_count(n * n * n, 0.0), lex_count(n * nt, 0.0);
  double loglik = 0.0;

  for (const auto& sent : data) {
    const size_t len = sent.words.size();
    if (len == 0) throw Error(ErrorCode::InvalidModel, "inside-outside: empty sentence");
    Chart e = inside_chart(g, sent.words);
    double prob = e.at(0, len, 0);
    if (!(prob > 0.0)) throw Error(ErrorCode::ZeroProbability, "inside-outside: sentence has zero probability");
    loglik += static_cast<double>(sent.count) * std::log(prob);

    Chart f{len, n, std::vector<double>(e.cells.size(), 0.0)};
    f.at(0, len, 0) = 1.0;
    for (size_t width = len; width >= 2; --width)
      for (size_t s = 0; s + width <= len; ++s) {
        size_t t = s + width;
        for (size_t i = 0; i < n; ++i) {
          double out = f.at(s, t, i);
          if (out == 0.0) continue;
          for (size_t j = 0; j < n; ++j)
            for (size_t k = 0; k < n; ++k) {
              double r = g.rule(i, j, k);
              if (r == 0.0) continue;
              for (size_t m = s + 1; m < t; ++m) {
                f.at(s, m, j) += out * r * e.at(m, t, k);
                f.at(m, t, k) += out * r * e.at(s, m, j);
              }
            }
        }
      }

    const double w = static_cast<double>(sent.count) / prob;
    for (size_t width = 2; width <= len; ++width)
      for (size_t s = 0; s + width <= len; ++s) {
        size_t t = s + width;
        for (size_t i = 0; i < n; ++i) {
          double out = f.at(s, t, i);
          if (out == 0.0) continue;
          for (size_t j = 0; j < n; ++j)
            for (size_t k = 0; k < n; ++k) {
              double r = g.rule(i, j, k);
              if (r == 0.0) continue;
              double acc = 0;
              for (size_t m = s + 1; m < t; ++m) acc += e.at(s, m, j) * e.at(m, t, k);
              bin_count[(i * n + j) * n + k] += w * out * r * acc;
            }
        }
      }
    for (size_t s = 0; s < len; ++s) {
      size_t word = static_cast<size_t>(sent.words[s]);
      for (size_t i = 0; i < n; ++i) lex_count[i * nt + word] += w * f.at(s, s + 1, i) * g.lex(i, word);
    }
  }

  GrammarStep step{g, loglik};
  for (size_t i = 0; i < n; ++i) {
    double sum = 0;
    for (size_t j = 0; j < n * n; ++j) sum += bin_count[i * n * n + j];
    for (size_t w = 0; w < nt; ++w) sum += lex_count[i * nt + w];
    if (sum <= 0.0) continue;
    for (size_t j = 0; j < n * n; ++j) step.updated.binary[i * n * n + j] = bin_count[i * n * n + j] / sum;
    for (size_t w = 0; w < nt; ++w) step.updated.lex(i, w) = lex_count[i * nt + w] / sum;
  }
  return step;
}

std::string pcfg_program(const CnfGrammar& g, PcfgForm form) {
  std::ostringstream out;
  out << "values(nt(_), [";
  bool first = true;
  for (size_t j = 1; j <= g.n; ++j)
    for (size_t k = 1; k <= g.n; ++k) {
      out << (first ? "" : ",") << '[' << j << ',' << k << ']';
      first = false;
    }
  for (auto& t : g.terminals) out << ',' << t;
  out << "]).\n\n";
  if (form == PcfgForm::Counter) {
    out << ":- table pcfg/1, q/5.\n\n"
        << "pcfg(Ws) :- length(Ws, L), q(1, 0, L, 0, Ws).\n"
        << "q(I, D0, D2, C0, Ws) :- between(D0, D1, D2), msw(nt(I), C0, [J,K]),\n"
        << "    CL is C0+1, CR is C0+2*(D1-D0), q(J, D0, D1, CL, Ws), q(K, D1, D2, CR, Ws).\n"
        << "q(I, D0, D2, C0, Ws) :- D2 =:= D0+1, word(D0, Ws, W), msw(nt(I), C0, W).\n\n";
  } else {
    out << ":- table pcfg/1, q/4.\n\n"
        << "pcfg(Ws) :- length(Ws, L), q(1, 0, L, Ws).\n"
        << "q(I, D0, D2, Ws) :- between(D0, D1, D2), msw(nt(I), [D0,D2], [J,K]),\n"
        << "    q(J, D0, D1, Ws), q(K, D1, D2, Ws).\n"
        << "q(I, D0, D2, Ws) :- D2 =:= D0+1, word(D0, Ws, W), msw(nt(I), D0, W).\n\n";
  }
  out << "word(0, [W|_], W).\n"
      << "word(N, [_|Ws], W) :- N > 0, N1 is N-1, word(N1, Ws, W).\n";
  if (form == PcfgForm::Counter) {
    out << "\ngen(Ws) :- gen(1, 0, _, Ws, []).\n"
        << "gen(I, C0, C2, Ws, Rest) :- msw(nt(I), C0, V), expand(V, C0, C2, Ws, Rest).\n"
        << "expand([J,K], C0, C2, Ws, Rest) :- C1 is C0+1, gen(J, C1, CM, Ws, Mid), gen(K, CM, C2, Mid, Rest).\n"
        << "expand(W, C0, C2, [W|Rest], Rest) :- terminal(W), C2 is C0+1.\n\n";
    for (auto& t : g.terminals) out << "terminal(" << t << ").\n";
  }
  return out.str();
}

ParameterStore pcfg_parameters(const CnfGrammar& g, const Program& p) {
  ParameterStore store = p.params;
  for (size_t i = 0; i < g.n; ++i) {
    std::vector<double> row(g.binary.begin() + static_cast<long>(i * g.n * g.n),
                            g.binary.begin() + static_cast<long>((i + 1) * g.n * g.n));
    for (size_t w = 0; w < g.terminals.size(); ++w) row.push_back(g.lex(i, w));
    store.set_row(Term::compound("nt", {Term::integer(static_cast<int64_t>(i + 1))}), row);
  }
  return store;
}

Term pcfg_goal(const CnfGrammar& g, const std::vector<int>& words) {
  std::vector<Term> items;
  for (int w : words) items.push_back(Term::constant(g.terminals.at(static_cast<size_t>(w))));
  return Term::compound("pcfg", {Term::list(items)});
}

}  // namespace gem::oracle
