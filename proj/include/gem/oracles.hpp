#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "gem/program.hpp"

// Reference algorithms on their own flat arrays. Nothing here calls the
// explainer or em-core, so agreement with them is evidence, not tautology.
namespace gem::oracle {

// ---------------------------------------------------------------------------
// Hidden Markov models

/// Text format, one directive per line:
///   states s0 s1
///   alphabet a b
///   init 0.5 0.5
///   trans s0 0.7 0.3        (one line per state)
///   emit s0 0.9 0.1         (one line per state)
struct HmmSpec {
  std::vector<std::string> states;
  std::vector<std::string> alphabet;
  std::vector<double> init;                // [N]
  std::vector<std::vector<double>> trans;  // [N][N]
  std::vector<std::vector<double>> emit;   // [N][M]
};

struct HmmString {
  std::vector<int> symbols;
  int64_t count = 1;
};

HmmSpec parse_hmm(std::string_view text);
std::string print_hmm(const HmmSpec& h);
HmmSpec random_hmm(size_t states, size_t symbols, std::mt19937_64& rng);
std::vector<int> sample_hmm(const HmmSpec& h, size_t length, std::mt19937_64& rng);

struct HmmStep {
  HmmSpec updated;
  double loglik = 0.0;  // before the update
};

/// One Baum-Welch iteration. Each string of length L is generated with L
/// emissions and L transitions, the last transition unobserved.
HmmStep baum_welch_step(const HmmSpec& h, const std::vector<HmmString>& data);

/// Tabled HMM program for strings of length `length` (switches init, out(S), tr(S)).
std::string hmm_program(const HmmSpec& h, size_t length);
ParameterStore hmm_parameters(const HmmSpec& h, const Program& p);
HmmSpec hmm_from_parameters(const HmmSpec& shape, const ParameterStore& store);
Term hmm_goal(const HmmSpec& h, const std::vector<int>& symbols);

// ---------------------------------------------------------------------------
// CNF grammars

/// Text format:
///   nonterminals 2
///   terminals a b
///   rule 1 -> 1 2 0.25
///   rule 2 -> a 0.5
/// Nonterminals are numbered 1..N; 1 is the start symbol. Unlisted rules
/// have probability 0.
struct CnfGrammar {
  size_t n = 0;
  std::vector<std::string> terminals;
  std::vector<double> binary;   // [i][j][k] at (i*n + j)*n + k, zero-based
  std::vector<double> lexical;  // [i][w] at i*W + w

  [[nodiscard]] double& rule(size_t i, size_t j, size_t k) { return binary[(i * n + j) * n + k]; }
  [[nodiscard]] double rule(size_t i, size_t j, size_t k) const { return binary[(i * n + j) * n + k]; }
  [[nodiscard]] double& lex(size_t i, size_t w) { return lexical[i * terminals.size() + w]; }
  [[nodiscard]] double lex(size_t i, size_t w) const { return lexical[i * terminals.size() + w]; }
};

struct Sentence {
  std::vector<int> words;
  int64_t count = 1;
};

CnfGrammar parse_grammar(std::string_view text);
std::string print_grammar(const CnfGrammar& g);
/// Random grammar whose binary mass per nonterminal is at most `binary_mass`.
CnfGrammar random_grammar(size_t nonterminals, size_t terminals, double binary_mass, std::mt19937_64& rng);
/// Leftmost derivation from the start symbol; empty when deeper than `max_nodes`.
std::vector<int> sample_sentence(const CnfGrammar& g, std::mt19937_64& rng, size_t max_nodes = 10000);

/// Sentence probability by CKY-style inside recursion.
double sentence_probability(const CnfGrammar& g, const std::vector<int>& words);

struct GrammarStep {
  CnfGrammar updated;
  double loglik = 0.0;  // before the update
};

/// One Inside-Outside iteration. Nonterminals with no expected use keep
/// their rule probabilities.
GrammarStep inside_outside_step(const CnfGrammar& g, const std::vector<Sentence>& data);

enum class PcfgForm {
  Counter,  // trial ids are preorder positions in the derivation; sampling supported
  Span,     // trial ids are spans [D0,D2] (binary) and positions D (lexical)
};

/// Parsing program with goal pcfg(Words); the Counter form also defines
/// gen(Words) for sampling sentences.
std::string pcfg_program(const CnfGrammar& g, PcfgForm form);
ParameterStore pcfg_parameters(const CnfGrammar& g, const Program& p);
Term pcfg_goal(const CnfGrammar& g, const std::vector<int>& words);

// ---------------------------------------------------------------------------
// Bayesian networks

/// Text format:
///   node a t f                   (name, values)
///   node d t f | a b             (parents after '|')
///   cpt a : 0.3 0.7
///   cpt d t f : 0.9 0.1          (parent values, then the row)
/// Node names and values are lowercase identifiers.
struct BayesNet {
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> values;
  std::vector<std::vector<size_t>> parents;
  /// Per node: rows for every parent configuration (first parent most
  /// significant), each row over the node's values.
  std::vector<std::vector<double>> cpt;

  [[nodiscard]] size_t size() const { return names.size(); }
  [[nodiscard]] size_t configurations(size_t node) const;
  [[nodiscard]] size_t config_index(size_t node, const std::vector<int>& assignment) const;
  [[nodiscard]] std::vector<size_t> topological_order() const;
};

BayesNet parse_bayesnet(std::string_view text);
std::string print_bayesnet(const BayesNet& b);
/// Random dag over binary nodes; node i draws each earlier node as a parent
/// with probability `edge_prob`, up to `max_parents`.
BayesNet random_dag(size_t nodes, double edge_prob, size_t max_parents, std::mt19937_64& rng);
/// Random singly connected network over binary nodes.
BayesNet random_polytree(size_t nodes, std::mt19937_64& rng);
/// x1 -> x2 -> ... -> xn over binary nodes.
BayesNet random_chain(size_t nodes, std::mt19937_64& rng);

/// Product of CPT entries for a full assignment.
double bn_joint(const BayesNet& b, const std::vector<int>& assignment);
/// Marginal of a partial assignment (-1 = unassigned) by full enumeration.
double bn_joint_enumerate(const BayesNet& b, const std::vector<int>& partial, size_t max_states = 1u << 22);

/// bn(X1,...,XN) :- msw(par(Node, Parents), once, Xi), ... in topological order.
std::string encode_bn_text(const BayesNet& b);
Program encode_bn(const BayesNet& b);
/// `marg(Xi,...) :- bn(X1,...,XN).` keeping the listed nodes.
std::string marginal_clause(const BayesNet& b, const std::vector<size_t>& keep);
Term bn_goal(const BayesNet& b, const std::vector<int>& assignment);
Term marginal_goal(const BayesNet& b, const std::vector<size_t>& keep, const std::vector<int>& values);

/// Tabled program whose tbn(U) is the marginal of `evidence_node`: the tree
/// is rooted at that node and every edge direction gets a call_X_Y/1 clause.
std::string compile_bn_polytree_text(const BayesNet& b, size_t evidence_node);
Program compile_bn_polytree(const BayesNet& b, size_t evidence_node);
Term polytree_goal(const BayesNet& b, size_t evidence_node, int value);

/// Parameter rows par(Node, [ParentValues]) from the CPTs.
ParameterStore bn_parameters(const BayesNet& b, const Program& p);

}  // namespace gem::oracle
