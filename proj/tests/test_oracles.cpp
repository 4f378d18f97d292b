#include <doctest.h>

#include <cmath>

#include "gem/em.hpp"
#include "gem/error.hpp"
#include "gem/oracles.hpp"
#include "gem/sampler.hpp"
#include "support.hpp"

using namespace gem;
using namespace gem::oracle;
using testing::T;

namespace {

LearnConfig fixed_iterations(size_t n) {
  LearnConfig cfg;
  cfg.max_iterations = n;
  cfg.run_all_iterations = true;
  cfg.record_history = true;
  return cfg;
}

double hmm_distance(const HmmSpec& a, const HmmSpec& b) {
  double d = testing::max_abs_diff(a.init, b.init);
  for (size_t s = 0; s < a.states.size(); ++s) {
    d = std::max(d, testing::max_abs_diff(a.trans[s], b.trans[s]));
    d = std::max(d, testing::max_abs_diff(a.emit[s], b.emit[s]));
  }
  return d;
}

}  // namespace

TEST_CASE("baum-welch on a uniform two-state model") {
  HmmSpec h = parse_hmm("states s0 s1\nalphabet a b\ninit 0.5 0.5\ntrans s0 0.5 0.5\ntrans s1 0.5 0.5\n"
                        "emit s0 0.5 0.5\nemit s1 0.5 0.5\n");
  HmmStep step = baum_welch_step(h, {{{0, 1, 0}, 1}});
  CHECK(std::abs(step.loglik - std::log(1.0 / 8.0)) <= 1e-15);
}

TEST_CASE("baum-welch with deterministic emissions") {
  HmmSpec h = parse_hmm("states s0 s1\nalphabet a b\ninit 0.4 0.6\ntrans s0 0.3 0.7\ntrans s1 0.5 0.5\n"
                        "emit s0 1 0\nemit s1 0 1\n");
  HmmStep step = baum_welch_step(h, {{{0, 0, 0}, 2}});
  CHECK(step.updated.init == std::vector<double>{1.0, 0.0});
  CHECK(step.updated.emit[0] == std::vector<double>{1.0, 0.0});
  // two observed s0->s0 steps plus the unobserved final move from s0
  CHECK(std::abs(step.updated.trans[0][0] - (2 + 0.3) / 3.0) <= 1e-15);
  CHECK(step.updated.trans[1] == h.trans[1]);
  CHECK(std::abs(step.loglik - 2 * std::log(0.4 * 0.3 * 0.3)) <= 1e-12);
}

TEST_CASE("baum-welch matches graphical EM on the hmm program") {
  for (uint64_t seed : {1u, 2u, 3u}) {
    for (size_t n : {2u, 3u}) {
      std::mt19937_64 rng(seed * 31 + n);
      HmmSpec truth = random_hmm(n, 2, rng);
      HmmSpec start = random_hmm(n, 2, rng);
      const size_t len = 6;
      std::vector<HmmString> data;
      std::string obs_text;
      for (int t = 0; t < 12; ++t) {
        auto s = sample_hmm(truth, len, rng);
        data.push_back({s, 1});
        obs_text += to_string(hmm_goal(truth, s)) + ".\n";
      }
      Program p = parse_program(hmm_program(start, len));
      ParameterStore init = hmm_parameters(start, p);
      LearnResult r = learn_gem(p, parse_observations(obs_text), fixed_iterations(5), &init);
      REQUIRE(r.history.size() == 6);
      HmmSpec bw = start;
      for (size_t m = 1; m <= 5; ++m) {
        HmmStep step = baum_welch_step(bw, data);
        CHECK(std::abs(step.loglik - r.trace[m - 1]) <= 1e-9);
        bw = step.updated;
        ParameterStore snap = p.params;
        for (auto& [name, row] : r.history[m].theta) snap.set_row(name, row);
        CHECK(hmm_distance(bw, hmm_from_parameters(start, snap)) <= 1e-9);
      }
    }
  }
}

TEST_CASE("hmm program explanation count") {
  std::mt19937_64 rng(5);
  for (size_t n : {2u, 3u}) {
    HmmSpec h = random_hmm(n, 2, rng);
    for (size_t len : {1u, 4u}) {
      Program p = parse_program(hmm_program(h, len));
      SupportGraph g = explain(p, hmm_goal(h, sample_hmm(h, len, rng)));
      CHECK(g.explanation_count() == n * n * len + 2 * n);
      CHECK(g.atoms.size() == n * len + n + 1);
    }
  }
}

TEST_CASE("cnf grammar sentence probabilities") {
  CnfGrammar g = parse_grammar("nonterminals 1\nterminals a\nrule 1 -> 1 1 0.2\nrule 1 -> a 0.8\n");
  CHECK(std::abs(sentence_probability(g, {0, 0}) - 0.2 * 0.8 * 0.8) <= 1e-15);
  CHECK(std::abs(sentence_probability(g, {0, 0}) - 0.128) <= 1e-15);
  CHECK(std::abs(sentence_probability(g, {0}) - 0.8) <= 1e-15);
  for (PcfgForm form : {PcfgForm::Counter, PcfgForm::Span}) {
    Program p = parse_program(pcfg_program(g, form));
    ParameterStore s = pcfg_parameters(g, p);
    CHECK(std::abs(goal_probability(p, pcfg_goal(g, {0, 0}), s) - 0.128) <= 1e-15);
    CHECK(std::abs(goal_probability(p, pcfg_goal(g, {0, 0, 0}), s) - sentence_probability(g, {0, 0, 0})) <= 1e-15);
  }
}

TEST_CASE("bundled pcfg program agrees with the chart parser") {
  CnfGrammar g = parse_grammar(testing::slurp(testing::model_path("pcfg.cfg")));
  Program p = testing::load_model("pcfg", true);
  std::mt19937_64 rng(9);
  for (int k = 0; k < 20; ++k) {
    auto s = sample_sentence(g, rng);
    if (s.empty() || s.size() > 7) continue;
    CHECK(std::abs(goal_probability(p, pcfg_goal(g, s), p.params) - sentence_probability(g, s)) <= 1e-15);
  }
}

TEST_CASE("inside-outside matches graphical EM log-likelihoods") {
  for (uint64_t seed : {4u, 5u}) {
    std::mt19937_64 rng(seed);
    CnfGrammar truth = random_grammar(2 + seed % 2, 2, 0.35, rng);
    CnfGrammar start = random_grammar(truth.n, 2, 0.4, rng);
    std::vector<Sentence> data;
    std::string obs_text;
    while (data.size() < 6) {
      auto s = sample_sentence(truth, rng);
      if (s.empty() || s.size() > 6) continue;
      data.push_back({s, 1});
      obs_text += to_string(pcfg_goal(truth, s)) + ".\n";
    }
    Program p = parse_program(pcfg_program(start, PcfgForm::Counter));
    ParameterStore init = pcfg_parameters(start, p);
    LearnResult r = learn_gem(p, parse_observations(obs_text), fixed_iterations(5), &init);
    CnfGrammar io = start;
    for (size_t m = 0; m < 5; ++m) {
      GrammarStep step = inside_outside_step(io, data);
      CHECK(std::abs(step.loglik - r.trace[m]) <= 1e-8);
      io = step.updated;
    }
  }
}

TEST_CASE("text formats round-trip") {
  std::mt19937_64 rng(1);
  HmmSpec h = random_hmm(3, 2, rng);
  CHECK(print_hmm(parse_hmm(print_hmm(h))) == print_hmm(h));
  CnfGrammar g = random_grammar(3, 2, 0.4, rng);
  CHECK(print_grammar(parse_grammar(print_grammar(g))) == print_grammar(g));
  BayesNet b = random_dag(5, 0.5, 3, rng);
  CHECK(print_bayesnet(parse_bayesnet(print_bayesnet(b))) == print_bayesnet(b));
  CHECK_THROWS_AS(parse_hmm("states s0\nalphabet a\ninit 0.5\ntrans s0 1\nemit s0 1\n"), Error);
  CHECK_THROWS_AS(parse_bayesnet("node a t f | b\nnode b t f | a\n"), Error);
  CHECK_THROWS_AS(parse_grammar("nonterminals 1\nterminals a\nrule 1 -> a 0.5\n"), Error);
}

TEST_CASE("bayesnet encoding produces the per-node switch clause") {
  BayesNet g1 = parse_bayesnet(testing::slurp(testing::model_path("g1.bn")));
  std::string text = encode_bn_text(g1);
  CHECK(text.find("bn(A,B,C,D,E,F) :-\n    msw(par(a, []), once, A),\n    msw(par(b, []), once, B),\n"
                  "    msw(par(c, [A]), once, C),\n    msw(par(d, [A,B]), once, D),\n"
                  "    msw(par(e, [D]), once, E),\n    msw(par(f, [D]), once, F).") != std::string::npos);
  BayesNet one = parse_bayesnet("node x t f\ncpt x : 0.25 0.75\n");
  CHECK(encode_bn_text(one).find("bn(X) :-\n    msw(par(x, []), once, X).") != std::string::npos);
  Program p = encode_bn(one);
  CHECK(goal_probability(p, T("bn(f)"), p.params) == 0.75);
}

TEST_CASE("bundled network program matches the network file") {
  BayesNet g1 = parse_bayesnet(testing::slurp(testing::model_path("g1.bn")));
  Program bundled = testing::load_model("bn", true);
  Program encoded = encode_bn(g1);
  std::vector<int> a(6, 0);
  for (int code = 0; code < 64; ++code) {
    for (int i = 0; i < 6; ++i) a[static_cast<size_t>(i)] = (code >> i) & 1;
    Term goal = bn_goal(g1, a);
    double joint = bn_joint(g1, a);
    CHECK(std::abs(goal_probability(bundled, goal, bundled.params) - joint) <= 1e-15);
    CHECK(std::abs(goal_probability(encoded, goal, encoded.params) - joint) <= 1e-15);
  }
  for (int c = 0; c < 2; ++c)
    for (int d = 0; d < 2; ++d) {
      double marginal = bn_joint_enumerate(g1, {-1, -1, c, d, -1, -1});
      Term goal = T(std::string("bn2(") + (c ? "no" : "yes") + "," + (d ? "no" : "yes") + ")");
      CHECK(std::abs(goal_probability(bundled, goal, bundled.params) - marginal) <= 1e-12);
    }
}

TEST_CASE("enumeration edge cases") {
  std::mt19937_64 rng(2);
  BayesNet b = random_dag(5, 0.6, 2, rng);
  CHECK(std::abs(bn_joint_enumerate(b, std::vector<int>(5, -1)) - 1.0) <= 1e-12);
  std::vector<int> full{0, 1, 1, 0, 1};
  CHECK(bn_joint_enumerate(b, full) == bn_joint(b, full));
  CHECK_THROWS_AS(bn_joint_enumerate(b, std::vector<int>(5, -1), 8), Error);
}

TEST_CASE("polytree compilation preserves the evidence marginal") {
  BayesNet g1 = parse_bayesnet(testing::slurp(testing::model_path("g1.bn")));
  for (size_t ev = 0; ev < g1.size(); ++ev) {
    Program p = compile_bn_polytree(g1, ev);
    CHECK(validate(p).ok());
    for (int u = 0; u < 2; ++u) {
      std::vector<int> partial(g1.size(), -1);
      partial[ev] = u;
      CHECK(std::abs(goal_probability(p, polytree_goal(g1, ev, u), p.params) - bn_joint_enumerate(g1, partial)) <=
            1e-12);
    }
  }
  std::string text = compile_bn_polytree_text(g1, 1);
  CHECK(text.find("tbn(V2) :- msw(par(b, []), once, V2), call_b_d(V2).") != std::string::npos);
  CHECK(text.find("call_b_d(V2) :- val_a(V1), call_d_a(V1), msw(par(d, [V1,V2]), once, V4), call_d_e(V4), "
                  "call_d_f(V4).") != std::string::npos);
  CHECK(text.find("call_d_a(V1) :- msw(par(a, []), once, V1), call_a_c(V1).") != std::string::npos);

  std::mt19937_64 rng(77);
  for (int k = 0; k < 40; ++k) {
    BayesNet b = random_polytree(1 + static_cast<size_t>(k % 9), rng);
    size_t ev = std::uniform_int_distribution<size_t>(0, b.size() - 1)(rng);
    Program p = compile_bn_polytree(b, ev);
    for (int u = 0; u < 2; ++u) {
      std::vector<int> partial(b.size(), -1);
      partial[ev] = u;
      CHECK(std::abs(goal_probability(p, polytree_goal(b, ev, u), p.params) - bn_joint_enumerate(b, partial)) <=
            1e-12);
    }
  }
}

TEST_CASE("single-node polytree is the prior") {
  BayesNet one = parse_bayesnet("node x t f\ncpt x : 0.25 0.75\n");
  Program p = compile_bn_polytree(one, 0);
  CHECK(goal_probability(p, polytree_goal(one, 0, 0), p.params) == 0.25);
}

TEST_CASE("multiply connected networks are rejected") {
  BayesNet d = parse_bayesnet(
      "node a t f\nnode b t f | a\nnode c t f | a\nnode d t f | b c\n"
      "cpt a : 0.5 0.5\ncpt b t : 0.5 0.5\ncpt b f : 0.5 0.5\ncpt c t : 0.5 0.5\ncpt c f : 0.5 0.5\n"
      "cpt d t t : 0.5 0.5\ncpt d t f : 0.5 0.5\ncpt d f t : 0.5 0.5\ncpt d f f : 0.5 0.5\n");
  try {
    compile_bn_polytree(d, 0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidModel);
  }
}

TEST_CASE("chain support graphs grow linearly") {
  std::mt19937_64 rng(3);
  std::vector<double> v, size;
  for (size_t n : {4u, 8u, 16u, 32u}) {
    BayesNet b = random_chain(n, rng);
    Program p = compile_bn_polytree(b, 0);
    v.push_back(static_cast<double>(n));
    size.push_back(static_cast<double>(explain(p, polytree_goal(b, 0, 0)).node_count()));
  }
  auto fit = testing::fit_line(v, size);
  CHECK(fit.r2 >= 0.98);
}

TEST_CASE("sampling the encoded network reproduces node marginals") {
  BayesNet g1 = parse_bayesnet(testing::slurp(testing::model_path("g1.bn")));
  Program p = encode_bn(g1);
  const int n = 10000;
  std::vector<int> yes(g1.size(), 0);
  SampleRun run(p.params, 2024);
  for (int k = 0; k < n; ++k) {
    SampleResult r = sample_goal(p, T("bn(A,B,C,D,E,F)"), run);
    REQUIRE(r.success);
    for (size_t i = 0; i < g1.size(); ++i)
      if (r.goal.arg(i) == T("yes")) ++yes[i];
  }
  for (size_t i = 0; i < g1.size(); ++i) {
    CAPTURE(g1.names[i]);
    std::vector<int> partial(g1.size(), -1);
    partial[i] = 0;
    double q = bn_joint_enumerate(g1, partial);
    double se = std::sqrt(q * (1 - q) / n);
    CHECK(std::abs(yes[i] / double(n) - q) <= 3 * se);
  }
}
