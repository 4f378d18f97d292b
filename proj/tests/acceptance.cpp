#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "gem/em.hpp"
#include "gem/error.hpp"
#include "gem/explainer.hpp"
#include "gem/oracles.hpp"
#include "gem/sampler.hpp"
#include "support.hpp"

using namespace gem;
using namespace gem::oracle;
using testing::T;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail = what;
      pass = false;
    }
  }
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

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

Outcome blood_and_dbp() {
  Outcome out;
  auto start = Clock::now();
  Program p = testing::load_model("blood");
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Term gene = T("gene");
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    double x = u(rng), y = u(rng), z = u(rng), s = x + y + z;
    double a = x / s, b = y / s, o = z / s;
    ParameterStore store = p.params;
    store.set_row(gene, {a, b, o});
    std::map<std::string, double> closed{
        {"btype(a)", a * a + 2 * a * o}, {"btype(b)", b * b + 2 * b * o}, {"btype(o)", o * o}, {"btype(ab)", 2 * a * b}};
    for (auto& [goal, expected] : closed) {
      double got = goal_probability(p, T(goal), store);
      double brute = testing::brute_probability(p, T(goal), store);
      worst = std::max({worst, std::abs(got - expected), std::abs(got - brute)});
    }
  }
  out.require(worst <= 1e-12, "blood type deviation " + fmt("%.3g", worst));

  Program d = testing::load_model("dbp", true);
  GraphAnalysis an = analyze(explain(d, T("f")), d.params);
  double beta_f = an.inside.at(T("f"));
  double alpha_g = an.outside.at(T("g"));
  double mu_m = an.switch_expectation.at(T("msw(s_m,once,m)"));
  double brute_f = testing::brute_probability(d, T("f"), d.params);
  double brute_g = testing::brute_probability(d, T("g"), d.params);
  double brute_mu = 0.0;
  for (const auto& e : enumerate_explanations_exhaustive(d, T("f")))
    if (std::find(e.begin(), e.end(), T("msw(s_m,once,m)")) != e.end())
      brute_mu += testing::explanation_probability(e, d.params);
  double dev = std::max({std::abs(beta_f - 0.7), std::abs(beta_f - brute_f), std::abs(alpha_g - 1.0),
                         std::abs(alpha_g - brute_f / brute_g), std::abs(mu_m - 0.3), std::abs(mu_m - brute_mu)});
  out.require(dev <= 1e-12, "dbp deviation " + fmt("%.3g", dev));
  double t = seconds_since(start);
  out.require(t < 1.0, "took " + fmt("%.3f", t) + " s");
  if (out.pass)
    out.detail = "100 points, max dev " + fmt("%.2g", worst) + "; dbp dev " + fmt("%.2g", dev) + "; " +
                 fmt("%.3f", t) + " s";
  return out;
}

Outcome hmm_table() {
  Outcome out;
  auto start = Clock::now();
  Program p = testing::load_model("hmm");
  SolutionTable table = tabled_search(p, T("hmm([a,b,a])"));
  std::vector<size_t> mult;
  for (const auto& e : table.entries()) mult.push_back(e.explanations.size());
  std::sort(mult.rbegin(), mult.rend());
  std::string shown;
  for (size_t m : mult) shown += (shown.empty() ? "" : ",") + std::to_string(m);
  out.require(table.size() == 9, std::to_string(table.size()) + " entries");
  out.require(mult == std::vector<size_t>{2, 2, 2, 2, 2, 2, 2, 1, 1}, "multiplicities " + shown);
  double t = seconds_since(start);
  out.require(t < 1.0, "took " + fmt("%.3f", t) + " s");
  if (out.pass) out.detail = "9 entries, multiplicities (" + shown + "); " + fmt("%.3f", t) + " s";
  return out;
}

Outcome baum_welch() {
  Outcome out;
  auto start = Clock::now();
  double worst = 0.0;
  for (uint64_t seed : {11u, 12u, 13u}) {
    for (size_t n : {2u, 3u, 4u}) {
      std::mt19937_64 rng(seed * 101 + n);
      HmmSpec truth = random_hmm(n, 2, rng);
      HmmSpec init = random_hmm(n, 2, rng);
      const size_t len = 10;
      std::vector<HmmString> data;
      std::string obs_text;
      for (int k = 0; k < 20; ++k) {
        auto s = sample_hmm(truth, len, rng);
        data.push_back({s, 1});
        obs_text += to_string(hmm_goal(truth, s)) + ".\n";
      }
      Program p = parse_program(hmm_program(init, len));
      GraphicalEM em(p, parse_observations(obs_text), hmm_parameters(init, p));
      double lambda = em.inside_pass();
      HmmSpec bw = init;
      for (int m = 0; m < 10; ++m) {
        HmmStep step = baum_welch_step(bw, data);
        worst = std::max(worst, std::abs(step.loglik - lambda));
        bw = step.updated;
        lambda = em.iterate();
        worst = std::max(worst, hmm_distance(bw, hmm_from_parameters(init, em.params())));
      }
    }
  }
  out.require(worst <= 1e-9, "max deviation " + fmt("%.3g", worst));
  double t = seconds_since(start);
  out.require(t < 30.0, "took " + fmt("%.2f", t) + " s");
  if (out.pass) out.detail = "9 runs x 10 iterations, max dev " + fmt("%.2g", worst) + "; " + fmt("%.2f", t) + " s";
  return out;
}

Outcome inside_outside() {
  Outcome out;
  auto start = Clock::now();
  double worst = 0.0;
  size_t runs = 0;
  for (uint64_t seed : {21u, 22u, 23u}) {
    for (size_t n : {2u, 3u, 4u}) {
      std::mt19937_64 rng(seed * 17 + n);
      CnfGrammar truth = random_grammar(n, 2, 0.4, rng);
      CnfGrammar init = random_grammar(n, 2, 0.4, rng);
      std::vector<Sentence> data;
      std::string obs_text;
      while (data.size() < 10) {
        auto s = sample_sentence(truth, rng);
        if (s.empty() || s.size() > 8) continue;
        data.push_back({s, 1});
        obs_text += to_string(pcfg_goal(truth, s)) + ".\n";
      }
      Program p = parse_program(pcfg_program(init, PcfgForm::Span));
      GraphicalEM em(p, parse_observations(obs_text), pcfg_parameters(init, p));
      double lambda = em.inside_pass();
      CnfGrammar io = init;
      for (int m = 0; m < 10; ++m) {
        GrammarStep step = inside_outside_step(io, data);
        worst = std::max(worst, std::abs(step.loglik - lambda));
        io = step.updated;
        lambda = em.iterate();
      }
      ++runs;
    }
  }
  out.require(worst <= 1e-8, "max loglik deviation " + fmt("%.3g", worst));
  double t = seconds_since(start);
  out.require(t < 60.0, "took " + fmt("%.2f", t) + " s");
  if (out.pass)
    out.detail = std::to_string(runs) + " runs x 10 iterations, max dev " + fmt("%.2g", worst) + "; " +
                 fmt("%.2f", t) + " s";
  return out;
}

Outcome gem_vs_naive() {
  Outcome out;
  double worst = 0.0;
  for (const auto& m : testing::bundled_models()) {
    Program p = testing::load_model(m.name);
    ObservationSet obs = testing::load_observations(m.name);
    ParameterStore start = init_parameters(p, InitMode::Random, 5);
    LearnResult g = learn_gem(p, obs, fixed_iterations(20), &start);
    LearnResult n = learn_naive(p, obs, fixed_iterations(20), &start);
    if (g.history.size() != 21 || n.history.size() != 21) {
      out.require(false, std::string(m.name) + " did not run 20 iterations");
      continue;
    }
    for (size_t k = 0; k <= 20; ++k) {
      for (auto& [name, row] : g.history[k].theta) {
        auto it = n.history[k].theta.find(name);
        double d = it == n.history[k].theta.end() ? INFINITY : testing::max_abs_diff(row, it->second);
        if (d > 1e-9) out.require(false, std::string(m.name) + " iteration " + std::to_string(k));
        worst = std::max(worst, d);
      }
    }
  }
  if (out.pass)
    out.detail = std::to_string(testing::bundled_models().size()) + " programs x 20 iterations, max dev " +
                 fmt("%.2g", worst);
  return out;
}

Outcome monotone() {
  Outcome out;
  double worst_drop = 0.0;
  size_t runs = 0;
  for (const auto& m : testing::bundled_models()) {
    Program p = testing::load_model(m.name);
    ObservationSet obs = testing::load_observations(m.name);
    for (uint64_t seed = 1; seed <= 5; ++seed) {
      LearnConfig cfg;
      cfg.init = InitMode::Random;
      cfg.seed = seed;
      cfg.epsilon = 1e-6;
      LearnResult r = learn_gem(p, obs, cfg);
      for (size_t k = 1; k < r.trace.size(); ++k) {
        double drop = r.trace[k - 1] - r.trace[k];
        worst_drop = std::max(worst_drop, drop);
        if (drop > 1e-9) out.require(false, std::string(m.name) + " seed " + std::to_string(seed));
      }
      ++runs;
    }
  }
  if (out.pass) out.detail = std::to_string(runs) + " runs, largest decrease " + fmt("%.2g", worst_drop);
  return out;
}

Outcome complexity() {
  Outcome out;
  auto start = Clock::now();
  std::string detail;

  std::mt19937_64 rng(31);
  for (size_t n : {2u, 3u, 4u})
    for (size_t len : {3u, 5u, 10u}) {
      HmmSpec h = random_hmm(n, 2, rng);
      Program p = parse_program(hmm_program(h, len));
      size_t count = explain(p, hmm_goal(h, sample_hmm(h, len, rng))).explanation_count();
      out.require(count == n * n * len + 2 * n,
                  "(a) N=" + std::to_string(n) + " L=" + std::to_string(len) + " count " + std::to_string(count));
    }
  detail += "(a) ok";

  {
    CnfGrammar g = random_grammar(4, 2, 0.5, rng);
    for (double& r : g.binary) r = std::max(r, 1e-3);
    Program p = parse_program(pcfg_program(g, PcfgForm::Span));
    std::vector<double> xs, ys;
    for (size_t len : {4u, 6u, 8u, 10u}) {
      std::vector<int> words(len);
      for (size_t i = 0; i < len; ++i) words[i] = static_cast<int>(i % 2);
      xs.push_back(std::log(static_cast<double>(len)));
      ys.push_back(std::log(static_cast<double>(explain(p, pcfg_goal(g, words)).node_count())));
    }
    auto fit = testing::fit_line(xs, ys);
    out.require(std::abs(fit.slope - 3.0) <= 0.4, "(b) slope " + fmt("%.3f", fit.slope));
    detail += ", (b) slope " + fmt("%.2f", fit.slope);
  }

  {
    HmmSpec h = random_hmm(4, 3, rng);
    const size_t len = 12;
    Program p = parse_program(hmm_program(h, len));
    std::vector<double> sizes, times;
    for (size_t strings : {20u, 40u, 80u, 120u, 160u}) {
      std::string obs_text;
      for (size_t k = 0; k < strings; ++k) obs_text += to_string(hmm_goal(h, sample_hmm(h, len, rng))) + ".\n";
      GraphicalEM em(p, parse_observations(obs_text), hmm_parameters(h, p));
      em.inside_pass();
      double best = INFINITY;
      for (int rep = 0; rep < 7; ++rep) {
        auto t0 = Clock::now();
        em.iterate();
        best = std::min(best, seconds_since(t0));
      }
      sizes.push_back(static_cast<double>(em.total_size()));
      times.push_back(best);
    }
    auto fit = testing::fit_line(sizes, times);
    out.require(fit.r2 >= 0.95, "(c) R2 " + fmt("%.4f", fit.r2));
    detail += ", (c) R2 " + fmt("%.3f", fit.r2);
  }

  {
    std::vector<double> xs, ys;
    for (size_t v : {4u, 8u, 16u, 32u}) {
      BayesNet b = random_chain(v, rng);
      Program p = compile_bn_polytree(b, v - 1);
      xs.push_back(static_cast<double>(v));
      ys.push_back(static_cast<double>(explain(p, polytree_goal(b, v - 1, 0)).node_count()));
    }
    auto fit = testing::fit_line(xs, ys);
    out.require(fit.r2 >= 0.98, "(d) R2 " + fmt("%.4f", fit.r2));
    detail += ", (d) R2 " + fmt("%.4f", fit.r2);
  }

  double t = seconds_since(start);
  out.require(t < 120.0, "took " + fmt("%.1f", t) + " s");
  if (out.pass) out.detail = detail + "; " + fmt("%.2f", t) + " s";
  return out;
}

Outcome bayes_nets() {
  Outcome out;
  std::mt19937_64 rng(41);
  double worst = 0.0;
  size_t joints = 0, marginals = 0;
  while (joints < 1000) {
    size_t nodes = std::uniform_int_distribution<size_t>(1, 6)(rng);
    BayesNet b = random_dag(nodes, 0.5, 3, rng);
    std::vector<size_t> keep;
    for (size_t i = 0; i < nodes; ++i)
      if (rng() % 2) keep.push_back(i);
    if (keep.empty()) keep.push_back(0);
    Program p = parse_program(encode_bn_text(b) + marginal_clause(b, keep));
    p.params = bn_parameters(b, p);
    for (int k = 0; k < 20 && joints < 1000; ++k, ++joints) {
      std::vector<int> a(nodes);
      for (auto& x : a) x = static_cast<int>(rng() % 2);
      worst = std::max(worst, std::abs(goal_probability(p, bn_goal(b, a), p.params) - bn_joint(b, a)));
    }
    for (int code = 0; code < (1 << keep.size()); ++code, ++marginals) {
      std::vector<int> partial(nodes, -1), vals;
      for (size_t i = 0; i < keep.size(); ++i) {
        partial[keep[i]] = (code >> i) & 1;
        vals.push_back((code >> i) & 1);
      }
      double got = goal_probability(p, marginal_goal(b, keep, vals), p.params);
      worst = std::max(worst, std::abs(got - bn_joint_enumerate(b, partial)));
    }
  }
  out.require(worst <= 1e-12, "max deviation " + fmt("%.3g", worst));
  if (out.pass)
    out.detail = std::to_string(joints) + " joints, " + std::to_string(marginals) + " marginals, max dev " +
                 fmt("%.2g", worst);
  return out;
}

Outcome viterbi_check() {
  Outcome out;
  size_t goals = 0;
  for (const auto& m : testing::bundled_models()) {
    Program p = testing::load_model(m.name, true);
    for (const auto& o : testing::load_observations(m.name).items) {
      SupportGraph g = explain(p, o.goal);
      ViterbiResult v = viterbi(g, p.params);
      double best = 0.0;
      for (const auto& e : flatten(g)) best = std::max(best, testing::explanation_probability(e, p.params));
      double own = testing::explanation_probability(v.explanation, p.params);
      if (std::abs(v.probability - best) > 1e-12 * best || std::abs(own - v.probability) > 1e-12 * best)
        out.require(false, std::string(m.name) + " " + to_string(o.goal));
      ++goals;
    }
  }
  Program blood = testing::load_model("blood", true);
  ViterbiResult v = viterbi(explain(blood, T("btype(a)")), blood.params);
  Explanation expected{T("msw(gene,father,a)"), T("msw(gene,mother,a)")};
  std::sort(expected.begin(), expected.end(), TermLess{});
  out.require(v.explanation == expected, "blood viterbi " + format_explanation(v.explanation));
  out.require(std::abs(v.probability - 0.25) <= 1e-15, "blood viterbi probability " + fmt("%.17g", v.probability));
  if (out.pass) out.detail = std::to_string(goals) + " goals; blood " + format_explanation(v.explanation) + " 0.25";
  return out;
}

Term observed_atom(const testing::BundledModel& m, const Term& sampled) {
  if (!*m.observe_as) return sampled;
  std::vector<Term> args;
  for (size_t i = 0; i < sampled.arity(); ++i) args.push_back(sampled.arg(i));
  return Term::compound(m.observe_as, std::move(args));
}

Outcome sampling() {
  Outcome out;
  const size_t n = 10000;
  const double nd = static_cast<double>(n);
  std::string detail;
  for (const auto& m : testing::bundled_models()) {
    Program p = testing::load_model(m.name, true);
    SampleRun run(p.params, 1);
    Term goal = T(m.sample_goal);
    std::map<Term, size_t, TermLess> counts;
    size_t successes = 0;
    for (size_t k = 0; k < n; ++k) {
      SampleResult r = sample_goal(p, goal, run);
      if (!r.success) continue;
      ++successes;
      ++counts[observed_atom(m, r.goal)];
    }
    if (goal.arity() == 0) {
      double prob = goal_probability(p, goal, p.params);
      double se = std::sqrt(nd * prob * (1 - prob));
      double dev = std::abs(static_cast<double>(successes) - nd * prob);
      out.require(dev <= 3 * se, std::string(m.name) + " success count " + std::to_string(successes));
      detail += std::string(detail.empty() ? "" : ", ") + m.name + " " + fmt("%.2f", dev / se) + " SE";
      continue;
    }
    out.require(successes == n, std::string(m.name) + " failed samples");
    std::vector<Term> candidates;
    if (*m.observe_as) {
      std::vector<std::vector<Term>> layer{{}};
      for (size_t len = 1; len <= 5; ++len) {
        std::vector<std::vector<Term>> next;
        for (const auto& words : layer)
          for (const char* w : {"a", "b"}) {
            next.push_back(words);
            next.back().push_back(Term::constant(w));
            candidates.push_back(Term::compound(m.observe_as, {Term::list(next.back())}));
          }
        layer = std::move(next);
      }
    } else {
      for (auto& [atom, count] : counts) candidates.push_back(atom);
    }
    double worst = 0.0, common_mass = 0.0;
    size_t common_count = 0, tested = 0, beyond = 0;
    for (const auto& atom : candidates) {
      double prob = goal_probability(p, atom, p.params);
      if (nd * prob < 5) continue;
      size_t count = counts.contains(atom) ? counts.at(atom) : 0;
      double se = std::sqrt(nd * prob * (1 - prob));
      double z = std::abs(static_cast<double>(count) - nd * prob) / se;
      worst = std::max(worst, z);
      if (z > 3) {
        ++beyond;
        out.require(false, std::string(m.name) + " " + to_string(atom) + " " + fmt("%.2f", z) + " SE");
      }
      common_mass += prob;
      common_count += count;
      ++tested;
    }
    double rare = std::max(0.0, 1.0 - common_mass);
    if (rare * nd >= 1e-9) {
      double se = std::sqrt(nd * rare * (1 - rare));
      double z = std::abs(static_cast<double>(n - common_count) - nd * rare) / se;
      worst = std::max(worst, z);
      if (z > 3) out.require(false, std::string(m.name) + " rare atoms " + fmt("%.2f", z) + " SE");
    } else if (common_count != n) {
      out.require(false, std::string(m.name) + " samples outside the support");
    }
    detail += std::string(detail.empty() ? "" : ", ") + m.name + " " + std::to_string(tested) + " atoms max " +
              fmt("%.2f", worst) + " SE" + (beyond ? " (" + std::to_string(beyond) + " beyond 3 SE)" : "");
  }
  out.detail = out.pass ? detail : out.detail + "; " + detail;
  return out;
}

}  // namespace

int main() {
  struct Criterion {
    const char* description;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"worked examples: blood type closed form and dbp inside/outside values", blood_and_dbp},
      {"tabled search table for hmm([a,b,a])", hmm_table},
      {"graphical EM equals Baum-Welch", baum_welch},
      {"graphical EM equals Inside-Outside", inside_outside},
      {"graphical EM equals naive EM on bundled programs", gem_vs_naive},
      {"log-likelihood is monotone", monotone},
      {"support graph sizes and iteration cost", complexity},
      {"Bayesian network encoding", bayes_nets},
      {"Viterbi explanation", viterbi_check},
      {"sampling frequencies match probabilities", sampling},
  };
  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    auto start = Clock::now();
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    if (!o.pass) ++failures;
    std::printf("criterion %zu: %s %s (%s) [%.2f s]\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].description,
                o.detail.c_str(), seconds_since(start));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
