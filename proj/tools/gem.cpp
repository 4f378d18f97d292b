#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "gem/em.hpp"
#include "gem/error.hpp"
#include "gem/explainer.hpp"
#include "gem/program.hpp"
#include "gem/reader.hpp"
#include "gem/sampler.hpp"

namespace {

using namespace gem;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << text;
}

std::string fmt12(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

struct Options {
  std::string program;
  std::string observations;
  std::string goal;
  std::string params_in;
  std::string params_out;
  std::string dot;
  std::string init = "uniform";
  double epsilon = 1e-6;
  size_t max_iters = 1000;
  uint64_t seed = 0;
  unsigned jobs = 1;
  size_t count = 1;
  uint64_t max_depth = 1'000'000;
  bool naive = false;
  std::vector<std::string> check_goals;
};

Program load(const Options& o) {
  Program p = parse_program(read_file(o.program));
  if (!o.params_in.empty()) p.params = parse_parameters(read_file(o.params_in), p.switch_decls);
  return p;
}

Term goal_of(const Options& o) {
  Term g = parse_term(o.goal);
  if (g.is_var() || g.is_int()) throw Error(ErrorCode::Usage, "goal must be an atom: " + o.goal);
  return g;
}

SearchLimits limits_of(const Options& o) { return SearchLimits{o.max_depth}; }

int cmd_learn(const Options& o) {
  Program p = load(o);
  ObservationSet obs = parse_observations(read_file(o.observations));
  LearnConfig cfg;
  cfg.epsilon = o.epsilon;
  cfg.max_iterations = o.max_iters;
  cfg.seed = o.seed;
  cfg.jobs = o.jobs;
  cfg.limits = limits_of(o);
  if (o.init == "uniform")
    cfg.init = InitMode::Uniform;
  else if (o.init == "random")
    cfg.init = InitMode::Random;
  else
    throw Error(ErrorCode::Usage, "--init must be uniform or random");
  cfg.on_iteration = [](size_t m, double lambda) {
    std::printf("iter %zu loglik %.12g\n", m, lambda);
    std::fflush(stdout);
  };
  const ParameterStore* initial = o.params_in.empty() ? nullptr : &p.params;
  LearnResult r = o.naive ? learn_naive(p, obs, cfg, initial) : learn_gem(p, obs, cfg, initial);
  std::printf("%s after %zu iterations\n", r.converged ? "converged" : "stopped", r.iterations);
  std::string text = print_parameters(r.params);
  if (o.params_out.empty())
    std::fputs(text.c_str(), stdout);
  else
    write_file(o.params_out, text);
  return 0;
}

int cmd_prob(const Options& o) {
  Program p = load(o);
  std::printf("%s\n", fmt12(goal_probability(p, goal_of(o), p.params, limits_of(o))).c_str());
  return 0;
}

int cmd_sample(const Options& o) {
  Program p = load(o);
  Term goal = goal_of(o);
  SampleRun run(p.params, o.seed);
  for (size_t k = 0; k < o.count; ++k) {
    SampleResult r = sample_goal(p, goal, run, limits_of(o));
    if (!r.success) {
      if (r.uniqueness_violation())
        throw Error(ErrorCode::UniquenessViolation,
                    "sample " + std::to_string(k + 1) + ": switch draws left " + to_string(goal) + " unprovable");
      throw Error(ErrorCode::EmptySupport, "sample " + std::to_string(k + 1) + ": " + to_string(goal) + " failed");
    }
    std::printf("%s\t%s\n", to_string(r.goal).c_str(), format_explanation(r.explanation).c_str());
  }
  return 0;
}

int cmd_viterbi(const Options& o) {
  Program p = load(o);
  SupportGraph g = explain(p, goal_of(o), limits_of(o));
  ViterbiResult v = viterbi(g, p.params);
  std::printf("%s\n%s\n", format_explanation(v.explanation).c_str(), fmt12(v.probability).c_str());
  return 0;
}

int cmd_explain(const Options& o) {
  Program p = load(o);
  SupportGraph g = explain(p, goal_of(o), limits_of(o));
  std::fputs(format_support_graph(g).c_str(), stdout);
  if (o.dot == "-")
    std::fputs(support_graph_dot(g).c_str(), stdout);
  else if (!o.dot.empty())
    write_file(o.dot, support_graph_dot(g));
  return 0;
}

int cmd_check(const Options& o) {
  Program p = load(o);
  Report report = validate(p);
  ExplainOptions eo;
  eo.limits = limits_of(o);
  for (const auto& text : o.check_goals) {
    Term goal = parse_term(text);
    try {
      SupportGraph g = explain(p, goal, eo.limits);
      for (auto& d : check_independence(g).items) report.items.push_back(d);
      for (auto& d : check_exclusiveness_bruteforce(p, goal, eo).items) report.items.push_back(d);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::AcyclicSupport && e.code() != ErrorCode::NonGround &&
          e.code() != ErrorCode::EnumerationCap)
        throw;
      report.items.push_back({Severity::Error, e.token(), e.what()});
    }
  }
  std::fputs(report.str().c_str(), stdout);
  if (!report.ok()) return 1;
  std::puts("ok");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Graphical EM for parameterized logic programs"};
  app.require_subcommand(1);

  auto common = [&](CLI::App* c) {
    c->add_option("program", o.program, "program file")->required();
    c->add_option("--params", o.params_in, "parameter file");
    c->add_option("--max-depth", o.max_depth, "resolution steps per derivation path");
  };
  auto with_goal = [&](CLI::App* c) { c->add_option("goal", o.goal, "goal term")->required(); };

  auto* learn = app.add_subcommand("learn", "estimate parameters from observations");
  common(learn);
  learn->add_option("observations", o.observations, "observation file")->required();
  learn->add_option("-o,--out", o.params_out, "write learned parameters here");
  learn->add_option("--eps", o.epsilon, "stop when the log-likelihood gain is below this");
  learn->add_option("--max-iters", o.max_iters, "iteration limit");
  learn->add_option("--init", o.init, "uniform or random (ignored with --params)");
  learn->add_option("--seed", o.seed, "seed for --init random");
  learn->add_option("--jobs", o.jobs, "E-step worker threads");
  learn->add_flag("--naive", o.naive, "use explicit explanation sets instead of support graphs");

  auto* prob = app.add_subcommand("prob", "probability of a ground goal");
  common(prob);
  with_goal(prob);

  auto* sample = app.add_subcommand("sample", "draw goals by forward sampling");
  common(sample);
  with_goal(sample);
  sample->add_option("-n,--count", o.count, "number of samples");
  sample->add_option("--seed", o.seed, "random seed");

  auto* vit = app.add_subcommand("viterbi", "most probable explanation");
  common(vit);
  with_goal(vit);

  auto* expl = app.add_subcommand("explain", "support graph of a ground goal");
  common(expl);
  with_goal(expl);
  expl->add_option("--dot", o.dot, "also write Graphviz output to this file ('-' for stdout)");

  auto* check = app.add_subcommand("check", "static and per-goal diagnostics");
  common(check);
  check->add_option("--goal", o.check_goals, "ground goal to check for exclusiveness and acyclicity");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: E_USAGE: %s\n", e.what());
    return 2;
  }

  try {
    if (*learn) return cmd_learn(o);
    if (*prob) return cmd_prob(o);
    if (*sample) return cmd_sample(o);
    if (*vit) return cmd_viterbi(o);
    if (*expl) return cmd_explain(o);
    if (*check) return cmd_check(o);
  } catch (const Error& e) {
    std::fflush(stdout);
    std::fprintf(stderr, "error: %s: %s\n", e.token(), e.what());
    return e.code() == ErrorCode::Usage ? 2 : 1;
  } catch (const std::exception& e) {
    std::fflush(stdout);
    std::fprintf(stderr, "error: E_INTERNAL: %s\n", e.what());
    return 1;
  }
  return 2;
}
