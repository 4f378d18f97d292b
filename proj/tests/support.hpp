#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gem/em.hpp"
#include "gem/explainer.hpp"
#include "gem/program.hpp"
#include "gem/reader.hpp"

namespace testing {

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::string model_path(const std::string& file) { return std::string(GEM_MODELS_DIR) + "/" + file; }

/// A bundled program, with its parameter file applied when `with_params`.
inline gem::Program load_model(const std::string& name, bool with_params = false) {
  gem::Program p = gem::parse_program(slurp(model_path(name + ".pl")));
  if (with_params) p.params = gem::parse_parameters(slurp(model_path(name + ".params")), p.switch_decls);
  return p;
}

inline gem::ObservationSet load_observations(const std::string& name) {
  return gem::parse_observations(slurp(model_path(name + ".obs")));
}

inline gem::Term T(const std::string& text) { return gem::parse_term(text); }

/// Probability of one explanation: product of theta over its switch instances.
inline double explanation_probability(const gem::Explanation& e, const gem::ParameterStore& store) {
  double p = 1.0;
  for (const auto& m : e) p *= store.prob(m.arg(0), m.arg(2));
  return p;
}

/// Sum over the exhaustively enumerated support set.
inline double brute_probability(const gem::Program& p, const gem::Term& goal, const gem::ParameterStore& store) {
  double sum = 0.0;
  for (const auto& e : gem::enumerate_explanations_exhaustive(p, goal)) sum += explanation_probability(e, store);
  return sum;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

struct BundledModel {
  const char* name;
  const char* sample_goal;   // goal whose sampled instances are observed
  const char* observe_as;    // functor of the observable atom ("" = the sampled goal itself)
};

inline const std::vector<BundledModel>& bundled_models() {
  static const std::vector<BundledModel> models{
      {"blood", "btype(X)", ""}, {"dbp", "f", ""},          {"hmm", "hmm(X)", ""},       {"coin", "coin(X)", ""},
      {"pcfg", "gen(X)", "pcfg"}, {"pcsg", "gen(X)", "pcsg"}, {"bn", "bn(A,B,C,D,E,F)", ""},
  };
  return models;
}

/// Least-squares fit y = a + b x; returns {a, b, r2}.
struct LinearFit {
  double intercept = 0, slope = 0, r2 = 0;
};

inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    syy += y[i] * y[i];
  }
  double cov = sxy - sx * sy / n, vx = sxx - sx * sx / n, vy = syy - sy * sy / n;
  LinearFit f;
  f.slope = cov / vx;
  f.intercept = (sy - f.slope * sx) / n;
  f.r2 = vy == 0 ? 1.0 : cov * cov / (vx * vy);
  return f;
}

}  // namespace testing
