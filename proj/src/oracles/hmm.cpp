#include <cmath>
#include <sstream>

#include "gem/error.hpp"
#include "gem/oracles.hpp"
#include "gem/reader.hpp"
#include "text_util.hpp"

namespace gem::oracle {

namespace {

size_t index_in(const std::vector<std::string>& names, const std::string& name, const char* what) {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw Error(ErrorCode::InvalidModel, std::string("unknown ") + what + " '" + name + "'");
}

void check_row(const std::vector<double>& row, size_t size, const std::string& what) {
  if (row.size() != size) throw Error(ErrorCode::InvalidModel, what + ": expected " + std::to_string(size) + " entries");
  double sum = 0;
  for (double x : row) {
    if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorCode::InvalidModel, what + ": entry outside [0,1]");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::InvalidModel, what + ": row does not sum to 1");
}

std::vector<double> random_row(size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> row(k);
  double sum = 0;
  for (auto& x : row) sum += (x = u(rng));
  for (auto& x : row) x /= sum;
  return row;
}

size_t draw(const std::vector<double>& row, std::mt19937_64& rng) {
  double r = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  for (size_t i = 0; i + 1 < row.size(); ++i) {
    if (r < row[i]) return i;
    r -= row[i];
  }
  return row.size() - 1;
}

}  // namespace

HmmSpec parse_hmm(std::string_view text) {
  HmmSpec h;
  std::vector<std::pair<std::string, std::vector<double>>> trans, emit;
  for (auto& line : detail::split_lines(text)) {
    auto w = detail::split_words(line);
    if (w.empty()) continue;
    const std::string& key = w[0];
    if (key == "states") {
      h.states.assign(w.begin() + 1, w.end());
    } else if (key == "alphabet") {
      h.alphabet.assign(w.begin() + 1, w.end());
    } else if (key == "init") {
      h.init = detail::parse_doubles(w, 1);
    } else if ((key == "trans" || key == "emit") && w.size() >= 2) {
      (key == "trans" ? trans : emit).emplace_back(w[1], detail::parse_doubles(w, 2));
    } else {
      throw Error(ErrorCode::Syntax, "hmm: unrecognized line '" + line + "'");
    }
  }
  size_t n = h.states.size(), m = h.alphabet.size();
  if (n == 0 || m == 0) throw Error(ErrorCode::InvalidModel, "hmm: states and alphabet are required");
  check_row(h.init, n, "hmm init");
  h.trans.assign(n, {});
  h.emit.assign(n, {});
  for (auto& [s, row] : trans) h.trans[index_in(h.states, s, "state")] = row;
  for (auto& [s, row] : emit) h.emit[index_in(h.states, s, "state")] = row;
  for (size_t s = 0; s < n; ++s) {
    check_row(h.trans[s], n, "hmm trans " + h.states[s]);
    check_row(h.emit[s], m, "hmm emit " + h.states[s]);
  }
  return h;
}

std::string print_hmm(const HmmSpec& h) {
  std::ostringstream out;
  out << "states";
  for (auto& s : h.states) out << ' ' << s;
  out << "\nalphabet";
  for (auto& a : h.alphabet) out << ' ' << a;
  out << "\ninit" << detail::format_doubles(h.init) << '\n';
  for (size_t s = 0; s < h.states.size(); ++s) out << "trans " << h.states[s] << detail::format_doubles(h.trans[s]) << '\n';
  for (size_t s = 0; s < h.states.size(); ++s) out << "emit " << h.states[s] << detail::format_doubles(h.emit[s]) << '\n';
  return out.str();
}

HmmSpec random_hmm(size_t states, size_t symbols, std::mt19937_64& rng) {
  HmmSpec h;
  for (size_t s = 0; s < states; ++s) h.states.push_back("s" + std::to_string(s));
  for (size_t a = 0; a < symbols; ++a) h.alphabet.push_back(std::string(1, static_cast<char>('a' + a)));
  h.init = random_row(states, rng);
  for (size_t s = 0; s < states; ++s) {
    h.trans.push_back(random_row(states, rng));
    h.emit.push_back(random_row(symbols, rng));
  }
  return h;
}

std::vector<int> sample_hmm(const HmmSpec& h, size_t length, std::mt19937_64& rng) {
  std::vector<int> out;
  size_t s = draw(h.init, rng);
  for (size_t t = 0; t < length; ++t) {
    out.push_back(static_cast<int>(draw(h.emit[s], rng)));
    s = draw(h.trans[s], rng);
  }
  return out;
}

HmmStep baum_welch_step(const HmmSpec& h, const std::vector<HmmString>& data) {
  const size_t n = h.states.size(), m = h.alphabet.size();
  std::vector<double> init_num(n, 0.0), trans_num(n * n, 0.0), emit_num(n * m, 0.0);
  double loglik = 0.0;

  for (const auto& str : data) {
    const auto& o = str.symbols;
    const size_t len = o.size();
    if (len == 0) throw Error(ErrorCode::InvalidModel, "baum-welch: empty string");
    std::vector<double> alpha(len * n), beta(len * n);
    for (size_t s = 0; s < n; ++s) alpha[s] = h.init[s] * h.emit[s][o[0]];
    for (size_t t = 1; t < len; ++t)
      for (size_t s = 0; s < n; ++s) {
        double a = 0;
        for (size_t r = 0; r < n; ++r) a += alpha[(t - 1) * n + r] * h.trans[r][s];
        alpha[t * n + s] = a * h.emit[s][o[t]];
      }
    for (size_t s = 0; s < n; ++s) beta[(len - 1) * n + s] = 1.0;
    for (size_t t = len - 1; t-- > 0;)
      for (size_t s = 0; s < n; ++s) {
        double b = 0;
        for (size_t r = 0; r < n; ++r) b += h.trans[s][r] * h.emit[r][o[t + 1]] * beta[(t + 1) * n + r];
        beta[t * n + s] = b;
      }
    double prob = 0;
    for (size_t s = 0; s < n; ++s) prob += alpha[(len - 1) * n + s];
    if (!(prob > 0.0)) throw Error(ErrorCode::ZeroProbability, "baum-welch: string has zero probability");
    loglik += static_cast<double>(str.count) * std::log(prob);

    const double w = static_cast<double>(str.count) / prob;
    for (size_t s = 0; s < n; ++s) init_num[s] += w * alpha[s] * beta[s];
    for (size_t t = 0; t < len; ++t)
      for (size_t s = 0; s < n; ++s) emit_num[s * m + o[t]] += w * alpha[t * n + s] * beta[t * n + s];
    for (size_t t = 0; t + 1 < len; ++t)
      for (size_t s = 0; s < n; ++s)
        for (size_t r = 0; r < n; ++r)
          trans_num[s * n + r] +=
              w * alpha[t * n + s] * h.trans[s][r] * h.emit[r][o[t + 1]] * beta[(t + 1) * n + r];
    // the transition out of the last state is drawn but never observed
    for (size_t s = 0; s < n; ++s)
      for (size_t r = 0; r < n; ++r) trans_num[s * n + r] += w * alpha[(len - 1) * n + s] * h.trans[s][r];
  }

  HmmStep step{h, loglik};
  auto normalize = [](const double* num, size_t k, std::vector<double>& row) {
    double sum = 0;
    for (size_t i = 0; i < k; ++i) sum += num[i];
    if (sum <= 0.0) return;
    for (size_t i = 0; i < k; ++i) row[i] = num[i] / sum;
  };
  normalize(init_num.data(), n, step.updated.init);
  for (size_t s = 0; s < n; ++s) {
    normalize(&trans_num[s * n], n, step.updated.trans[s]);
    normalize(&emit_num[s * m], m, step.updated.emit[s]);
  }
  return step;
}

std::string hmm_program(const HmmSpec& h, size_t length) {
  auto list = [](const std::vector<std::string>& xs) {
    std::string s = "[";
    for (size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + xs[i];
    return s + "]";
  };
  std::ostringstream out;
  out << "values(init, " << list(h.states) << ").\n"
      << "values(out(_), " << list(h.alphabet) << ").\n"
      << "values(tr(_), " << list(h.states) << ").\n\n"
      << ":- table hmm/1, hmm/3.\n\n"
      << "hmm(Cs) :- msw(init, once, Si), hmm(1, Si, Cs).\n"
      << "hmm(T, S, [C|Cs]) :- T =< " << length
      << ", msw(out(S), T, C), msw(tr(S), T, NextS), T1 is T+1, hmm(T1, NextS, Cs).\n"
      << "hmm(T, _, []) :- T > " << length << ".\n";
  return out.str();
}

ParameterStore hmm_parameters(const HmmSpec& h, const Program& p) {
  ParameterStore store = p.params;
  store.set_row(Term::constant("init"), h.init);
  for (size_t s = 0; s < h.states.size(); ++s) {
    Term st = Term::constant(h.states[s]);
    store.set_row(Term::compound("out", {st}), h.emit[s]);
    store.set_row(Term::compound("tr", {st}), h.trans[s]);
  }
  return store;
}

HmmSpec hmm_from_parameters(const HmmSpec& shape, const ParameterStore& store) {
  HmmSpec h = shape;
  h.init = store.row(Term::constant("init"));
  for (size_t s = 0; s < h.states.size(); ++s) {
    Term st = Term::constant(h.states[s]);
    h.emit[s] = store.row(Term::compound("out", {st}));
    h.trans[s] = store.row(Term::compound("tr", {st}));
  }
  return h;
}

Term hmm_goal(const HmmSpec& h, const std::vector<int>& symbols) {
  std::vector<Term> items;
  for (int a : symbols) items.push_back(Term::constant(h.alphabet.at(static_cast<size_t>(a))));
  return Term::compound("hmm", {Term::list(items)});
}

}  // namespace gem::oracle
