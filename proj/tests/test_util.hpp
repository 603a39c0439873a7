#pragma once

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "grusm/grusm.hpp"

namespace grusm::testing {

inline double uni(Rng& rng, double r = 1.0) { return std::uniform_real_distribution<double>(-r, r)(rng); }

inline TargetModule random_module(Rng& rng, std::vector<Substrate> substrates, std::size_t n_hidden) {
  TargetModule m = TargetModule::zeros(std::move(substrates), n_hidden);
  for (auto& v : m.w_in.flat()) v = uni(rng);
  for (auto& v : m.w_out.flat()) v = uni(rng);
  for (auto& h : m.hidden) h = {uni(rng), uni(rng)};
  for (auto& o : m.outputs) o.bias = uni(rng);
  return m;
}

// Small network: 1-5 inputs, 1-4 hidden, optionally a 1-4 hidden source.
inline GrusmNetwork random_network(Rng& rng, bool with_source) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const int n_in = pick(1, 5);
  GrusmNetwork net{random_module(rng, {{1, n_in}}, static_cast<std::size_t>(pick(1, 4))), std::nullopt};
  if (with_source) {
    const int src_in = pick(1, 5);
    auto src = make_source(random_module(rng, {{1, src_in}}, static_cast<std::size_t>(pick(1, 4))), "src");
    TransferLinks links{Matrix(static_cast<std::size_t>(n_in), src->net.hidden.size()), Matrix(kOutputs, kOutputs)};
    for (auto& v : links.in_to_hidden.flat()) v = uni(rng);
    for (auto& v : links.out_to_out.flat()) v = uni(rng);
    net.source = AttachedSource{src, links};
  }
  return net;
}

inline std::vector<std::vector<double>> random_inputs(Rng& rng, std::size_t n, std::size_t steps) {
  std::vector<std::vector<double>> seq(steps, std::vector<double>(n));
  for (auto& x : seq)
    for (auto& v : x) v = std::bernoulli_distribution(0.4)(rng) ? std::uniform_real_distribution<double>(0, 1)(rng) : 0.0;
  return seq;
}

// Straightforward dense re-implementation of one recurrent step, written
// from the update equations: every input weight is visited, source inputs
// are an explicit zero vector multiplied through the source's own weights.
struct DenseOracle {
  const GrusmNetwork& net;
  std::vector<double> h, s;

  explicit DenseOracle(const GrusmNetwork& n) : net(n) {
    h.assign(n.target.hidden.size(), 0.0);
    if (n.source) s.assign(n.source->module->net.hidden.size(), 0.0);
  }

  std::vector<double> step(const std::vector<double>& x) {
    const auto& m = net.target;
    std::vector<double> h2(h.size());
    for (std::size_t j = 0; j < h.size(); ++j) {
      double a = m.hidden[j].bias + m.hidden[j].self * h[j];
      for (std::size_t i = 0; i < x.size(); ++i) a += m.w_in(i, j) * x[i];
      h2[j] = std::tanh(a);
    }
    std::vector<double> y(kOutputs);
    for (std::size_t k = 0; k < kOutputs; ++k) {
      double a = m.outputs[k].bias;
      for (std::size_t j = 0; j < h2.size(); ++j) a += m.w_out(j, k) * h2[j];
      y[k] = a;
    }
    if (net.source) {
      const auto& sm = net.source->module->net;
      const auto& L = net.source->links;
      std::vector<double> zero_in(sm.input_count(), 0.0);
      std::vector<double> s2(s.size());
      for (std::size_t j = 0; j < s.size(); ++j) {
        double a = sm.hidden[j].bias + sm.hidden[j].self * s[j];
        for (std::size_t i = 0; i < zero_in.size(); ++i) a += sm.w_in(i, j) * zero_in[i];
        for (std::size_t i = 0; i < x.size(); ++i) a += L.in_to_hidden(i, j) * x[i];
        s2[j] = std::tanh(a);
      }
      for (std::size_t q = 0; q < kOutputs; ++q) {
        double a = sm.outputs[q].bias;
        for (std::size_t j = 0; j < s2.size(); ++j) a += sm.w_out(j, q) * s2[j];
        const double o = std::tanh(a);
        for (std::size_t k = 0; k < kOutputs; ++k) y[k] += L.out_to_out(q, k) * o;
      }
      s = s2;
    }
    for (auto& v : y) v = std::tanh(v);
    h = h2;
    return y;
  }
};

}  // namespace grusm::testing

namespace grusm::testing {

// -MSE of output 0 over the XOR truth table; fresh state per point.
inline double xor_fitness(const GrusmNetwork& net) {
  static constexpr double points[4][3] = {{0, 0, 0}, {0, 1, 1}, {1, 0, 1}, {1, 1, 0}};
  double mse = 0.0;
  for (const auto& p : points) {
    auto state = NetworkState::fresh(net);
    const std::vector<double> x{p[0], p[1]};
    const double y = step_activate(net, state, x)[0];
    mse += (y - p[2]) * (y - p[2]);
  }
  return -mse / 4.0;
}

struct XorOutcome {
  bool solved = false;
  std::size_t generations = 0;
  double best_mse = 0.0;
};

// Scratch run: 4 fresh-node subpopulations, n_sub 40, 100 assemblies.
inline XorOutcome solve_xor(std::uint64_t seed, std::size_t max_generations = 100) {
  EspConfig cfg;
  cfg.seed = seed;
  Evolver ev(cfg, {{1, 2}}, SourcePool{}, cfg.h0);
  FitnessFn f = [](const GrusmNetwork& net, std::uint64_t) { return xor_fitness(net); };
  XorOutcome out;
  for (std::size_t g = 0; g < max_generations; ++g) {
    ev.run_generation(f);
    out.generations = g + 1;
    out.best_mse = -ev.run_best();
    if (out.best_mse < 0.05) {
      out.solved = true;
      break;
    }
  }
  return out;
}

// Dense normal equations solved by Gauss-Jordan with partial pivoting.
inline std::vector<double> normal_equations(const std::vector<std::array<double, 6>>& x, const std::vector<double>& y) {
  double a[6][7] = {};
  for (std::size_t r = 0; r < x.size(); ++r)
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) a[i][j] += x[r][i] * x[r][j];
      a[i][6] += x[r][i] * y[r];
    }
  for (int c = 0; c < 6; ++c) {
    int piv = c;
    for (int r = c + 1; r < 6; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    for (int r = 0; r < 6; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (int k = c; k < 7; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<double> beta(6);
  for (int i = 0; i < 6; ++i) beta[i] = a[i][6] / a[i][i];
  return beta;
}

inline std::array<double, 6> row(const IndicatorVector& v) {
  const auto x = v.values();
  return {1.0, x[0], x[1], x[2], x[3], x[4]};
}

// Two-tailed Student t p-value by Simpson integration of the density.
inline double t_pvalue(double t, double df) {
  const double logc = std::lgamma((df + 1) / 2) - std::lgamma(df / 2) - 0.5 * std::log(df * M_PI);
  auto pdf = [&](double x) { return std::exp(logc - (df + 1) / 2 * std::log1p(x * x / df)); };
  const int n = 200000;
  const double h = std::abs(t) / n;
  double s = pdf(0) + pdf(std::abs(t));
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * pdf(i * h);
  return 1.0 - 2.0 * s * h / 3.0;
}

inline double pearson_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
    saa += a[i] * a[i];
    sbb += b[i] * b[i];
    sab += a[i] * b[i];
  }
  return (n * sab - sa * sb) / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
}

inline std::vector<LooPair> random_pairs(std::uint64_t seed, std::size_t n, std::size_t n_targets) {
  Rng rng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  std::vector<LooPair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    LooPair p;
    p.x = {pick(0, 3), pick(0, 5), pick(0, 5), 1.0 + 10.0 * std::abs(uni(rng)),
           1.0 + 10.0 * std::abs(uni(rng))};
    p.te = uni(rng);
    p.target = "g" + std::to_string(i % n_targets);
    pairs.push_back(p);
  }
  return pairs;
}

}  // namespace grusm::testing
