#pragma once

// Environment specs ("miniarcade:hvs", "miniarcade:hs@8x10",
// "external:<command>"), episode rollout, and protocol conformance checks.

#include <cmath>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "grusm/env.hpp"
#include "grusm/external_env.hpp"
#include "grusm/miniarcade.hpp"
#include "grusm/net.hpp"

namespace grusm {

inline constexpr int kDefaultMaxSteps = 600;

struct EnvSpec {
  enum class Kind { MiniArcade, External };

  Kind kind = Kind::MiniArcade;
  GameFeatures features;
  int rows = 6;
  int cols = 8;
  int max_steps = kDefaultMaxSteps;
  std::string command;

  static EnvSpec parse(std::string_view text, int max_steps = kDefaultMaxSteps) {
    EnvSpec spec;
    spec.max_steps = max_steps;
    if (max_steps <= 0) throw ConfigError("max_steps must be positive");
    if (text.rfind("external:", 0) == 0) {
      spec.kind = Kind::External;
      spec.command = std::string(text.substr(9));
      if (spec.command.empty()) throw ConfigError("external env spec needs a command");
      return spec;
    }
    if (text.rfind("miniarcade:", 0) != 0)
      throw ConfigError("unknown env spec '" + std::string(text) + "' (expected miniarcade:<hvsdl> or external:<cmd>)");
    std::string rest(text.substr(11));
    if (auto at = rest.find('@'); at != std::string::npos) {
      const std::string shape = rest.substr(at + 1);
      rest = rest.substr(0, at);
      const auto x = shape.find('x');
      try {
        if (x == std::string::npos) throw std::invalid_argument("shape");
        spec.rows = std::stoi(shape.substr(0, x));
        spec.cols = std::stoi(shape.substr(x + 1));
      } catch (const std::exception&) {
        throw ConfigError("bad substrate shape '" + shape + "' (expected <rows>x<cols>)");
      }
      if (spec.rows < 5 || spec.cols < 5) throw ConfigError("MiniArcade substrates must be at least 5x5");
    }
    spec.features = GameFeatures::parse_letters(rest);
    return spec;
  }

  std::string to_string() const {
    if (kind == Kind::External) return "external:" + command;
    std::string s = "miniarcade:" + features.letters();
    if (rows != 6 || cols != 8) s += "@" + std::to_string(rows) + "x" + std::to_string(cols);
    return s;
  }

  MiniArcadeConfig miniarcade_config() const {
    MiniArcadeConfig cfg;
    cfg.features = features;
    cfg.rows = rows;
    cfg.cols = cols;
    cfg.max_steps = max_steps;
    return cfg;
  }

  std::unique_ptr<Environment> make() const {
    if (kind == Kind::External) return std::make_unique<ExternalEnv>(command, max_steps);
    return std::make_unique<MiniArcade>(miniarcade_config());
  }

  // Wrapped in epsilon-repeat when epsilon > 0.
  std::unique_ptr<Environment> make(double epsilon) const {
    auto env = make();
    if (epsilon > 0.0) return std::make_unique<EpsilonRepeat>(std::move(env), epsilon);
    if (epsilon < 0.0) throw ConfigError("epsilon must be in [0,1]");
    return env;
  }

  EnvInfo info() const {
    if (kind == Kind::MiniArcade) return MiniArcade(miniarcade_config()).info();
    return make()->info();
  }
};

// One episode with a fresh recurrent state. Stops at a terminal step or after
// max_steps, whichever comes first.
inline EpisodeResult run_episode(const GrusmNetwork& net, Environment& env, std::uint64_t seed) {
  const EnvInfo info = env.info();
  EpisodeResult result;
  result.seed = seed;
  NetworkState state = NetworkState::fresh(net);
  Observation obs = env.reset(seed);
  for (;;) {
    const Outputs out = step_activate(net, state, obs.cells);
    StepResult r = env.step(decode_action(out));
    result.score += r.reward;
    ++result.steps;
    if (r.terminal || result.steps >= info.max_steps) break;
    obs = std::move(r.obs);
  }
  return result;
}

// Mean score of a uniformly random policy over `episodes` episodes with
// seeds first_seed, first_seed + 1, ...
inline double random_policy_baseline(const EnvSpec& spec, double epsilon, int episodes, std::uint64_t first_seed) {
  if (episodes <= 0) throw ConfigError("episodes must be positive");
  auto env = spec.make(epsilon);
  const int max_steps = env->info().max_steps;
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    const std::uint64_t seed = first_seed + static_cast<std::uint64_t>(e);
    Rng policy(derive_seed(seed, {stream::kPolicy}));
    env->reset(seed);
    for (int t = 0; t < max_steps; ++t) {
      const auto r = policy();
      const StepResult step = env->step(Action{static_cast<int>(r % 9), ((r >> 8) & 1) != 0});
      total += step.reward;
      if (step.terminal) break;
    }
  }
  return total / episodes;
}

struct EnvCheckReport {
  bool ok = true;
  std::vector<std::string> messages;

  void fail(std::string m) {
    ok = false;
    messages.push_back("FAIL " + std::move(m));
  }
  void pass(std::string m) { messages.push_back("ok   " + std::move(m)); }
};

// Drives two independent instances through identical seeded action scripts
// and checks message validity and trajectory equality.
inline EnvCheckReport env_check(const EnvSpec& spec, int steps_per_episode = 100) {
  EnvCheckReport report;
  struct Trace {
    std::vector<Observation> obs;
    std::vector<double> rewards;
    std::vector<bool> terminals;
  };
  auto play = [&](Environment& env, std::uint64_t seed) {
    Trace t;
    Rng actions(derive_seed(seed, {99}));
    t.obs.push_back(env.reset(seed));
    for (int i = 0; i < steps_per_episode; ++i) {
      Action a{static_cast<int>(actions() % 9), (actions() & 1) != 0};
      StepResult r = env.step(a);
      t.obs.push_back(r.obs);
      t.rewards.push_back(r.reward);
      t.terminals.push_back(r.terminal);
      if (r.terminal) break;
    }
    return t;
  };
  try {
    auto first = spec.make();
    auto second = spec.make();
    const EnvInfo info = first->info();
    report.pass("handshake: " + std::to_string(info.rows) + "x" + std::to_string(info.cols) + ", " +
                std::to_string(info.n_classes) + " classes");
    for (std::uint64_t seed : {1ULL, 2ULL, 12345ULL}) {
      const Trace a = play(*first, seed);
      const Trace b = play(*second, seed);
      const std::string tag = "seed " + std::to_string(seed) + ": ";
      bool shapes_ok = true;
      for (const auto& o : a.obs)
        shapes_ok = shapes_ok && o.rows == info.rows && o.cols == info.cols && o.n_classes == info.n_classes;
      if (!shapes_ok) report.fail(tag + "observation shape differs from handshake");
      if (a.obs == b.obs && a.rewards == b.rewards && a.terminals == b.terminals)
        report.pass(tag + std::to_string(a.rewards.size()) + " steps, deterministic");
      else
        report.fail(tag + "trajectories differ between instances with the same seed");
      // A replay on the same instance must also match.
      const Trace c = play(*first, seed);
      if (!(c.obs == a.obs && c.rewards == a.rewards)) report.fail(tag + "replay after reset differs");
    }
  } catch (const Error& e) {
    report.fail(e.what());
  }
  return report;
}

}  // namespace grusm
