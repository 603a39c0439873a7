#pragma once

// Episodic environment contract, game feature vectors, and the epsilon-repeat
// stochastic wrapper.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "grusm/error.hpp"
#include "grusm/net.hpp"
#include "grusm/rng.hpp"

namespace grusm {

// One rows x cols occupancy grid per object class, concatenated class-major
// and row-major within a class. This is the network's input order.
struct Observation {
  int rows = 0;
  int cols = 0;
  int n_classes = 0;
  std::vector<double> cells;

  Observation() = default;
  Observation(int rows_, int cols_, int classes_)
      : rows(rows_), cols(cols_), n_classes(classes_),
        cells(static_cast<std::size_t>(rows_) * static_cast<std::size_t>(cols_) * static_cast<std::size_t>(classes_),
              0.0) {}

  double& at(int cls, int r, int c) {
    return cells[(static_cast<std::size_t>(cls) * rows + r) * cols + c];
  }
  double at(int cls, int r, int c) const {
    return cells[(static_cast<std::size_t>(cls) * rows + r) * cols + c];
  }
  bool operator==(const Observation&) const = default;
};

struct EnvInfo {
  int rows = 0;
  int cols = 0;
  int n_classes = 0;
  int max_steps = 0;

  std::vector<Substrate> substrates() const {
    return std::vector<Substrate>(static_cast<std::size_t>(n_classes), Substrate{rows, cols});
  }
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool terminal = false;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual EnvInfo info() const = 0;
  virtual Observation reset(std::uint64_t seed) = 0;
  virtual StepResult step(const Action& action) = 0;
};

struct EpisodeResult {
  double score = 0.0;
  int steps = 0;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------

struct GameFeatures {
  bool horizontal = false;
  bool vertical = false;
  bool shooting = false;
  bool delayed_rewards = false;
  bool long_term_planning = false;

  unsigned bits() const {
    return (horizontal ? 1u : 0u) | (vertical ? 2u : 0u) | (shooting ? 4u : 0u) | (delayed_rewards ? 8u : 0u) |
           (long_term_planning ? 16u : 0u);
  }
  static GameFeatures from_bits(unsigned b) {
    return {(b & 1u) != 0, (b & 2u) != 0, (b & 4u) != 0, (b & 8u) != 0, (b & 16u) != 0};
  }
  int count() const { return __builtin_popcount(bits()); }

  // Feature letters in h, v, s, d, l order; "none" when empty.
  std::string letters() const {
    std::string s;
    if (horizontal) s += 'h';
    if (vertical) s += 'v';
    if (shooting) s += 's';
    if (delayed_rewards) s += 'd';
    if (long_term_planning) s += 'l';
    return s.empty() ? "none" : s;
  }

  static GameFeatures parse_letters(const std::string& s) {
    GameFeatures f;
    if (s == "none" || s.empty()) return f;
    for (char c : s) {
      switch (c) {
        case 'h': f.horizontal = true; break;
        case 'v': f.vertical = true; break;
        case 's': f.shooting = true; break;
        case 'd': f.delayed_rewards = true; break;
        case 'l': f.long_term_planning = true; break;
        default: throw ConfigError(std::string("unknown feature letter '") + c + "' (expected h, v, s, d, l)");
      }
    }
    return f;
  }

  bool operator==(const GameFeatures&) const = default;
};

inline int feature_similarity(const GameFeatures& a, const GameFeatures& b) {
  return __builtin_popcount(a.bits() & b.bits());
}

enum class Order { Below, Above, Equal, Incomparable };

// Partial order by inclusion of the true-feature sets.
inline Order feature_partial_order(const GameFeatures& g1, const GameFeatures& g2) {
  const unsigned a = g1.bits(), b = g2.bits();
  if (a == b) return Order::Equal;
  if ((a & b) == a) return Order::Below;
  if ((a & b) == b) return Order::Above;
  return Order::Incomparable;
}

inline const char* to_string(Order o) {
  switch (o) {
    case Order::Below: return "below";
    case Order::Above: return "above";
    case Order::Equal: return "equal";
    case Order::Incomparable: return "incomparable";
  }
  return "?";
}

// ---------------------------------------------------------------------------

// With probability epsilon the previously executed action is executed again
// instead of the submitted one. The first step after reset always executes
// the submitted action. The wrapper's RNG is seeded from a stream distinct
// from the inner environment's seed.
class EpsilonRepeat : public Environment {
 public:
  EpsilonRepeat(std::unique_ptr<Environment> inner, double epsilon) : inner_(std::move(inner)), epsilon_(epsilon) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must be in [0,1]");
    if (!inner_) throw ConfigError("epsilon-repeat needs an inner environment");
  }

  EnvInfo info() const override { return inner_->info(); }

  Observation reset(std::uint64_t seed) override {
    rng_.seed(derive_seed(seed, {stream::kEpsilonRepeat}));
    last_.reset();
    return inner_->reset(seed);
  }

  StepResult step(const Action& action) override {
    Action executed = action;
    if (last_ && std::bernoulli_distribution(epsilon_)(rng_)) executed = *last_;
    last_ = executed;
    return inner_->step(executed);
  }

  const std::optional<Action>& last_executed() const { return last_; }
  double epsilon() const { return epsilon_; }

 private:
  std::unique_ptr<Environment> inner_;
  double epsilon_;
  Rng rng_;
  std::optional<Action> last_;
};

}  // namespace grusm
