#pragma once

// MiniArcade: a seeded gridworld family whose mechanics switch on with the
// five game features.
//
//   horizontal   avatar moves left/right; items fall from the top row, +1 per catch
//   vertical     avatar moves up/down within the lower half; hazards sweep
//                across rows, -1 per hit, episode ends after `hits_to_end` hits
//   shooting     fire launches an upward projectile; targets drift in the upper
//                half, +2 per destruction. Without it fire is a no-op.
//   delayed      every reward is banked and paid as a lump sum after
//                `payout_interval` consecutive failure-free steps; a failure
//                (hazard hit, missed item) forfeits the bank
//   planning     chains of bonus objects must be collected in order; taking one
//                out of order forfeits the rest of the chain
//
// Every step also earns a constant survival reward. Observation classes, in
// order: avatar, items/hazards/targets, projectiles, bonus objects; only the
// classes used by active features are emitted. Bonus cells are shaded by
// chain position: the next object is 1.0, later ones fade toward 0.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "grusm/env.hpp"
#include "grusm/error.hpp"
#include "grusm/rng.hpp"

namespace grusm {

struct MiniArcadeConfig {
  GameFeatures features;
  int rows = 6;
  int cols = 8;
  int max_steps = 600;
  double survival_reward = 0.01;
  int hits_to_end = 3;
  int payout_interval = 20;
  int item_interval = 4;
  int hazard_interval = 3;
  int target_interval = 6;
  int max_targets = 3;
  int chain_length = 3;
  int chain_delay = 10;

  int n_classes() const {
    const auto& f = features;
    return 1 + ((f.horizontal || f.vertical || f.shooting) ? 1 : 0) + (f.shooting ? 1 : 0) +
           (f.long_term_planning ? 1 : 0);
  }
};

class MiniArcade : public Environment {
 public:
  explicit MiniArcade(MiniArcadeConfig cfg) : cfg_(cfg) {
    if (cfg_.rows < 5 || cfg_.cols < 5) throw ConfigError("MiniArcade needs at least a 5x5 grid");
    if (cfg_.max_steps <= 0) throw ConfigError("max_steps must be positive");
    if (cfg_.payout_interval <= 0 || cfg_.hits_to_end <= 0) throw ConfigError("invalid MiniArcade settings");
    const auto& f = cfg_.features;
    int cls = 1;
    item_class_ = (f.horizontal || f.vertical || f.shooting) ? cls++ : -1;
    projectile_class_ = f.shooting ? cls++ : -1;
    bonus_class_ = f.long_term_planning ? cls++ : -1;
  }

  EnvInfo info() const override { return {cfg_.rows, cfg_.cols, cfg_.n_classes(), cfg_.max_steps}; }
  const MiniArcadeConfig& config() const { return cfg_; }

  Observation reset(std::uint64_t seed) override {
    rng_.seed(seed);
    steps_ = 0;
    hits_ = 0;
    streak_ = 0;
    bank_ = 0.0;
    terminal_ = false;
    started_ = true;
    avatar_r_ = cfg_.rows - 1;
    avatar_c_ = cfg_.cols / 2;
    items_.clear();
    hazards_.clear();
    targets_.clear();
    projectile_.reset();
    chain_.clear();
    chain_next_ = 0;
    chain_cooldown_ = 0;
    if (cfg_.features.long_term_planning) spawn_chain();
    return observe();
  }

  StepResult step(const Action& action) override {
    if (!started_) throw UsageError("step called before reset");
    if (terminal_) throw UsageError("step called after the episode ended");
    if (action.direction < 0 || action.direction > 8) throw UsageError("action direction out of range");
    const auto& f = cfg_.features;
    double events = cfg_.survival_reward;
    bool failure = false;

    if (f.horizontal) avatar_c_ = std::clamp(avatar_c_ + action.col_delta(), 0, cfg_.cols - 1);
    if (f.vertical) avatar_r_ = std::clamp(avatar_r_ + action.row_delta(), band_top(), cfg_.rows - 1);

    if (f.shooting) {
      if (action.fire && !projectile_ && avatar_r_ > 0) projectile_ = Cell{avatar_r_, avatar_c_, 0};
      events += advance_projectile();
    }
    if (f.horizontal) {
      int caught = 0, missed = 0;
      advance_items(caught, missed);
      events += caught;
      if (missed > 0) failure = true;
    }
    if (f.vertical) {
      const int hit = advance_hazards();
      if (hit > 0) {
        events -= hit;
        hits_ += hit;
        failure = true;
      }
    }
    if (f.shooting) {
      advance_targets();
      events += hit_targets();
    }
    if (f.long_term_planning) events += collect_bonus();

    spawn();
    ++steps_;
    if (hits_ >= cfg_.hits_to_end || steps_ >= cfg_.max_steps) terminal_ = true;

    double reward = events;
    if (f.delayed_rewards) {
      reward = 0.0;
      if (failure) {
        bank_ = 0.0;
        streak_ = 0;
      } else {
        bank_ += events;
        if (++streak_ >= cfg_.payout_interval) {
          reward = bank_;
          bank_ = 0.0;
          streak_ = 0;
        }
      }
    }
    return {observe(), reward, terminal_};
  }

  bool terminal() const { return terminal_; }
  int steps() const { return steps_; }

 private:
  struct Cell {
    int r = 0;
    int c = 0;
    int dir = 0;  // horizontal drift for hazards and targets
  };

  int band_top() const { return cfg_.rows / 2; }

  bool at_avatar(const Cell& x) const { return x.r == avatar_r_ && x.c == avatar_c_; }

  void advance_items(int& caught, int& missed) {
    std::vector<Cell> kept;
    for (auto it : items_) {
      if (at_avatar(it)) {
        ++caught;
        continue;
      }
      ++it.r;
      if (at_avatar(it)) {
        ++caught;
      } else if (it.r >= cfg_.rows) {
        ++missed;
      } else {
        kept.push_back(it);
      }
    }
    items_ = std::move(kept);
  }

  int advance_hazards() {
    int hit = 0;
    std::vector<Cell> kept;
    for (auto hz : hazards_) {
      if (at_avatar(hz)) {
        ++hit;
        continue;
      }
      hz.c += hz.dir;
      if (at_avatar(hz)) {
        ++hit;
      } else if (hz.c >= 0 && hz.c < cfg_.cols) {
        kept.push_back(hz);
      }
    }
    hazards_ = std::move(kept);
    return hit;
  }

  void advance_targets() {
    if (steps_ % 2 != 0) return;
    for (auto& t : targets_) {
      int c = t.c + t.dir;
      if (c < 0 || c >= cfg_.cols) {
        t.dir = -t.dir;
        c = t.c + t.dir;
      }
      t.c = c;
    }
  }

  double hit_targets() {
    if (!projectile_) return 0.0;
    for (auto it = targets_.begin(); it != targets_.end(); ++it) {
      if (it->r == projectile_->r && it->c == projectile_->c) {
        targets_.erase(it);
        projectile_.reset();
        return 2.0;
      }
    }
    return 0.0;
  }

  double advance_projectile() {
    if (!projectile_) return 0.0;
    double r = hit_targets();
    if (!projectile_) return r;
    projectile_->r -= 1;
    if (projectile_->r < 0) {
      projectile_.reset();
      return 0.0;
    }
    return hit_targets();
  }

  double collect_bonus() {
    if (chain_.empty()) {
      if (chain_cooldown_ > 0 && --chain_cooldown_ == 0) spawn_chain();
      return 0.0;
    }
    for (std::size_t k = chain_next_; k < chain_.size(); ++k) {
      if (!at_avatar(chain_[k])) continue;
      if (k == chain_next_) {
        ++chain_next_;
        const double reward = 3.0 * static_cast<double>(chain_next_);
        if (chain_next_ == chain_.size()) end_chain();
        return reward;
      }
      end_chain();
      return 0.0;
    }
    return 0.0;
  }

  void end_chain() {
    chain_.clear();
    chain_next_ = 0;
    chain_cooldown_ = cfg_.chain_delay;
  }

  void spawn_chain() {
    const auto& f = cfg_.features;
    const int r0 = f.vertical ? band_top() : avatar_r_;
    const int r1 = f.vertical ? cfg_.rows - 1 : avatar_r_;
    const int c0 = f.horizontal ? 0 : avatar_c_;
    const int c1 = f.horizontal ? cfg_.cols - 1 : avatar_c_;
    std::vector<Cell> cells;
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c)
        if (!(r == avatar_r_ && c == avatar_c_)) cells.push_back({r, c, 0});
    if (cells.size() < static_cast<std::size_t>(cfg_.chain_length)) return;
    std::shuffle(cells.begin(), cells.end(), rng_);
    chain_.assign(cells.begin(), cells.begin() + cfg_.chain_length);
    chain_next_ = 0;
  }

  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  void spawn() {
    const auto& f = cfg_.features;
    if (f.horizontal && steps_ % cfg_.item_interval == 0) items_.push_back({0, uniform(0, cfg_.cols - 1), 0});
    if (f.vertical && steps_ % cfg_.hazard_interval == 0) {
      const int row = uniform(band_top(), cfg_.rows - 1);
      const bool from_left = uniform(0, 1) == 0;
      hazards_.push_back({row, from_left ? 0 : cfg_.cols - 1, from_left ? 1 : -1});
    }
    if (f.shooting && steps_ % cfg_.target_interval == 0 && static_cast<int>(targets_.size()) < cfg_.max_targets) {
      const int row = uniform(0, band_top() - 1);
      const int col = uniform(0, cfg_.cols - 1);
      targets_.push_back({row, col, uniform(0, 1) == 0 ? -1 : 1});
    }
  }

  Observation observe() const {
    Observation obs(cfg_.rows, cfg_.cols, cfg_.n_classes());
    obs.at(0, avatar_r_, avatar_c_) = 1.0;
    if (item_class_ >= 0) {
      for (const auto& x : items_) obs.at(item_class_, x.r, x.c) = 1.0;
      for (const auto& x : hazards_) obs.at(item_class_, x.r, x.c) = 1.0;
      for (const auto& x : targets_) obs.at(item_class_, x.r, x.c) = 1.0;
    }
    if (projectile_class_ >= 0 && projectile_) obs.at(projectile_class_, projectile_->r, projectile_->c) = 1.0;
    if (bonus_class_ >= 0) {
      const double n = static_cast<double>(chain_.size());
      for (std::size_t k = chain_next_; k < chain_.size(); ++k)
        obs.at(bonus_class_, chain_[k].r, chain_[k].c) = 1.0 - static_cast<double>(k - chain_next_) / n;
    }
    return obs;
  }

  MiniArcadeConfig cfg_;
  int item_class_ = -1;
  int projectile_class_ = -1;
  int bonus_class_ = -1;

  Rng rng_;
  bool started_ = false;
  bool terminal_ = false;
  int steps_ = 0;
  int hits_ = 0;
  int streak_ = 0;
  double bank_ = 0.0;
  int avatar_r_ = 0;
  int avatar_c_ = 0;
  std::vector<Cell> items_;
  std::vector<Cell> hazards_;
  std::vector<Cell> targets_;
  std::optional<Cell> projectile_;
  std::vector<Cell> chain_;
  std::size_t chain_next_ = 0;
  int chain_cooldown_ = 0;
};

}  // namespace grusm
