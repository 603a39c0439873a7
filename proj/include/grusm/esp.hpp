#pragma once

// Enforced Subpopulations: one population of weight vectors per recruit,
// networks assembled from one member of each, credit shared by every
// participant, burst phases on stagnation, and recruit addition.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "grusm/error.hpp"
#include "grusm/net.hpp"
#include "grusm/parallel.hpp"
#include "grusm/rng.hpp"
#include "grusm/serialize.hpp"
#include "grusm/transfer.hpp"

namespace grusm {

struct EspConfig {
  std::size_t n_sub = 40;
  std::size_t assemblies_per_gen = 100;
  std::size_t trials_per_eval = 5;
  double p_mut = 0.4;
  double sigma_mut = 0.3;
  double delta_burst = 0.3;
  int threshold_b = 10;
  std::size_t h0 = 4;           // fresh nodes in a scratch network
  std::size_t h0_transfer = 1;  // fresh nodes alongside a source recruit
  double elitism = 0.25;
  double init_range = kDefaultInitRange;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_sub == 0) throw ConfigError("n_sub must be positive");
    if (assemblies_per_gen == 0) throw ConfigError("assemblies_per_gen must be positive");
    if (trials_per_eval == 0) throw ConfigError("trials_per_eval must be positive");
    if (p_mut < 0.0 || p_mut > 1.0) throw ConfigError("p_mut must be in [0,1]");
    if (sigma_mut < 0.0) throw ConfigError("sigma_mut must be non-negative");
    if (delta_burst < 0.0) throw ConfigError("delta_burst must be non-negative");
    if (threshold_b <= 0) throw ConfigError("threshold_b must be positive");
    if (elitism <= 0.0 || elitism > 1.0) throw ConfigError("elitism must be in (0,1]");
    if (init_range < 0.0) throw ConfigError("init_range must be non-negative");
  }

  Json to_json() const {
    return {{"n_sub", n_sub},         {"assemblies_per_gen", assemblies_per_gen},
            {"trials_per_eval", trials_per_eval},
            {"p_mut", p_mut},         {"sigma_mut", sigma_mut},
            {"delta_burst", delta_burst},
            {"threshold_b", threshold_b},
            {"h0", h0},               {"h0_transfer", h0_transfer},
            {"elitism", elitism},     {"init_range", init_range},
            {"seed", seed}};
  }

  // Applies any keys present in `j`; unknown keys are rejected.
  void merge_json(const Json& j) {
    if (!j.is_object()) throw ParseError("evolution", "expected an object");
    for (const auto& [key, v] : j.items()) {
      try {
        if (key == "n_sub") n_sub = v.get<std::size_t>();
        else if (key == "assemblies_per_gen") assemblies_per_gen = v.get<std::size_t>();
        else if (key == "trials_per_eval") trials_per_eval = v.get<std::size_t>();
        else if (key == "p_mut") p_mut = v.get<double>();
        else if (key == "sigma_mut") sigma_mut = v.get<double>();
        else if (key == "delta_burst") delta_burst = v.get<double>();
        else if (key == "threshold_b") threshold_b = v.get<int>();
        else if (key == "h0") h0 = v.get<std::size_t>();
        else if (key == "h0_transfer") h0_transfer = v.get<std::size_t>();
        else if (key == "elitism") elitism = v.get<double>();
        else if (key == "init_range") init_range = v.get<double>();
        else if (key == "seed") seed = v.get<std::uint64_t>();
        else throw ParseError(key, "unknown evolution setting");
      } catch (const Json::exception& e) {
        throw ParseError(key, e.what());
      }
    }
  }
};

struct Genome {
  std::vector<double> weights;
  double fitness_sum = 0.0;
  std::size_t participations = 0;

  std::optional<double> mean_fitness() const {
    if (participations == 0) return std::nullopt;
    return fitness_sum / static_cast<double>(participations);
  }
  void reset_ledger() {
    fitness_sum = 0.0;
    participations = 0;
  }
};

struct FreshNode {
  bool operator==(const FreshNode&) const = default;
};
struct SourceNet {
  std::size_t pool_index = 0;
  bool operator==(const SourceNet&) const = default;
};
using RecruitKind = std::variant<FreshNode, SourceNet>;

inline std::string recruit_name(const RecruitKind& k) {
  return std::holds_alternative<FreshNode>(k) ? "fresh" : "source:" + std::to_string(std::get<SourceNet>(k).pool_index);
}

// Fresh-node genome: [input weights..., self-loop, bias, output weights...].
inline std::size_t fresh_genome_length(std::size_t n_inputs) { return n_inputs + 2 + kOutputs; }

struct Champion {
  std::vector<double> weights;
  double mean_fitness = 0.0;
};

struct Subpopulation {
  RecruitKind kind;
  std::size_t genome_length = 0;
  std::vector<Genome> members;
  std::optional<Champion> best_ever;
};

inline Subpopulation make_subpopulation(RecruitKind kind, std::size_t genome_length, std::size_t n, Rng& rng,
                                        double init_range) {
  Subpopulation sp{kind, genome_length, {}, std::nullopt};
  sp.members.resize(n);
  for (auto& g : sp.members) {
    g.weights.resize(genome_length);
    for (auto& w : g.weights) w = init_weight(rng, init_range);
  }
  return sp;
}

// One member index per subpopulation, uniformly at random.
inline std::vector<std::size_t> assemble(std::span<const Subpopulation> subpops, Rng& rng) {
  if (subpops.empty()) throw ConfigError("cannot assemble a network from zero subpopulations");
  std::vector<std::size_t> pick;
  pick.reserve(subpops.size());
  for (const auto& sp : subpops) {
    if (sp.members.empty()) throw ConfigError("cannot assemble from an empty subpopulation");
    pick.push_back(std::uniform_int_distribution<std::size_t>(0, sp.members.size() - 1)(rng));
  }
  return pick;
}

// Maps a selection to a network: fresh-node recruits become hidden nodes in
// subpopulation order; a source recruit's genome becomes its TransferLinks.
// Output biases are not part of any recruit and stay at zero.
inline GrusmNetwork build_network(std::span<const Subpopulation> subpops, std::span<const std::size_t> selection,
                                  const std::vector<Substrate>& substrates, const SourcePool& pool) {
  if (selection.size() != subpops.size()) throw ConfigError("selection does not cover every subpopulation");
  const std::size_t n_in = input_count(substrates);
  std::size_t n_fresh = 0;
  for (const auto& sp : subpops) n_fresh += std::holds_alternative<FreshNode>(sp.kind) ? 1 : 0;

  GrusmNetwork net;
  net.target = TargetModule::zeros(substrates, n_fresh);
  std::size_t j = 0;
  for (std::size_t s = 0; s < subpops.size(); ++s) {
    const auto& sp = subpops[s];
    const auto& w = sp.members.at(selection[s]).weights;
    if (std::holds_alternative<FreshNode>(sp.kind)) {
      if (w.size() != fresh_genome_length(n_in)) throw ConfigError("fresh-node genome has the wrong length");
      for (std::size_t i = 0; i < n_in; ++i) net.target.w_in(i, j) = w[i];
      net.target.hidden[j] = {w[n_in + 1], w[n_in]};
      for (std::size_t k = 0; k < kOutputs; ++k) net.target.w_out(j, k) = w[n_in + 2 + k];
      ++j;
    } else {
      if (net.source) throw ConfigError("at most one source network may be attached");
      const auto idx = std::get<SourceNet>(sp.kind).pool_index;
      const auto layout = make_layout(substrates, pool.at(idx));
      net.source = AttachedSource{pool.handle(idx), instantiate_transfer(w, layout)};
    }
  }
  return net;
}

inline void credit_fitness(std::span<Subpopulation> subpops, std::span<const std::size_t> participants,
                           double score) {
  if (participants.size() != subpops.size()) throw ConfigError("participants do not cover every subpopulation");
  for (std::size_t s = 0; s < subpops.size(); ++s) {
    auto& g = subpops[s].members.at(participants[s]);
    g.fitness_sum += score;
    g.participations += 1;
  }
}

// Promotes this generation's best-evaluated member if it beats best_ever.
inline void record_best(Subpopulation& sp) {
  for (const auto& g : sp.members) {
    auto m = g.mean_fitness();
    if (m && (!sp.best_ever || *m > sp.best_ever->mean_fitness)) sp.best_ever = Champion{g.weights, *m};
  }
}

inline std::vector<double> one_point_crossover(std::span<const double> a, std::span<const double> b,
                                               std::size_t cut) {
  std::vector<double> child(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(cut));
  child.insert(child.end(), b.begin() + static_cast<std::ptrdiff_t>(cut), b.end());
  return child;
}

// Ranks evaluated members by mean fitness, keeps the elite fraction unchanged,
// and refills the rest with mutated one-point crossovers of two distinct
// elites. Members never evaluated are left out of the ranking.
inline void evolve_generation(Subpopulation& sp, const EspConfig& cfg, Rng& rng) {
  record_best(sp);
  std::vector<std::size_t> ranked;
  for (std::size_t i = 0; i < sp.members.size(); ++i)
    if (sp.members[i].participations > 0) ranked.push_back(i);
  if (ranked.empty()) {
    for (auto& g : sp.members) g.reset_ledger();
    return;
  }
  std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
    return *sp.members[a].mean_fitness() > *sp.members[b].mean_fitness();
  });

  const std::size_t n = sp.members.size();
  const auto quota = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(cfg.elitism * static_cast<double>(n))));
  const std::size_t n_elite = std::min(quota, ranked.size());

  std::vector<Genome> next;
  next.reserve(n);
  for (std::size_t e = 0; e < n_elite; ++e) next.push_back(sp.members[ranked[e]]);

  std::uniform_int_distribution<std::size_t> pick(0, n_elite - 1);
  std::bernoulli_distribution mutate(cfg.p_mut);
  std::normal_distribution<double> noise(0.0, cfg.sigma_mut);
  const std::size_t len = sp.genome_length;
  while (next.size() < n) {
    std::size_t a = pick(rng);
    std::size_t b = a;
    if (n_elite > 1) {
      b = std::uniform_int_distribution<std::size_t>(0, n_elite - 2)(rng);
      if (b >= a) ++b;
    }
    Genome child;
    if (len >= 2) {
      const auto cut = std::uniform_int_distribution<std::size_t>(1, len - 1)(rng);
      child.weights = one_point_crossover(next[a].weights, next[b].weights, cut);
    } else {
      child.weights = next[a].weights;
    }
    if (cfg.p_mut > 0.0) {
      for (auto& w : child.weights)
        if (mutate(rng)) w += cfg.sigma_mut > 0.0 ? noise(rng) : 0.0;
    }
    next.push_back(std::move(child));
  }
  for (auto& g : next) g.reset_ledger();
  sp.members = std::move(next);
}

struct BurstState {
  int stagnation_counter = 0;
  int consecutive_bursts = 0;
  int threshold_b = 10;
};

struct BurstDecision {
  bool burst_now = false;
  bool add_recruit_now = false;
};

inline BurstDecision detect_stagnation(BurstState& state, bool run_best_improved) {
  if (run_best_improved) {
    state.stagnation_counter = 0;
    state.consecutive_bursts = 0;
    return {};
  }
  BurstDecision d;
  if (++state.stagnation_counter >= state.threshold_b) {
    d.burst_now = true;
    state.stagnation_counter = 0;
    if (++state.consecutive_bursts >= 2) {
      d.add_recruit_now = true;
      state.consecutive_bursts = 0;
    }
  }
  return d;
}

// Repopulates with Cauchy(0, delta) perturbations of best_ever.
inline void burst(Subpopulation& sp, double delta, Rng& rng) {
  if (!sp.best_ever) return;
  std::cauchy_distribution<double> perturb(0.0, delta > 0.0 ? delta : 1.0);
  for (auto& g : sp.members) {
    g.weights = sp.best_ever->weights;
    if (delta > 0.0)
      for (auto& w : g.weights) w += perturb(rng);
    g.reset_ledger();
  }
}

// Produces new recruits: the next unused pooled source when there is one,
// otherwise a fresh hidden node.
class RecruitFactory {
 public:
  RecruitFactory(std::vector<Substrate> substrates, SourcePool& pool, std::size_t n_sub, double init_range)
      : substrates_(std::move(substrates)), pool_(pool), n_sub_(n_sub), init_range_(init_range) {}

  Subpopulation make(Rng& rng) {
    if (auto idx = pool_.take_unused()) {
      const auto layout = make_layout(substrates_, pool_.at(*idx));
      return make_subpopulation(SourceNet{*idx}, layout.genome_length(), n_sub_, rng, init_range_);
    }
    return make_fresh(rng);
  }

  Subpopulation make_fresh(Rng& rng) const {
    return make_subpopulation(FreshNode{}, fresh_genome_length(input_count(substrates_)), n_sub_, rng, init_range_);
  }

 private:
  std::vector<Substrate> substrates_;
  SourcePool& pool_;
  std::size_t n_sub_;
  double init_range_;
};

inline RecruitKind add_recruit(std::vector<Subpopulation>& subpops, RecruitFactory& factory, Rng& rng) {
  subpops.push_back(factory.make(rng));
  return subpops.back().kind;
}

// Scores a network; `eval_seed` is derived from (run seed, generation,
// assembly index) so results do not depend on evaluation order.
using FitnessFn = std::function<double(const GrusmNetwork&, std::uint64_t eval_seed)>;

struct GenerationReport {
  std::size_t generation = 0;  // 1-based
  double generation_best = 0.0;
  double run_best = 0.0;
  bool improved = false;
  bool burst = false;
  std::optional<RecruitKind> added;
};

// The GRUSM-ESP generation loop over a fixed interface shape.
class Evolver {
 public:
  Evolver(EspConfig cfg, std::vector<Substrate> substrates, SourcePool pool, std::size_t initial_fresh,
          unsigned threads = 1)
      : cfg_(cfg),
        substrates_(std::move(substrates)),
        pool_(std::move(pool)),
        threads_(threads),
        rng_(derive_seed(cfg.seed, {stream::kEvolution})) {
    cfg_.validate();
    burst_state_.threshold_b = cfg_.threshold_b;
    RecruitFactory factory(substrates_, pool_, cfg_.n_sub, cfg_.init_range);
    if (pool_.size() > 0) subpops_.push_back(factory.make(rng_));
    for (std::size_t i = 0; i < initial_fresh; ++i) subpops_.push_back(factory.make_fresh(rng_));
    if (subpops_.empty()) throw ConfigError("a network needs at least one recruit");
    for (const auto& sp : subpops_) initial_recruits_.push_back(sp.kind);
  }

  GenerationReport run_generation(const FitnessFn& fitness) {
    const std::size_t gen = generation_ + 1;
    std::vector<std::vector<std::size_t>> selections(cfg_.assemblies_per_gen);
    for (auto& sel : selections) sel = assemble(subpops_, rng_);

    std::vector<double> scores(selections.size());
    parallel_for(selections.size(), threads_, [&](std::size_t a) {
      const auto net = build_network(subpops_, selections[a], substrates_, pool_);
      scores[a] = fitness(net, derive_seed(cfg_.seed, {stream::kEvaluation, gen, a}));
    });

    std::size_t best_a = 0;
    for (std::size_t a = 0; a < scores.size(); ++a) {
      if (!std::isfinite(scores[a])) throw Error("fitness function returned a non-finite score");
      credit_fitness(subpops_, selections[a], scores[a]);
      if (scores[a] > scores[best_a]) best_a = a;
    }

    GenerationReport report;
    report.generation = gen;
    report.generation_best = scores[best_a];
    report.improved = !best_network_ || scores[best_a] > run_best_;
    if (report.improved) {
      run_best_ = scores[best_a];
      best_network_ = build_network(subpops_, selections[best_a], substrates_, pool_);
    }
    report.run_best = run_best_;
    curve_.push_back(run_best_);

    for (auto& sp : subpops_) record_best(sp);
    const auto decision = detect_stagnation(burst_state_, report.improved);
    report.burst = decision.burst_now;
    if (decision.burst_now) {
      for (auto& sp : subpops_) burst(sp, cfg_.delta_burst, rng_);
    } else {
      for (auto& sp : subpops_) evolve_generation(sp, cfg_, rng_);
    }
    if (decision.add_recruit_now) {
      RecruitFactory factory(substrates_, pool_, cfg_.n_sub, cfg_.init_range);
      report.added = add_recruit(subpops_, factory, rng_);
    }
    generation_ = gen;
    return report;
  }

  std::size_t generation() const { return generation_; }
  double run_best() const { return run_best_; }
  const std::vector<double>& curve() const { return curve_; }
  const std::optional<GrusmNetwork>& best_network() const { return best_network_; }
  const std::vector<Subpopulation>& subpopulations() const { return subpops_; }
  const std::vector<RecruitKind>& initial_recruits() const { return initial_recruits_; }
  const BurstState& burst_state() const { return burst_state_; }
  const SourcePool& pool() const { return pool_; }
  const EspConfig& config() const { return cfg_; }

  // Recruit kinds, sizes, and per-subpopulation champions.
  Json population_snapshot() const {
    Json subs = Json::array();
    for (const auto& sp : subpops_) {
      Json s = {{"kind", recruit_name(sp.kind)}, {"genome_length", sp.genome_length}, {"size", sp.members.size()}};
      if (sp.best_ever)
        s["best_ever"] = {{"mean_fitness", sp.best_ever->mean_fitness}, {"weights", sp.best_ever->weights}};
      else
        s["best_ever"] = nullptr;
      subs.push_back(std::move(s));
    }
    return {{"subpopulations", subs},
            {"burst_state",
             {{"stagnation_counter", burst_state_.stagnation_counter},
              {"consecutive_bursts", burst_state_.consecutive_bursts}}}};
  }

 private:
  EspConfig cfg_;
  std::vector<Substrate> substrates_;
  SourcePool pool_;
  unsigned threads_;
  Rng rng_;
  std::vector<Subpopulation> subpops_;
  std::vector<RecruitKind> initial_recruits_;
  BurstState burst_state_;
  std::size_t generation_ = 0;
  double run_best_ = -std::numeric_limits<double>::infinity();
  std::optional<GrusmNetwork> best_network_;
  std::vector<double> curve_;
};

}  // namespace grusm
