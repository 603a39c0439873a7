#pragma once

// Experiment runs: the scratch / transfer / random conditions, trial-averaged
// evaluation, cumulative-max score curves, run records, and batch matrices.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "grusm/environments.hpp"
#include "grusm/esp.hpp"
#include "grusm/io.hpp"
#include "grusm/parallel.hpp"
#include "grusm/serialize.hpp"
#include "grusm/transfer.hpp"

namespace grusm {

enum class Condition { Scratch, Transfer, Random };

inline std::string to_string(Condition c) {
  switch (c) {
    case Condition::Scratch: return "scratch";
    case Condition::Transfer: return "transfer";
    case Condition::Random: return "random";
  }
  return "?";
}

inline Condition parse_condition(const std::string& s) {
  if (s == "scratch") return Condition::Scratch;
  if (s == "transfer") return Condition::Transfer;
  if (s == "random") return Condition::Random;
  throw ConfigError("unknown condition '" + s + "' (expected scratch, transfer, or random)");
}

inline constexpr double kDefaultEpsilon = 0.25;
inline constexpr std::size_t kDefaultGenerations = 200;

struct RunConfig {
  std::string game;  // label used by analysis; defaults to the env spec
  std::string env = "miniarcade:h";
  int max_steps = kDefaultMaxSteps;
  Condition condition = Condition::Scratch;
  std::string source_path;  // transfer: network file of the frozen source
  std::string source_game;  // transfer: label of the source's game
  std::string stats_path;   // random: scratch parameter statistics
  std::size_t generations = kDefaultGenerations;
  double epsilon = kDefaultEpsilon;
  EspConfig evolution;
  unsigned threads = 1;  // evaluation workers; does not affect results

  std::string game_label() const { return game.empty() ? env : game; }

  void validate() const {
    if (generations == 0) throw ConfigError("generations must be positive");
    if (max_steps <= 0) throw ConfigError("max_steps must be positive");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must be in [0,1]");
    evolution.validate();
    if (condition == Condition::Transfer) {
      if (source_path.empty()) throw ConfigError("transfer condition requires --source <net.json>");
      if (!std::filesystem::is_regular_file(source_path))
        throw ConfigError("source network not readable: " + source_path);
    }
    if (condition == Condition::Random && stats_path.empty())
      throw ConfigError("random condition requires --scratch-stats <stats.json>");
    EnvSpec::parse(env, max_steps);
  }

  // Everything that determines the run's outcome.
  Json to_json() const {
    Json j = {{"game", game_label()},
              {"env", env},
              {"max_steps", max_steps},
              {"condition", to_string(condition)},
              {"generations", generations},
              {"epsilon", epsilon},
              {"evolution", evolution.to_json()}};
    j["source_game"] = condition == Condition::Transfer && !source_game.empty() ? Json(source_game) : Json(nullptr);
    return j;
  }

  static RunConfig from_json(const Json& j) {
    RunConfig c;
    c.merge_json(j);
    return c;
  }

  // Applies keys present in `j` (the --config override file format).
  void merge_json(const Json& j) {
    if (!j.is_object()) throw ParseError("config", "expected an object");
    for (const auto& [key, v] : j.items()) {
      try {
        if (key == "game") game = v.get<std::string>();
        else if (key == "env") env = v.get<std::string>();
        else if (key == "max_steps") max_steps = v.get<int>();
        else if (key == "condition") condition = parse_condition(v.get<std::string>());
        else if (key == "source" || key == "source_path") source_path = v.is_null() ? "" : v.get<std::string>();
        else if (key == "source_game") source_game = v.is_null() ? "" : v.get<std::string>();
        else if (key == "scratch_stats" || key == "stats_path") stats_path = v.get<std::string>();
        else if (key == "generations") generations = v.get<std::size_t>();
        else if (key == "epsilon") epsilon = v.get<double>();
        else if (key == "evolution") evolution.merge_json(v);
        else if (key == "threads") threads = v.get<unsigned>();
        else if (key == "seed") evolution.seed = v.get<std::uint64_t>();
        else throw ParseError(key, "unknown run setting");
      } catch (const Json::exception& e) {
        throw ParseError(key, e.what());
      }
    }
  }
};

using EnvFactory = std::function<std::unique_ptr<Environment>()>;

// Mean score over `trials` episodes, each with its own derived seed and a
// fresh recurrent state. An environment failure is retried once with a new
// derived seed and a new environment instance; a second failure propagates.
inline double evaluate_individual(const GrusmNetwork& net, const EnvFactory& make_env, std::size_t trials,
                                  std::uint64_t seed) {
  if (trials == 0) throw ConfigError("trials must be at least 1");
  auto env = make_env();
  double total = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    try {
      total += run_episode(net, *env, derive_seed(seed, {t})).score;
    } catch (const EnvError&) {
      env = make_env();
      total += run_episode(net, *env, derive_seed(seed, {stream::kRetry, t})).score;
    }
  }
  return total / static_cast<double>(trials);
}

struct RunEvent {
  std::size_t generation = 0;
  bool burst = false;
  std::optional<RecruitKind> added;
};

struct RunRecord {
  RunConfig config;
  std::vector<double> curve;  // cumulative max of per-generation best scores
  double max_score = 0.0;
  GrusmNetwork best_network;
  Json population;
  std::vector<RunEvent> events;
  std::vector<std::string> initial_recruits;
  Json source_info;  // null, or {label, digest, hidden, parameters}
  double wall_seconds = 0.0;

  // Generations at which the curve rose, with the new value: the first
  // generation reaching any threshold is read off this list.
  std::vector<std::pair<std::size_t, double>> improvements() const {
    std::vector<std::pair<std::size_t, double>> out;
    for (std::size_t g = 0; g < curve.size(); ++g)
      if (g == 0 || curve[g] > curve[g - 1]) out.emplace_back(g + 1, curve[g]);
    return out;
  }

  // Wall-clock time is kept out of the record so identical runs produce
  // identical bytes; it goes to timing.json.
  Json to_json() const {
    Json events_json = Json::array();
    for (const auto& e : events) {
      if (!e.burst && !e.added) continue;
      events_json.push_back({{"generation", e.generation},
                             {"burst", e.burst},
                             {"added", e.added ? Json(recruit_name(*e.added)) : Json(nullptr)}});
    }
    Json gens_to = Json::array();
    for (const auto& [g, v] : improvements()) gens_to.push_back({{"generation", g}, {"score", v}});
    return {{"format", "grusm-run/1"},
            {"config", config.to_json()},
            {"initial_recruits", initial_recruits},
            {"source", source_info},
            {"curve", curve},
            {"max_score", max_score},
            {"generations_to", gens_to},
            {"events", events_json},
            {"population", population},
            {"best_network", network_to_json(best_network)}};
  }
};

// Light view of a persisted run, enough for analysis.
struct RunSummary {
  std::string game;
  std::string env;
  Condition condition = Condition::Scratch;
  std::string source_game;
  std::uint64_t seed = 0;
  std::vector<double> curve;
  double max_score = 0.0;
  std::size_t best_parameters = 0;
  std::string shape;
  std::string path;

  static RunSummary from_json(const Json& j, std::string path = {}) {
    RunSummary s;
    s.path = std::move(path);
    try {
      const Json& c = j.at("config");
      s.game = c.at("game").get<std::string>();
      s.env = c.at("env").get<std::string>();
      s.condition = parse_condition(c.at("condition").get<std::string>());
      if (c.contains("source_game") && !c["source_game"].is_null()) s.source_game = c["source_game"].get<std::string>();
      s.seed = c.at("evolution").at("seed").get<std::uint64_t>();
      s.curve = j.at("curve").get<std::vector<double>>();
      s.max_score = j.at("max_score").get<double>();
      const GrusmNetwork best = network_from_json(j.at("best_network"));
      s.best_parameters = parameter_count(best.target);
      s.shape = shape_key(best.target.substrates);
    } catch (const Json::exception& e) {
      throw ParseError(s.path.empty() ? "run" : s.path, e.what());
    }
    if (s.curve.empty()) throw ParseError(s.path + ": curve", "empty score curve");
    return s;
  }
};

using ProgressFn = std::function<void(const GenerationReport&)>;

inline std::shared_ptr<const SourceModule> load_source(const std::string& path, const std::string& label) {
  return source_from_network(deserialize(read_file(path)), label.empty() ? path : label);
}

inline ScratchStats load_scratch_stats(const std::string& path) {
  try {
    return ScratchStats::from_json(Json::parse(read_file(path)));
  } catch (const Json::parse_error& e) {
    throw ParseError(path, e.what());
  }
}

inline RunRecord run_experiment(const RunConfig& config, const ProgressFn& progress = {}) {
  const auto started = std::chrono::steady_clock::now();
  config.validate();
  const EnvSpec spec = EnvSpec::parse(config.env, config.max_steps);
  const EnvInfo info = spec.info();
  const auto substrates = info.substrates();

  SourcePool pool;
  Json source_info = nullptr;
  std::size_t initial_fresh = config.evolution.h0;
  if (config.condition != Condition::Scratch) {
    std::shared_ptr<const SourceModule> source;
    if (config.condition == Condition::Transfer) {
      source = load_source(config.source_path, config.source_game);
    } else {
      Rng rng(derive_seed(config.evolution.seed, {stream::kRandomSource}));
      source = make_random_source(load_scratch_stats(config.stats_path), substrates, rng, config.evolution.init_range);
    }
    source_info = {{"label", source->label},
                   {"digest", source->digest},
                   {"hidden", source->net.hidden.size()},
                   {"parameters", parameter_count(source->net)}};
    pool = SourcePool({source});
    initial_fresh = config.evolution.h0_transfer;
  }

  Evolver evolver(config.evolution, substrates, std::move(pool), initial_fresh, config.threads);
  const double epsilon = config.epsilon;
  EnvFactory make_env = [&spec, epsilon] { return spec.make(epsilon); };
  const std::size_t trials = config.evolution.trials_per_eval;
  FitnessFn fitness = [&](const GrusmNetwork& net, std::uint64_t seed) {
    return evaluate_individual(net, make_env, trials, seed);
  };

  RunRecord record;
  record.config = config;
  record.source_info = source_info;
  for (const auto& k : evolver.initial_recruits()) record.initial_recruits.push_back(recruit_name(k));
  for (std::size_t g = 0; g < config.generations; ++g) {
    const GenerationReport rep = evolver.run_generation(fitness);
    record.events.push_back({rep.generation, rep.burst, rep.added});
    if (progress) progress(rep);
  }
  record.curve = evolver.curve();
  record.max_score = record.curve.back();
  record.best_network = *evolver.best_network();
  record.population = evolver.population_snapshot();
  record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return record;
}

inline std::string curve_csv(const std::vector<double>& curve) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "generation,best_score\n";
  for (std::size_t g = 0; g < curve.size(); ++g) ss << g + 1 << "," << curve[g] << "\n";
  return ss.str();
}

// run.json, curve.csv, best_net.json (byte-reproducible) and timing.json.
inline void write_run(const RunRecord& record, const std::filesystem::path& dir) {
  write_file_atomic(dir / "best_net.json", serialize(record.best_network));
  write_file_atomic(dir / "curve.csv", curve_csv(record.curve));
  write_file_atomic(dir / "timing.json", Json({{"wall_seconds", record.wall_seconds}}).dump() + "\n");
  write_file_atomic(dir / "run.json", record.to_json().dump() + "\n");
}

inline std::vector<RunSummary> load_runs(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<RunSummary> runs;
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().filename() == "run.json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    Json j;
    try {
      j = Json::parse(read_file(f));
    } catch (const Json::parse_error& e) {
      throw ParseError(f.string(), e.what());
    }
    runs.push_back(RunSummary::from_json(j, f.string()));
  }
  return runs;
}

// Mean/std of best-network parameter counts of scratch runs, per shape.
inline ScratchStats scratch_stats(const std::vector<RunSummary>& runs) {
  std::map<std::string, std::vector<double>> counts;
  for (const auto& r : runs)
    if (r.condition == Condition::Scratch) counts[r.shape].push_back(static_cast<double>(r.best_parameters));
  ScratchStats stats;
  for (const auto& [shape, v] : counts) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
    stats.by_shape[shape] = {mean, std::sqrt(var), v.size()};
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Batch manifests.
//
//   { "out": "runs", "jobs": 4,
//     "generations": 30, "epsilon": 0.25, "max_steps": 600,
//     "evolution": { "assemblies_per_gen": 30, "trials_per_eval": 2 },
//     "games": { "catch": "miniarcade:h", ... },
//     "conditions": ["scratch", "transfer", "random"],
//     "seeds": [1, 2, 3]            (or "replications": N, "seed_base": S),
//     "runs": [ { "game": ..., "env": ..., "condition": ..., "replications": N,
//                 "seed_base": S, ... } ] }
//
// Expands to every target x condition x seed, and for transfer every other
// game as the source. A transfer run with seed s reuses the best network of
// the source game's scratch run with seed s; random runs draw their size from
// the scratch statistics written after the scratch phase.

struct RunTemplate {
  RunConfig config;
  std::size_t replications = 1;
  std::uint64_t seed_base = 1;
};

struct Manifest {
  std::filesystem::path out_dir = "runs";
  unsigned jobs = 1;
  std::vector<RunTemplate> runs;
  std::map<std::string, std::string> games;

  static Manifest from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
    Manifest m;
    if (!j.is_object()) throw ParseError("manifest", "expected an object");
    try {
      if (j.contains("out")) m.out_dir = j["out"].get<std::string>();
      if (m.out_dir.is_relative() && !base_dir.empty()) m.out_dir = base_dir / m.out_dir;
      if (j.contains("jobs")) m.jobs = j["jobs"].get<unsigned>();
      RunConfig common;
      if (j.contains("generations")) common.generations = j["generations"].get<std::size_t>();
      if (j.contains("epsilon")) common.epsilon = j["epsilon"].get<double>();
      if (j.contains("max_steps")) common.max_steps = j["max_steps"].get<int>();
      if (j.contains("evolution")) common.evolution.merge_json(j["evolution"]);

      std::vector<std::uint64_t> seeds;
      if (j.contains("seeds")) {
        seeds = j["seeds"].get<std::vector<std::uint64_t>>();
      } else {
        const auto n = j.value("replications", std::size_t{1});
        const auto base = j.value("seed_base", std::uint64_t{1});
        for (std::size_t i = 0; i < n; ++i) seeds.push_back(base + i);
      }
      if (seeds.empty()) throw ParseError("seeds", "at least one seed is required");

      if (j.contains("games")) {
        if (!j["games"].is_object() || j["games"].empty())
          throw ParseError("games", "expected a non-empty object of game -> env spec");
        for (const auto& [name, spec] : j["games"].items()) m.games[name] = spec.get<std::string>();
      }
      std::vector<std::string> conditions = j.value("conditions", std::vector<std::string>{"scratch"});
      if (m.games.empty()) conditions.clear();

      for (const auto& cond_name : conditions) {
        const Condition cond = parse_condition(cond_name);
        for (const auto& [target, env] : m.games) {
          std::vector<std::string> sources{""};
          if (cond == Condition::Transfer) {
            sources.clear();
            for (const auto& [src, unused] : m.games)
              if (src != target) sources.push_back(src);
          }
          for (const auto& src : sources) {
            for (auto seed : seeds) {
              RunTemplate t;
              t.config = common;
              t.config.game = target;
              t.config.env = env;
              t.config.condition = cond;
              t.config.source_game = src;
              t.config.evolution.seed = seed;
              t.seed_base = seed;
              m.runs.push_back(std::move(t));
            }
          }
        }
      }

      // Explicit templates: any run setting plus "replications" and "seed_base".
      if (j.contains("runs")) {
        for (const auto& entry : j["runs"]) {
          Json settings = entry;
          const auto reps = settings.value("replications", std::size_t{1});
          const auto base = settings.value("seed_base", std::uint64_t{1});
          settings.erase("replications");
          settings.erase("seed_base");
          for (std::size_t r = 0; r < reps; ++r) {
            RunTemplate t;
            t.config = common;
            t.config.merge_json(settings);
            t.config.evolution.seed = base + r;
            t.replications = reps;
            t.seed_base = base;
            if (!t.config.game.empty() && !m.games.count(t.config.game)) m.games[t.config.game] = t.config.env;
            m.runs.push_back(std::move(t));
          }
        }
      }
      if (m.runs.empty()) throw ParseError("manifest", "expands to zero runs (need \"games\" or \"runs\")");
    } catch (const Json::exception& e) {
      throw ParseError("manifest", e.what());
    }
    std::set<std::string> keys;
    for (const auto& t : m.runs)
      if (!keys.insert(m.run_key(t.config)).second) throw ConfigError("duplicate setup/seed: " + m.run_key(t.config));
    return m;
  }

  std::string setup_dir(const RunConfig& c) const {
    std::string s = to_string(c.condition);
    if (c.condition == Condition::Transfer) s += "_from_" + c.source_game;
    return s;
  }

  std::string run_key(const RunConfig& c) const {
    return c.game_label() + "/" + setup_dir(c) + "/seed" + std::to_string(c.evolution.seed);
  }

  std::filesystem::path run_dir(const RunConfig& c) const { return out_dir / run_key(c); }
};

struct BatchResult {
  std::size_t runs = 0;
  std::filesystem::path stats_path;
};

inline BatchResult run_batch(const Manifest& manifest, const std::function<void(const std::string&)>& log = {}) {
  std::vector<RunConfig> phase1, phase2;
  for (const auto& t : manifest.runs)
    (t.config.condition == Condition::Scratch ? phase1 : phase2).push_back(t.config);

  const auto stats_path = manifest.out_dir / "scratch_stats.json";
  for (auto& c : phase2) {
    if (c.condition == Condition::Transfer) {
      RunConfig src = c;
      src.game = c.source_game;
      src.condition = Condition::Scratch;
      src.source_game.clear();
      c.source_path = (manifest.run_dir(src) / "best_net.json").string();
    } else {
      c.stats_path = stats_path.string();
    }
  }

  auto execute = [&](const std::vector<RunConfig>& configs) {
    parallel_for(configs.size(), manifest.jobs, [&](std::size_t i) {
      const RunRecord rec = run_experiment(configs[i]);
      write_run(rec, manifest.run_dir(configs[i]));
      if (log) {
        std::ostringstream ss;
        ss << manifest.run_key(configs[i]) << " max=" << rec.max_score << " (" << rec.wall_seconds << " s)";
        log(ss.str());
      }
    });
  };

  execute(phase1);
  for (const auto& c : phase2)
    if (c.condition == Condition::Transfer && !std::filesystem::exists(c.source_path))
      throw ConfigError("transfer source missing (add the source game's scratch runs): " + c.source_path);
  std::filesystem::create_directories(manifest.out_dir);
  write_file_atomic(stats_path, scratch_stats(load_runs(manifest.out_dir)).to_json().dump(2) + "\n");
  execute(phase2);
  return {phase1.size() + phase2.size(), stats_path};
}

}  // namespace grusm
