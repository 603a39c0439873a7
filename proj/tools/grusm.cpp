// grusm: training, batch experiments, environment checks and analysis.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "grusm/grusm.hpp"

namespace fs = std::filesystem;
using namespace grusm;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Closest long flag of the deepest selected subcommand, if any is near.
std::string suggest_flag(const CLI::App& app, const std::vector<std::string>& args) {
  const CLI::App* scope = &app;
  while (!scope->get_subcommands().empty()) scope = scope->get_subcommands().front();
  for (const auto& arg : args) {
    if (arg.rfind("--", 0) != 0) continue;
    const std::string name = arg.substr(2, arg.find('=') == std::string::npos ? std::string::npos : arg.find('=') - 2);
    std::string best;
    std::size_t best_d = 4;
    bool known = false;
    for (const CLI::Option* opt : scope->get_options()) known = known || opt->check_lname(name);
    if (known) continue;
    for (const CLI::Option* opt : scope->get_options()) {
      for (const auto& lname : opt->get_lnames()) {
        const auto d = edit_distance(name, lname);
        if (d < best_d) {
          best_d = d;
          best = lname;
        }
      }
    }
    if (!best.empty()) return "did you mean --" + best + "?";
  }
  return {};
}

struct RunFlags {
  std::string config_file;
  std::string env;
  std::string game;
  std::string condition;
  std::string source;
  std::string source_game;
  std::string source_pool;
  bool random_source = false;
  std::string stats;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> generations, assemblies, trials, n_sub, h0, h0_transfer;
  std::optional<double> epsilon, p_mut, sigma_mut, delta_burst, elitism, init_range;
  std::optional<int> threshold_b, max_steps;
  unsigned threads = 1;
  bool quiet = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config_file, "JSON file of run settings; flags override it");
  cmd->add_option("--env", f.env, "environment spec: miniarcade:<hvsdl>[@RxC] or external:<command>");
  cmd->add_option("--game", f.game, "game label recorded in the run (defaults to the env spec)");
  cmd->add_option("--condition", f.condition, "scratch | transfer | random");
  cmd->add_option("--source", f.source, "transfer: network file of the frozen source");
  cmd->add_option("--source-game", f.source_game, "transfer: label of the source's game");
  cmd->add_option("--source-pool", f.source_pool, "JSON list of {path, label}; --source then names a label");
  cmd->add_flag("--random-source", f.random_source, "shorthand for --condition random");
  cmd->add_option("--scratch-stats", f.stats, "random: scratch parameter statistics (JSON)");
  cmd->add_option("--seed", f.seed, "run seed (default: $GRUSM_SEED, else 1)");
  cmd->add_option("--generations", f.generations, "generations (default 200)");
  cmd->add_option("--assemblies", f.assemblies, "networks evaluated per generation (default 100)");
  cmd->add_option("--trials", f.trials, "episodes per evaluation (default 5)");
  cmd->add_option("--n-sub", f.n_sub, "members per subpopulation (default 40)");
  cmd->add_option("--h0", f.h0, "initial fresh nodes, scratch (default 4)");
  cmd->add_option("--h0-transfer", f.h0_transfer, "initial fresh nodes beside a source (default 1)");
  cmd->add_option("--p-mut", f.p_mut, "per-offspring mutation probability (default 0.4)");
  cmd->add_option("--sigma-mut", f.sigma_mut, "Gaussian mutation scale (default 0.3)");
  cmd->add_option("--delta-burst", f.delta_burst, "Cauchy burst scale (default 0.3)");
  cmd->add_option("--threshold-b", f.threshold_b, "stagnant generations before a burst (default 10)");
  cmd->add_option("--elitism", f.elitism, "surviving fraction per subpopulation (default 0.25)");
  cmd->add_option("--init-range", f.init_range, "initial weights uniform in [-r, r] (default 0.5)");
  cmd->add_option("--epsilon", f.epsilon, "probability of repeating the previous action (default 0.25)");
  cmd->add_option("--max-steps", f.max_steps, "episode step limit (default 600)");
  cmd->add_option("--threads", f.threads, "evaluation worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--quiet", f.quiet, "no per-generation progress");
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("GRUSM_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("GRUSM_SEED is not an unsigned integer: ") + s);
  }
}

// Pool file: [{"path": ..., "label": ...}, ...], paths relative to the file.
std::pair<std::string, std::string> pick_from_pool(const std::string& pool_path, const std::string& label) {
  Json pool;
  try {
    pool = Json::parse(read_file(pool_path));
  } catch (const Json::parse_error& e) {
    throw ParseError(pool_path, e.what());
  }
  if (!pool.is_array() || pool.empty()) throw ParseError(pool_path, "expected a non-empty list of {path, label}");
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& e : pool) {
    if (!e.is_object() || !e.contains("path") || !e["path"].is_string())
      throw ParseError(pool_path, "every entry needs a string \"path\"");
    fs::path p = e["path"].get<std::string>();
    if (p.is_relative()) p = fs::path(pool_path).parent_path() / p;
    entries.emplace_back(p.string(), e.value("label", fs::path(p).stem().string()));
  }
  if (label.empty()) {
    if (entries.size() != 1) throw UsageError("the source pool has several entries; pick one with --source <label>");
    return entries.front();
  }
  for (const auto& e : entries)
    if (e.second == label) return e;
  throw UsageError("no source labelled '" + label + "' in " + pool_path);
}

// Defaults < $GRUSM_SEED < --config file < flags.
RunConfig build_run_config(const RunFlags& f) {
  RunConfig c;
  if (auto s = env_seed()) c.evolution.seed = *s;
  if (!f.config_file.empty()) {
    try {
      c.merge_json(Json::parse(read_file(f.config_file)));
    } catch (const Json::parse_error& e) {
      throw ParseError(f.config_file, e.what());
    }
  }
  if (!f.env.empty()) c.env = f.env;
  if (!f.game.empty()) c.game = f.game;
  if (!f.condition.empty()) c.condition = parse_condition(f.condition);
  if (f.random_source) {
    if (!f.condition.empty() && f.condition != "random") throw UsageError("--random-source conflicts with --condition");
    c.condition = Condition::Random;
  }
  if (!f.source_pool.empty()) {
    const auto [path, label] = pick_from_pool(f.source_pool, f.source);
    c.source_path = path;
    c.source_game = label;
    if (f.condition.empty()) c.condition = Condition::Transfer;
  } else if (!f.source.empty()) {
    c.source_path = f.source;
  }
  if (!f.source_game.empty()) c.source_game = f.source_game;
  if (!f.stats.empty()) c.stats_path = f.stats;
  if (f.seed) c.evolution.seed = *f.seed;
  if (f.generations) c.generations = *f.generations;
  if (f.assemblies) c.evolution.assemblies_per_gen = *f.assemblies;
  if (f.trials) c.evolution.trials_per_eval = *f.trials;
  if (f.n_sub) c.evolution.n_sub = *f.n_sub;
  if (f.h0) c.evolution.h0 = *f.h0;
  if (f.h0_transfer) c.evolution.h0_transfer = *f.h0_transfer;
  if (f.p_mut) c.evolution.p_mut = *f.p_mut;
  if (f.sigma_mut) c.evolution.sigma_mut = *f.sigma_mut;
  if (f.delta_burst) c.evolution.delta_burst = *f.delta_burst;
  if (f.threshold_b) c.evolution.threshold_b = *f.threshold_b;
  if (f.elitism) c.evolution.elitism = *f.elitism;
  if (f.init_range) c.evolution.init_range = *f.init_range;
  if (f.epsilon) c.epsilon = *f.epsilon;
  if (f.max_steps) c.max_steps = *f.max_steps;
  c.threads = f.threads;
  if (c.condition == Condition::Transfer && c.source_game.empty()) c.source_game = fs::path(c.source_path).stem().string();
  return c;
}

int cmd_run(const RunFlags& f) {
  const RunConfig config = build_run_config(f);
  if (f.out.empty()) throw UsageError("run requires --out <dir>");
  ProgressFn progress;
  if (!f.quiet) {
    progress = [](const GenerationReport& r) {
      std::cerr << "gen " << r.generation << " best " << r.generation_best << " run-best " << r.run_best;
      if (r.burst) std::cerr << " burst";
      if (r.added) std::cerr << " +" << recruit_name(*r.added);
      std::cerr << "\n";
    };
  }
  const RunRecord record = run_experiment(config, progress);
  write_run(record, f.out);
  std::cout << "max_score " << record.max_score << " written to " << f.out << "\n";
  return 0;
}

int cmd_batch(const std::string& manifest_path, const std::string& out, unsigned jobs, bool jobs_set,
              unsigned threads) {
  Json j;
  try {
    j = Json::parse(read_file(manifest_path));
  } catch (const Json::parse_error& e) {
    throw ParseError(manifest_path, e.what());
  }
  Manifest m = Manifest::from_json(j, fs::path(manifest_path).parent_path());
  if (!out.empty()) m.out_dir = out;
  if (jobs_set) m.jobs = jobs;
  for (auto& t : m.runs) t.config.threads = threads;
  std::mutex mu;
  std::size_t done = 0;
  const std::size_t total = m.runs.size();
  const auto result = run_batch(m, [&](const std::string& line) {
    std::lock_guard lock(mu);
    std::cerr << "[" << ++done << "/" << total << "] " << line << "\n";
  });
  std::cout << result.runs << " runs written to " << m.out_dir.string() << "\n";
  return 0;
}

int cmd_analyze(const std::string& dir, const std::string& features_path, const std::string& out) {
  const auto runs = load_runs(dir);
  if (runs.empty()) throw Error("no run records found in " + dir);
  std::map<std::string, GameFeatures> given;
  if (!features_path.empty()) {
    try {
      given = parse_features(Json::parse(read_file(features_path)));
    } catch (const Json::parse_error& e) {
      throw ParseError(features_path, e.what());
    }
  }
  const auto result = analyze(runs, resolve_features(runs, given));
  // --out names either the report file or a directory for all outputs.
  fs::path o = out.empty() ? fs::path(dir) : fs::path(out);
  fs::path report_file = o / "te_report.json";
  if (o.extension() == ".json") {
    report_file = o;
    o = o.parent_path().empty() ? fs::path(".") : o.parent_path();
  }
  write_file_atomic(report_file, result.report.dump(2) + "\n");
  write_file_atomic(o / "learning_curves.csv", result.learning_curves_csv);
  write_file_atomic(o / "te_scratch.dot", result.dot_scratch);
  write_file_atomic(o / "te_random.dot", result.dot_random);
  const auto& reg = result.report["regression"];
  for (const char* k : {"vs_scratch", "vs_random"}) {
    std::cout << k << ": ";
    if (reg[k].contains("skipped")) std::cout << "skipped (" << reg[k]["skipped"].get<std::string>() << ")\n";
    else std::cout << "R=" << reg[k]["r"].dump() << " p=" << reg[k]["p_value"].dump() << "\n";
  }
  std::cout << runs.size() << " runs analyzed; report in " << o.string() << "\n";
  return 0;
}

int cmd_graph(const std::string& report_path, const std::string& vs, const std::string& out) {
  Json report;
  try {
    report = Json::parse(read_file(report_path));
  } catch (const Json::parse_error& e) {
    throw ParseError(report_path, e.what());
  }
  const std::string dot = te_graph_from_report(report, vs == "scratch");
  if (out.empty()) std::cout << dot;
  else write_file_atomic(out, dot);
  return 0;
}

int cmd_env_check(const std::string& external, const std::string& env, int steps, int max_steps) {
  if (external.empty() == env.empty()) throw UsageError("env-check needs exactly one of --external or --env");
  const EnvSpec spec = external.empty() ? EnvSpec::parse(env, max_steps) : EnvSpec::parse("external:" + external, max_steps);
  const auto report = env_check(spec, steps);
  for (const auto& m : report.messages) std::cout << m << "\n";
  std::cout << (report.ok ? "conformant" : "NOT conformant") << "\n";
  return report.ok ? 0 : kExitRuntime;
}

int cmd_make_random_source(const std::string& stats_path, const std::string& env, std::optional<std::size_t> hidden,
                           std::optional<std::uint64_t> seed, const std::string& out) {
  if (stats_path.empty() && !hidden) throw UsageError("make-random-source needs --scratch-stats or --hidden");
  const auto substrates = EnvSpec::parse(env).info().substrates();
  std::uint64_t s = 1;
  if (auto e = env_seed()) s = *e;
  if (seed) s = *seed;
  Rng rng(derive_seed(s, {stream::kRandomSource}));
  const auto source = hidden ? make_random_source(substrates, *hidden, rng)
                             : make_random_source(load_scratch_stats(stats_path), substrates, rng);
  GrusmNetwork net{source->net, std::nullopt};
  write_file_atomic(out, serialize(net));
  std::cout << source->net.hidden.size() << " hidden nodes, " << parameter_count(source->net) << " parameters, digest "
            << source->digest << "\n";
  return 0;
}

int cmd_baseline(const std::string& env, int episodes, std::uint64_t first_seed, double epsilon, int max_steps) {
  const double mean = random_policy_baseline(EnvSpec::parse(env, max_steps), epsilon, episodes, first_seed);
  std::cout.precision(17);
  std::cout << mean << "\n";
  return 0;
}

void show_network(const GrusmNetwork& net, std::ostream& os) {
  const auto& t = net.target;
  os << "target: " << t.input_count() << " inputs (";
  for (std::size_t i = 0; i < t.substrates.size(); ++i)
    os << (i ? ", " : "") << t.substrates[i].rows << "x" << t.substrates[i].cols;
  os << "), " << t.hidden.size() << " hidden, " << kOutputs << " outputs, " << parameter_count(t) << " parameters\n";
  os << "digest: " << module_digest(t) << "\n";
  if (net.source) {
    const auto& s = *net.source->module;
    os << "source: '" << s.label << "', " << s.net.hidden.size() << " hidden, digest " << s.digest << "\n";
    os << "transfer: " << net.source->links.in_to_hidden.rows() << "x" << net.source->links.in_to_hidden.cols()
       << " input->source-hidden, 10x10 output->output\n";
  } else {
    os << "source: none\n";
  }
  const auto active = active_subnetwork(net);
  os << "active nodes: " << active.size() << "\n";
}

int cmd_show(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ParseError(path, e.what());
  }
  if (j.is_object() && j.value("format", "") == "grusm-run/1") {
    const auto s = RunSummary::from_json(j, path);
    std::cout << "run: game " << s.game << " (" << s.env << "), condition " << to_string(s.condition);
    if (!s.source_game.empty()) std::cout << " from " << s.source_game;
    std::cout << ", seed " << s.seed << "\n";
    std::cout << "generations: " << s.curve.size() << ", max score " << s.max_score << "\n";
    std::cout << "initial recruits: " << j["initial_recruits"].dump() << "\n";
    std::cout << "bursts/recruits: " << j["events"].size() << " events\n";
    show_network(network_from_json(j["best_network"]), std::cout);
  } else if (j.is_object() && j.value("format", "") == "grusm-te-report/1") {
    std::cout << "TE report: " << j["games"].size() << " games, " << j["pairs"].size() << " pairs\n";
    std::cout << j["regression"].dump(2) << "\n" << j["directional"].dump(2) << "\n";
  } else if (j.is_object() && j.contains("version")) {
    show_network(network_from_json(j), std::cout);
  } else {
    std::cout << j.dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GRUSM-ESP neuroevolution with transfer from frozen source networks"};
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "train one network and write run.json, curve.csv, best_net.json");
  add_run_flags(run, run_flags);
  run->add_option("--out", run_flags.out, "output directory")->required();

  std::string manifest, batch_out;
  unsigned jobs = 1, batch_threads = 1;
  auto* batch = app.add_subcommand("batch", "run an experiment manifest (scratch first, then transfer/random)");
  batch->add_option("manifest", manifest, "manifest JSON")->required();
  batch->add_option("--out", batch_out, "output directory (overrides the manifest)");
  auto* jobs_opt = batch->add_option("--jobs", jobs, "concurrent runs")->check(CLI::PositiveNumber);
  batch->add_option("--threads", batch_threads, "evaluation threads per run")->check(CLI::PositiveNumber);

  std::string analyze_dir, features, analyze_out;
  auto* an = app.add_subcommand("analyze", "TE report, learning curves and graphs from a directory of runs");
  an->add_option("runs", analyze_dir, "directory searched recursively for run.json")->required();
  an->add_option("--features", features, "game -> feature booleans (MiniArcade games are inferred)");
  an->add_option("--out", analyze_out, "report file (*.json) or output directory (default: the runs directory)");

  std::string report_path, vs = "scratch", graph_out;
  auto* graph = app.add_subcommand("graph", "transferability graph (DOT) from a TE report");
  graph->add_option("report", report_path, "te_report.json")->required();
  graph->add_option("--vs", vs, "control condition")->check(CLI::IsMember({"scratch", "random"}));
  graph->add_option("--out", graph_out, "output file (default: stdout)");

  std::string external, check_env;
  int check_steps = 100, check_max_steps = kDefaultMaxSteps;
  auto* check = app.add_subcommand("env-check", "protocol and determinism checks for an environment");
  check->add_option("--external", external, "command speaking the line protocol");
  check->add_option("--env", check_env, "environment spec");
  check->add_option("--steps", check_steps, "steps per probe episode")->check(CLI::PositiveNumber);
  check->add_option("--max-steps", check_max_steps, "episode step limit")->check(CLI::PositiveNumber);

  std::string rs_stats, rs_env, rs_out;
  std::optional<std::size_t> rs_hidden;
  std::optional<std::uint64_t> rs_seed;
  auto* rs = app.add_subcommand("make-random-source", "random source network sized like scratch solutions");
  rs->add_option("--scratch-stats", rs_stats, "scratch parameter statistics (JSON)");
  rs->add_option("--hidden", rs_hidden, "fixed hidden-node count instead of statistics");
  rs->add_option("--env", rs_env, "environment spec fixing the input substrates")->required();
  rs->add_option("--seed", rs_seed, "seed (default: $GRUSM_SEED, else 1)");
  rs->add_option("--out", rs_out, "output network file")->required();

  std::string bl_env;
  int bl_episodes = 1000, bl_max_steps = kDefaultMaxSteps;
  std::uint64_t bl_first_seed = 1;
  double bl_epsilon = kDefaultEpsilon;
  auto* bl = app.add_subcommand("baseline", "mean score of a uniformly random policy");
  bl->add_option("--env", bl_env, "environment spec")->required();
  bl->add_option("--episodes", bl_episodes, "episodes")->check(CLI::PositiveNumber);
  bl->add_option("--first-seed", bl_first_seed, "seed of the first episode");
  bl->add_option("--epsilon", bl_epsilon, "epsilon-repeat probability")->check(CLI::Range(0.0, 1.0));
  bl->add_option("--max-steps", bl_max_steps, "episode step limit")->check(CLI::PositiveNumber);

  std::string show_path;
  auto* show = app.add_subcommand("show", "summarize a network, run record or TE report");
  show->add_option("file", show_path, "JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    const auto hint = suggest_flag(app, std::vector<std::string>(argv + 1, argv + argc));
    if (!hint.empty()) std::cerr << hint << "\n";
    std::cerr << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    if (*run) return cmd_run(run_flags);
    if (*batch) return cmd_batch(manifest, batch_out, jobs, jobs_opt->count() > 0, batch_threads);
    if (*an) return cmd_analyze(analyze_dir, features, analyze_out);
    if (*graph) return cmd_graph(report_path, vs, graph_out);
    if (*check) return cmd_env_check(external, check_env, check_steps, check_max_steps);
    if (*rs) return cmd_make_random_source(rs_stats, rs_env, rs_hidden, rs_seed, rs_out);
    if (*show) return cmd_show(show_path);
    if (*bl) return cmd_baseline(bl_env, bl_episodes, bl_first_seed, bl_epsilon, bl_max_steps);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
