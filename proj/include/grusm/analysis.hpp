#pragma once

// Transfer effectiveness (TE), complexity indicators, leave-one-target-out
// regression, and transferability graphs. Every function here is a pure
// function of persisted run records.

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "grusm/env.hpp"
#include "grusm/error.hpp"
#include "grusm/harness.hpp"
#include "grusm/serialize.hpp"

namespace grusm {

inline constexpr std::array<std::size_t, 5> kReferenceSamples{1, 10, 50, 100, 200};
inline constexpr std::size_t kReferenceGenerations = 200;

// Early-weighted sample generations, scaled to shorter runs:
// ceil(s * G / 200) for each reference sample s.
inline std::vector<std::size_t> sample_generations(std::size_t generations) {
  std::vector<std::size_t> out;
  for (auto s : kReferenceSamples) {
    const auto num = s * generations;
    out.push_back(std::max<std::size_t>(1, (num + kReferenceGenerations - 1) / kReferenceGenerations));
  }
  return out;
}

using Curve = std::vector<double>;

// Sum over sample generations of the mean curve value across runs.
inline double success(const std::vector<Curve>& curves, const std::vector<std::size_t>& samples) {
  if (curves.empty()) throw ConfigError("success needs at least one run");
  double total = 0.0;
  for (auto g : samples) {
    double mean = 0.0;
    for (const auto& c : curves) {
      if (g == 0 || g > c.size())
        throw ConfigError("curve of length " + std::to_string(c.size()) + " does not reach generation " +
                          std::to_string(g));
      mean += c[g - 1];
    }
    total += mean / static_cast<double>(curves.size());
  }
  return total;
}

// Max minus min of per-run max scores.
inline double max_score_range(const std::vector<double>& max_scores) {
  if (max_scores.empty()) throw ConfigError("no runs for range");
  const auto [lo, hi] = std::minmax_element(max_scores.begin(), max_scores.end());
  return *hi - *lo;
}

inline double transfer_effectiveness(const std::vector<Curve>& setup, const std::vector<Curve>& control,
                                     double game_range, const std::vector<std::size_t>& samples) {
  if (!(game_range > 0.0))
    throw ConfigError("degenerate game: max-score range across all runs is zero, TE is undefined");
  return (success(setup, samples) - success(control, samples)) / game_range;
}

// Mean over scratch runs of the first (1-based) generation at which the curve
// reaches the threshold, the minimum of the runs' max scores.
struct TrainingComplexity {
  double threshold = 0.0;
  double mean_generations = 0.0;
};

inline TrainingComplexity training_complexity(const std::vector<Curve>& scratch) {
  if (scratch.empty()) throw ConfigError("training complexity needs at least one scratch run");
  double threshold = std::numeric_limits<double>::infinity();
  for (const auto& c : scratch) {
    if (c.empty()) throw ConfigError("empty scratch curve");
    threshold = std::min(threshold, *std::max_element(c.begin(), c.end()));
  }
  double total = 0.0;
  for (const auto& c : scratch) {
    std::size_t g = 0;
    while (c[g] < threshold) ++g;
    total += static_cast<double>(g + 1);
  }
  return {threshold, total / static_cast<double>(scratch.size())};
}

struct IndicatorVector {
  int feature_similarity = 0;
  int source_feature_complexity = 0;
  int target_feature_complexity = 0;
  double source_training_complexity = 0.0;
  double target_training_complexity = 0.0;

  std::array<double, 5> values() const {
    return {static_cast<double>(feature_similarity), static_cast<double>(source_feature_complexity),
            static_cast<double>(target_feature_complexity), source_training_complexity, target_training_complexity};
  }

  Json to_json() const {
    return {{"feature_similarity", feature_similarity},
            {"source_feature_complexity", source_feature_complexity},
            {"target_feature_complexity", target_feature_complexity},
            {"source_training_complexity", source_training_complexity},
            {"target_training_complexity", target_training_complexity}};
  }
};

inline IndicatorVector indicators(const GameFeatures& source, const GameFeatures& target,
                                  double source_training, double target_training) {
  return {feature_similarity(source, target), source.count(), target.count(), source_training, target_training};
}

struct LooPair {
  IndicatorVector x;
  double te = 0.0;
  std::string target;
};

struct LooResult {
  std::vector<double> predictions;
  double r = 0.0;
  double p = 1.0;
  bool r_defined = false;  // false when predictions or TEs have zero variance
  bool rank_deficient = false;
  std::vector<double> coefficients;  // intercept + 5, fit on all pairs
};

// Minimum-norm least squares with an intercept column. Sets `rank_deficient`
// when the design matrix is singular.
inline Eigen::VectorXd fit_ols(const std::vector<LooPair>& pairs, const std::vector<std::size_t>& rows,
                               bool& rank_deficient) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), 6);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto v = pairs[rows[i]].x.values();
    const auto r = static_cast<Eigen::Index>(i);
    X(r, 0) = 1.0;
    for (int k = 0; k < 5; ++k) X(r, k + 1) = v[static_cast<std::size_t>(k)];
    y(r) = pairs[rows[i]].te;
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
  if (cod.rank() < 6) rank_deficient = true;
  return cod.solve(y);
}

inline double predict(const Eigen::VectorXd& beta, const IndicatorVector& x) {
  const auto v = x.values();
  double y = beta(0);
  for (int k = 0; k < 5; ++k) y += beta(k + 1) * v[static_cast<std::size_t>(k)];
  return y;
}

struct Correlation {
  double r = 0.0;
  double p = 1.0;
  bool defined = false;
};

// Pearson R with a two-tailed t-test on n - 2 degrees of freedom.
inline Correlation pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  if (n != b.size() || n < 3) return {};
  auto constant = [](const std::vector<double>& v) {
    return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end();
  };
  if (constant(a) || constant(b)) return {};
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return {};
  Correlation c;
  c.defined = true;
  c.r = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  if (std::abs(c.r) >= 1.0) {
    c.p = 0.0;
  } else {
    const double df = static_cast<double>(n - 2);
    const double t = c.r * std::sqrt(df / (1.0 - c.r * c.r));
    boost::math::students_t dist(df);
    c.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return c;
}

// For each pair, fit on every pair with a different target and predict the
// held-out pair.
inline LooResult loo_predict(const std::vector<LooPair>& pairs) {
  if (pairs.size() < 8) throw ConfigError("leave-one-out regression needs at least 8 pairs");
  std::set<std::string> targets;
  for (const auto& p : pairs) targets.insert(p.target);
  if (targets.size() < 2) throw ConfigError("leave-one-out regression needs at least 2 distinct targets");

  LooResult res;
  res.predictions.resize(pairs.size());
  std::map<std::string, Eigen::VectorXd> fits;
  for (const auto& t : targets) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (pairs[i].target != t) rows.push_back(i);
    fits[t] = fit_ols(pairs, rows, res.rank_deficient);
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) res.predictions[i] = predict(fits[pairs[i].target], pairs[i].x);

  std::vector<double> actual;
  for (const auto& p : pairs) actual.push_back(p.te);
  const auto corr = pearson(res.predictions, actual);
  res.r = corr.r;
  res.p = corr.p;
  res.r_defined = corr.defined;

  std::vector<std::size_t> all(pairs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  bool unused = false;
  const auto beta = fit_ols(pairs, all, unused);
  res.coefficients.assign(beta.data(), beta.data() + beta.size());
  return res;
}

// Directed edge g1 -> g2 exactly when TE(source g1, target g2) > 0.
inline std::string te_graph(const std::map<std::pair<std::string, std::string>, double>& te,
                            const std::vector<std::string>& games, const std::string& name = "transferability") {
  std::set<std::string> nodes(games.begin(), games.end());
  for (const auto& [key, v] : te) {
    nodes.insert(key.first);
    nodes.insert(key.second);
  }
  std::ostringstream ss;
  ss << "digraph " << name << " {\n";
  for (const auto& n : nodes) ss << "  \"" << n << "\";\n";
  for (const auto& [key, v] : te) {
    if (!(v > 0.0)) continue;
    ss << "  \"" << key.first << "\" -> \"" << key.second << "\" [label=\"" << std::fixed << std::setprecision(3)
       << v << "\"];\n";
    ss.unsetf(std::ios::floatfield);
  }
  ss << "}\n";
  return ss.str();
}

// ---------------------------------------------------------------------------
// Full report over a directory of runs.

// Feature file: game -> [h, v, s, d, l] booleans, or an object with the
// feature names as keys.
inline std::map<std::string, GameFeatures> parse_features(const Json& j) {
  if (!j.is_object()) throw ParseError("features", "expected an object of game -> features");
  std::map<std::string, GameFeatures> out;
  static const char* names[] = {"horizontal", "vertical", "shooting", "delayed_rewards", "long_term_planning"};
  for (const auto& [game, v] : j.items()) {
    if (!game.empty() && game.front() == '_') continue;  // comment keys
    bool bits[5] = {};
    for (int k = 0; k < 5; ++k) {
      const Json* e = nullptr;
      if (v.is_array() && v.size() == 5) e = &v[static_cast<std::size_t>(k)];
      else if (v.is_object() && v.contains(names[k])) e = &v[names[k]];
      if (!e || !e->is_boolean())
        throw ParseError(game + "." + names[k], "expected a boolean (unconfirmed features cannot be analyzed)");
      bits[k] = e->get<bool>();
    }
    out[game] = {bits[0], bits[1], bits[2], bits[3], bits[4]};
  }
  return out;
}

// Features of MiniArcade games read off their env specs; other games must be
// listed in `given`, which takes precedence.
inline std::map<std::string, GameFeatures> resolve_features(const std::vector<RunSummary>& runs,
                                                            std::map<std::string, GameFeatures> given) {
  for (const auto& r : runs) {
    if (given.count(r.game)) continue;
    if (r.env.rfind("miniarcade:", 0) != 0)
      throw ConfigError("game '" + r.game + "' is not a MiniArcade game; pass a feature file");
    given[r.game] = EnvSpec::parse(r.env).features;
  }
  return given;
}

struct SetupKey {
  std::string target;
  Condition condition = Condition::Scratch;
  std::string source;  // non-empty iff transfer

  auto operator<=>(const SetupKey&) const = default;
  std::string label() const { return source.empty() ? to_string(condition) : to_string(condition) + "_from_" + source; }
};

struct AnalysisOutput {
  Json report;
  std::string dot_scratch;
  std::string dot_random;
  std::string learning_curves_csv;
};

inline AnalysisOutput analyze(const std::vector<RunSummary>& runs, const std::map<std::string, GameFeatures>& features) {
  if (runs.empty()) throw Error("no run records found");
  std::map<SetupKey, std::vector<Curve>> setups;
  std::map<std::string, std::vector<const RunSummary*>> by_game;
  for (const auto& r : runs) {
    SetupKey key{r.game, r.condition, r.condition == Condition::Transfer ? r.source_game : ""};
    if (r.condition == Condition::Transfer && key.source.empty())
      throw ParseError(r.path, "transfer run without a source_game label");
    setups[key].push_back(r.curve);
    by_game[r.game].push_back(&r);
  }
  for (const auto& [game, unused] : by_game)
    if (!features.count(game)) throw ConfigError("feature file has no entry for game '" + game + "'");

  struct GameInfo {
    std::vector<std::size_t> samples;
    double range = 0.0;
    std::optional<TrainingComplexity> training;
  };
  std::map<std::string, GameInfo> info;
  Json games_json = Json::object();
  std::vector<std::string> warnings;
  for (const auto& [game, list] : by_game) {
    GameInfo gi;
    std::size_t generations = std::numeric_limits<std::size_t>::max();
    std::vector<double> maxes;
    for (const auto* r : list) {
      generations = std::min(generations, r->curve.size());
      maxes.push_back(r->max_score);
    }
    gi.samples = sample_generations(generations);
    gi.range = max_score_range(maxes);
    auto scratch = setups.find({game, Condition::Scratch, ""});
    if (scratch != setups.end()) gi.training = training_complexity(scratch->second);
    if (!(gi.range > 0.0)) warnings.push_back("game '" + game + "' has zero max-score range; its TE is undefined");

    Json succ = Json::object();
    for (const auto& [key, curves] : setups)
      if (key.target == game) succ[key.label()] = success(curves, gi.samples);
    games_json[game] = {{"features", features.at(game).letters()},
                        {"feature_complexity", features.at(game).count()},
                        {"generations", generations},
                        {"samples", gi.samples},
                        {"max_score_min", *std::min_element(maxes.begin(), maxes.end())},
                        {"max_score_max", *std::max_element(maxes.begin(), maxes.end())},
                        {"max_score_range", gi.range},
                        {"runs", list.size()},
                        {"success", succ}};
    if (gi.training) {
      games_json[game]["scratch_threshold"] = gi.training->threshold;
      games_json[game]["training_complexity"] = gi.training->mean_generations;
    } else {
      games_json[game]["scratch_threshold"] = nullptr;
      games_json[game]["training_complexity"] = nullptr;
    }
    info[game] = gi;
  }

  struct PairRow {
    std::string source, target;
    IndicatorVector x;
    std::optional<double> te_scratch, te_random;
  };
  std::vector<PairRow> rows;
  for (const auto& [key, curves] : setups) {
    if (key.condition != Condition::Transfer) continue;
    const auto& gi = info[key.target];
    PairRow row{key.source, key.target, {}, std::nullopt, std::nullopt};
    if (!features.count(key.source)) throw ConfigError("feature file has no entry for source game '" + key.source + "'");
    const auto src_info = info.find(key.source);
    if (!gi.training || src_info == info.end() || !src_info->second.training)
      throw ConfigError("indicators need scratch runs for both '" + key.source + "' and '" + key.target + "'");
    row.x = indicators(features.at(key.source), features.at(key.target), src_info->second.training->mean_generations,
                       gi.training->mean_generations);
    if (gi.range > 0.0) {
      auto sc = setups.find({key.target, Condition::Scratch, ""});
      if (sc != setups.end()) row.te_scratch = transfer_effectiveness(curves, sc->second, gi.range, gi.samples);
      auto rc = setups.find({key.target, Condition::Random, ""});
      if (rc != setups.end()) row.te_random = transfer_effectiveness(curves, rc->second, gi.range, gi.samples);
    }
    rows.push_back(row);
  }

  auto regress = [&](bool vs_scratch, std::vector<std::optional<double>>& predicted) -> Json {
    std::vector<LooPair> pairs;
    std::vector<std::size_t> index;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& te = vs_scratch ? rows[i].te_scratch : rows[i].te_random;
      if (!te) continue;
      pairs.push_back({rows[i].x, *te, rows[i].target});
      index.push_back(i);
    }
    predicted.assign(rows.size(), std::nullopt);
    try {
      const auto res = loo_predict(pairs);
      for (std::size_t k = 0; k < index.size(); ++k) predicted[index[k]] = res.predictions[k];
      return {{"pairs", pairs.size()},
              {"r", res.r_defined ? Json(res.r) : Json(nullptr)},
              {"p_value", res.p},
              {"r_defined", res.r_defined},
              {"significant_at_0.05", res.r_defined && res.p < 0.05},
              {"rank_deficient", res.rank_deficient},
              {"coefficients",
               {{"intercept", res.coefficients[0]},
                {"feature_similarity", res.coefficients[1]},
                {"source_feature_complexity", res.coefficients[2]},
                {"target_feature_complexity", res.coefficients[3]},
                {"source_training_complexity", res.coefficients[4]},
                {"target_training_complexity", res.coefficients[5]}}}};
    } catch (const ConfigError& e) {
      return {{"pairs", pairs.size()}, {"skipped", e.what()}};
    }
  };
  std::vector<std::optional<double>> pred_scratch, pred_random;
  Json regression = {{"vs_scratch", regress(true, pred_scratch)}, {"vs_random", regress(false, pred_random)}};

  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  Json pairs_json = Json::array();
  std::map<std::pair<std::string, std::string>, double> te_s, te_r;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    pairs_json.push_back({{"source", r.source},
                          {"target", r.target},
                          {"indicators", r.x.to_json()},
                          {"te_vs_scratch", opt(r.te_scratch)},
                          {"te_vs_random", opt(r.te_random)},
                          {"predicted_vs_scratch", opt(pred_scratch[i])},
                          {"predicted_vs_random", opt(pred_random[i])}});
    if (r.te_scratch) te_s[{r.source, r.target}] = *r.te_scratch;
    if (r.te_random) te_r[{r.source, r.target}] = *r.te_random;
  }

  // Mean TE by target feature complexity, plus its correlation with TE.
  auto directional = [&](bool vs_scratch) {
    std::map<int, std::pair<double, int>> groups;
    std::vector<double> cx, te;
    for (const auto& r : rows) {
      const auto& v = vs_scratch ? r.te_scratch : r.te_random;
      if (!v) continue;
      auto& g = groups[r.x.target_feature_complexity];
      g.first += *v;
      g.second += 1;
      cx.push_back(r.x.target_feature_complexity);
      te.push_back(*v);
    }
    Json by = Json::object();
    for (const auto& [k, g] : groups) by[std::to_string(k)] = g.first / g.second;
    const auto c = pearson(cx, te);
    return Json{{"mean_te_by_target_feature_complexity", by},
                {"r_target_complexity_vs_te", c.defined ? Json(c.r) : Json(nullptr)},
                {"higher_complexity_higher_te", c.defined ? Json(c.r > 0.0) : Json(nullptr)}};
  };

  std::vector<std::string> game_names;
  for (const auto& [g, unused] : by_game) game_names.push_back(g);

  AnalysisOutput out;
  out.report = {{"format", "grusm-te-report/1"},
                {"games", games_json},
                {"pairs", pairs_json},
                {"regression", regression},
                {"directional", {{"vs_scratch", directional(true)}, {"vs_random", directional(false)}}},
                {"warnings", warnings}};
  out.dot_scratch = te_graph(te_s, game_names, "te_vs_scratch");
  out.dot_random = te_graph(te_r, game_names, "te_vs_random");

  std::ostringstream csv;
  csv.precision(17);
  csv << "game,condition,source,generation,mean,stderr\n";
  for (const auto& [key, curves] : setups) {
    std::size_t len = std::numeric_limits<std::size_t>::max();
    for (const auto& c : curves) len = std::min(len, c.size());
    const double n = static_cast<double>(curves.size());
    for (std::size_t g = 0; g < len; ++g) {
      double mean = 0.0;
      for (const auto& c : curves) mean += c[g];
      mean /= n;
      double var = 0.0;
      for (const auto& c : curves) var += (c[g] - mean) * (c[g] - mean);
      const double se = curves.size() > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
      csv << key.target << "," << to_string(key.condition) << "," << key.source << "," << g + 1 << "," << mean
          << "," << se << "\n";
    }
  }
  out.learning_curves_csv = csv.str();
  return out;
}

// Rebuilds a DOT graph from a saved report.
inline std::string te_graph_from_report(const Json& report, bool vs_scratch) {
  std::map<std::pair<std::string, std::string>, double> te;
  std::vector<std::string> games;
  try {
    for (const auto& [g, unused] : report.at("games").items()) games.push_back(g);
    const char* field = vs_scratch ? "te_vs_scratch" : "te_vs_random";
    for (const auto& p : report.at("pairs"))
      if (!p.at(field).is_null())
        te[{p.at("source").get<std::string>(), p.at("target").get<std::string>()}] = p.at(field).get<double>();
  } catch (const Json::exception& e) {
    throw ParseError("report", e.what());
  }
  return te_graph(te, games, vs_scratch ? "te_vs_scratch" : "te_vs_random");
}

}  // namespace grusm
