#pragma once

// Transfer genomes, the source pool, and the random-source control.

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "grusm/error.hpp"
#include "grusm/net.hpp"
#include "grusm/rng.hpp"
#include "grusm/serialize.hpp"

namespace grusm {

inline constexpr double kDefaultInitRange = 0.5;

inline double init_weight(Rng& rng, double range) {
  return std::uniform_real_distribution<double>(-range, range)(rng);
}

// Slot order: in_to_hidden row-major, then out_to_out row-major.
struct TransferLayout {
  std::size_t n_target_inputs = 0;
  std::size_t n_source_hidden = 0;
  std::size_t n_source_outputs = 0;
  std::size_t n_target_outputs = 0;

  std::size_t in_block() const { return n_target_inputs * n_source_hidden; }
  std::size_t out_block() const { return n_source_outputs * n_target_outputs; }
  std::size_t genome_length() const { return in_block() + out_block(); }
  bool operator==(const TransferLayout&) const = default;
};

inline TransferLayout make_layout(std::span<const Substrate> target_substrates, const SourceModule& source) {
  TransferLayout layout{input_count(target_substrates), source.net.hidden.size(), source.net.outputs.size(),
                        kOutputs};
  if (layout.n_target_inputs == 0) throw ConfigError("target must have inputs");
  return layout;
}

inline TransferLinks instantiate_transfer(std::span<const double> genome, const TransferLayout& layout) {
  if (genome.size() != layout.genome_length())
    throw ConfigError("transfer genome length " + std::to_string(genome.size()) + " does not match layout length " +
                      std::to_string(layout.genome_length()));
  auto in_part = genome.subspan(0, layout.in_block());
  auto out_part = genome.subspan(layout.in_block());
  return {Matrix(layout.n_target_inputs, layout.n_source_hidden, std::vector<double>(in_part.begin(), in_part.end())),
          Matrix(layout.n_source_outputs, layout.n_target_outputs,
                 std::vector<double>(out_part.begin(), out_part.end()))};
}

inline std::vector<double> flatten_transfer(const TransferLinks& links) {
  std::vector<double> g(links.in_to_hidden.flat().begin(), links.in_to_hidden.flat().end());
  g.insert(g.end(), links.out_to_out.flat().begin(), links.out_to_out.flat().end());
  return g;
}

// Candidate sources for one run. Each is recruited at most once, and at most
// one source is attached to a network.
class SourcePool {
 public:
  SourcePool() = default;
  explicit SourcePool(std::vector<std::shared_ptr<const SourceModule>> sources) {
    for (auto& s : sources) entries_.push_back({std::move(s), false});
  }

  // Index of the next unused source, marking it used; nullopt when exhausted
  // or when a source is already attached.
  std::optional<std::size_t> take_unused() {
    for (const auto& e : entries_)
      if (e.used) return std::nullopt;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (!entries_[i].used) {
        entries_[i].used = true;
        return i;
      }
    }
    return std::nullopt;
  }

  const SourceModule& at(std::size_t i) const { return *entries_.at(i).module; }
  std::shared_ptr<const SourceModule> handle(std::size_t i) const { return entries_.at(i).module; }
  std::size_t size() const { return entries_.size(); }
  bool used(std::size_t i) const { return entries_.at(i).used; }

 private:
  struct Entry {
    std::shared_ptr<const SourceModule> module;
    bool used = false;
  };
  std::vector<Entry> entries_;
};

// Parameter-count statistics of completed scratch runs, keyed by interface
// shape (see shape_key).
struct ScratchStats {
  struct Entry {
    double mean_params = 0.0;
    double std_params = 0.0;
    std::size_t runs = 0;
  };
  std::map<std::string, Entry> by_shape;

  Json to_json() const {
    Json shapes = Json::object();
    for (const auto& [k, e] : by_shape)
      shapes[k] = {{"mean_params", e.mean_params}, {"std_params", e.std_params}, {"runs", e.runs}};
    return {{"shapes", shapes}};
  }

  static ScratchStats from_json(const Json& j) {
    ScratchStats s;
    if (!j.is_object() || !j.contains("shapes") || !j["shapes"].is_object())
      throw ParseError("shapes", "expected an object keyed by interface shape");
    for (const auto& [k, v] : j["shapes"].items()) {
      const std::string path = "shapes." + k;
      Entry e;
      e.mean_params = detail::number(detail::field(v, "mean_params", path), path + ".mean_params");
      if (v.contains("std_params")) e.std_params = detail::number(v["std_params"], path + ".std_params");
      if (v.contains("runs")) e.runs = v["runs"].get<std::size_t>();
      s.by_shape[k] = e;
    }
    return s;
  }
};

inline std::string shape_key(std::span<const Substrate> substrates) {
  bool uniform = true;
  for (const auto& s : substrates) uniform = uniform && s == substrates.front();
  if (uniform && !substrates.empty())
    return std::to_string(substrates.front().rows) + "x" + std::to_string(substrates.front().cols) + "x" +
           std::to_string(substrates.size());
  std::string key;
  for (const auto& s : substrates) {
    if (!key.empty()) key += ",";
    key += std::to_string(s.rows) + "x" + std::to_string(s.cols);
  }
  return key;
}

// Nearest achievable hidden count for a parameter budget, ties rounded down,
// never below one node.
inline std::size_t hidden_for_params(double params, std::size_t n_inputs) {
  const double per_node = static_cast<double>(n_inputs + 2 + kOutputs);
  const double h = (params - static_cast<double>(kOutputs)) / per_node;
  const double rounded = std::ceil(h - 0.5);
  return rounded < 1.0 ? 1 : static_cast<std::size_t>(rounded);
}

inline std::shared_ptr<const SourceModule> make_random_source(std::vector<Substrate> substrates, std::size_t n_hidden,
                                                              Rng& rng, double init_range = kDefaultInitRange) {
  TargetModule m = TargetModule::zeros(std::move(substrates), n_hidden);
  for (auto& w : m.w_in.flat()) w = init_weight(rng, init_range);
  for (auto& w : m.w_out.flat()) w = init_weight(rng, init_range);
  for (auto& h : m.hidden) h = {init_weight(rng, init_range), init_weight(rng, init_range)};
  for (auto& o : m.outputs) o.bias = init_weight(rng, init_range);
  return make_source(std::move(m), "random");
}

// Random network whose parameter count tracks a draw from N(mean, std) of
// the scratch networks for the same interface shape.
inline std::shared_ptr<const SourceModule> make_random_source(const ScratchStats& stats,
                                                              std::vector<Substrate> substrates, Rng& rng,
                                                              double init_range = kDefaultInitRange) {
  const std::string key = shape_key(substrates);
  auto it = stats.by_shape.find(key);
  if (it == stats.by_shape.end() || !(it->second.mean_params > 0.0))
    throw ConfigError("no scratch parameter statistics for interface shape " + key +
                      "; run scratch experiments first or pass an explicit hidden count");
  double draw = it->second.mean_params;
  if (it->second.std_params > 0.0) draw = std::normal_distribution<double>(draw, it->second.std_params)(rng);
  const std::size_t n_hidden = hidden_for_params(draw, input_count(substrates));
  return make_random_source(std::move(substrates), n_hidden, rng, init_range);
}

}  // namespace grusm
