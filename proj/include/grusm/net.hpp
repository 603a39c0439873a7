#pragma once

// GRUSM network model: a target module M, at most one frozen source network
// from S, and the transfer connections T binding them.

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "grusm/error.hpp"
#include "grusm/matrix.hpp"

namespace grusm {

inline constexpr std::size_t kDirections = 9;
inline constexpr std::size_t kOutputs = 10;
inline constexpr std::size_t kFireOutput = 9;
inline constexpr int kNoMove = 4;

using Outputs = std::array<double, kOutputs>;

struct Substrate {
  int rows = 0;
  int cols = 0;

  std::size_t cells() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
  bool operator==(const Substrate&) const = default;
};

inline std::size_t input_count(std::span<const Substrate> substrates) {
  std::size_t n = 0;
  for (const auto& s : substrates) n += s.cells();
  return n;
}

struct HiddenNode {
  double bias = 0.0;
  double self = 0.0;  // recurrent self-loop weight
  bool operator==(const HiddenNode&) const = default;
};

struct OutputNode {
  double bias = 0.0;
  bool operator==(const OutputNode&) const = default;
};

// Single-hidden-layer tanh network with self-loops on hidden nodes.
// Outputs are the 3x3 joystick substrate (row-major, index 4 = no movement)
// followed by the fire node.
struct TargetModule {
  std::vector<Substrate> substrates;
  std::vector<HiddenNode> hidden;
  std::vector<OutputNode> outputs;
  Matrix w_in;   // inputs x hidden
  Matrix w_out;  // hidden x outputs

  std::size_t input_count() const { return grusm::input_count(substrates); }

  static TargetModule zeros(std::vector<Substrate> substrates, std::size_t n_hidden) {
    TargetModule m;
    m.substrates = std::move(substrates);
    m.hidden.assign(n_hidden, HiddenNode{});
    m.outputs.assign(kOutputs, OutputNode{});
    m.w_in = Matrix(m.input_count(), n_hidden);
    m.w_out = Matrix(n_hidden, kOutputs);
    return m;
  }

  void validate() const {
    if (substrates.empty()) throw ConfigError("target module needs at least one input substrate");
    for (const auto& s : substrates)
      if (s.rows <= 0 || s.cols <= 0) throw ConfigError("substrate dimensions must be positive");
    if (outputs.size() != kOutputs) throw ConfigError("target module must have exactly 10 outputs");
    if (w_in.rows() != input_count() || w_in.cols() != hidden.size())
      throw ConfigError("w_in shape does not match inputs x hidden");
    if (w_out.rows() != hidden.size() || w_out.cols() != kOutputs)
      throw ConfigError("w_out shape does not match hidden x outputs");
    auto finite = [](double v) { return std::isfinite(v); };
    bool ok = std::all_of(w_in.flat().begin(), w_in.flat().end(), finite) &&
              std::all_of(w_out.flat().begin(), w_out.flat().end(), finite);
    for (const auto& h : hidden) ok = ok && finite(h.bias) && finite(h.self);
    for (const auto& o : outputs) ok = ok && finite(o.bias);
    if (!ok) throw ConfigError("network parameters must be finite");
  }

  bool operator==(const TargetModule&) const = default;
};

// Weights, biases, and self-loops of a module.
inline std::size_t parameter_count(const TargetModule& m) {
  return m.w_in.size() + m.w_out.size() + 2 * m.hidden.size() + m.outputs.size();
}

// Parameter count of a module with `n_hidden` hidden nodes over `n_inputs` inputs.
inline std::size_t parameter_count(std::size_t n_inputs, std::size_t n_hidden) {
  return n_hidden * (n_inputs + 2 + kOutputs) + kOutputs;
}

// A frozen, previously trained network. Held through shared_ptr<const>; no
// operation in this library rewrites its parameters.
struct SourceModule {
  TargetModule net;
  std::string digest;  // hex SHA-256 of the canonical serialization of `net`
  std::string label;   // provenance only
};

struct TransferLinks {
  Matrix in_to_hidden;  // target inputs x source hidden
  Matrix out_to_out;    // source outputs x target outputs
  bool operator==(const TransferLinks&) const = default;
};

struct AttachedSource {
  std::shared_ptr<const SourceModule> module;
  TransferLinks links;
};

struct GrusmNetwork {
  TargetModule target;
  std::optional<AttachedSource> source;

  void validate() const {
    target.validate();
    if (!source) return;
    if (!source->module) throw ConfigError("attached source is null");
    const auto& src = source->module->net;
    src.validate();
    const auto& links = source->links;
    if (links.in_to_hidden.rows() != target.input_count() || links.in_to_hidden.cols() != src.hidden.size())
      throw ConfigError("in_to_hidden shape does not match target inputs x source hidden");
    if (links.out_to_out.rows() != src.outputs.size() || links.out_to_out.cols() != target.outputs.size())
      throw ConfigError("out_to_out shape does not match source outputs x target outputs");
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(links.in_to_hidden.flat().begin(), links.in_to_hidden.flat().end(), finite) ||
        !std::all_of(links.out_to_out.flat().begin(), links.out_to_out.flat().end(), finite))
      throw ConfigError("transfer weights must be finite");
  }
};

// Previous-step hidden activations carried by the self-loops.
struct NetworkState {
  std::vector<double> target_hidden;
  std::vector<double> source_hidden;

  static NetworkState fresh(const GrusmNetwork& net) {
    NetworkState s;
    s.target_hidden.assign(net.target.hidden.size(), 0.0);
    if (net.source) s.source_hidden.assign(net.source->module->net.hidden.size(), 0.0);
    return s;
  }
};

struct Action {
  int direction = kNoMove;  // 0..8, row-major over the 3x3 joystick substrate
  bool fire = false;

  int row_delta() const { return direction / 3 - 1; }
  int col_delta() const { return direction % 3 - 1; }
  bool operator==(const Action&) const = default;
};

// A source's outputs reach the target only through its hidden layer: with no
// hidden nodes there is no input-to-output path through the source, so it is
// outside the evaluated subnetwork.
inline bool source_on_active_path(const GrusmNetwork& net) {
  return net.source && !net.source->module->net.hidden.empty() && net.target.input_count() > 0;
}

// One recurrent step. Source inputs are clamped to zero, so the source's own
// input weights never contribute. Only nonzero observation entries are
// visited; object substrates are sparse.
inline Outputs step_activate(const GrusmNetwork& net, NetworkState& state, std::span<const double> obs) {
  const TargetModule& m = net.target;
  const std::size_t n_in = m.input_count();
  const std::size_t n_hid = m.hidden.size();
  if (obs.size() != n_in) throw ConfigError("observation size does not match network inputs");
  if (state.target_hidden.size() != n_hid) throw ConfigError("state does not match target hidden layer");

  const bool use_source = source_on_active_path(net);
  const SourceModule* src = net.source ? net.source->module.get() : nullptr;
  const std::size_t n_src_hid = src ? src->net.hidden.size() : 0;
  if (src && state.source_hidden.size() != n_src_hid)
    throw ConfigError("state does not match source hidden layer");

  std::vector<double> h(n_hid);
  for (std::size_t j = 0; j < n_hid; ++j) h[j] = m.hidden[j].bias + m.hidden[j].self * state.target_hidden[j];
  std::vector<double> s(use_source ? n_src_hid : 0);
  if (use_source) {
    for (std::size_t j = 0; j < n_src_hid; ++j)
      s[j] = src->net.hidden[j].bias + src->net.hidden[j].self * state.source_hidden[j];
  }

  const Matrix* in_to_hidden = use_source ? &net.source->links.in_to_hidden : nullptr;
  for (std::size_t i = 0; i < n_in; ++i) {
    const double x = obs[i];
    if (x == 0.0) continue;
    auto row = m.w_in.row(i);
    for (std::size_t j = 0; j < n_hid; ++j) h[j] += x * row[j];
    if (in_to_hidden) {
      auto trow = in_to_hidden->row(i);
      for (std::size_t j = 0; j < n_src_hid; ++j) s[j] += x * trow[j];
    }
  }
  for (auto& v : h) v = std::tanh(v);
  for (auto& v : s) v = std::tanh(v);

  Outputs out{};
  for (std::size_t k = 0; k < kOutputs; ++k) out[k] = m.outputs[k].bias;
  for (std::size_t j = 0; j < n_hid; ++j) {
    auto row = m.w_out.row(j);
    for (std::size_t k = 0; k < kOutputs; ++k) out[k] += h[j] * row[k];
  }
  if (use_source) {
    const TargetModule& sm = src->net;
    const Matrix& o2o = net.source->links.out_to_out;
    for (std::size_t q = 0; q < sm.outputs.size(); ++q) {
      double o = sm.outputs[q].bias;
      for (std::size_t j = 0; j < n_src_hid; ++j) o += s[j] * sm.w_out(j, q);
      o = std::tanh(o);
      auto row = o2o.row(q);
      for (std::size_t k = 0; k < kOutputs; ++k) out[k] += o * row[k];
    }
  }
  for (auto& v : out) v = std::tanh(v);

  state.target_hidden = std::move(h);
  if (use_source) {
    state.source_hidden = std::move(s);
  } else if (src) {
    std::fill(state.source_hidden.begin(), state.source_hidden.end(), 0.0);
  }
  return out;
}

// Direction is the argmax of the 3x3 substrate (lowest index wins ties); fire
// is a strict positive threshold on the fire node.
inline Action decode_action(std::span<const double> outputs) {
  if (outputs.size() != kOutputs) throw ConfigError("decode_action expects 10 outputs");
  int best = 0;
  for (int d = 1; d < static_cast<int>(kDirections); ++d)
    if (outputs[d] > outputs[best]) best = d;
  return Action{best, outputs[kFireOutput] > 0.0};
}

// ---------------------------------------------------------------------------
// Explicit-edge view and the induced subnetwork.

enum class Part { TargetInput, TargetHidden, TargetOutput, SourceInput, SourceHidden, SourceOutput };

struct NodeId {
  Part part;
  std::size_t index;
  auto operator<=>(const NodeId&) const = default;
};

struct EdgeGraph {
  std::vector<NodeId> nodes;
  std::vector<std::pair<NodeId, NodeId>> edges;
};

// Nodes on some directed path from a target input to a target output.
inline std::set<NodeId> active_subnetwork(const EdgeGraph& g) {
  std::map<NodeId, std::vector<NodeId>> fwd, bwd;
  for (const auto& [from, to] : g.edges) {
    if (from == to) continue;  // self-loops never create paths
    fwd[from].push_back(to);
    bwd[to].push_back(from);
  }
  auto sweep = [](const std::vector<NodeId>& seeds, const std::map<NodeId, std::vector<NodeId>>& adj) {
    std::set<NodeId> seen(seeds.begin(), seeds.end());
    std::vector<NodeId> frontier(seeds.begin(), seeds.end());
    while (!frontier.empty()) {
      NodeId n = frontier.back();
      frontier.pop_back();
      auto it = adj.find(n);
      if (it == adj.end()) continue;
      for (const auto& m : it->second)
        if (seen.insert(m).second) frontier.push_back(m);
    }
    return seen;
  };
  std::vector<NodeId> inputs, outputs;
  for (const auto& n : g.nodes) {
    if (n.part == Part::TargetInput) inputs.push_back(n);
    if (n.part == Part::TargetOutput) outputs.push_back(n);
  }
  auto reach = sweep(inputs, fwd);
  auto coreach = sweep(outputs, bwd);
  std::set<NodeId> active;
  for (const auto& n : g.nodes)
    if (reach.count(n) && coreach.count(n)) active.insert(n);
  return active;
}

// Every dense matrix entry is an edge; self-loops are listed but do not
// contribute to reachability.
inline EdgeGraph edge_view(const GrusmNetwork& net) {
  EdgeGraph g;
  const auto& m = net.target;
  const std::size_t n_in = m.input_count();
  auto add_layer = [&](Part p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) g.nodes.push_back({p, i});
  };
  auto connect = [&](Part a, std::size_t na, Part b, std::size_t nb) {
    for (std::size_t i = 0; i < na; ++i)
      for (std::size_t j = 0; j < nb; ++j) g.edges.push_back({{a, i}, {b, j}});
  };
  add_layer(Part::TargetInput, n_in);
  add_layer(Part::TargetHidden, m.hidden.size());
  add_layer(Part::TargetOutput, m.outputs.size());
  connect(Part::TargetInput, n_in, Part::TargetHidden, m.hidden.size());
  connect(Part::TargetHidden, m.hidden.size(), Part::TargetOutput, m.outputs.size());
  for (std::size_t j = 0; j < m.hidden.size(); ++j)
    g.edges.push_back({{Part::TargetHidden, j}, {Part::TargetHidden, j}});
  if (net.source) {
    const auto& s = net.source->module->net;
    const std::size_t s_in = s.input_count();
    add_layer(Part::SourceInput, s_in);
    add_layer(Part::SourceHidden, s.hidden.size());
    add_layer(Part::SourceOutput, s.outputs.size());
    connect(Part::SourceInput, s_in, Part::SourceHidden, s.hidden.size());
    connect(Part::SourceHidden, s.hidden.size(), Part::SourceOutput, s.outputs.size());
    for (std::size_t j = 0; j < s.hidden.size(); ++j)
      g.edges.push_back({{Part::SourceHidden, j}, {Part::SourceHidden, j}});
    connect(Part::TargetInput, n_in, Part::SourceHidden, s.hidden.size());
    connect(Part::SourceOutput, s.outputs.size(), Part::TargetOutput, m.outputs.size());
  }
  return g;
}

inline std::set<NodeId> active_subnetwork(const GrusmNetwork& net) { return active_subnetwork(edge_view(net)); }

// Copy of `net` with every parameter belonging to a node outside `active`
// (its bias, self-loop, and all incident weights) set to zero. The returned
// source is a modified copy and carries an empty digest.
inline GrusmNetwork zero_inactive(const GrusmNetwork& net, const std::set<NodeId>& active) {
  auto off = [&](Part p, std::size_t i) { return !active.count({p, i}); };
  auto zero_module = [&](TargetModule& m, Part in, Part hid, Part out) {
    for (std::size_t i = 0; i < m.w_in.rows(); ++i)
      for (std::size_t j = 0; j < m.w_in.cols(); ++j)
        if (off(in, i) || off(hid, j)) m.w_in(i, j) = 0.0;
    for (std::size_t j = 0; j < m.w_out.rows(); ++j)
      for (std::size_t k = 0; k < m.w_out.cols(); ++k)
        if (off(hid, j) || off(out, k)) m.w_out(j, k) = 0.0;
    for (std::size_t j = 0; j < m.hidden.size(); ++j)
      if (off(hid, j)) m.hidden[j] = HiddenNode{};
    for (std::size_t k = 0; k < m.outputs.size(); ++k)
      if (off(out, k)) m.outputs[k] = OutputNode{};
  };
  GrusmNetwork copy = net;
  zero_module(copy.target, Part::TargetInput, Part::TargetHidden, Part::TargetOutput);
  if (net.source) {
    auto src = std::make_shared<SourceModule>(*net.source->module);
    zero_module(src->net, Part::SourceInput, Part::SourceHidden, Part::SourceOutput);
    src->digest.clear();
    auto& links = copy.source->links;
    for (std::size_t i = 0; i < links.in_to_hidden.rows(); ++i)
      for (std::size_t j = 0; j < links.in_to_hidden.cols(); ++j)
        if (off(Part::TargetInput, i) || off(Part::SourceHidden, j)) links.in_to_hidden(i, j) = 0.0;
    for (std::size_t q = 0; q < links.out_to_out.rows(); ++q)
      for (std::size_t k = 0; k < links.out_to_out.cols(); ++k)
        if (off(Part::SourceOutput, q) || off(Part::TargetOutput, k)) links.out_to_out(q, k) = 0.0;
    copy.source->module = std::move(src);
  }
  return copy;
}

}  // namespace grusm
