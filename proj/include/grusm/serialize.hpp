#pragma once

// Network file format (JSON) and source digests.
//
//   { "version": 1,
//     "target":   { "substrates": [{"rows","cols"}], "hidden": [{"bias","self"}],
//                   "outputs": [{"bias"}], "w_in": [...], "w_out": [...] },
//     "source":   null | { "net": <target object>, "digest": <hex sha256>, "label": str },
//     "transfer": null | { "in_to_hidden": [...], "out_to_out": [...] } }
//
// Matrices are row-major flat arrays. Keys are emitted in sorted order and
// reals with shortest round-trip precision, so equal bytes imply equal
// parameters.

#include <openssl/evp.h>

#include <cstdio>
#include <memory>
#include <string>
#include <string_view>

#include <json.hpp>

#include "grusm/error.hpp"
#include "grusm/net.hpp"

namespace grusm {

using Json = nlohmann::json;

inline constexpr int kNetworkFormatVersion = 1;

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  std::string hex;
  hex.reserve(2 * len);
  char buf[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

namespace detail {

inline Json matrix_json(const Matrix& m) { return Json(std::vector<double>(m.flat().begin(), m.flat().end())); }

inline const Json& field(const Json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ParseError(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(path.empty() ? key : path + "." + key, "missing field");
  return *it;
}

inline double number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ParseError(path, "expected a number");
  return j.get<double>();
}

inline int positive_int(const Json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() <= 0) throw ParseError(path, "expected a positive integer");
  return j.get<int>();
}

inline Matrix parse_matrix(const Json& j, std::size_t rows, std::size_t cols, const std::string& path) {
  if (!j.is_array()) throw ParseError(path, "expected an array");
  if (j.size() != rows * cols)
    throw ParseError(path, "expected " + std::to_string(rows * cols) + " entries, found " + std::to_string(j.size()));
  std::vector<double> data;
  data.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) data.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
  return Matrix(rows, cols, std::move(data));
}

}  // namespace detail

inline Json module_to_json(const TargetModule& m) {
  Json subs = Json::array();
  for (const auto& s : m.substrates) subs.push_back({{"rows", s.rows}, {"cols", s.cols}});
  Json hidden = Json::array();
  for (const auto& h : m.hidden) hidden.push_back({{"bias", h.bias}, {"self", h.self}});
  Json outputs = Json::array();
  for (const auto& o : m.outputs) outputs.push_back({{"bias", o.bias}});
  return {{"substrates", subs},
          {"hidden", hidden},
          {"outputs", outputs},
          {"w_in", detail::matrix_json(m.w_in)},
          {"w_out", detail::matrix_json(m.w_out)}};
}

inline TargetModule module_from_json(const Json& j, const std::string& path) {
  using namespace detail;
  TargetModule m;
  const Json& subs = field(j, "substrates", path);
  if (!subs.is_array() || subs.empty()) throw ParseError(path + ".substrates", "expected a non-empty array");
  for (std::size_t i = 0; i < subs.size(); ++i) {
    const std::string p = path + ".substrates[" + std::to_string(i) + "]";
    m.substrates.push_back({positive_int(field(subs[i], "rows", p), p + ".rows"),
                            positive_int(field(subs[i], "cols", p), p + ".cols")});
  }
  const Json& hidden = field(j, "hidden", path);
  if (!hidden.is_array()) throw ParseError(path + ".hidden", "expected an array");
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    const std::string p = path + ".hidden[" + std::to_string(i) + "]";
    m.hidden.push_back({number(field(hidden[i], "bias", p), p + ".bias"),
                        number(field(hidden[i], "self", p), p + ".self")});
  }
  const Json& outputs = field(j, "outputs", path);
  if (!outputs.is_array() || outputs.size() != kOutputs)
    throw ParseError(path + ".outputs", "expected an array of 10 output nodes");
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const std::string p = path + ".outputs[" + std::to_string(i) + "]";
    m.outputs.push_back({number(field(outputs[i], "bias", p), p + ".bias")});
  }
  m.w_in = parse_matrix(field(j, "w_in", path), m.input_count(), m.hidden.size(), path + ".w_in");
  m.w_out = parse_matrix(field(j, "w_out", path), m.hidden.size(), kOutputs, path + ".w_out");
  try {
    m.validate();
  } catch (const ConfigError& e) {
    throw ParseError(path, e.what());
  }
  return m;
}

// Canonical bytes of a module: compact JSON with sorted keys.
inline std::string canonical_bytes(const TargetModule& m) { return module_to_json(m).dump(); }

inline std::string module_digest(const TargetModule& m) { return sha256_hex(canonical_bytes(m)); }

inline std::shared_ptr<const SourceModule> make_source(TargetModule net, std::string label) {
  net.validate();
  auto src = std::make_shared<SourceModule>();
  src->digest = module_digest(net);
  src->net = std::move(net);
  src->label = std::move(label);
  return src;
}

inline Json network_to_json(const GrusmNetwork& net) {
  Json j;
  j["version"] = kNetworkFormatVersion;
  j["target"] = module_to_json(net.target);
  if (net.source) {
    j["source"] = {{"net", module_to_json(net.source->module->net)},
                   {"digest", net.source->module->digest},
                   {"label", net.source->module->label}};
    j["transfer"] = {{"in_to_hidden", detail::matrix_json(net.source->links.in_to_hidden)},
                     {"out_to_out", detail::matrix_json(net.source->links.out_to_out)}};
  } else {
    j["source"] = nullptr;
    j["transfer"] = nullptr;
  }
  return j;
}

inline GrusmNetwork network_from_json(const Json& j) {
  using namespace detail;
  if (!j.is_object()) throw ParseError("<document>", "expected a JSON object");
  const Json& version = field(j, "version", "");
  if (!version.is_number_integer() || version.get<int>() != kNetworkFormatVersion)
    throw ParseError("version", "unsupported network format version (expected " +
                                    std::to_string(kNetworkFormatVersion) + ")");
  GrusmNetwork net;
  net.target = module_from_json(field(j, "target", ""), "target");
  auto src_it = j.find("source");
  if (src_it == j.end()) throw ParseError("source", "missing field");
  if (src_it->is_null()) return net;

  const Json& sj = *src_it;
  const Json& snet = field(sj, "net", "source");
  if (snet.is_object() && snet.contains("source") && !snet["source"].is_null())
    throw ParseError("source.net.source", "nested source networks are not supported");
  TargetModule src_module = module_from_json(snet, "source.net");
  const Json& digest = field(sj, "digest", "source");
  if (!digest.is_string()) throw ParseError("source.digest", "expected a string");
  const Json& label = field(sj, "label", "source");
  if (!label.is_string()) throw ParseError("source.label", "expected a string");
  auto module = std::make_shared<SourceModule>();
  module->digest = module_digest(src_module);
  if (module->digest != digest.get<std::string>())
    throw ParseError("source.digest", "does not match the source parameters");
  module->net = std::move(src_module);
  module->label = label.get<std::string>();

  const Json& tj = field(j, "transfer", "");
  AttachedSource attached;
  attached.links.in_to_hidden = parse_matrix(field(tj, "in_to_hidden", "transfer"), net.target.input_count(),
                                             module->net.hidden.size(), "transfer.in_to_hidden");
  attached.links.out_to_out = parse_matrix(field(tj, "out_to_out", "transfer"), module->net.outputs.size(),
                                           kOutputs, "transfer.out_to_out");
  attached.module = std::move(module);
  net.source = std::move(attached);
  return net;
}

inline std::string serialize(const GrusmNetwork& net) { return network_to_json(net).dump() + "\n"; }

inline GrusmNetwork deserialize(std::string_view bytes) {
  Json j;
  try {
    j = Json::parse(bytes);
  } catch (const Json::parse_error& e) {
    throw ParseError("<document>", std::string("invalid JSON: ") + e.what());
  }
  return network_from_json(j);
}

// Reads a network file for use as a frozen source. The file's target module
// becomes the source; files that already carry a source are rejected.
inline std::shared_ptr<const SourceModule> source_from_network(const GrusmNetwork& net, std::string label) {
  if (net.source) throw ParseError("source", "nested source networks are not supported");
  return make_source(net.target, std::move(label));
}

}  // namespace grusm
