#pragma once

// Internal serialization helpers shared by the model checkpoint writers.
// Emission uses a fixed key order and %.17g numbers so equal models produce
// identical bytes; doubles survive the round trip exactly.

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"
#include "nidlab/error.hpp"
#include "nidlab/jsonio.hpp"
#include "nidlab/tensor.hpp"

namespace nidlab::detail {

inline std::string tensor_json(const Tensor& t) {
  std::string s = "{\"shape\":[";
  if (t.shape.rank >= 1) s += json_num(static_cast<long long>(t.shape.d0));
  if (t.shape.rank == 2) s += "," + json_num(static_cast<long long>(t.shape.d1));
  s += "],\"data\":[";
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    if (i) s += ',';
    s += json_num(t.data[i]);
  }
  s += "]}";
  return s;
}

inline std::string params_json(const std::vector<std::string>& names,
                               const std::vector<const Tensor*>& ts) {
  std::string s = "{";
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) s += ',';
    s += json_str(names[i]) + ":" + tensor_json(*ts[i]);
  }
  s += "}";
  return s;
}

inline void load_tensor_into(const nlohmann::json& j, const std::string& name, Tensor& t) {
  const auto& js = j.at("shape");
  Shape got{};
  if (js.size() == 1) {
    got = Shape::vec(js.at(0).get<std::size_t>());
  } else if (js.size() == 2) {
    got = Shape::mat(js.at(0).get<std::size_t>(), js.at(1).get<std::size_t>());
  } else {
    throw Error("checkpoint: parameter \"" + name + "\" has rank " + std::to_string(js.size()));
  }
  if (got != t.shape)
    throw Error("checkpoint: parameter \"" + name + "\" has shape " + got.str() + ", expected " +
                t.shape.str());
  const auto& jd = j.at("data");
  if (jd.size() != t.data.size())
    throw Error("checkpoint: parameter \"" + name + "\" has " + std::to_string(jd.size()) +
                " entries, expected " + std::to_string(t.data.size()));
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    t.data[i] = jd.at(i).get<double>();
    if (!std::isfinite(t.data[i]))
      throw Error("checkpoint: parameter \"" + name + "\" has a non-finite entry");
  }
}

// Fills pre-shaped tensors; shape/size/finiteness mismatches throw.
inline void load_params(const nlohmann::json& jp, const std::vector<std::string>& names,
                        const std::vector<Tensor*>& ts) {
  if (!jp.is_object()) throw Error("checkpoint: params must be an object");
  if (jp.size() != names.size())
    throw Error("checkpoint: has " + std::to_string(jp.size()) + " parameters, expected " +
                std::to_string(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto it = jp.find(names[i]);
    if (it == jp.end()) throw Error("checkpoint: missing parameter \"" + names[i] + "\"");
    load_tensor_into(*it, names[i], *ts[i]);
  }
}

}  // namespace nidlab::detail
