// Copyright 2026 The evonas Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// JSON run configuration. Search fields sit at the top level under the
// SearchConfig member names; "task", "data" and "genome" are nested objects.
// Every field is optional and defaults to the SearchConfig default.
//
//   {
//     "seed": 7, "initial_population": 16, "train_iters": 300,
//     "task": {"kind": "denoise_gaussian", "gaussian_sigma": 0.2},
//     "data": {"synthetic_count": 200, "size": 16}
//   }

#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "evonas/evolution.hpp"
#include "evonas/image_io.hpp"
#include "evonas/tasks.hpp"
#include "json.hpp"

namespace evonas {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error("config field '" + field + "': " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct DataConfig {
  std::string folder;                  // empty: synthetic images
  std::size_t synthetic_count = 200;
  std::int64_t size = 16;              // synthetic side, or resize target for folders (0 keeps native size)
  std::uint64_t seed = 0;              // synthetic generator seed
};

struct RunConfig {
  SearchConfig search;
  RestorationTask task;
  DataConfig data;
};

namespace detail {

template <typename U>
U config_get(const nlohmann::json& obj, const std::string& key, const std::string& path) {
  const auto& v = obj.at(key);
  const std::string where = path.empty() ? key : path + "." + key;
  try {
    if constexpr (std::is_same_v<U, bool>) {
      if (!v.is_boolean()) throw ConfigError(where, "expected true or false");
    } else if constexpr (std::is_integral_v<U>) {
      if (!v.is_number_integer()) throw ConfigError(where, "expected an integer");
      if (std::is_unsigned_v<U> && v.get<std::int64_t>() < 0) throw ConfigError(where, "must be non-negative");
    } else if constexpr (std::is_floating_point_v<U>) {
      if (!v.is_number()) throw ConfigError(where, "expected a number");
    } else {
      if (!v.is_string()) throw ConfigError(where, "expected a string");
    }
    return v.get<U>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where, e.what());
  }
}

template <typename U>
void config_read(const nlohmann::json& obj, const std::string& key, const std::string& path, U& out) {
  if (obj.contains(key)) out = config_get<U>(obj, key, path);
}

inline void config_reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                                  const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(path.empty() ? it.key() : path + "." + it.key(), "unknown field");
  }
}

inline const nlohmann::json& config_object(const nlohmann::json& obj, const std::string& key) {
  const auto& v = obj.at(key);
  if (!v.is_object()) throw ConfigError(key, "expected an object");
  return v;
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& doc) {
  using detail::config_read;
  if (!doc.is_object()) throw ConfigError("(root)", "configuration must be a JSON object");
  detail::config_reject_unknown(
      doc,
      {"seed", "initial_population", "min_population", "elites", "crossover_prob", "mutation_rate", "train_iters",
       "minibatch", "val_minibatches", "wall_clock_budget_seconds", "mem_limit_elements", "time_budget_seconds",
       "time_budget_iterations", "max_generations", "threads", "deterministic", "reuse_trained", "genome", "task",
       "data"},
      "");
  RunConfig rc;
  SearchConfig& s = rc.search;
  config_read(doc, "seed", "", s.seed);
  config_read(doc, "initial_population", "", s.initial_population);
  config_read(doc, "min_population", "", s.min_population);
  config_read(doc, "elites", "", s.elites);
  config_read(doc, "crossover_prob", "", s.crossover_prob);
  config_read(doc, "mutation_rate", "", s.mutation_rate);
  config_read(doc, "train_iters", "", s.train_iters);
  config_read(doc, "minibatch", "", s.minibatch);
  config_read(doc, "val_minibatches", "", s.val_minibatches);
  config_read(doc, "wall_clock_budget_seconds", "", s.wall_clock_budget_seconds);
  config_read(doc, "mem_limit_elements", "", s.mem_limit_elements);
  config_read(doc, "time_budget_seconds", "", s.time_budget_seconds);
  config_read(doc, "time_budget_iterations", "", s.time_budget_iterations);
  config_read(doc, "max_generations", "", s.max_generations);
  config_read(doc, "threads", "", s.threads);
  config_read(doc, "deterministic", "", s.deterministic);
  config_read(doc, "reuse_trained", "", s.reuse_trained);
  if (doc.contains("genome")) {
    const auto& g = detail::config_object(doc, "genome");
    detail::config_reject_unknown(g, {"min_nodes", "max_nodes"}, "genome");
    config_read(g, "min_nodes", "genome", s.genome.min_nodes);
    config_read(g, "max_nodes", "genome", s.genome.max_nodes);
  }
  if (doc.contains("task")) {
    const auto& t = detail::config_object(doc, "task");
    detail::config_reject_unknown(
        t, {"kind", "uniform_bound", "gaussian_sigma", "blur_sigma", "blur_radius", "keep_fraction"}, "task");
    if (t.contains("kind")) {
      const auto name = detail::config_get<std::string>(t, "kind", "task");
      const auto kind = parse_task(name);
      if (!kind) throw ConfigError("task.kind", "unknown task '" + name + "'");
      rc.task.kind = *kind;
    }
    TaskParams& p = rc.task.params;
    config_read(t, "uniform_bound", "task", p.uniform_bound);
    config_read(t, "gaussian_sigma", "task", p.gaussian_sigma);
    config_read(t, "blur_sigma", "task", p.blur_sigma);
    config_read(t, "blur_radius", "task", p.blur_radius);
    config_read(t, "keep_fraction", "task", p.keep_fraction);
    if (!(p.uniform_bound >= 0)) throw ConfigError("task.uniform_bound", "must be non-negative");
    if (!(p.gaussian_sigma >= 0)) throw ConfigError("task.gaussian_sigma", "must be non-negative");
    if (!(p.blur_sigma >= 0)) throw ConfigError("task.blur_sigma", "must be non-negative");
    if (p.blur_radius < 0) throw ConfigError("task.blur_radius", "must be non-negative");
    if (!(p.keep_fraction >= 0 && p.keep_fraction <= 1)) throw ConfigError("task.keep_fraction", "must lie in [0, 1]");
  }
  if (doc.contains("data")) {
    const auto& d = detail::config_object(doc, "data");
    detail::config_reject_unknown(d, {"folder", "synthetic_count", "size", "seed"}, "data");
    config_read(d, "folder", "data", rc.data.folder);
    config_read(d, "synthetic_count", "data", rc.data.synthetic_count);
    config_read(d, "size", "data", rc.data.size);
    config_read(d, "seed", "data", rc.data.seed);
    if (rc.data.folder.empty() && rc.data.size != 8 && rc.data.size != 16 && rc.data.size != 32 &&
        rc.data.size != 64) {
      throw ConfigError("data.size", "synthetic size must be 8, 16, 32 or 64");
    }
    if (rc.data.size < 0) throw ConfigError("data.size", "must be non-negative");
    if (rc.data.folder.empty() && rc.data.synthetic_count < 5) {
      throw ConfigError("data.synthetic_count", "need at least 5 images for three non-empty splits");
    }
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    const auto colon = msg.find(':');
    throw ConfigError(msg.substr(0, colon), colon == std::string::npos ? msg : msg.substr(colon + 2));
  }
  return rc;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("(file)", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("(syntax)", path + " at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  return config_from_json(doc);
}

inline ImageDataset load_dataset(const DataConfig& d) {
  if (!d.folder.empty()) return load_image_folder(d.folder, d.size);
  return synth_dataset(d.seed, d.synthetic_count, d.size);
}

}  // namespace evonas
