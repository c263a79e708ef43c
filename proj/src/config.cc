/*
 * Copyright 2026 The weakdis Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include "toml.hpp"
#include "weakdis/experiment.h"

namespace weakdis {

namespace {

void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a table");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where);
  }
}

std::string format_number(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

Json toml_to_json(const toml::node& node) {
  Json out;
  node.visit([&](auto&& el) {
    using T = std::decay_t<decltype(el)>;
    if constexpr (toml::is_table<T>) {
      out = Json::object();
      for (auto&& [k, v] : el) out[std::string(k.str())] = toml_to_json(v);
    } else if constexpr (toml::is_array<T>) {
      out = Json::array();
      for (auto&& v : el) out.push_back(toml_to_json(v));
    } else if constexpr (toml::is_string<T>) {
      out = el.get();
    } else if constexpr (toml::is_integer<T>) {
      out = el.get();
    } else if constexpr (toml::is_floating_point<T>) {
      out = el.get();
    } else if constexpr (toml::is_boolean<T>) {
      out = el.get();
    } else {
      throw ConfigError("unsupported TOML value (dates and times are not used)");
    }
  });
  return out;
}

}  // namespace

std::filesystem::path output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("weakdis_out");
}

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::kBetaVae: return "beta_vae";
    case ModelVariant::kGvae: return "gvae";
    case ModelVariant::kMlvae: return "mlvae";
    case ModelVariant::kAdaGvae: return "ada_gvae";
    case ModelVariant::kAdaMlvae: return "ada_mlvae";
  }
  return "unknown";
}

ModelVariant parse_model_variant(const std::string& text) {
  for (ModelVariant v : {ModelVariant::kBetaVae, ModelVariant::kGvae, ModelVariant::kMlvae,
                         ModelVariant::kAdaGvae, ModelVariant::kAdaMlvae}) {
    if (to_string(v) == text) return v;
  }
  throw ConfigError("unknown model variant '" + text + "'");
}

AggregationVariant ExperimentConfig::aggregation_variant() const {
  AggregationVariant out;
  out.aggregation = variant == ModelVariant::kMlvae || variant == ModelVariant::kAdaMlvae
                        ? Aggregation::kMlvaeProduct
                        : Aggregation::kGvaeAverage;
  if (!supervision.empty()) {
    out.supervision = Supervision::parse(supervision);
  } else if (variant == ModelVariant::kBetaVae) {
    out.supervision = Supervision::none();
  } else if (variant == ModelVariant::kGvae || variant == ModelVariant::kMlvae) {
    out.supervision = Supervision::annotated();
  } else {
    out.supervision = Supervision::adaptive();
  }
  return out;
}

SharingMode ExperimentConfig::sharing_mode() const { return SharingMode::parse(sharing); }

std::string ExperimentConfig::group() const {
  if (variant == ModelVariant::kBetaVae) return "beta_vae";
  std::string sup = aggregation_variant().supervision.to_string();
  sup.erase(std::remove(sup.begin(), sup.end(), '='), sup.end());
  return to_string(variant) + "-" + sup + "-k" + sharing_mode().to_string();
}

std::string ExperimentConfig::run_id() const {
  return group() + "-b" + format_number(beta) + "-s" + std::to_string(seed);
}

void ExperimentConfig::validate() const {
  if (dataset.name == "toy_sprites") {
    if (dataset.resolution < 32 || dataset.resolution % 32 != 0) {
      throw ConfigError("toy_sprites resolution must be a positive multiple of 32");
    }
  } else if (dataset.name == "directory" || dataset.name == "npz") {
    if (dataset.path.empty()) throw ConfigError("dataset.path is required for " + dataset.name);
  } else {
    throw ConfigError("unknown dataset '" + dataset.name + "'");
  }
  AggregationVariant v;
  try {
    v = aggregation_variant();
    sharing_mode();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto kind = v.supervision.kind();
  switch (variant) {
    case ModelVariant::kBetaVae:
      if (kind != Supervision::Kind::kNone) throw ConfigError("beta_vae takes no supervision");
      break;
    case ModelVariant::kAdaGvae:
    case ModelVariant::kAdaMlvae:
      if (kind != Supervision::Kind::kAdaptive) {
        throw ConfigError(to_string(variant) + " uses adaptive supervision only");
      }
      break;
    default:
      if (kind == Supervision::Kind::kAdaptive || kind == Supervision::Kind::kNone) {
        throw ConfigError(to_string(variant) + " needs known-k or annotated supervision");
      }
  }
  if (!(beta > 0) || !std::isfinite(beta)) throw ConfigError("beta must be positive");
  if (model.latent_dim < 1 || model.mlp_hidden < 1) throw ConfigError("model sizes must be positive");
  if (v.supervision.kind() == Supervision::Kind::kKnownK && v.supervision.k() > model.latent_dim - 1) {
    throw ConfigError("known k must be below the latent dimension");
  }
  if (steps < 1 || batch_size < 1 || log_every < 1 || checkpoint_every < 0) {
    throw ConfigError("steps, batch_size and log_every must be positive");
  }
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive");
  }
  const EvaluationConfig& e = evaluation;
  if (e.selection_pairs < 1 || e.table_size < 2 || e.downstream_test < 1 || e.shift_train < 1 ||
      e.shift_repetitions < 1 || e.fairness_train < 1 || e.downstream_sizes.empty()) {
    throw ConfigError("evaluation sizes must be positive");
  }
  for (int s : e.downstream_sizes) {
    if (s < 1) throw ConfigError("downstream sizes must be positive");
  }
  if (e.metric.bins < 2 || !(e.metric.train_fraction > 0 && e.metric.train_fraction < 1) ||
      e.metric.batch_size < 1 || e.metric.train_points < 1 || e.metric.test_points < 1 ||
      e.metric.variance_samples < 2) {
    throw ConfigError("invalid metric options");
  }
}

Json to_json(const ExperimentConfig& c) {
  const MetricOptions& m = c.evaluation.metric;
  return Json{
      {"dataset", {{"name", c.dataset.name},
                   {"resolution", c.dataset.resolution},
                   {"path", c.dataset.path}}},
      {"variant", to_string(c.variant)},
      {"supervision", c.supervision},
      {"sharing", c.sharing},
      {"beta", c.beta},
      {"seed", c.seed},
      {"model", {{"architecture", to_string(c.model.architecture)},
                 {"latent_dim", c.model.latent_dim},
                 {"mlp_hidden", c.model.mlp_hidden}}},
      {"training", {{"steps", c.steps},
                    {"batch_size", c.batch_size},
                    {"learning_rate", c.learning_rate},
                    {"log_every", c.log_every},
                    {"checkpoint_every", c.checkpoint_every}}},
      {"evaluation",
       {{"metrics", c.evaluation.metrics},
        {"selection_pairs", c.evaluation.selection_pairs},
        {"table_size", c.evaluation.table_size},
        {"bins", m.bins},
        {"binning", m.binning == Binning::kEqualWidth ? "equal_width" : "equal_frequency"},
        {"train_fraction", m.train_fraction},
        {"batch_size", m.batch_size},
        {"train_points", m.train_points},
        {"test_points", m.test_points},
        {"variance_samples", m.variance_samples},
        {"prune_std", m.prune_std},
        {"downstream_test", c.evaluation.downstream_test},
        {"downstream_sizes", c.evaluation.downstream_sizes},
        {"shift_train", c.evaluation.shift_train},
        {"shift_repetitions", c.evaluation.shift_repetitions},
        {"fairness_train", c.evaluation.fairness_train}}}};
}

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  check_keys(j, {"dataset", "variant", "supervision", "sharing", "beta", "seed", "model",
                 "training", "evaluation"},
             "config");
  if (j.contains("dataset")) {
    const Json& d = j.at("dataset");
    check_keys(d, {"name", "resolution", "path"}, "dataset");
    read(d, "name", c.dataset.name, "dataset");
    read(d, "resolution", c.dataset.resolution, "dataset");
    read(d, "path", c.dataset.path, "dataset");
  }
  std::string variant = to_string(c.variant);
  read(j, "variant", variant, "config");
  c.variant = parse_model_variant(variant);
  read(j, "supervision", c.supervision, "config");
  read(j, "sharing", c.sharing, "config");
  read(j, "beta", c.beta, "config");
  read(j, "seed", c.seed, "config");
  if (j.contains("model")) {
    const Json& m = j.at("model");
    check_keys(m, {"architecture", "latent_dim", "mlp_hidden"}, "model");
    std::string arch = to_string(c.model.architecture);
    read(m, "architecture", arch, "model");
    try {
      c.model.architecture = parse_architecture(arch);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    read(m, "latent_dim", c.model.latent_dim, "model");
    read(m, "mlp_hidden", c.model.mlp_hidden, "model");
  }
  if (j.contains("training")) {
    const Json& t = j.at("training");
    check_keys(t, {"steps", "batch_size", "learning_rate", "log_every", "checkpoint_every"},
               "training");
    read(t, "steps", c.steps, "training");
    read(t, "batch_size", c.batch_size, "training");
    read(t, "learning_rate", c.learning_rate, "training");
    read(t, "log_every", c.log_every, "training");
    read(t, "checkpoint_every", c.checkpoint_every, "training");
  }
  if (j.contains("evaluation")) {
    const Json& e = j.at("evaluation");
    check_keys(e, {"metrics", "selection_pairs", "table_size", "bins", "binning",
                   "train_fraction", "batch_size", "train_points", "test_points",
                   "variance_samples", "prune_std", "downstream_test", "downstream_sizes",
                   "shift_train", "shift_repetitions", "fairness_train"},
               "evaluation");
    EvaluationConfig& ev = c.evaluation;
    read(e, "metrics", ev.metrics, "evaluation");
    read(e, "selection_pairs", ev.selection_pairs, "evaluation");
    read(e, "table_size", ev.table_size, "evaluation");
    read(e, "bins", ev.metric.bins, "evaluation");
    std::string binning = "equal_width";
    read(e, "binning", binning, "evaluation");
    if (binning == "equal_width") {
      ev.metric.binning = Binning::kEqualWidth;
    } else if (binning == "equal_frequency") {
      ev.metric.binning = Binning::kEqualFrequency;
    } else {
      throw ConfigError("unknown binning '" + binning + "'");
    }
    read(e, "train_fraction", ev.metric.train_fraction, "evaluation");
    read(e, "batch_size", ev.metric.batch_size, "evaluation");
    read(e, "train_points", ev.metric.train_points, "evaluation");
    read(e, "test_points", ev.metric.test_points, "evaluation");
    read(e, "variance_samples", ev.metric.variance_samples, "evaluation");
    read(e, "prune_std", ev.metric.prune_std, "evaluation");
    read(e, "downstream_test", ev.downstream_test, "evaluation");
    read(e, "downstream_sizes", ev.downstream_sizes, "evaluation");
    read(e, "shift_train", ev.shift_train, "evaluation");
    read(e, "shift_repetitions", ev.shift_repetitions, "evaluation");
    read(e, "fairness_train", ev.fairness_train, "evaluation");
  }
  c.validate();
  return c;
}

Json toml_file_to_json(const std::filesystem::path& path) {
  try {
    return toml_to_json(toml::parse_file(path.string()));
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << path.string() << ": " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(msg.str());
  }
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("no such config file: " + path.string());
  return config_from_json(toml_file_to_json(path));
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key=value: '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  Json j = to_json(config);
  Json* node = &j;
  std::stringstream parts(key);
  std::string part;
  while (std::getline(parts, part, '.')) {
    if (!node->is_object() || !node->contains(part)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    node = &(*node)[part];
  }
  if (node->is_object()) throw ConfigError("'" + key + "' is a table, not a value");
  if (node->is_string()) {
    *node = text;
  } else {
    try {
      *node = Json::parse(text);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("cannot parse value '" + text + "' for '" + key + "'");
    }
  }
  config = config_from_json(j);
}

namespace {

void merge_into(Json& target, const Json& patch) {
  for (const auto& [key, value] : patch.items()) {
    if (value.is_object() && target.contains(key) && target[key].is_object()) {
      merge_into(target[key], value);
    } else {
      target[key] = value;
    }
  }
}

template <typename T>
std::vector<T> read_list(const Json& j, const char* key, const std::vector<T>& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<std::vector<T>>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("'") + key + "' must be a list");
  }
}

}  // namespace

SweepConfig sweep_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("sweep file must be a table");
  Json base = j;
  Json sweep = Json::object();
  if (base.contains("sweep")) {
    sweep = base.at("sweep");
    base.erase("sweep");
  }
  check_keys(sweep, {"betas", "seeds", "groups"}, "sweep");
  SweepConfig out;
  out.base = config_from_json(base);
  out.betas = read_list<double>(sweep, "betas", {out.base.beta});
  out.seeds = read_list<std::uint64_t>(sweep, "seeds", {out.base.seed});
  if (sweep.contains("groups")) {
    if (!sweep.at("groups").is_array()) throw ConfigError("sweep.groups must be an array");
    for (const Json& g : sweep.at("groups")) {
      if (!g.is_object()) throw ConfigError("each sweep group must be a table");
      out.groups.push_back(g);
    }
  }
  out.expand();  // validates every member
  return out;
}

SweepConfig load_sweep_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("no such sweep file: " + path.string());
  return sweep_from_json(toml_file_to_json(path));
}

std::vector<ExperimentConfig> SweepConfig::expand() const {
  std::vector<Json> groups_or_base = groups;
  if (groups_or_base.empty()) groups_or_base.push_back(Json::object());
  std::vector<ExperimentConfig> out;
  std::set<std::string> seen;
  for (const Json& g : groups_or_base) {
    Json patch = g;
    const auto b = read_list<double>(patch, "betas", betas);
    const auto s = read_list<std::uint64_t>(patch, "seeds", seeds);
    patch.erase("betas");
    patch.erase("seeds");
    Json merged = to_json(base);
    merge_into(merged, patch);
    const ExperimentConfig group_config = config_from_json(merged);
    for (double beta : b) {
      for (std::uint64_t seed : s) {
        ExperimentConfig c = group_config;
        c.beta = beta;
        c.seed = seed;
        c.validate();
        if (seen.insert(c.run_id()).second) out.push_back(c);
      }
    }
  }
  return out;
}

}  // namespace weakdis
