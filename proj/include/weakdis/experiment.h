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

#ifndef WEAKDIS_EXPERIMENT_H_
#define WEAKDIS_EXPERIMENT_H_

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "weakdis/downstream.h"
#include "weakdis/factor_data.h"
#include "weakdis/metrics.h"
#include "weakdis/vae.h"
#include "weakdis/weak_objective.h"

namespace weakdis {

using Json = nlohmann::ordered_json;

inline constexpr int kRunRecordSchemaVersion = 1;
inline constexpr int kReportSchemaVersion = 1;

// Environment variable naming the root directory for runs and reports.
inline constexpr const char* kOutputRootEnv = "WEAKDIS_OUTPUT_ROOT";
std::filesystem::path output_root();  // env value, else "./weakdis_out"

enum class ModelVariant { kBetaVae, kGvae, kMlvae, kAdaGvae, kAdaMlvae };
std::string to_string(ModelVariant v);
ModelVariant parse_model_variant(const std::string& text);  // "ada_gvae", ...

struct DatasetSpec {
  std::string name = "toy_sprites";  // or "directory", "npz"
  int resolution = 32;               // toy_sprites only
  std::string path;                  // directory or archive
};

GroundTruthDataset load_dataset_spec(const DatasetSpec& spec);

struct EvaluationConfig {
  bool metrics = true;
  int selection_pairs = 2000;  // pairs for the weak reconstruction loss
  int table_size = 10000;      // representation rows for MIG, DCI, SAP, modularity
  MetricOptions metric;
  int downstream_test = 5000;
  std::vector<int> downstream_sizes = {10, 100, 1000, 10000};
  int shift_train = 10000;
  int shift_repetitions = 10;
  int fairness_train = 10000;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  ModelVariant variant = ModelVariant::kAdaGvae;
  // Empty selects the variant default: adaptive for the Ada variants,
  // complete annotations for GVAE and ML-VAE, none for the beta-VAE.
  std::string supervision;
  std::string sharing = "rnd";
  double beta = 1.0;
  EncoderDecoderConfig model;
  long steps = 10000;
  int batch_size = 64;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  int log_every = 100;
  long checkpoint_every = 0;  // 0 keeps only the final checkpoint
  EvaluationConfig evaluation;

  AggregationVariant aggregation_variant() const;
  SharingMode sharing_mode() const;
  bool trains_on_pairs() const { return variant != ModelVariant::kBetaVae; }
  // Variant, supervision and sharing; beta and seed excluded.
  std::string group() const;
  std::string run_id() const;  // group, beta and seed
  void validate() const;       // throws ConfigError
};

Json to_json(const ExperimentConfig& c);
// Missing keys keep their defaults; unknown keys are a ConfigError.
ExperimentConfig config_from_json(const Json& j);
ExperimentConfig load_config_file(const std::filesystem::path& path);  // TOML
Json toml_file_to_json(const std::filesystem::path& path);
// "key=value" with a dotted key such as "model.latent_dim=8".
void apply_override(ExperimentConfig& config, const std::string& assignment);

struct LossPoint {
  long step = 0;
  double loss = 0, recon1 = 0, recon2 = 0, kl1 = 0, kl2 = 0, shared_fraction = 0;
};

struct RunRecord {
  int schema_version = kRunRecordSchemaVersion;
  std::string run_id;
  ExperimentConfig config;
  std::string status = "ok";  // "ok" or "diverged"
  std::optional<long> diverged_step;
  std::vector<LossPoint> loss_trace;
  // Mean over the last tenth of the trace.
  std::optional<double> train_loss, train_elbo, train_reconstruction;
  std::optional<double> weak_reconstruction_loss;
  std::map<std::string, std::optional<double>> metrics;
  Json evaluations = Json::object();  // "downstream", "shift", "fairness"
  std::string checkpoint;             // relative to the run directory
  std::vector<std::string> warnings;

  std::uint64_t seed() const { return config.seed; }
  std::optional<double> metric(const std::string& name) const;
};

Json to_json(const RunRecord& r);
RunRecord record_from_json(const Json& j);
void save_record(const RunRecord& r, const std::filesystem::path& path);
RunRecord load_record(const std::filesystem::path& path);

struct TrainingHooks {
  std::function<void(long step, VaeModel<float>& model)> after_step;
  std::function<void(const LossPoint&)> on_log;
};

// Trains, checkpoints and scores the weak reconstruction loss; writes
// record.json and model.ckpt into `run_dir`. On a non-finite loss the partial
// record is saved with status "diverged" and DivergenceError is thrown.
RunRecord run_training(const ExperimentConfig& config, const std::filesystem::path& run_dir,
                       const TrainingHooks& hooks = {});

// Recomputes the weak reconstruction loss of a trained run from its
// checkpoint with the evaluation pair stream.
double recompute_weak_loss(const RunRecord& record, const std::filesystem::path& run_dir,
                           const GroundTruthDataset& dataset);

// Disentanglement metrics from the checkpoint, stored in record.metrics.
void evaluate_run(RunRecord& record, const std::filesystem::path& run_dir,
                  const GroundTruthDataset& dataset);
void downstream_run(RunRecord& record, const std::filesystem::path& run_dir,
                    const GroundTruthDataset& dataset);
void shift_run(RunRecord& record, const std::filesystem::path& run_dir,
               const GroundTruthDataset& dataset);
void fairness_run(RunRecord& record, const std::filesystem::path& run_dir,
                  const GroundTruthDataset& dataset);

// Grid over a base config. Each group is a partial config (same layout as
// to_json) applied on top of the base and may carry its own "betas" and
// "seeds" lists.
struct SweepConfig {
  ExperimentConfig base;
  std::vector<Json> groups;
  std::vector<double> betas;
  std::vector<std::uint64_t> seeds;

  // Order: group, beta, seed. Duplicate run ids are dropped.
  std::vector<ExperimentConfig> expand() const;
};

// TOML file with the experiment fields plus a [sweep] table holding "betas",
// "seeds" and an array of tables "groups".
SweepConfig load_sweep_file(const std::filesystem::path& path);
SweepConfig sweep_from_json(const Json& j);

struct SweepOptions {
  bool evaluate = true;
  bool reuse_existing = true;  // skip runs whose record matches the config
  std::function<void(const std::string&)> log;
};

// Each run lives in root / run_id. Diverged runs are kept with their status.
std::vector<RunRecord> run_sweep(const std::vector<ExperimentConfig>& configs,
                                 const std::filesystem::path& root,
                                 const SweepOptions& options = {});

std::vector<RunRecord> load_records(const std::filesystem::path& root);

struct SelectionResult {
  std::size_t index = 0;
  std::string run_id;
  double weak_reconstruction_loss = 0;
  long label_accesses = 0;  // reads of factor labels during selection
};

// Minimal weak reconstruction loss, ties to the lower seed then run id.
// Runs inside a LabelFreeScope. Throws on an empty list or when no record
// has a loss.
SelectionResult select_model(const std::vector<RunRecord>& records);

// One selected record per (group, seed) over the remaining fields (beta).
std::vector<std::size_t> select_per_group_and_seed(const std::vector<RunRecord>& records);

// Label-free selection recomputing every loss from checkpoints.
SelectionResult select_by_recomputation(const std::vector<RunRecord>& records,
                                        const std::filesystem::path& root,
                                        const GroundTruthDataset& dataset);

// Runs the candidate-map checks with `pairs` pairs per case and returns
// them as one JSON document.
Json identifiability_report(int pairs, std::uint64_t seed);

// Shape of an evaluation outcome in records and reports.
Json to_json(const EvalOutcome& outcome);

}  // namespace weakdis

#endif  // WEAKDIS_EXPERIMENT_H_
