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

#include "weakdis/experiment.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <tuple>

#include "weakdis/identifiability.h"
#include "weakdis/pair_sampler.h"

namespace weakdis {

namespace fs = std::filesystem;

namespace {

// Stream labels for make_rng; each consumer of a run seed draws from its own.
enum Stream : std::uint64_t {
  kDataStream = 1,
  kNoiseStream = 2,
  kSelectionStream = 3,
  kMetricStream = 10,
  kDownstreamStream = 11,
  kShiftStream = 12,
  kFairnessStream = 13,
};

Json optional_to_json(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? Json(*v) : Json(nullptr);
}

std::optional<double> optional_from_json(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

GroundTruthDataset load_dataset_spec(const DatasetSpec& spec) {
  if (spec.name == "toy_sprites") return make_toy_sprites(spec.resolution);
  if (spec.name == "directory") return load_dataset(spec.path);
  if (spec.name == "npz") return import_npz_archive(spec.path);
  throw ConfigError("unknown dataset '" + spec.name + "'");
}

std::optional<double> RunRecord::metric(const std::string& name) const {
  const std::string key = name == "dci" ? "dci_disentanglement" : name;
  auto it = metrics.find(key);
  if (it == metrics.end()) return std::nullopt;
  return it->second;
}

Json to_json(const RunRecord& r) {
  Json trace = Json::array();
  for (const LossPoint& p : r.loss_trace) {
    trace.push_back({{"step", p.step},
                     {"loss", p.loss},
                     {"recon1", p.recon1},
                     {"recon2", p.recon2},
                     {"kl1", p.kl1},
                     {"kl2", p.kl2},
                     {"shared_fraction", p.shared_fraction}});
  }
  Json metrics = Json::object();
  for (const auto& [name, value] : r.metrics) metrics[name] = optional_to_json(value);
  return Json{{"schema_version", r.schema_version},
              {"run_id", r.run_id},
              {"seed", r.config.seed},
              {"status", r.status},
              {"diverged_step", r.diverged_step ? Json(*r.diverged_step) : Json(nullptr)},
              {"config", to_json(r.config)},
              {"loss_trace", trace},
              {"train_loss", optional_to_json(r.train_loss)},
              {"train_elbo", optional_to_json(r.train_elbo)},
              {"train_reconstruction", optional_to_json(r.train_reconstruction)},
              {"weak_reconstruction_loss", optional_to_json(r.weak_reconstruction_loss)},
              {"metrics", metrics},
              {"evaluations", r.evaluations},
              {"checkpoint", r.checkpoint},
              {"warnings", r.warnings}};
}

RunRecord record_from_json(const Json& j) {
  RunRecord r;
  try {
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != kRunRecordSchemaVersion) {
      throw ConfigError("unsupported run record schema version " +
                        std::to_string(r.schema_version));
    }
    r.run_id = j.at("run_id").get<std::string>();
    r.config = config_from_json(j.at("config"));
    r.status = j.at("status").get<std::string>();
    if (!j.at("diverged_step").is_null()) r.diverged_step = j.at("diverged_step").get<long>();
    for (const Json& p : j.at("loss_trace")) {
      r.loss_trace.push_back({p.at("step").get<long>(), p.at("loss").get<double>(),
                              p.at("recon1").get<double>(), p.at("recon2").get<double>(),
                              p.at("kl1").get<double>(), p.at("kl2").get<double>(),
                              p.at("shared_fraction").get<double>()});
    }
    r.train_loss = optional_from_json(j, "train_loss");
    r.train_elbo = optional_from_json(j, "train_elbo");
    r.train_reconstruction = optional_from_json(j, "train_reconstruction");
    r.weak_reconstruction_loss = optional_from_json(j, "weak_reconstruction_loss");
    for (const auto& [name, value] : j.at("metrics").items()) {
      r.metrics[name] = value.is_null() ? std::nullopt : std::optional<double>(value.get<double>());
    }
    r.evaluations = j.at("evaluations");
    r.checkpoint = j.at("checkpoint").get<std::string>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed run record: ") + e.what());
  }
  return r;
}

void save_record(const RunRecord& r, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << to_json(r).dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

RunRecord load_record(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read run record " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return record_from_json(j);
}

namespace {

void check_against_dataset(const ExperimentConfig& config, const GroundTruthDataset& dataset) {
  const int d = dataset.space().num_factors();
  const SharingMode mode = config.sharing_mode();
  if (d < 2) throw ConfigError("paired training needs at least two factors");
  if (!mode.is_random() && (mode.k() < 1 || mode.k() > d - 1)) {
    throw ConfigError("sharing k must lie in [1, " + std::to_string(d - 1) + "]");
  }
  if (config.aggregation_variant().supervision.needs_annotations() &&
      config.model.latent_dim < d) {
    throw ConfigError("annotated supervision needs latent_dim >= number of factors");
  }
}

void summarize_trace(RunRecord& r) {
  if (r.loss_trace.empty()) return;
  const std::size_t n = r.loss_trace.size();
  const std::size_t tail = std::max<std::size_t>(1, n / 10);
  double loss = 0, elbo = 0, recon = 0;
  for (std::size_t i = n - tail; i < n; ++i) {
    const LossPoint& p = r.loss_trace[i];
    loss += p.loss;
    elbo += p.recon1 + p.recon2 - p.kl1 - p.kl2;
    recon += -(p.recon1 + p.recon2);
  }
  r.train_loss = loss / tail;
  r.train_elbo = elbo / tail;
  r.train_reconstruction = recon / tail;
}

double selection_loss(const VaeModel<float>& model, const ExperimentConfig& config,
                      const GroundTruthDataset& dataset) {
  Rng rng = make_rng(config.seed, kSelectionStream);
  return weak_reconstruction_loss(model, dataset, config.sharing_mode(),
                                  config.aggregation_variant(),
                                  config.evaluation.selection_pairs, rng);
}

}  // namespace

RunRecord run_training(const ExperimentConfig& config, const fs::path& run_dir,
                       const TrainingHooks& hooks) {
  config.validate();
  const GroundTruthDataset dataset = load_dataset_spec(config.dataset);
  check_against_dataset(config, dataset);
  fs::create_directories(run_dir);

  VaeModel<float> model(config.model, dataset.image_shape(), config.seed);
  AdamOptions adam_options;
  adam_options.learning_rate = config.learning_rate;
  Adam<float> adam(model.params(), adam_options);
  ParameterSet<float> grads = model.params().zeros_like();
  Rng data = make_rng(config.seed, kDataStream);
  Rng noise = make_rng(config.seed, kNoiseStream);
  const SharingMode sharing = config.sharing_mode();
  const AggregationVariant variant = config.aggregation_variant();
  const bool annotated = variant.supervision.needs_annotations();

  RunRecord record;
  record.run_id = config.run_id();
  record.config = config;
  record.checkpoint = "model.ckpt";
  const fs::path record_path = run_dir / "record.json";

  LossPoint window;
  int window_steps = 0;
  for (long step = 1; step <= config.steps; ++step) {
    grads.set_zero();
    WeakLossTerms t;
    if (config.trains_on_pairs()) {
      const PairBatch batch = make_pair_batch(dataset, sharing, config.batch_size, data, annotated);
      t = weak_elbo(model, batch, config.beta, variant, noise, &grads);
    } else {
      const auto factors = sample_factors(dataset.space(), config.batch_size, data);
      const MatrixF x = dataset.images<float>(factors);
      const LossTerms s = beta_vae_loss(model, x, config.beta, noise, &grads);
      t.loss = s.loss;
      t.recon1 = s.recon;
      t.kl1 = s.kl;
    }
    if (!std::isfinite(t.loss) || !grads.all_finite()) {
      record.status = "diverged";
      record.diverged_step = step;
      record.checkpoint.clear();
      summarize_trace(record);
      save_record(record, record_path);
      throw DivergenceError("non-finite loss at step " + std::to_string(step), step);
    }
    adam.step(model.params(), grads);
    if (hooks.after_step) hooks.after_step(step, model);

    window.loss += t.loss;
    window.recon1 += t.recon1;
    window.recon2 += t.recon2;
    window.kl1 += t.kl1;
    window.kl2 += t.kl2;
    window.shared_fraction += t.shared_fraction;
    ++window_steps;
    if (step % config.log_every == 0 || step == config.steps) {
      const double n = window_steps;
      LossPoint p{step,         window.loss / n, window.recon1 / n,
                  window.recon2 / n, window.kl1 / n, window.kl2 / n,
                  window.shared_fraction / n};
      record.loss_trace.push_back(p);
      if (hooks.on_log) hooks.on_log(p);
      window = LossPoint{};
      window_steps = 0;
    }
    if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0 &&
        step < config.steps) {
      save_checkpoint(model, step, run_dir / ("model-step" + std::to_string(step) + ".ckpt"));
    }
  }
  save_checkpoint(model, config.steps, run_dir / record.checkpoint);
  summarize_trace(record);
  const double weak = selection_loss(model, config, dataset);
  if (!std::isfinite(weak)) {
    record.status = "diverged";
    record.diverged_step = config.steps;
    save_record(record, record_path);
    throw DivergenceError("non-finite weak reconstruction loss", config.steps);
  }
  record.weak_reconstruction_loss = weak;
  save_record(record, record_path);
  return record;
}

namespace {

VaeModel<float> load_run_model(const RunRecord& record, const fs::path& run_dir) {
  if (record.status != "ok" || record.checkpoint.empty()) {
    throw ConfigError("run " + record.run_id + " has no usable checkpoint");
  }
  return load_checkpoint(run_dir / record.checkpoint);
}

}  // namespace

double recompute_weak_loss(const RunRecord& record, const fs::path& run_dir,
                           const GroundTruthDataset& dataset) {
  const VaeModel<float> model = load_run_model(record, run_dir);
  return selection_loss(model, record.config, dataset);
}

void evaluate_run(RunRecord& record, const fs::path& run_dir, const GroundTruthDataset& dataset) {
  const VaeModel<float> model = load_run_model(record, run_dir);
  const Representer rep = model_representer(model, dataset);
  Rng rng = make_rng(record.config.seed, kMetricStream);
  const MetricScores scores = evaluate_all_metrics(
      rep, dataset.space(), record.config.evaluation.table_size, record.config.evaluation.metric,
      rng);
  for (const std::string& name : metric_names()) {
    const double v = metric_value(scores, name);
    record.metrics[name] = std::isfinite(v) ? std::optional<double>(v) : std::nullopt;
  }
  for (const std::string& w : scores.warnings) record.warnings.push_back("metrics: " + w);
}

Json to_json(const EvalOutcome& o) {
  Json acc = Json::array(), unfair = Json::array(), shifts = Json::array();
  for (const auto& c : o.accuracies) {
    acc.push_back({{"factor", c.factor},
                   {"train_size", c.train_size},
                   {"classifier", to_string(c.classifier)},
                   {"accuracy", c.accuracy}});
  }
  for (const auto& c : o.unfairness) {
    unfair.push_back({{"target", c.target}, {"sensitive", c.sensitive}, {"unfairness", c.unfairness}});
  }
  for (const auto& c : o.shifts) {
    shifts.push_back({{"target", c.target},
                      {"intervened", c.intervened},
                      {"train_value", c.train_value},
                      {"strong", c.strong},
                      {"weak", c.weak},
                      {"prior", c.prior}});
  }
  Json aggregates = Json::object();
  for (const auto& [k, v] : o.aggregates) aggregates[k] = std::isfinite(v) ? Json(v) : Json(nullptr);
  return Json{{"task", o.task},
              {"accuracies", acc},
              {"unfairness", unfair},
              {"shifts", shifts},
              {"aggregates", aggregates},
              {"warnings", o.warnings}};
}

void downstream_run(RunRecord& record, const fs::path& run_dir, const GroundTruthDataset& dataset) {
  const VaeModel<float> model = load_run_model(record, run_dir);
  const EvaluationConfig& e = record.config.evaluation;
  DownstreamOptions options;
  options.train_sizes = e.downstream_sizes;
  options.test_size = e.downstream_test;
  const int largest = *std::max_element(e.downstream_sizes.begin(), e.downstream_sizes.end());
  Rng rng = make_rng(record.config.seed, kDownstreamStream);
  const RepresentationTable table = compute_representation(
      model_representer(model, dataset), dataset.space(), largest + e.downstream_test, rng);
  record.evaluations["downstream"] = to_json(downstream_accuracy(table, options));
}

void shift_run(RunRecord& record, const fs::path& run_dir, const GroundTruthDataset& dataset) {
  const VaeModel<float> model = load_run_model(record, run_dir);
  const EvaluationConfig& e = record.config.evaluation;
  ShiftOptions options;
  options.train_size = e.shift_train;
  options.test_size = e.downstream_test;
  options.repetitions = e.shift_repetitions;
  Rng rng = make_rng(record.config.seed, kShiftStream);
  record.evaluations["shift"] =
      to_json(covariate_shift_eval(model_representer(model, dataset), dataset.space(), options, rng));
}

void fairness_run(RunRecord& record, const fs::path& run_dir, const GroundTruthDataset& dataset) {
  const VaeModel<float> model = load_run_model(record, run_dir);
  const EvaluationConfig& e = record.config.evaluation;
  FairnessOptions options;
  options.train_size = e.fairness_train;
  options.test_size = e.downstream_test;
  Rng rng = make_rng(record.config.seed, kFairnessStream);
  const RepresentationTable table =
      compute_representation(model_representer(model, dataset), dataset.space(),
                             options.train_size + options.test_size, rng);
  record.evaluations["fairness"] = to_json(unfairness_matrix(table, options));
}

std::vector<RunRecord> run_sweep(const std::vector<ExperimentConfig>& configs, const fs::path& root,
                                 const SweepOptions& options) {
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };
  std::map<std::string, GroundTruthDataset> datasets;
  auto dataset_for = [&](const ExperimentConfig& c) -> const GroundTruthDataset& {
    const std::string key = to_json(c)["dataset"].dump();
    auto it = datasets.find(key);
    if (it == datasets.end()) it = datasets.emplace(key, load_dataset_spec(c.dataset)).first;
    return it->second;
  };
  for (const auto& c : configs) c.validate();
  std::vector<RunRecord> out;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const ExperimentConfig& c = configs[i];
    const fs::path dir = root / c.run_id();
    const fs::path record_path = dir / "record.json";
    std::optional<RunRecord> record;
    if (options.reuse_existing && fs::exists(record_path)) {
      try {
        RunRecord existing = load_record(record_path);
        if (to_json(existing.config) == to_json(c)) record = std::move(existing);
      } catch (const ConfigError&) {
        // Unreadable or stale record: train again.
      }
    }
    if (record) {
      log("[" + std::to_string(i + 1) + "/" + std::to_string(configs.size()) + "] reuse " +
          c.run_id());
    } else {
      log("[" + std::to_string(i + 1) + "/" + std::to_string(configs.size()) + "] train " +
          c.run_id());
      try {
        record = run_training(c, dir);
      } catch (const DivergenceError& e) {
        log("  diverged: " + std::string(e.what()));
        record = load_record(record_path);
      }
    }
    if (options.evaluate && c.evaluation.metrics && record->status == "ok" &&
        record->metrics.empty()) {
      evaluate_run(*record, dir, dataset_for(c));
      save_record(*record, record_path);
    }
    out.push_back(std::move(*record));
  }
  return out;
}

std::vector<RunRecord> load_records(const fs::path& root) {
  if (!fs::is_directory(root)) throw ConfigError("no run directory at " + root.string());
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "record.json")) {
      paths.push_back(entry.path() / "record.json");
    }
  }
  std::sort(paths.begin(), paths.end());
  std::vector<RunRecord> out;
  for (const auto& p : paths) out.push_back(load_record(p));
  return out;
}

namespace {

bool better(double loss, const RunRecord& r, double best_loss, const RunRecord& best) {
  return std::tie(loss, r.config.seed, r.run_id) <
         std::tie(best_loss, best.config.seed, best.run_id);
}

SelectionResult select_with(const std::vector<RunRecord>& records,
                            const std::function<std::optional<double>(std::size_t)>& loss_of) {
  if (records.empty()) throw std::invalid_argument("model selection needs at least one record");
  LabelFreeScope scope;
  std::optional<std::size_t> best;
  double best_loss = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::optional<double> loss = loss_of(i);
    if (!loss || !std::isfinite(*loss)) continue;
    if (!best || better(*loss, records[i], best_loss, records[*best])) {
      best = i;
      best_loss = *loss;
    }
  }
  if (!best) throw std::invalid_argument("no record has a weak reconstruction loss");
  return {*best, records[*best].run_id, best_loss, scope.violations()};
}

}  // namespace

SelectionResult select_model(const std::vector<RunRecord>& records) {
  return select_with(records, [&](std::size_t i) {
    return records[i].status == "ok" ? records[i].weak_reconstruction_loss : std::nullopt;
  });
}

SelectionResult select_by_recomputation(const std::vector<RunRecord>& records, const fs::path& root,
                                        const GroundTruthDataset& dataset) {
  return select_with(records, [&](std::size_t i) -> std::optional<double> {
    if (records[i].status != "ok") return std::nullopt;
    return recompute_weak_loss(records[i], root / records[i].run_id, dataset);
  });
}

std::vector<std::size_t> select_per_group_and_seed(const std::vector<RunRecord>& records) {
  std::map<std::pair<std::string, std::uint64_t>, std::size_t> best;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const RunRecord& r = records[i];
    if (r.status != "ok" || !r.weak_reconstruction_loss) continue;
    const auto key = std::make_pair(r.config.group(), r.config.seed);
    auto it = best.find(key);
    if (it == best.end() ||
        better(*r.weak_reconstruction_loss, r, *records[it->second].weak_reconstruction_loss,
               records[it->second])) {
      best[key] = i;
    }
  }
  std::vector<std::size_t> out;
  for (const auto& [key, index] : best) out.push_back(index);
  std::sort(out.begin(), out.end());
  return out;
}

Json identifiability_report(int pairs, std::uint64_t seed) {
  if (pairs < 1) throw ConfigError("pairs must be positive");
  Rng rng = make_rng(seed);
  Json cases = Json::array();
  auto add = [&](const std::string& name, const CandidateMap& map, int k,
                 const std::vector<ContinuousPair>& sample, const std::vector<VectorD>& points) {
    const ConstraintReport c = residual_constraint_check(map, sample, k);
    const JacobianReport j = jacobian_structure(map, points);
    cases.push_back({{"case", name},
                     {"map", to_string(map.kind())},
                     {"d", map.dim()},
                     {"k", k},
                     {"pass_fraction_shared", c.pass_fraction_shared},
                     {"violation_fraction_distinct", c.violation_fraction_distinct},
                     {"t_consistent", c.t_consistent},
                     {"evaluated", c.evaluated},
                     {"degenerate", c.degenerate},
                     {"jacobian_offdiag_max", j.offdiag_max},
                     {"diagonal_up_to_permutation", j.is_diagonal_up_to_permutation}});
  };
  auto interior = [&](int d, int n) {
    std::uniform_real_distribution<double> u(0.01, 0.99);
    std::vector<VectorD> pts(n, VectorD(d));
    for (auto& z : pts) {
      for (int i = 0; i < d; ++i) z[i] = u(rng);
    }
    return pts;
  };
  VectorD centre = VectorD::Constant(2, 0.5);
  for (int d : {2, 3, 4}) {
    for (int k = 1; k < d; ++k) {
      const CandidateMap m = make_candidate_map(MapKind::kPermutationMonotone, d, rng);
      add("permutation_monotone", m, k, continuous_pair_sample(d, k, pairs, rng), interior(d, 100));
    }
  }
  add("rotation_45", rotation_2d(M_PI / 4), 1, continuous_pair_sample(2, 1, pairs, rng), {centre});
  for (int d : {2, 3}) {
    for (int k = 1; k < d; ++k) {
      const CandidateMap m = make_candidate_map(MapKind::kRotation, d, rng);
      add("dense_rotation", m, k, continuous_pair_sample(d, k, pairs, rng), interior(d, 100));
    }
  }
  MatrixD r(2, 2);
  r << std::cos(M_PI / 4), -std::sin(M_PI / 4), std::sin(M_PI / 4), std::cos(M_PI / 4);
  const CandidateMap witness(3, {LogitRotation{{1, 2}, r}});
  const std::vector<int> fixed = {0};
  add("single_s_witness", witness, 2, continuous_pair_sample(3, 2, pairs, rng, &fixed),
      interior(3, 100));
  add("witness_under_uniform_s", witness, 2, continuous_pair_sample(3, 2, pairs, rng),
      interior(3, 100));
  return Json{{"schema_version", kReportSchemaVersion},
              {"seed", seed},
              {"pairs", pairs},
              {"tolerance", 1e-7},
              {"cases", cases}};
}

}  // namespace weakdis
