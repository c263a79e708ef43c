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

#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "gtest/gtest.h"
#include "json_schema.h"
#include "weakdis/report.h"

namespace weakdis {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p =
      fs::temp_directory_path() / ("weakdis_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig micro_config() {
  ExperimentConfig c;
  c.model.latent_dim = 6;
  c.model.mlp_hidden = 24;
  c.steps = 200;
  c.batch_size = 16;
  c.learning_rate = 1e-3;
  c.evaluation.selection_pairs = 64;
  c.evaluation.table_size = 400;
  c.evaluation.metric.train_points = 200;
  c.evaluation.metric.test_points = 100;
  c.evaluation.metric.variance_samples = 400;
  c.evaluation.metric.batch_size = 16;
  return c;
}

TEST(Config, DefaultsValidateAndRoundTrip) {
  const ExperimentConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(to_json(config_from_json(to_json(c))), to_json(c));
  EXPECT_EQ(c.run_id(), "ada_gvae-adaptive-krnd-b1-s0");
  ExperimentConfig b;
  b.variant = ModelVariant::kBetaVae;
  b.beta = 4;
  EXPECT_EQ(b.run_id(), "beta_vae-b4-s0");
  ExperimentConfig g;
  g.variant = ModelVariant::kGvae;
  g.supervision = "annotated-one";
  g.sharing = "1";
  EXPECT_EQ(g.group(), "gvae-annotated-one-k1");
  EXPECT_TRUE(g.aggregation_variant().supervision.incomplete());
}

TEST(Config, RejectsInvalidSettings) {
  Json j = to_json(ExperimentConfig{});
  j["colour"] = "red";
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = to_json(ExperimentConfig{});
  j["training"]["steps"] = "many";
  EXPECT_THROW(config_from_json(j), ConfigError);
  ExperimentConfig c;
  EXPECT_THROW(apply_override(c, "beta=-1"), ConfigError);
  EXPECT_THROW(apply_override(c, "variant=vqvae"), ConfigError);
  EXPECT_THROW(apply_override(c, "supervision=annotated"), ConfigError);  // Ada is adaptive
  EXPECT_THROW(apply_override(c, "model.depth=3"), ConfigError);
  EXPECT_THROW(apply_override(c, "sharing=zero"), ConfigError);
  EXPECT_THROW(apply_override(c, "no_equals"), ConfigError);
  EXPECT_THROW(apply_override(c, "model=3"), ConfigError);
  ExperimentConfig b;
  EXPECT_THROW(apply_override(b, "dataset.name=mnist"), ConfigError);
}

TEST(Config, OverridesReachNestedFields) {
  ExperimentConfig c;
  apply_override(c, "model.latent_dim=8");
  apply_override(c, "training.learning_rate=0.0005");
  apply_override(c, "variant=gvae");
  apply_override(c, "supervision=k=2");
  apply_override(c, "evaluation.downstream_sizes=[10,100]");
  EXPECT_EQ(c.model.latent_dim, 8);
  EXPECT_DOUBLE_EQ(c.learning_rate, 5e-4);
  EXPECT_EQ(c.variant, ModelVariant::kGvae);
  EXPECT_EQ(c.aggregation_variant().supervision, Supervision::known_k(2));
  EXPECT_EQ(c.evaluation.downstream_sizes, (std::vector<int>{10, 100}));
}

TEST(Config, LoadsTomlFiles) {
  const fs::path dir = scratch("toml");
  std::ofstream(dir / "run.toml") << "variant = \"ada_mlvae\"\nbeta = 4.0\nseed = 3\n"
                                     "[model]\nlatent_dim = 7\n"
                                     "[training]\nsteps = 50\n";
  const ExperimentConfig c = load_config_file(dir / "run.toml");
  EXPECT_EQ(c.variant, ModelVariant::kAdaMlvae);
  EXPECT_EQ(c.beta, 4.0);
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.model.latent_dim, 7);
  EXPECT_EQ(c.steps, 50);
  std::ofstream(dir / "bad.toml") << "variant = \n";
  EXPECT_THROW(load_config_file(dir / "bad.toml"), ConfigError);
  EXPECT_THROW(load_config_file(dir / "missing.toml"), ConfigError);
  fs::remove_all(dir);
}

TEST(Sweep, ExpandsGroupsBetasAndSeeds) {
  const fs::path dir = scratch("sweep_file");
  std::ofstream(dir / "sweep.toml")
      << "[training]\nsteps = 10\n"
         "[sweep]\nbetas = [1.0, 4.0, 16.0]\nseeds = [0, 1]\n"
         "[[sweep.groups]]\nvariant = \"ada_gvae\"\n"
         "[[sweep.groups]]\nvariant = \"beta_vae\"\nbetas = [4.0]\n"
         "[[sweep.groups]]\nvariant = \"gvae\"\nsupervision = \"annotated-one\"\nseeds = [5]\n";
  const SweepConfig s = load_sweep_file(dir / "sweep.toml");
  const auto configs = s.expand();
  ASSERT_EQ(configs.size(), 6u + 2u + 3u);
  EXPECT_EQ(configs[0].run_id(), "ada_gvae-adaptive-krnd-b1-s0");
  EXPECT_EQ(configs[6].run_id(), "beta_vae-b4-s0");
  EXPECT_EQ(configs[8].run_id(), "gvae-annotated-one-krnd-b1-s5");
  for (const auto& c : configs) EXPECT_EQ(c.steps, 10);
  std::ofstream(dir / "bad.toml") << "[sweep]\nbetas = [1.0]\nsizes = [3]\n";
  EXPECT_THROW(load_sweep_file(dir / "bad.toml"), ConfigError);
  fs::remove_all(dir);
}

TEST(Sweep, ShippedConfigsLoad) {
  const fs::path dir = WEAKDIS_CONFIG_DIR;
  EXPECT_NO_THROW(load_config_file(dir / "desk.toml"));
  EXPECT_EQ(load_sweep_file(dir / "sweep_small.toml").expand().size(), 4u + 4u + 2u);
  const auto acceptance = load_sweep_file(dir / "acceptance.toml").expand();
  ASSERT_EQ(acceptance.size(), 35u);
  std::set<std::string> ids;
  for (const auto& c : acceptance) ids.insert(c.run_id());
  EXPECT_EQ(ids.size(), 35u);
  EXPECT_TRUE(ids.count("gvae-annotated-one-krnd-b1-s4"));
  EXPECT_TRUE(ids.count("ada_gvae-adaptive-k4-b1-s0"));
}

RunRecord sample_record() {
  RunRecord r;
  r.config = micro_config();
  r.run_id = r.config.run_id();
  r.loss_trace = {{100, 0.1 + 0.2, -1e-300, 3.5, 1.0 / 3.0, 2.0, 0.25},
                  {200, 123456.789, 1, 2, 3, 4, 0.5}};
  r.train_loss = 0.1;
  r.train_elbo = std::nullopt;
  r.train_reconstruction = 1e10 / 3;
  r.weak_reconstruction_loss = 987.6543210123;
  r.metrics = {{"mig", 0.123456789012345}, {"factor_vae", std::nullopt}};
  r.evaluations["shift"] = {{"aggregates", {{"mean_strong", 0.5}}}};
  r.checkpoint = "model.ckpt";
  r.warnings = {"a warning"};
  return r;
}

TEST(RunRecord, JsonRoundTripIsLossless) {
  const RunRecord r = sample_record();
  const Json j = to_json(r);
  EXPECT_EQ(j["schema_version"], kRunRecordSchemaVersion);
  const RunRecord back = record_from_json(Json::parse(j.dump()));
  EXPECT_EQ(to_json(back).dump(), j.dump());
  EXPECT_EQ(back.loss_trace[0].loss, 0.1 + 0.2);
  EXPECT_EQ(back.loss_trace[0].recon1, -1e-300);
  EXPECT_EQ(*back.weak_reconstruction_loss, 987.6543210123);
  EXPECT_FALSE(back.metrics.at("factor_vae").has_value());
  EXPECT_TRUE(testing::validate_against_file(j, WEAKDIS_SCHEMA_DIR "/run_record.schema.json").empty());
  Json wrong = j;
  wrong["schema_version"] = 99;
  EXPECT_THROW(record_from_json(wrong), ConfigError);
  wrong = j;
  wrong.erase("metrics");
  EXPECT_THROW(record_from_json(wrong), ConfigError);
}

TEST(Training, ProducesTraceCheckpointAndRecord) {
  const fs::path dir = scratch("train");
  const ExperimentConfig c = micro_config();
  const RunRecord r = run_training(c, dir / "run");
  ASSERT_EQ(r.loss_trace.size(), 2u);
  EXPECT_EQ(r.loss_trace[0].step, 100);
  for (const auto& p : r.loss_trace) {
    EXPECT_TRUE(std::isfinite(p.loss));
    EXPECT_GT(p.shared_fraction, 0.0);
  }
  EXPECT_TRUE(fs::exists(dir / "run" / "model.ckpt"));
  EXPECT_TRUE(r.weak_reconstruction_loss.has_value());
  EXPECT_TRUE(r.train_elbo.has_value());
  const RunRecord loaded = load_record(dir / "run" / "record.json");
  EXPECT_EQ(to_json(loaded).dump(), to_json(r).dump());
  const auto errors = testing::validate_against_file(to_json(r), WEAKDIS_SCHEMA_DIR "/run_record.schema.json");
  EXPECT_TRUE(errors.empty()) << errors.front();
  // The stored selection loss is reproducible from checkpoint and seed.
  const GroundTruthDataset ds = load_dataset_spec(c.dataset);
  EXPECT_EQ(recompute_weak_loss(r, dir / "run", ds), *r.weak_reconstruction_loss);
  fs::remove_all(dir);
}

TEST(Training, DeterministicGivenSeed) {
  const fs::path dir = scratch("determinism");
  ExperimentConfig c = micro_config();
  c.steps = 100;
  c.evaluation.metric.train_points = 100;
  RunRecord a = run_training(c, dir / "a");
  RunRecord b = run_training(c, dir / "b");
  EXPECT_EQ(*a.weak_reconstruction_loss, *b.weak_reconstruction_loss);
  EXPECT_EQ(a.loss_trace.back().loss, b.loss_trace.back().loss);
  const GroundTruthDataset ds = load_dataset_spec(c.dataset);
  evaluate_run(a, dir / "a", ds);
  evaluate_run(b, dir / "b", ds);
  for (const auto& name : metric_names()) {
    ASSERT_TRUE(a.metrics.count(name));
    if (a.metrics[name]) {
      EXPECT_EQ(*a.metrics[name], *b.metrics[name]) << name;
    } else {
      EXPECT_FALSE(b.metrics[name].has_value());
    }
  }
  c.seed = 1;
  const RunRecord other = run_training(c, dir / "c");
  EXPECT_NE(*other.weak_reconstruction_loss, *a.weak_reconstruction_loss);
  fs::remove_all(dir);
}

TEST(Training, BetaVaeTrainsOnSingletons) {
  const fs::path dir = scratch("betavae");
  ExperimentConfig c = micro_config();
  c.variant = ModelVariant::kBetaVae;
  c.steps = 100;
  const RunRecord a = run_training(c, dir / "a");
  for (const auto& p : a.loss_trace) {
    EXPECT_EQ(p.recon2, 0.0);
    EXPECT_EQ(p.kl2, 0.0);
    EXPECT_EQ(p.shared_fraction, 0.0);
  }
  // The pairing distribution does not enter training.
  c.sharing = "1";
  const RunRecord b = run_training(c, dir / "b");
  EXPECT_EQ(a.loss_trace.back().loss, b.loss_trace.back().loss);
  fs::remove_all(dir);
}

TEST(Training, DivergenceLeavesFlaggedPartialRecord) {
  const fs::path dir = scratch("diverge");
  ExperimentConfig c = micro_config();
  TrainingHooks hooks;
  hooks.after_step = [](long step, VaeModel<float>& model) {
    if (step == 150) model.params()[0](0, 0) = std::numeric_limits<float>::quiet_NaN();
  };
  try {
    run_training(c, dir, hooks);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.step(), 151);
  }
  const RunRecord r = load_record(dir / "record.json");
  EXPECT_EQ(r.status, "diverged");
  EXPECT_EQ(*r.diverged_step, 151);
  EXPECT_EQ(r.loss_trace.size(), 1u);
  EXPECT_FALSE(r.weak_reconstruction_loss.has_value());
  EXPECT_THROW(select_model({r}), std::invalid_argument);
  fs::remove_all(dir);
}

TEST(Training, SmokeRunLossDecreases) {
  const fs::path dir = scratch("smoke");
  ExperimentConfig c = micro_config();
  c.steps = 2000;
  c.model.mlp_hidden = 64;
  c.batch_size = 32;
  const RunRecord r = run_training(c, dir);
  ASSERT_EQ(r.loss_trace.size(), 20u);
  auto window_median = [&](std::size_t lo) {
    std::vector<double> v;
    for (std::size_t i = lo; i < lo + 5; ++i) v.push_back(r.loss_trace[i].loss);
    return *median(v);
  };
  EXPECT_LT(window_median(15), window_median(0));
  EXPECT_LT(window_median(10), window_median(5));
  fs::remove_all(dir);
}

RunRecord with_loss(double loss, std::uint64_t seed, const std::string& id) {
  RunRecord r;
  r.config.seed = seed;
  r.run_id = id;
  r.weak_reconstruction_loss = loss;
  return r;
}

TEST(Selection, MinimalLossTiesToLowerSeed) {
  EXPECT_EQ(select_model({with_loss(10.0, 0, "a"), with_loss(9.5, 1, "b")}).run_id, "b");
  EXPECT_EQ(select_model({with_loss(9.5, 3, "a"), with_loss(9.5, 1, "b")}).run_id, "b");
  EXPECT_THROW(select_model({}), std::invalid_argument);
  std::vector<RunRecord> records;
  Rng rng = make_rng(1);
  for (int i = 0; i < 12; ++i) {
    records.push_back(with_loss(100.0 + (i * 7) % 5, i, "r" + std::to_string(i)));
  }
  const std::string expected = select_model(records).run_id;
  for (int t = 0; t < 10; ++t) {
    std::shuffle(records.begin(), records.end(), rng);
    const SelectionResult s = select_model(records);
    EXPECT_EQ(s.run_id, expected);
    EXPECT_EQ(s.label_accesses, 0);
  }
}

TEST(Selection, PerGroupAndSeed) {
  std::vector<RunRecord> records;
  for (double beta : {1.0, 4.0}) {
    for (std::uint64_t seed : {0, 1}) {
      RunRecord r = with_loss(beta == 4.0 && seed == 1 ? 5.0 : 10.0 + beta, seed, "");
      r.config.beta = beta;
      r.run_id = r.config.run_id();
      records.push_back(r);
    }
  }
  const auto chosen = select_per_group_and_seed(records);
  ASSERT_EQ(chosen.size(), 2u);
  EXPECT_EQ(records[chosen[0]].config.beta, 1.0);
  EXPECT_EQ(records[chosen[1]].config.beta, 4.0);
}

TEST(Selection, RecomputationTouchesNoLabels) {
  const fs::path root = scratch("select");
  ExperimentConfig c = micro_config();
  c.steps = 100;
  std::vector<ExperimentConfig> configs;
  for (double beta : {1.0, 4.0}) {
    c.beta = beta;
    configs.push_back(c);
  }
  SweepOptions opts;
  opts.evaluate = false;
  const auto records = run_sweep(configs, root, opts);
  const GroundTruthDataset ds = load_dataset_spec(c.dataset);
  const SelectionResult fresh = select_by_recomputation(records, root, ds);
  EXPECT_EQ(fresh.label_accesses, 0);
  EXPECT_EQ(fresh.run_id, select_model(records).run_id);
  // The guard does fire: annotated supervision reads the pair labels.
  ExperimentConfig annotated = c;
  annotated.variant = ModelVariant::kGvae;
  const auto more = run_sweep({annotated}, root, opts);
  EXPECT_GT(select_by_recomputation(more, root, ds).label_accesses, 0);
  fs::remove_all(root);
}

TEST(Sweep, ReusesMatchingRecords) {
  const fs::path root = scratch("reuse");
  ExperimentConfig c = micro_config();
  c.steps = 100;
  std::vector<std::string> log;
  SweepOptions opts;
  opts.log = [&](const std::string& s) { log.push_back(s); };
  const auto first = run_sweep({c}, root, opts);
  EXPECT_FALSE(first[0].metrics.empty());
  const auto second = run_sweep({c}, root, opts);
  EXPECT_NE(log.back().find("reuse"), std::string::npos);
  EXPECT_EQ(to_json(first[0]).dump(), to_json(second[0]).dump());
  c.learning_rate = 2e-3;  // same run id, different config
  run_sweep({c}, root, opts);
  EXPECT_NE(log.back().find("train"), std::string::npos);
  EXPECT_EQ(load_records(root).size(), 1u);
  fs::remove_all(root);
}

std::vector<RunRecord> synthetic_records() {
  std::vector<RunRecord> out;
  Rng rng = make_rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 10; ++i) {
    RunRecord r;
    r.config.variant = i < 6 ? ModelVariant::kAdaGvae : ModelVariant::kBetaVae;
    r.config.sharing = i < 3 ? "1" : "rnd";
    r.config.beta = 1 + i % 2;
    r.config.seed = i;
    r.run_id = r.config.run_id();
    r.weak_reconstruction_loss = 100 + 10 * u(rng);
    r.train_loss = u(rng);
    r.train_elbo = u(rng);
    r.train_reconstruction = u(rng);
    for (const auto& m : metric_names()) r.metrics[m] = u(rng);
    if (i == 4) r.metrics["factor_vae"] = std::nullopt;
    out.push_back(r);
  }
  return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream s(line);
    std::string cell;
    while (std::getline(s, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

TEST(Report, SummaryValidatesAndMatchesCsv) {
  const fs::path out = scratch("report");
  const auto records = synthetic_records();
  const Json summary = emit_report(records, out);
  const auto errors =
      testing::validate_against_file(Json::parse(std::ifstream(out / "summary.json")),
                                     WEAKDIS_SCHEMA_DIR "/report.schema.json");
  EXPECT_TRUE(errors.empty()) << errors.front();
  EXPECT_EQ(summary["num_runs"], 10);
  for (const Json& g : summary["groups"]) {
    EXPECT_TRUE(g["median"].contains("dci_disentanglement"));
  }
  for (const auto& f : summary["files"]["plots"]) {
    EXPECT_TRUE(fs::exists(out / f.get<std::string>())) << f;
  }
  EXPECT_EQ(summary["k_sweep"].size(), 2u);

  // Recompute every rank correlation from runs.csv.
  const auto rows = read_csv(out / "runs.csv");
  const auto& header = rows.front();
  auto col = [&](const std::string& name) {
    return std::find(header.begin(), header.end(), name) - header.begin();
  };
  int checked = 0;
  for (const Json& cell : summary["rank_correlation"]) {
    std::vector<double> xs, ys;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r][col("group")] != cell["group"]) continue;
      const std::string x = rows[r][col(cell["statistic"])], y = rows[r][col(cell["metric"])];
      if (x == "null" || y == "null") continue;
      xs.push_back(std::stod(x));
      ys.push_back(std::stod(y));
    }
    if (xs.size() < 3) {
      EXPECT_TRUE(cell["rho"].is_null());
      continue;
    }
    EXPECT_NEAR(cell["rho"].get<double>(), *spearman_rank_correlation(xs, ys), 1e-12);
    ++checked;
  }
  EXPECT_GT(checked, 50);
  // The missing FactorVAE score is a null cell.
  bool saw_null = false;
  for (std::size_t r = 1; r < rows.size(); ++r) saw_null |= rows[r][col("factor_vae")] == "null";
  EXPECT_TRUE(saw_null);
  fs::remove_all(out);
}

TEST(Identifiability, ReportCoversBothDirections) {
  const Json j = identifiability_report(500, 1);
  bool witness = false;
  for (const Json& c : j["cases"]) {
    if (c["case"] == "permutation_monotone") {
      EXPECT_EQ(c["pass_fraction_shared"], 1.0);
      EXPECT_LT(c["jacobian_offdiag_max"].get<double>(), 1e-4);
    } else if (c["case"] == "rotation_45" || c["case"] == "dense_rotation") {
      EXPECT_LT(c["pass_fraction_shared"].get<double>(), 0.01);
    } else if (c["case"] == "single_s_witness") {
      witness = true;
      EXPECT_EQ(c["pass_fraction_shared"], 1.0);
      EXPECT_FALSE(c["diagonal_up_to_permutation"].get<bool>());
    }
  }
  EXPECT_TRUE(witness);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(WEAKDIS_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const fs::path root = scratch("cli");
  const std::string env = "WEAKDIS_OUTPUT_ROOT=" + root.string() + " ";
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("no-such-command"), 2);
  EXPECT_EQ(run_cli("train --set beta=-1"), 2);
  EXPECT_EQ(run_cli("train --config /nonexistent.toml"), 2);
  EXPECT_EQ(std::system((env + WEAKDIS_CLI " identifiability --pairs 200 > /dev/null").c_str()), 0);
  EXPECT_TRUE(fs::exists(root / "identifiability.json"));
  // A huge step size overflows the parameters within a few steps.
  const std::string train = "train --set training.steps=50 --set model.mlp_hidden=8 "
                            "--set model.latent_dim=4 --set training.batch_size=4 "
                            "--set training.learning_rate=1e30";
  const int status = std::system((env + WEAKDIS_CLI " " + train + " > /dev/null 2>&1").c_str());
  EXPECT_EQ(WEXITSTATUS(status), 3);
  const auto records = load_records(root / "runs");
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].status, "diverged");
  fs::remove_all(root);
}

}  // namespace
}  // namespace weakdis
