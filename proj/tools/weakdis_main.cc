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

#include <cstdlib>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "weakdis/experiment.h"
#include "weakdis/report.h"

namespace fs = std::filesystem;
using namespace weakdis;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

struct ConfigArgs {
  std::string file;
  std::vector<std::string> overrides;
};

void add_config_args(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("-c,--config", args.file, "TOML configuration file");
  cmd->add_option("-s,--set", args.overrides, "Override a field, e.g. model.latent_dim=8");
}

ExperimentConfig resolve_config(const ConfigArgs& args) {
  ExperimentConfig c = args.file.empty() ? ExperimentConfig{} : load_config_file(args.file);
  for (const auto& o : args.overrides) apply_override(c, o);
  return c;
}

void print(const Json& j) { std::cout << j.dump(2) << std::endl; }

RunRecord load_run(const fs::path& dir) { return load_record(dir / "record.json"); }

void log_line(const std::string& s) { std::cerr << s << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised disentanglement experiments"};
  app.require_subcommand(1);
  const fs::path root = output_root();

  // gen-data
  int resolution = 32;
  std::string data_out, npz;
  auto* gen = app.add_subcommand("gen-data", "Render toy sprites or import an archive");
  gen->add_option("--resolution", resolution, "Toy-sprites side length (multiple of 32)");
  gen->add_option("--npz", npz, "Import a dSprites-style .npz archive instead");
  gen->add_option("-o,--out", data_out, "Output directory");

  // train
  ConfigArgs train_args;
  std::string run_dir;
  bool train_eval = false;
  auto* train = app.add_subcommand("train", "Train one model");
  add_config_args(train, train_args);
  train->add_option("--run-dir", run_dir, "Run directory (default <root>/runs/<run id>)");
  train->add_flag("--evaluate", train_eval, "Compute disentanglement metrics afterwards");

  // sweep
  std::string sweep_file, sweep_root;
  std::vector<std::string> sweep_overrides;
  bool sweep_no_eval = false, sweep_fresh = false;
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate a grid of runs");
  sweep->add_option("-c,--config", sweep_file, "Sweep TOML file")->required();
  sweep->add_option("-s,--set", sweep_overrides, "Override a base field");
  sweep->add_option("--runs", sweep_root, "Runs directory (default <root>/runs)");
  sweep->add_flag("--no-evaluate", sweep_no_eval, "Skip metrics");
  sweep->add_flag("--fresh", sweep_fresh, "Retrain even when a matching record exists");

  // per-run evaluations
  std::string eval_dir;
  auto* evaluate = app.add_subcommand("evaluate", "Disentanglement metrics of a run");
  evaluate->add_option("run_dir", eval_dir, "Run directory")->required();
  std::string down_dir;
  auto* downstream = app.add_subcommand("downstream", "Downstream factor prediction of a run");
  downstream->add_option("run_dir", down_dir, "Run directory")->required();
  std::string shift_dir;
  auto* shift = app.add_subcommand("shift", "Covariate-shift generalization of a run");
  shift->add_option("run_dir", shift_dir, "Run directory")->required();
  std::string fair_dir;
  auto* fairness = app.add_subcommand("fairness", "Unfairness of downstream predictions");
  fairness->add_option("run_dir", fair_dir, "Run directory")->required();

  // identifiability
  int id_pairs = 5000;
  std::uint64_t id_seed = 0;
  std::string id_out;
  auto* ident = app.add_subcommand("identifiability", "Candidate-map constraint checks");
  ident->add_option("--pairs", id_pairs, "Pairs per case");
  ident->add_option("--seed", id_seed, "Seed");
  ident->add_option("-o,--out", id_out, "Report JSON path (default <root>/identifiability.json)");

  // report
  std::string report_runs, report_out;
  auto* report = app.add_subcommand("report", "Summary JSON, CSV tables and plots");
  report->add_option("--runs", report_runs, "Runs directory (default <root>/runs)");
  report->add_option("-o,--out", report_out, "Report directory (default <root>/report)");

  // select
  std::string select_runs;
  bool select_recompute = false, select_per_seed = false;
  auto* select = app.add_subcommand("select", "Label-free model selection");
  select->add_option("--runs", select_runs, "Runs directory (default <root>/runs)");
  select->add_flag("--recompute", select_recompute, "Recompute losses from checkpoints");
  select->add_flag("--per-seed", select_per_seed, "One selection per group and seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) {
      const GroundTruthDataset ds =
          npz.empty() ? make_toy_sprites(resolution) : import_npz_archive(npz);
      const fs::path out = data_out.empty() ? root / "data" / ds.name() : fs::path(data_out);
      save_dataset(ds, out);
      print({{"dataset", ds.name()}, {"images", ds.size()}, {"path", out.string()}});
    } else if (*train) {
      const ExperimentConfig c = resolve_config(train_args);
      const fs::path dir = run_dir.empty() ? root / "runs" / c.run_id() : fs::path(run_dir);
      TrainingHooks hooks;
      hooks.on_log = [&](const LossPoint& p) {
        if (p.step % (c.log_every * 10) == 0 || p.step == c.steps) {
          std::cerr << "step " << p.step << " loss " << p.loss << std::endl;
        }
      };
      RunRecord r = run_training(c, dir, hooks);
      if (train_eval && c.evaluation.metrics) {
        evaluate_run(r, dir, load_dataset_spec(c.dataset));
        save_record(r, dir / "record.json");
      }
      print({{"run_id", r.run_id},
             {"run_dir", dir.string()},
             {"weak_reconstruction_loss", *r.weak_reconstruction_loss}});
    } else if (*sweep) {
      SweepConfig s = load_sweep_file(sweep_file);
      for (const auto& o : sweep_overrides) apply_override(s.base, o);
      SweepOptions opts;
      opts.evaluate = !sweep_no_eval;
      opts.reuse_existing = !sweep_fresh;
      opts.log = log_line;
      const fs::path runs = sweep_root.empty() ? root / "runs" : fs::path(sweep_root);
      const auto records = run_sweep(s.expand(), runs, opts);
      int diverged = 0;
      for (const auto& r : records) diverged += r.status != "ok";
      print({{"runs", records.size()}, {"diverged", diverged}, {"root", runs.string()}});
    } else if (*evaluate || *downstream || *shift || *fairness) {
      const fs::path dir = *evaluate ? eval_dir : *downstream ? down_dir : *shift ? shift_dir : fair_dir;
      RunRecord r = load_run(dir);
      const GroundTruthDataset ds = load_dataset_spec(r.config.dataset);
      std::string key;
      if (*evaluate) {
        evaluate_run(r, dir, ds);
      } else if (*downstream) {
        downstream_run(r, dir, ds);
        key = "downstream";
      } else if (*shift) {
        shift_run(r, dir, ds);
        key = "shift";
      } else {
        fairness_run(r, dir, ds);
        key = "fairness";
      }
      save_record(r, dir / "record.json");
      print(key.empty() ? to_json(r)["metrics"] : r.evaluations[key]["aggregates"]);
    } else if (*ident) {
      const Json j = identifiability_report(id_pairs, id_seed);
      const fs::path out = id_out.empty() ? root / "identifiability.json" : fs::path(id_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      std::ofstream(out) << j.dump(2) << '\n';
      print(j);
    } else if (*report) {
      const fs::path runs = report_runs.empty() ? root / "runs" : fs::path(report_runs);
      const fs::path out = report_out.empty() ? root / "report" : fs::path(report_out);
      const Json summary = emit_report(load_records(runs), out);
      print({{"report", out.string()}, {"runs", summary["num_runs"]}});
    } else if (*select) {
      const fs::path runs = select_runs.empty() ? root / "runs" : fs::path(select_runs);
      const auto records = load_records(runs);
      if (select_per_seed) {
        Json out = Json::array();
        for (std::size_t i : select_per_group_and_seed(records)) {
          out.push_back({{"group", records[i].config.group()},
                         {"seed", records[i].config.seed},
                         {"run_id", records[i].run_id},
                         {"weak_reconstruction_loss", *records[i].weak_reconstruction_loss}});
        }
        print(out);
      } else {
        SelectionResult s;
        if (select_recompute) {
          const GroundTruthDataset ds = load_dataset_spec(records.front().config.dataset);
          s = select_by_recomputation(records, runs, ds);
        } else {
          s = select_model(records);
        }
        print({{"run_id", s.run_id},
               {"weak_reconstruction_loss", s.weak_reconstruction_loss},
               {"label_accesses", s.label_accesses}});
      }
    }
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << std::endl;
    return kExitDivergence;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitFailure;
  }
  return kExitOk;
}
