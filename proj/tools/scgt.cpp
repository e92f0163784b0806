// scgt: command-line front end.
//
//   scgt gen-data  --config synth.cfg --out data/
//   scgt train     --manifest data/manifest.csv --mode scgt --folds --out runs/scgt
//   scgt gradcheck --mode vanilla-gt --tolerance 1e-4
//   scgt interpret --checkpoint runs/scgt/model.ckpt --manifest data/manifest.csv --out interp/
//   scgt eval      --checkpoint runs/scgt/model.ckpt --manifest data/manifest.csv --out eval/
//
// Exit codes: 0 success, 1 gradient check failed, 2 usage/config/IO, 3 numeric failure.

#include "scgt/checkpoint.hpp"
#include "scgt/config.hpp"
#include "scgt/folds.hpp"
#include "scgt/gradients.hpp"
#include "scgt/interpret.hpp"
#include "scgt/io.hpp"
#include "scgt/synth.hpp"
#include "scgt/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace scgt;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct Overrides {
  std::string config_file;
  std::vector<std::string> assignments;
  // Shortcut flags, each mapped onto one config key.
  std::vector<std::pair<std::string, std::string>> shortcuts;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

RunConfig resolve(const Overrides& o) {
  RunConfig cfg;
  if (!o.config_file.empty()) apply_config_file(cfg, o.config_file);
  for (const auto& [key, value] : o.shortcuts) set_config_value(cfg, key, value);
  for (const auto& a : o.assignments) apply_assignment(cfg, a, "--set: ");
  return cfg;
}

void write_resolved(const RunConfig& cfg, const fs::path& out) {
  write_text(out / "config.resolved", resolved_config_text(cfg));
}

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(const RunConfig& cfg) {
  const SynthDataset ds = generate_dataset(cfg.synth);
  const fs::path out = cfg.out;
  write_dataset(ds, out);
  write_resolved(cfg, out);
  std::cout << "wrote " << ds.ids.size() << " subjects to " << (out / "manifest.csv").string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- train

ModelConfig model_for(const RunConfig& cfg, int n_nodes) {
  ModelConfig m = cfg.model;
  m.n_nodes = n_nodes;
  m.d_pe = n_nodes;
  m.validate();
  return m;
}

std::vector<Sample> load_samples(const RunConfig& cfg, double threshold) {
  require(!cfg.manifest.empty(), "data.manifest is not set (use --manifest)");
  std::vector<Sample> samples = load_dataset(cfg.manifest, threshold);
  require(!samples.empty(), "manifest lists no subjects");
  return samples;
}

json summary(const std::vector<Metrics>& per_fold, Task task) {
  const std::vector<std::string> names =
      task == Task::Regression ? std::vector<std::string>{"mse", "pearson_r"}
                               : std::vector<std::string>{"accuracy", "f1"};
  json out;
  for (const auto& name : names) {
    std::vector<double> v;
    for (const Metrics& m : per_fold) v.push_back(m.to_json().at(name).get<double>());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    out[name] = {{"mean", mean}, {"std", sd}};
  }
  return out;
}

struct FoldOutcome {
  TrainResult result;
  json metrics;
};

FoldOutcome run_fold(const std::vector<Sample>& samples, const std::vector<int>& folds, int k,
                     const ModelConfig& mcfg, const RunConfig& cfg, const fs::path& dir) {
  const Split split = fold_split(folds, cfg.train.folds, k);
  fs::create_directories(dir);
  std::ofstream log(dir / "train.log.jsonl", std::ios::binary);
  if (!log) throw IoError("cannot write " + (dir / "train.log.jsonl").string());
  auto on_epoch = [&](const EpochRecord& rec) {
    json j = rec.to_json();
    j.erase("wall_seconds");  // logs must be reproducible bit for bit
    log << j.dump() << '\n';
    std::cerr << "fold " << k << " epoch " << rec.epoch << " train " << rec.train_loss << " val " << rec.val_loss
              << " lr " << rec.lr << " (" << rec.wall_seconds << " s)\n";
  };
  FoldOutcome fo{train(samples, split, mcfg, cfg.train, on_epoch), {}};
  const TrainResult& r = fo.result;
  fo.metrics = {{"mode", to_string(mcfg.mode)},
                {"task", to_string(mcfg.task)},
                {"fold", k},
                {"split", {{"train", split.train.size()}, {"validation", split.validation.size()}, {"test", split.test.size()}}},
                {"best_epoch", r.best_epoch},
                {"epochs_run", r.epochs_run},
                {"early_stopped", r.early_stopped},
                {"diverged", r.diverged}};
  if (r.diverged) {
    fo.metrics["error"] = r.divergence_message;
  } else {
    fo.metrics["validation"] = r.validation.to_json();
    fo.metrics["test"] = r.test.to_json();
    save_checkpoint({mcfg, r.params, r.scaler, cfg.threshold}, dir / "model.ckpt");
  }
  write_json(dir / "metrics.json", fo.metrics);
  return fo;
}

int cmd_train(const RunConfig& cfg) {
  cfg.train.validate();
  std::vector<Sample> samples = load_samples(cfg, cfg.threshold);
  const ModelConfig mcfg = model_for(cfg, static_cast<int>(samples.front().graph.adjacency.rows()));
  if (cfg.train.residualize) {
    std::vector<double> y;
    std::vector<std::string> groups;
    for (const Sample& s : samples) y.push_back(s.target), groups.push_back(s.group);
    const auto res = residualize_targets(y, groups);
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i].target = res[i];
  }
  std::vector<double> targets;
  for (const Sample& s : samples) targets.push_back(s.target);
  const std::vector<int> folds = stratified_folds(targets, cfg.train.folds, mcfg.task, cfg.train.seed);

  const fs::path out = cfg.out;
  fs::create_directories(out);
  write_resolved(cfg, out);

  if (!cfg.all_folds) {
    require(cfg.fold >= 0 && cfg.fold < cfg.train.folds, "train.fold must lie in [0, train.folds)");
    const FoldOutcome fo = run_fold(samples, folds, cfg.fold, mcfg, cfg, out);
    if (fo.result.diverged) {
      std::cerr << "error: " << fo.result.divergence_message << '\n';
      return kExitNumeric;
    }
    std::cout << fo.metrics.at("test").dump() << '\n';
    return kExitOk;
  }

  json all{{"mode", to_string(mcfg.mode)}, {"task", to_string(mcfg.task)}, {"folds", json::array()}};
  std::vector<Metrics> tests;
  bool diverged = false;
  for (int k = 0; k < cfg.train.folds; ++k) {
    const FoldOutcome fo = run_fold(samples, folds, k, mcfg, cfg, out / ("fold_" + std::to_string(k)));
    all["folds"].push_back(fo.metrics);
    if (fo.result.diverged) {
      std::cerr << "error: fold " << k << ": " << fo.result.divergence_message << '\n';
      diverged = true;
      break;
    }
    tests.push_back(fo.result.test);
  }
  if (!diverged) all["test_summary"] = summary(tests, mcfg.task);
  write_json(out / "metrics.json", all);
  if (diverged) return kExitNumeric;
  std::cout << all.at("test_summary").dump() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(const RunConfig& cfg) {
  ModelConfig m;
  m.n_nodes = cfg.gradcheck.n_nodes;
  m.d_pe = cfg.gradcheck.n_nodes;
  m.layer_dims = cfg.gradcheck.layer_dims;
  m.n_heads = cfg.gradcheck.n_heads;
  m.k_r = cfg.gradcheck.k_r;
  m.task = cfg.model.task;
  m.mode = cfg.model.mode;
  m.tie_theta1 = cfg.model.tie_theta1;
  const GradCheckReport rep = grad_check(m, cfg.gradcheck.seed, cfg.gradcheck.tolerance, {},
                                         LossConfig{cfg.train.smooth_l1_delta});
  json j{{"mode", to_string(m.mode)}, {"task", to_string(m.task)}, {"tolerance", rep.tolerance},
         {"pass", rep.pass}, {"tensors", json::array()}};
  for (const TensorCheck& t : rep.tensors) {
    std::printf("%-22s %6zu  max rel %.3e  max abs %.3e  %s\n", t.name.c_str(), t.size, t.max_rel_error,
                t.max_abs_error, t.pass ? "ok" : "FAIL");
    j["tensors"].push_back({{"name", t.name}, {"size", t.size}, {"max_rel_error", t.max_rel_error},
                            {"max_abs_error", t.max_abs_error}, {"pass", t.pass}});
  }
  const fs::path out = cfg.out;
  write_resolved(cfg, out);
  write_json(out / "gradcheck.json", j);
  std::cout << (rep.pass ? "gradient check passed" : "gradient check FAILED") << '\n';
  return rep.pass ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------- interpret

std::optional<std::vector<int>> planted_labels_near(const fs::path& manifest) {
  const fs::path spec = manifest.parent_path() / "spec.json";
  if (!fs::exists(spec)) return std::nullopt;
  std::ifstream in(spec);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError(spec.string() + ": " + e.what());
  }
  if (!j.contains("planted_labels")) return std::nullopt;
  return j.at("planted_labels").get<std::vector<int>>();
}

int cmd_interpret(const RunConfig& cfg) {
  require(!cfg.interpret.checkpoint.empty(), "interpret.checkpoint is not set (use --checkpoint)");
  require(!cfg.manifest.empty(), "data.manifest is not set (use --manifest)");
  const Checkpoint ck = load_checkpoint(cfg.interpret.checkpoint);
  const auto rows = read_manifest(cfg.manifest);
  require(!rows.empty(), "manifest lists no subjects");

  FCMatrix source;
  std::string source_name;
  if (cfg.interpret.source == "mean") {
    Mat sum;
    for (const auto& row : rows) {
      const FCMatrix fc = read_fc_csv(resolve_relative(cfg.manifest, row.fc_path));
      if (sum.size() == 0) sum = Mat::Zero(fc.values.rows(), fc.values.cols());
      require(fc.values.rows() == sum.rows(), "FC matrices differ in size");
      sum += fc.values;
    }
    sum /= static_cast<double>(rows.size());
    sum = 0.5 * (sum + sum.transpose()).eval();
    sum.diagonal().setOnes();
    source = FCMatrix{sum};
    source_name = "dataset-mean";
  } else if (cfg.interpret.source == "reference") {
    const ManifestRow* pick = &rows.front();
    if (!cfg.interpret.reference_subject.empty()) {
      pick = nullptr;
      for (const auto& row : rows)
        if (row.subject_id == cfg.interpret.reference_subject) pick = &row;
      require(pick != nullptr, "reference subject '" + cfg.interpret.reference_subject + "' not in manifest");
    }
    source = read_fc_csv(resolve_relative(cfg.manifest, pick->fc_path));
    source_name = pick->subject_id;
  } else {
    throw ValidationError("interpret.source must be 'mean' or 'reference'");
  }

  const BrainGraph g = fc_to_graph(source, ck.threshold, source.n_nodes());
  require(g.pos_enc.rows() == ck.config.n_nodes, "dataset node count does not match the checkpoint");
  const ClusterAssignment a = assign_clusters(ck.params, ck.config, g.pos_enc, cfg.interpret.layer);

  const fs::path out = cfg.out;
  write_resolved(cfg, out);
  export_membership(a, out / "membership.csv");
  const auto planted = planted_labels_near(cfg.manifest);
  std::vector<int> reference;
  if (planted) {
    require(planted->size() == a.labels.size(), "planted labels do not match the node count");
    reference = *planted;
  }
  json report = recovery_report(a, reference);
  report["layer"] = cfg.interpret.layer;
  report["source"] = source_name;
  write_json(out / "recovery.json", report);
  std::cout << report.dump() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const RunConfig& cfg) {
  require(!cfg.interpret.checkpoint.empty(), "interpret.checkpoint is not set (use --checkpoint)");
  const Checkpoint ck = load_checkpoint(cfg.interpret.checkpoint);
  const std::vector<Sample> samples = load_samples(cfg, ck.threshold);
  for (const Sample& s : samples) check_graph(s.graph, ck.config);
  const Evaluation ev = evaluate(ck.params, ck.config, samples, ck.scaler, LossConfig{cfg.train.smooth_l1_delta});
  const fs::path out = cfg.out;
  write_resolved(cfg, out);
  std::string csv = "subject_id,target,prediction\n";
  for (std::size_t i = 0; i < samples.size(); ++i)
    csv += samples[i].id + "," + format_double(samples[i].target) + "," + format_double(ev.predictions[i]) + "\n";
  write_text(out / "predictions.csv", csv);
  const json j = ev.metrics.to_json();
  write_json(out / "metrics.json", j);
  std::cout << j.dump() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-clustering graph transformer toolkit"};
  app.require_subcommand(1);
  Overrides o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config_file, "Configuration file (key = value lines)");
    sub->add_option("-s,--set", o.assignments, "Override one key, e.g. --set train.lr=1e-3");
    sub->add_option_function<std::string>("-o,--out", [&](const std::string& v) { o.shortcuts.emplace_back("run.out", v); },
                                          "Output directory");
  };
  auto shortcut = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(flag, [&o, key](const std::string& v) { o.shortcuts.emplace_back(key, v); }, help);
  };

  auto* gen = app.add_subcommand("gen-data", "Generate a planted-subnetwork synthetic dataset");
  common(gen);
  shortcut(gen, "--seed", "synth.seed", "Generator seed");
  shortcut(gen, "--subjects", "synth.n_subjects", "Number of subjects");

  auto* tr = app.add_subcommand("train", "Train on a manifest (one fold, or all with --folds)");
  common(tr);
  shortcut(tr, "--manifest", "data.manifest", "Manifest CSV");
  shortcut(tr, "--mode", "model.mode", "scgt or vanilla-gt");
  shortcut(tr, "--task", "model.task", "regression or classification");
  shortcut(tr, "--epochs", "train.epochs", "Maximum epochs");
  shortcut(tr, "--seed", "train.seed", "Training seed");
  shortcut(tr, "--fold", "train.fold", "Fold used as test set when not running all folds");
  tr->add_flag_callback("--folds", [&] { o.shortcuts.emplace_back("train.all_folds", "true"); },
                        "Run every fold and report mean and std");

  auto* gc = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  common(gc);
  shortcut(gc, "--tolerance", "gradcheck.tolerance", "Maximum relative error");
  shortcut(gc, "--mode", "model.mode", "scgt or vanilla-gt");
  shortcut(gc, "--task", "model.task", "regression or classification");
  shortcut(gc, "--seed", "gradcheck.seed", "Seed for graphs and parameters");

  auto* in = app.add_subcommand("interpret", "Export community membership and recovery report");
  common(in);
  shortcut(in, "--checkpoint", "interpret.checkpoint", "Model checkpoint");
  shortcut(in, "--manifest", "data.manifest", "Manifest CSV");
  shortcut(in, "--layer", "interpret.layer", "Layer whose theta1 is read (0 = first)");
  shortcut(in, "--source", "interpret.source", "mean (dataset-mean FC) or reference (one subject)");
  shortcut(in, "--subject", "interpret.reference_subject", "Reference subject id");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on every subject of a manifest");
  common(ev);
  shortcut(ev, "--checkpoint", "interpret.checkpoint", "Model checkpoint");
  shortcut(ev, "--manifest", "data.manifest", "Manifest CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const RunConfig cfg = resolve(o);
    if (gen->parsed()) return cmd_gen_data(cfg);
    if (tr->parsed()) return cmd_train(cfg);
    if (gc->parsed()) return cmd_gradcheck(cfg);
    if (in->parsed()) return cmd_interpret(cfg);
    if (ev->parsed()) return cmd_eval(cfg);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
