// emkat: decoupled entity matching. Self-supervised attribute embeddings
// feed a comparison-feature computer; a depth-bounded decision tree makes
// the match decision and exports human-readable rules.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "emkat/corpus.hpp"
#include "emkat/error.hpp"
#include "emkat/rng.hpp"
#include "emkat/evalharness.hpp"
#include "emkat/hif.hpp"
#include "emkat/kat.hpp"
#include "emkat/run_config.hpp"

namespace {

namespace fs = std::filesystem;
using namespace emkat;

struct SharedFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> variant;
  std::optional<double> drop_rate;
  std::optional<double> rate;
};

void add_shared(CLI::App* cmd, SharedFlags& flags, bool config_required) {
  auto* opt = cmd->add_option("--config", flags.config_path, "run config file");
  if (config_required) opt->required();
  cmd->add_option("--seed", flags.seed, "root seed (overrides config)");
  cmd->add_option("--out", flags.out, "output directory (overrides config)");
  cmd->add_option("--variant", flags.variant,
                  "tree variant: kat_id3, kat_xgb, or dt");
  cmd->add_option("--drop-rate", flags.drop_rate,
                  "attribute-value drop rate (overrides config)");
  cmd->add_option("--rate", flags.rate, "training rate (overrides config)");
}

runconfig::RunConfig load_config(const SharedFlags& flags) {
  auto cfg = runconfig::RunConfig::from_file(flags.config_path);
  if (flags.seed) cfg.pipeline.seed = *flags.seed;
  if (flags.out) cfg.out = *flags.out;
  if (flags.variant) {
    cfg.pipeline.variant = evalharness::variant_from_name(*flags.variant);
  }
  if (flags.drop_rate) cfg.pipeline.drop_rate = *flags.drop_rate;
  if (flags.rate) cfg.pipeline.train_rate = *flags.rate;
  cfg.validate();
  return cfg;
}

struct LoadedData {
  corpus::EntityTable table_a;
  corpus::EntityTable table_b;
  corpus::LabeledPairs pairs;
};

LoadedData load_data(const runconfig::RunConfig& cfg, bool with_pairs) {
  LoadedData data;
  data.table_a = corpus::load_table(cfg.table_a, cfg.id_column);
  data.table_b = corpus::load_table(cfg.table_b, cfg.id_column);
  if (with_pairs) data.pairs = corpus::load_pairs(cfg.pairs);
  return data;
}

void print_durations(const evalharness::EvalReport& report) {
  for (const auto& [phase, seconds] : report.durations_s) {
    std::printf("%s: %.3fs\n", phase.c_str(), seconds);
  }
}

int cmd_train_hif(const SharedFlags& flags) {
  auto cfg = load_config(flags);
  auto data = load_data(cfg, false);
  auto [working_a, working_b] =
      evalharness::apply_drop(data.table_a, data.table_b, cfg.pipeline);
  hif::HifConfig hif_config = cfg.pipeline.hif;
  hif_config.seed = derive_seed(cfg.pipeline.seed, "hif");
  hif::TrainLog log;
  auto model =
      hif::train_hif(working_a, working_b, hif_config,
                     cfg.pipeline.frame_lengths,
                     cfg.pipeline.pretrained_embeddings, &log);
  fs::create_directories(cfg.out);
  hif::save_model(model, cfg.out / "model.txt", "vocab.txt");
  std::printf("model written to %s (%zu epochs, best loss %.6f)\n",
              (cfg.out / "model.txt").c_str(), log.epochs_run,
              log.best_validation_loss);
  return 0;
}

int cmd_match(const SharedFlags& flags, const std::string& model_path) {
  auto cfg = load_config(flags);
  auto data = load_data(cfg, true);
  fs::path model_file =
      model_path.empty() ? cfg.out / "model.txt" : fs::path(model_path);
  auto model = hif::load_model(model_file);
  auto artifacts = evalharness::match_with_model(
      std::move(model), data.table_a, data.table_b, data.pairs, cfg.pipeline);
  evalharness::persist_artifacts(artifacts, cfg.out);
  std::printf("%s", evalharness::render_report(artifacts.report).c_str());
  return 0;
}

int cmd_rules(const std::string& tree_path) {
  auto loaded = kat::load_tree(tree_path);
  for (const auto& rule : kat::extract_rules(loaded.tree, loaded.feature_names)) {
    std::printf("%s\n", kat::render_rule(rule).c_str());
  }
  return 0;
}

int cmd_sweep(const SharedFlags& flags, const std::string& axis,
              const std::vector<double>& values) {
  auto cfg = load_config(flags);
  auto data = load_data(cfg, true);
  evalharness::SweepAxis sweep_axis;
  if (axis == "train_rate") {
    sweep_axis = evalharness::SweepAxis::train_rate;
  } else if (axis == "drop_rate") {
    sweep_axis = evalharness::SweepAxis::drop_rate;
  } else {
    throw UsageError("unknown sweep axis '" + axis +
                     "' (expected train_rate or drop_rate)");
  }
  auto points = evalharness::sweep(data.table_a, data.table_b, data.pairs,
                                   cfg.pipeline, sweep_axis, values);
  fs::create_directories(cfg.out);
  evalharness::write_sweep_csv(cfg.out / "sweep.csv", points);
  for (const auto& point : points) {
    std::printf("%s=%g f1=%.6f precision=%.6f recall=%.6f\n", axis.c_str(),
                point.value, point.report.f1, point.report.precision,
                point.report.recall);
  }
  return 0;
}

int cmd_corrupt(const SharedFlags& flags) {
  auto cfg = load_config(flags);
  auto data = load_data(cfg, false);
  fs::create_directories(cfg.out);
  auto [working_a, working_b] =
      evalharness::apply_drop(data.table_a, data.table_b, cfg.pipeline);
  const auto path_a = cfg.out / (data.table_a.name + "_corrupted.csv");
  const auto path_b = cfg.out / (data.table_b.name + "_corrupted.csv");
  corpus::save_table(working_a, path_a);
  corpus::save_table(working_b, path_b);
  std::printf("wrote %s and %s (drop rate %g)\n", path_a.c_str(), path_b.c_str(),
              cfg.pipeline.drop_rate);
  return 0;
}

int cmd_eval(const std::string& predictions_path, const std::string& gold_path) {
  auto predictions = corpus::load_pairs(predictions_path);
  auto gold = corpus::load_pairs(gold_path);
  if (predictions.size() != gold.size()) {
    throw DataError("prediction and gold files differ in pair count");
  }
  std::vector<corpus::Label> pred_labels, gold_labels;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto& p = predictions.pairs[i];
    const auto& g = gold.pairs[i];
    if (p.left_id != g.left_id || p.right_id != g.right_id) {
      throw DataError("pair mismatch at row " + std::to_string(i + 1) + ": (" +
                      p.left_id + "," + p.right_id + ") vs (" + g.left_id +
                      "," + g.right_id + ")");
    }
    pred_labels.push_back(p.label);
    gold_labels.push_back(g.label);
  }
  auto report = evalharness::evaluate(pred_labels, gold_labels);
  std::printf("%s", evalharness::render_report(report).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"decoupled entity matching: self-supervised attribute "
               "embeddings + key-attribute trees"};
  app.require_subcommand(1);

  SharedFlags train_flags, match_flags, sweep_flags, corrupt_flags;
  std::string match_model, rules_tree, sweep_axis, eval_pred, eval_gold;
  std::vector<double> sweep_values;

  auto* train = app.add_subcommand("train-hif",
                                   "train the fusion network on unlabeled tables");
  add_shared(train, train_flags, true);

  auto* match = app.add_subcommand(
      "match", "induce a tree on the train split and predict the test split");
  add_shared(match, match_flags, true);
  match->add_option("--model", match_model,
                    "model file (default: <out>/model.txt)");

  auto* rules = app.add_subcommand("rules", "print the rules of a tree file");
  rules->add_option("tree", rules_tree, "tree file")->required();

  auto* sweep_cmd =
      app.add_subcommand("sweep", "run the pipeline across an axis of values");
  add_shared(sweep_cmd, sweep_flags, true);
  sweep_cmd->add_option("--axis", sweep_axis, "train_rate or drop_rate")
      ->required();
  sweep_cmd->add_option("--values", sweep_values, "axis values")
      ->required()
      ->delimiter(',');

  auto* corrupt = app.add_subcommand(
      "corrupt", "write drop-noise-corrupted copies of both tables");
  add_shared(corrupt, corrupt_flags, true);

  auto* eval_cmd =
      app.add_subcommand("eval", "score a prediction file against gold pairs");
  eval_cmd->add_option("predictions", eval_pred, "predictions csv")->required();
  eval_cmd->add_option("gold", eval_gold, "gold pairs csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) return cmd_train_hif(train_flags);
    if (match->parsed()) return cmd_match(match_flags, match_model);
    if (rules->parsed()) return cmd_rules(rules_tree);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_flags, sweep_axis, sweep_values);
    if (corrupt->parsed()) return cmd_corrupt(corrupt_flags);
    if (eval_cmd->parsed()) return cmd_eval(eval_pred, eval_gold);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
