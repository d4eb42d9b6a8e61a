#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emkat/cfc.hpp"
#include "emkat/corpus.hpp"
#include "emkat/hif.hpp"
#include "emkat/kat.hpp"

namespace emkat::evalharness {

struct EvalReport {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  // Wall-clock seconds per phase; empty for plain evaluate() calls.
  std::map<std::string, double> durations_s;

  std::size_t total() const { return tp + fp + fn + tn; }
};

// Positive class is match; degenerate denominators give 0.
EvalReport evaluate(std::span<const corpus::Label> predictions,
                    std::span<const corpus::Label> gold);

enum class TreeVariant { kat_id3, kat_xgb, dt };

std::string_view variant_name(TreeVariant v);
TreeVariant variant_from_name(std::string_view name);

struct PipelineConfig {
  double train_rate = 0.10;
  double drop_rate = 0.0;
  TreeVariant variant = TreeVariant::kat_id3;
  std::size_t kat_max_depth = 3;  // ignored by the dt variant (no cap)
  double xgb_lambda = 1.0;
  double xgb_gamma = 0.0;
  hif::HifConfig hif;
  tokenize::FrameLengths frame_lengths;
  std::optional<std::filesystem::path> pretrained_embeddings;
  // Trivial-pair filtering; both thresholds must be set to enable it.
  std::optional<double> filter_match_threshold;
  std::optional<double> filter_nonmatch_threshold;
  std::uint64_t seed = 42;
};

struct PipelineArtifacts {
  hif::HifModel model;
  cfc::FeatureSchema schema;
  kat::KatTree tree;
  std::vector<kat::Rule> rules;
  corpus::Split split;
  std::size_t filtered_pair_count = 0;
  std::vector<std::vector<double>> train_features;
  std::vector<std::vector<double>> test_features;
  std::vector<corpus::Label> test_predictions;
  EvalReport report;
};

// End-to-end run: optional drop noise, HIF training on the unlabeled
// tables, schema + features, tree induction on the train split, evaluation
// on the test split. Deterministic under config.seed.
PipelineArtifacts run_pipeline(const corpus::EntityTable& table_a,
                               const corpus::EntityTable& table_b,
                               const corpus::LabeledPairs& pairs,
                               const PipelineConfig& config);

// Same pipeline with an already-trained model (the `match` subcommand).
// Drop noise derives from the same seed labels as run_pipeline, so
// train-hif followed by match reproduces run_pipeline exactly.
PipelineArtifacts match_with_model(hif::HifModel model,
                                   const corpus::EntityTable& table_a,
                                   const corpus::EntityTable& table_b,
                                   const corpus::LabeledPairs& pairs,
                                   const PipelineConfig& config);

// The config's drop noise applied to both tables (seed labels drop-a and
// drop-b); identity when drop_rate is 0.
std::pair<corpus::EntityTable, corpus::EntityTable> apply_drop(
    const corpus::EntityTable& table_a, const corpus::EntityTable& table_b,
    const PipelineConfig& config);

// Writes model, vocab, tree, rules, predictions, report, metrics, split
// manifest, and feature matrices under out_dir. Every file except
// report.txt is byte-deterministic under a fixed seed; report.txt carries
// the wall-clock durations.
void persist_artifacts(const PipelineArtifacts& artifacts,
                       const std::filesystem::path& out_dir);

enum class SweepAxis { train_rate, drop_rate };

struct SweepPoint {
  double value;
  EvalReport report;
};

// One pipeline run per value with a shared seed policy (same seed at every
// point so differences are attributable to the axis).
std::vector<SweepPoint> sweep(const corpus::EntityTable& table_a,
                              const corpus::EntityTable& table_b,
                              const corpus::LabeledPairs& pairs,
                              const PipelineConfig& base, SweepAxis axis,
                              std::span<const double> values);

void write_sweep_csv(const std::filesystem::path& path,
                     std::span<const SweepPoint> points);

std::string render_report(const EvalReport& report);
void write_report_files(const EvalReport& report,
                        const std::filesystem::path& out_dir);

// Synthetic benchmark with known match labels and the three attribute
// noise types: synonym substitution, value misplacement between two
// attributes, and missing values.
struct PlantedConfig {
  std::size_t num_entities = 200;  // records per table == num_entities
  double synonym_rate = 0.2;
  double misplace_rate = 0.1;
  double missing_rate = 0.1;
  std::size_t negatives_per_positive = 2;
  std::size_t word_pool = 400;
  std::size_t brand_pool = 30;
  std::size_t category_pool = 8;
  std::uint64_t seed = 7;
};

struct PlantedData {
  corpus::EntityTable table_a;
  corpus::EntityTable table_b;
  corpus::LabeledPairs pairs;
};

PlantedData make_planted(const PlantedConfig& config);

// Companion word-vector file for the planted vocabulary, in the pretrained
// text format: synonym pairs get nearby vectors, mirroring what pretrained
// vectors provide for real synonyms.
void write_planted_embeddings(const PlantedConfig& config,
                              const std::filesystem::path& path,
                              std::size_t d_e, std::uint64_t seed);

}  // namespace emkat::evalharness
