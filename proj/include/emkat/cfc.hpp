#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "emkat/corpus.hpp"
#include "emkat/hif.hpp"
#include "emkat/metrics.hpp"

namespace emkat::cfc {

// Raw scores that are undefined (a failed numeric parse for the absolute
// distance) are encoded as this sentinel; all legitimate scores are >= 0.
inline constexpr double kMissingSentinel = -1.0;

inline constexpr std::array<std::string_view, 3> kEmbeddingMetricNames = {
    "cosine", "l2", "pearson"};

struct AttributeFeatures {
  metrics::AttributeCategory category;
  std::vector<metrics::MetricId> suite;
};

// Deterministic per-dataset feature layout: all raw features in attribute
// order, then all embedding features in attribute order x (cosine, l2,
// pearson). Names follow "attr::source::metric".
struct FeatureSchema {
  std::vector<std::string> attributes;
  std::vector<AttributeFeatures> per_attribute;
  std::vector<std::string> names;

  std::size_t width() const { return names.size(); }
};

FeatureSchema build_schema(const corpus::EntityTable& a,
                           const corpus::EntityTable& b);

struct EmbeddingSimilarities {
  double cosine;
  double l2;
  double pearson;
};

// Cosine (zero vector -> 0), unnormalized L2 distance, and Pearson
// correlation of coordinates (constant vector -> 0). Dimensions must match
// and be >= 2.
EmbeddingSimilarities embedding_similarities(const Eigen::VectorXd& u,
                                             const Eigen::VectorXd& v);

// One comparison feature vector: raw metric scores on the attribute value
// strings, then embedding similarities on the per-attribute HIF rows.
std::vector<double> compare_pair(const FeatureSchema& schema,
                                 std::span<const std::string> left_values,
                                 std::span<const std::string> right_values,
                                 const Eigen::MatrixXd& left_embedding,
                                 const Eigen::MatrixXd& right_embedding);

// Convenience overload that runs the model forward on both records.
std::vector<double> compare_pair(const FeatureSchema& schema,
                                 const corpus::Record& left,
                                 const corpus::Record& right,
                                 const hif::HifModel& model);

// Feature matrix export: header = feature names plus "label", one row per
// pair.
void export_features(const std::filesystem::path& path,
                     const FeatureSchema& schema,
                     std::span<const std::vector<double>> rows,
                     std::span<const corpus::Label> labels);

}  // namespace emkat::cfc
