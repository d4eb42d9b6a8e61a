#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "emkat/corpus.hpp"

namespace emkat::kat {

// Binary threshold tree. Internal nodes send value < threshold left and
// value >= threshold right. Immutable after induction.
struct Node {
  bool is_leaf = true;
  // internal
  std::size_t feature = 0;
  double threshold = 0.0;
  std::size_t left = 0;   // child indices into KatTree::nodes
  std::size_t right = 0;
  // leaf
  corpus::Label label = corpus::Label::non_match;
  double match_fraction = 0.0;  // fraction of match labels at induction time
};

struct KatTree {
  std::vector<Node> nodes;  // nodes[0] is the root
  std::size_t feature_count = 0;
  std::size_t max_depth = 0;  // 0 means uncapped

  std::size_t depth() const;
  std::size_t leaf_count() const;
};

// Dense feature matrix, one row per sample.
struct Dataset {
  std::vector<std::vector<double>> features;
  std::vector<corpus::Label> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t width() const {
    return features.empty() ? 0 : features.front().size();
  }
};

// Entropy-gain induction with midpoint thresholds (natural log). Splits
// impure nodes as long as a candidate threshold exists, so structurally
// zero-gain splits (XOR-style data) still recurse; ties break to the
// highest gain, then lowest feature index, then smallest threshold.
// max_depth 0 grows without a cap.
KatTree id3_induce(const Dataset& data, std::size_t max_depth);

// Single-tree second-order logistic boosting: split gain
//   0.5 [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)] - gamma
// with gradients from base score 0.5; leaf weight -G/(H+lambda); prediction
// sigmoid(weight) thresholded at 0.5.
KatTree xgb_single_tree(const Dataset& data, std::size_t max_depth,
                        double lambda = 1.0, double gamma = 0.0);

corpus::Label predict(const KatTree& tree, std::span<const double> features);

struct Condition {
  std::string feature;
  bool greater_equal = false;  // false: "<", true: ">="
  double threshold = 0.0;
};

struct Rule {
  std::vector<Condition> conditions;  // root-to-leaf order
  corpus::Label conclusion = corpus::Label::non_match;
};

// One rule per leaf, in left-to-right leaf order.
std::vector<Rule> extract_rules(const KatTree& tree,
                                std::span<const std::string> feature_names);

// True when every condition holds for the feature vector.
bool rule_fires(const Rule& rule, std::span<const double> features,
                std::span<const std::string> feature_names);

std::string render_rule(const Rule& rule);

void save_tree(const KatTree& tree, std::span<const std::string> feature_names,
               const std::filesystem::path& path);

struct LoadedTree {
  KatTree tree;
  std::vector<std::string> feature_names;
};

LoadedTree load_tree(const std::filesystem::path& path);

}  // namespace emkat::kat
