#include "emkat/kat.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "emkat/error.hpp"

namespace emkat::kat {

namespace {

constexpr std::size_t kNoCap = 0;

double shannon_entropy(std::size_t pos, std::size_t total) {
  if (total == 0 || pos == 0 || pos == total) return 0.0;
  const double p = static_cast<double>(pos) / static_cast<double>(total);
  return -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
}

corpus::Label majority_label(std::size_t pos, std::size_t total) {
  // Ties resolve to non-match.
  return 2 * pos > total ? corpus::Label::match : corpus::Label::non_match;
}

struct SplitChoice {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double score = -std::numeric_limits<double>::infinity();
};

// Shared greedy skeleton: evaluates every midpoint threshold of every
// feature. `row_stat` maps a sample to an additive statistic (positive
// count for entropy, gradient for boosting); `score` rates a split from
// the left prefix aggregate. Ties break to the highest score, then lowest
// feature index, then smallest threshold (guaranteed by scan order).
template <typename StatFn, typename ScoreFn>
SplitChoice best_split(const Dataset& data, std::span<const std::size_t> rows,
                       StatFn&& row_stat, ScoreFn&& score) {
  SplitChoice best;
  std::vector<std::pair<double, double>> sorted;  // (feature value, stat)
  sorted.reserve(rows.size());
  for (std::size_t f = 0; f < data.width(); ++f) {
    sorted.clear();
    for (std::size_t r : rows) {
      sorted.emplace_back(data.features[r][f], row_stat(r));
    }
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double stat_left = 0.0;
    for (std::size_t i = 1; i < sorted.size(); ++i) {
      stat_left += sorted[i - 1].second;
      if (sorted[i].first == sorted[i - 1].first) continue;
      const double threshold =
          sorted[i - 1].first + (sorted[i].first - sorted[i - 1].first) / 2.0;
      const double s = score(stat_left, i);
      if (s > best.score) {
        best.found = true;
        best.score = s;
        best.feature = f;
        best.threshold = threshold;
      }
    }
  }
  return best;
}

void check_features(const Dataset& data) {
  if (data.size() == 0) throw UsageError("tree induction needs n >= 1 samples");
  if (data.features.size() != data.labels.size()) {
    throw UsageError("feature rows and labels differ in length");
  }
  const std::size_t width = data.width();
  for (const auto& row : data.features) {
    if (row.size() != width) {
      throw UsageError("feature rows have inconsistent widths");
    }
    for (double v : row) {
      if (std::isnan(v)) throw UsageError("features must not contain NaN");
    }
  }
}

double leaf_fraction(const Dataset& data, std::span<const std::size_t> rows) {
  std::size_t pos = 0;
  for (std::size_t r : rows) pos += data.labels[r] == corpus::Label::match;
  return static_cast<double>(pos) / static_cast<double>(rows.size());
}

}  // namespace

std::size_t KatTree::depth() const {
  std::function<std::size_t(std::size_t)> walk = [&](std::size_t i) {
    const Node& n = nodes[i];
    if (n.is_leaf) return std::size_t{0};
    return 1 + std::max(walk(n.left), walk(n.right));
  };
  return nodes.empty() ? 0 : walk(0);
}

std::size_t KatTree::leaf_count() const {
  std::size_t count = 0;
  for (const auto& n : nodes) count += n.is_leaf;
  return count;
}

KatTree id3_induce(const Dataset& data, std::size_t max_depth) {
  check_features(data);
  KatTree tree;
  tree.feature_count = data.width();
  tree.max_depth = max_depth;

  std::function<std::size_t(std::vector<std::size_t>, std::size_t)> grow =
      [&](std::vector<std::size_t> rows, std::size_t depth) -> std::size_t {
    std::size_t pos = 0;
    for (std::size_t r : rows) pos += data.labels[r] == corpus::Label::match;
    const std::size_t total = rows.size();

    auto make_leaf = [&]() {
      Node leaf;
      leaf.is_leaf = true;
      leaf.label = majority_label(pos, total);
      leaf.match_fraction =
          static_cast<double>(pos) / static_cast<double>(total);
      tree.nodes.push_back(leaf);
      return tree.nodes.size() - 1;
    };

    const bool pure = pos == 0 || pos == total;
    const bool capped = max_depth != kNoCap && depth >= max_depth;
    if (pure || capped) return make_leaf();

    const double parent_entropy = shannon_entropy(pos, total);
    SplitChoice choice = best_split(
        data, rows,
        [&](std::size_t r) {
          return data.labels[r] == corpus::Label::match ? 1.0 : 0.0;
        },
        [&](double left_pos_d, std::size_t left_n) {
          const std::size_t left_pos =
              static_cast<std::size_t>(left_pos_d + 0.5);
          const std::size_t right_n = total - left_n;
          const double weighted =
              (static_cast<double>(left_n) * shannon_entropy(left_pos, left_n) +
               static_cast<double>(right_n) *
                   shannon_entropy(pos - left_pos, right_n)) /
              static_cast<double>(total);
          return parent_entropy - weighted;
        });
    // No candidate thresholds (all features constant on this node).
    if (!choice.found) return make_leaf();

    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t r : rows) {
      (data.features[r][choice.feature] < choice.threshold ? left_rows
                                                           : right_rows)
          .push_back(r);
    }
    Node internal;
    internal.is_leaf = false;
    internal.feature = choice.feature;
    internal.threshold = choice.threshold;
    tree.nodes.push_back(internal);
    const std::size_t self = tree.nodes.size() - 1;
    const std::size_t left = grow(std::move(left_rows), depth + 1);
    const std::size_t right = grow(std::move(right_rows), depth + 1);
    tree.nodes[self].left = left;
    tree.nodes[self].right = right;
    return self;
  };

  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  grow(std::move(all), 0);

  // The recursion above appends parents before children, so node 0 is the
  // root already; nothing to reorder.
  return tree;
}

KatTree xgb_single_tree(const Dataset& data, std::size_t max_depth,
                        double lambda, double gamma) {
  check_features(data);
  KatTree tree;
  tree.feature_count = data.width();
  tree.max_depth = max_depth;

  // Base score 0.5 (zero logit): g = 0.5 - y, h = 0.25 for every sample.
  auto grad = [&](std::size_t r) {
    return data.labels[r] == corpus::Label::match ? -0.5 : 0.5;
  };
  constexpr double kHess = 0.25;

  std::function<std::size_t(std::vector<std::size_t>, std::size_t)> grow =
      [&](std::vector<std::size_t> rows, std::size_t depth) -> std::size_t {
    double g_total = 0.0;
    for (std::size_t r : rows) g_total += grad(r);
    const double h_total = kHess * static_cast<double>(rows.size());

    auto make_leaf = [&]() {
      Node leaf;
      leaf.is_leaf = true;
      const double weight = -g_total / (h_total + lambda);
      const double p = 1.0 / (1.0 + std::exp(-weight));
      leaf.label = p > 0.5 ? corpus::Label::match : corpus::Label::non_match;
      leaf.match_fraction = leaf_fraction(data, rows);
      tree.nodes.push_back(leaf);
      return tree.nodes.size() - 1;
    };

    if (max_depth != kNoCap && depth >= max_depth) return make_leaf();

    const double parent_term = g_total * g_total / (h_total + lambda);
    SplitChoice choice = best_split(
        data, rows, grad, [&](double g_left, std::size_t left_n) {
          const double h_left = kHess * static_cast<double>(left_n);
          const double g_right = g_total - g_left;
          const double h_right = h_total - h_left;
          return 0.5 * (g_left * g_left / (h_left + lambda) +
                        g_right * g_right / (h_right + lambda) - parent_term) -
                 gamma;
        });
    if (!choice.found || choice.score <= 0.0) return make_leaf();

    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t r : rows) {
      (data.features[r][choice.feature] < choice.threshold ? left_rows
                                                           : right_rows)
          .push_back(r);
    }
    Node internal;
    internal.is_leaf = false;
    internal.feature = choice.feature;
    internal.threshold = choice.threshold;
    tree.nodes.push_back(internal);
    const std::size_t self = tree.nodes.size() - 1;
    const std::size_t left = grow(std::move(left_rows), depth + 1);
    const std::size_t right = grow(std::move(right_rows), depth + 1);
    tree.nodes[self].left = left;
    tree.nodes[self].right = right;
    return self;
  };

  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  grow(std::move(all), 0);
  return tree;
}

corpus::Label predict(const KatTree& tree, std::span<const double> features) {
  if (features.size() != tree.feature_count) {
    throw UsageError("feature width " + std::to_string(features.size()) +
                     " does not match tree width " +
                     std::to_string(tree.feature_count));
  }
  std::size_t i = 0;
  while (!tree.nodes[i].is_leaf) {
    const Node& n = tree.nodes[i];
    i = features[n.feature] < n.threshold ? n.left : n.right;
  }
  return tree.nodes[i].label;
}

std::vector<Rule> extract_rules(const KatTree& tree,
                                std::span<const std::string> feature_names) {
  if (feature_names.size() != tree.feature_count) {
    throw UsageError("feature name count does not match tree width");
  }
  std::vector<Rule> rules;
  std::vector<Condition> path;
  std::function<void(std::size_t)> walk = [&](std::size_t i) {
    const Node& n = tree.nodes[i];
    if (n.is_leaf) {
      rules.push_back({path, n.label});
      return;
    }
    path.push_back({feature_names[n.feature], false, n.threshold});
    walk(n.left);
    path.back().greater_equal = true;
    walk(n.right);
    path.pop_back();
  };
  if (!tree.nodes.empty()) walk(0);
  return rules;
}

bool rule_fires(const Rule& rule, std::span<const double> features,
                std::span<const std::string> feature_names) {
  for (const auto& cond : rule.conditions) {
    auto it = std::find(feature_names.begin(), feature_names.end(), cond.feature);
    if (it == feature_names.end()) {
      throw UsageError("rule names unknown feature '" + cond.feature + "'");
    }
    const double v = features[static_cast<std::size_t>(
        std::distance(feature_names.begin(), it))];
    if (cond.greater_equal ? v < cond.threshold : v >= cond.threshold) {
      return false;
    }
  }
  return true;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string render_rule(const Rule& rule) {
  std::string out = "if ";
  if (rule.conditions.empty()) {
    out += "true";
  } else {
    for (std::size_t i = 0; i < rule.conditions.size(); ++i) {
      const auto& c = rule.conditions[i];
      if (i) out += " ∧ ";
      out += c.feature;
      out += c.greater_equal ? " >= " : " < ";
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%g", c.threshold);
      out += buf;
    }
  }
  out += " then ";
  out += rule.conclusion == corpus::Label::match ? "match" : "non-match";
  return out;
}

void save_tree(const KatTree& tree, std::span<const std::string> feature_names,
               const std::filesystem::path& path) {
  if (feature_names.size() != tree.feature_count) {
    throw UsageError("feature name count does not match tree width");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  out << "emkat.tree.v1\n";
  out << "max_depth " << tree.max_depth << '\n';
  out << "features " << tree.feature_count << '\n';
  for (const auto& name : feature_names) out << "name " << name << '\n';
  out << "nodes " << tree.nodes.size() << '\n';
  std::function<void(std::size_t)> walk = [&](std::size_t i) {
    const Node& n = tree.nodes[i];
    if (n.is_leaf) {
      out << "leaf " << (n.label == corpus::Label::match ? "match" : "non-match")
          << ' ' << format_double(n.match_fraction) << '\n';
      return;
    }
    out << "internal " << format_double(n.threshold) << ' '
        << feature_names[n.feature] << '\n';
    walk(n.left);
    walk(n.right);
  };
  if (!tree.nodes.empty()) walk(0);
}

LoadedTree load_tree(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::string line;
  auto next_line = [&]() -> std::string {
    if (!std::getline(in, line)) {
      throw DataError(path.string() + ": truncated tree file");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  if (next_line() != "emkat.tree.v1") {
    throw DataError(path.string() + ": not an emkat tree file");
  }
  LoadedTree out;
  std::size_t node_count = 0;
  {
    std::istringstream ss(next_line());
    std::string key;
    ss >> key >> out.tree.max_depth;
    if (key != "max_depth") throw DataError(path.string() + ": expected max_depth");
  }
  {
    std::istringstream ss(next_line());
    std::string key;
    ss >> key >> out.tree.feature_count;
    if (key != "features") throw DataError(path.string() + ": expected features");
  }
  for (std::size_t i = 0; i < out.tree.feature_count; ++i) {
    std::string l = next_line();
    if (l.rfind("name ", 0) != 0) {
      throw DataError(path.string() + ": expected feature name line");
    }
    out.feature_names.push_back(l.substr(5));
  }
  {
    std::istringstream ss(next_line());
    std::string key;
    ss >> key >> node_count;
    if (key != "nodes") throw DataError(path.string() + ": expected nodes");
  }
  out.tree.nodes.reserve(node_count);
  std::function<std::size_t()> parse_node = [&]() -> std::size_t {
    std::string l = next_line();
    std::istringstream ss(l);
    std::string kind;
    ss >> kind;
    if (kind == "leaf") {
      std::string label;
      Node n;
      n.is_leaf = true;
      ss >> label >> n.match_fraction;
      if (label != "match" && label != "non-match") {
        throw DataError(path.string() + ": bad leaf label '" + label + "'");
      }
      n.label = label == "match" ? corpus::Label::match : corpus::Label::non_match;
      out.tree.nodes.push_back(n);
      return out.tree.nodes.size() - 1;
    }
    if (kind != "internal") {
      throw DataError(path.string() + ": bad node kind '" + kind + "'");
    }
    Node n;
    n.is_leaf = false;
    ss >> n.threshold;
    std::string name;
    std::getline(ss, name);
    if (!name.empty() && name.front() == ' ') name.erase(0, 1);
    auto it = std::find(out.feature_names.begin(), out.feature_names.end(), name);
    if (it == out.feature_names.end()) {
      throw DataError(path.string() + ": unknown feature '" + name + "'");
    }
    n.feature = static_cast<std::size_t>(
        std::distance(out.feature_names.begin(), it));
    out.tree.nodes.push_back(n);
    const std::size_t self = out.tree.nodes.size() - 1;
    const std::size_t left = parse_node();
    const std::size_t right = parse_node();
    out.tree.nodes[self].left = left;
    out.tree.nodes[self].right = right;
    return self;
  };
  parse_node();
  if (out.tree.nodes.size() != node_count) {
    throw DataError(path.string() + ": node count mismatch");
  }
  return out;
}

}  // namespace emkat::kat
