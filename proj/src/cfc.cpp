#include "emkat/cfc.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "emkat/csv.hpp"
#include "emkat/error.hpp"

namespace emkat::cfc {

namespace {

std::vector<std::string> attribute_column(const corpus::EntityTable& t,
                                          std::size_t attr) {
  std::vector<std::string> out;
  out.reserve(t.records.size());
  for (const auto& rec : t.records) out.push_back(rec.values[attr]);
  return out;
}

}  // namespace

FeatureSchema build_schema(const corpus::EntityTable& a,
                           const corpus::EntityTable& b) {
  if (a.attributes != b.attributes) {
    throw DataError("tables '" + a.name + "' and '" + b.name +
                    "' have different attribute lists");
  }
  FeatureSchema schema;
  schema.attributes = a.attributes;
  for (std::size_t i = 0; i < a.attributes.size(); ++i) {
    const auto left = attribute_column(a, i);
    const auto right = attribute_column(b, i);
    const auto category =
        metrics::classify_attribute(left, right, a.attributes[i]);
    const auto suite = metrics::metric_suite_for(category);
    schema.per_attribute.push_back(
        {category, {suite.begin(), suite.end()}});
  }
  for (std::size_t i = 0; i < schema.attributes.size(); ++i) {
    for (const auto id : schema.per_attribute[i].suite) {
      schema.names.push_back(schema.attributes[i] + "::raw::" +
                             std::string(metrics::metric_name(id)));
    }
  }
  for (std::size_t i = 0; i < schema.attributes.size(); ++i) {
    for (const auto& m : kEmbeddingMetricNames) {
      schema.names.push_back(schema.attributes[i] + "::emb::" + std::string(m));
    }
  }
  return schema;
}

EmbeddingSimilarities embedding_similarities(const Eigen::VectorXd& u,
                                             const Eigen::VectorXd& v) {
  if (u.size() != v.size()) {
    throw UsageError("embedding similarity needs equal dimensions, got " +
                     std::to_string(u.size()) + " and " +
                     std::to_string(v.size()));
  }
  if (u.size() < 2) {
    throw UsageError("embedding similarity needs dimension >= 2");
  }
  EmbeddingSimilarities out{};

  const double nu = u.norm();
  const double nv = v.norm();
  out.cosine = (nu == 0.0 || nv == 0.0) ? 0.0 : u.dot(v) / (nu * nv);

  out.l2 = (u - v).norm();

  const Eigen::VectorXd du = u.array() - u.mean();
  const Eigen::VectorXd dv = v.array() - v.mean();
  const double su = du.norm();
  const double sv = dv.norm();
  out.pearson = (su == 0.0 || sv == 0.0) ? 0.0 : du.dot(dv) / (su * sv);
  return out;
}

std::vector<double> compare_pair(const FeatureSchema& schema,
                                 std::span<const std::string> left_values,
                                 std::span<const std::string> right_values,
                                 const Eigen::MatrixXd& left_embedding,
                                 const Eigen::MatrixXd& right_embedding) {
  const std::size_t m = schema.attributes.size();
  if (left_values.size() != m || right_values.size() != m) {
    throw UsageError("record arity does not match schema attribute count");
  }
  if (static_cast<std::size_t>(left_embedding.rows()) != m ||
      static_cast<std::size_t>(right_embedding.rows()) != m) {
    throw UsageError("embedding rows do not match schema attribute count");
  }
  std::vector<double> features;
  features.reserve(schema.width());
  for (std::size_t i = 0; i < m; ++i) {
    for (const auto id : schema.per_attribute[i].suite) {
      const auto score = metrics::apply_metric(id, left_values[i],
                                               right_values[i]);
      features.push_back(score ? *score : kMissingSentinel);
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    const auto sims = embedding_similarities(
        left_embedding.row(static_cast<Eigen::Index>(i)).transpose(),
        right_embedding.row(static_cast<Eigen::Index>(i)).transpose());
    features.push_back(sims.cosine);
    features.push_back(sims.l2);
    features.push_back(sims.pearson);
  }
  return features;
}

std::vector<double> compare_pair(const FeatureSchema& schema,
                                 const corpus::Record& left,
                                 const corpus::Record& right,
                                 const hif::HifModel& model) {
  if (model.attributes != schema.attributes) {
    throw ModelError("model attributes do not match feature schema");
  }
  return compare_pair(schema, left.values, right.values,
                      hif::hif_forward(model, left),
                      hif::hif_forward(model, right));
}

void export_features(const std::filesystem::path& path,
                     const FeatureSchema& schema,
                     std::span<const std::vector<double>> rows,
                     std::span<const corpus::Label> labels) {
  if (rows.size() != labels.size()) {
    throw UsageError("feature rows and labels differ in length");
  }
  std::vector<std::string> header = schema.names;
  header.push_back("label");
  std::vector<std::vector<std::string>> cells;
  cells.reserve(rows.size());
  char buf[64];
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != schema.width()) {
      throw UsageError("feature row width does not match schema");
    }
    std::vector<std::string> row;
    row.reserve(rows[r].size() + 1);
    for (double v : rows[r]) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      row.emplace_back(buf);
    }
    row.push_back(labels[r] == corpus::Label::match ? "1" : "0");
    cells.push_back(std::move(row));
  }
  csv::write(path, header, cells);
}

}  // namespace emkat::cfc
