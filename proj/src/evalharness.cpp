#include "emkat/evalharness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "emkat/csv.hpp"
#include "emkat/error.hpp"
#include "emkat/rng.hpp"

namespace emkat::evalharness {

namespace {

class PhaseTimer {
 public:
  explicit PhaseTimer(std::map<std::string, double>& sink) : sink_(sink) {}

  template <typename Fn>
  auto time(const std::string& phase, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      sink_[phase] = elapsed(start);
    } else {
      auto out = fn();
      sink_[phase] = elapsed(start);
      return out;
    }
  }

 private:
  static double elapsed(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
  std::map<std::string, double>& sink_;
};

std::string format_fraction(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

EvalReport evaluate(std::span<const corpus::Label> predictions,
                    std::span<const corpus::Label> gold) {
  if (predictions.size() != gold.size()) {
    throw UsageError("predictions and gold labels differ in length: " +
                     std::to_string(predictions.size()) + " vs " +
                     std::to_string(gold.size()));
  }
  EvalReport r;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool pred = predictions[i] == corpus::Label::match;
    const bool truth = gold[i] == corpus::Label::match;
    if (pred && truth) ++r.tp;
    else if (pred && !truth) ++r.fp;
    else if (!pred && truth) ++r.fn;
    else ++r.tn;
  }
  r.precision = r.tp + r.fp == 0
                    ? 0.0
                    : static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
  r.recall = r.tp + r.fn == 0
                 ? 0.0
                 : static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  r.f1 = r.precision + r.recall == 0.0
             ? 0.0
             : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

std::string_view variant_name(TreeVariant v) {
  switch (v) {
    case TreeVariant::kat_id3: return "kat_id3";
    case TreeVariant::kat_xgb: return "kat_xgb";
    case TreeVariant::dt: return "dt";
  }
  throw UsageError("unknown tree variant");
}

TreeVariant variant_from_name(std::string_view name) {
  if (name == "kat_id3") return TreeVariant::kat_id3;
  if (name == "kat_xgb") return TreeVariant::kat_xgb;
  if (name == "dt") return TreeVariant::dt;
  throw UsageError("unknown tree variant '" + std::string(name) +
                   "' (expected kat_id3, kat_xgb, or dt)");
}

namespace {

// Everything after model training: filter, split, features, tree,
// predictions, evaluation. `table_a`/`table_b` are the original tables
// (used for trivial-pair filtering); `working_*` may carry drop noise.
void finish_pipeline(PipelineArtifacts& artifacts, PhaseTimer& timer,
                     const corpus::EntityTable& table_a,
                     const corpus::EntityTable& table_b,
                     const corpus::EntityTable& working_a,
                     const corpus::EntityTable& working_b,
                     const corpus::LabeledPairs& pairs,
                     const PipelineConfig& config) {
  corpus::LabeledPairs usable = pairs;
  if (config.filter_match_threshold && config.filter_nonmatch_threshold) {
    usable = corpus::filter_trivial_pairs(pairs, table_a, table_b,
                                          *config.filter_match_threshold,
                                          *config.filter_nonmatch_threshold);
  }
  artifacts.filtered_pair_count = usable.size();
  artifacts.split = corpus::split_low_resource(usable, config.train_rate);

  timer.time("features", [&] {
    artifacts.schema = cfc::build_schema(working_a, working_b);
    // Embed every record once; pairs reuse the cached rows.
    std::unordered_map<std::string, Eigen::MatrixXd> left_cache, right_cache;
    left_cache.reserve(working_a.records.size());
    right_cache.reserve(working_b.records.size());
    for (const auto& rec : working_a.records) {
      left_cache.emplace(rec.id, hif::hif_forward(artifacts.model, rec));
    }
    for (const auto& rec : working_b.records) {
      right_cache.emplace(rec.id, hif::hif_forward(artifacts.model, rec));
    }
    auto features_of = [&](const corpus::LabeledPairs& subset) {
      std::vector<std::vector<double>> out;
      out.reserve(subset.size());
      for (const auto& p : subset.pairs) {
        const auto& left = working_a.record_by_id(p.left_id);
        const auto& right = working_b.record_by_id(p.right_id);
        out.push_back(cfc::compare_pair(artifacts.schema, left.values,
                                        right.values, left_cache.at(p.left_id),
                                        right_cache.at(p.right_id)));
      }
      return out;
    };
    artifacts.train_features = features_of(artifacts.split.train);
    artifacts.test_features = features_of(artifacts.split.test);
  });

  timer.time("induce", [&] {
    kat::Dataset data;
    data.features = artifacts.train_features;
    for (const auto& p : artifacts.split.train.pairs) data.labels.push_back(p.label);
    switch (config.variant) {
      case TreeVariant::kat_id3:
        artifacts.tree = kat::id3_induce(data, config.kat_max_depth);
        break;
      case TreeVariant::kat_xgb:
        artifacts.tree = kat::xgb_single_tree(data, config.kat_max_depth,
                                              config.xgb_lambda,
                                              config.xgb_gamma);
        break;
      case TreeVariant::dt:
        artifacts.tree = kat::id3_induce(data, 0);
        break;
    }
    artifacts.rules = kat::extract_rules(artifacts.tree, artifacts.schema.names);
  });

  timer.time("predict", [&] {
    artifacts.test_predictions.reserve(artifacts.test_features.size());
    for (const auto& row : artifacts.test_features) {
      artifacts.test_predictions.push_back(kat::predict(artifacts.tree, row));
    }
  });

  std::vector<corpus::Label> gold;
  gold.reserve(artifacts.split.test.size());
  for (const auto& p : artifacts.split.test.pairs) gold.push_back(p.label);
  auto durations = artifacts.report.durations_s;
  artifacts.report = evaluate(artifacts.test_predictions, gold);
  artifacts.report.durations_s = std::move(durations);
}

}  // namespace

std::pair<corpus::EntityTable, corpus::EntityTable> apply_drop(
    const corpus::EntityTable& table_a, const corpus::EntityTable& table_b,
    const PipelineConfig& config) {
  if (config.drop_rate <= 0.0) return {table_a, table_b};
  return {corpus::inject_drop_noise(table_a, config.drop_rate,
                                    derive_seed(config.seed, "drop-a")),
          corpus::inject_drop_noise(table_b, config.drop_rate,
                                    derive_seed(config.seed, "drop-b"))};
}

PipelineArtifacts run_pipeline(const corpus::EntityTable& table_a,
                               const corpus::EntityTable& table_b,
                               const corpus::LabeledPairs& pairs,
                               const PipelineConfig& config) {
  corpus::validate_pairs(pairs, table_a, table_b);
  PipelineArtifacts artifacts;
  PhaseTimer timer(artifacts.report.durations_s);

  auto [working_a, working_b] = apply_drop(table_a, table_b, config);

  hif::HifConfig hif_config = config.hif;
  hif_config.seed = derive_seed(config.seed, "hif");
  artifacts.model = timer.time("hif_train", [&] {
    return hif::train_hif(working_a, working_b, hif_config,
                          config.frame_lengths, config.pretrained_embeddings);
  });

  finish_pipeline(artifacts, timer, table_a, table_b, working_a, working_b,
                  pairs, config);
  return artifacts;
}

PipelineArtifacts match_with_model(hif::HifModel model,
                                   const corpus::EntityTable& table_a,
                                   const corpus::EntityTable& table_b,
                                   const corpus::LabeledPairs& pairs,
                                   const PipelineConfig& config) {
  corpus::validate_pairs(pairs, table_a, table_b);
  if (model.attributes != table_a.attributes) {
    throw ModelError("model attributes do not match table '" + table_a.name +
                     "'");
  }
  PipelineArtifacts artifacts;
  PhaseTimer timer(artifacts.report.durations_s);
  artifacts.model = std::move(model);
  auto [working_a, working_b] = apply_drop(table_a, table_b, config);
  finish_pipeline(artifacts, timer, table_a, table_b, working_a, working_b,
                  pairs, config);
  return artifacts;
}

void persist_artifacts(const PipelineArtifacts& artifacts,
                       const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  hif::save_model(artifacts.model, out_dir / "model.txt", "vocab.txt");
  kat::save_tree(artifacts.tree, artifacts.schema.names, out_dir / "tree.txt");

  {
    std::ofstream rules(out_dir / "rules.txt", std::ios::binary);
    if (!rules) throw DataError("cannot write rules.txt");
    for (const auto& rule : artifacts.rules) {
      rules << kat::render_rule(rule) << '\n';
    }
  }
  {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(artifacts.split.test.size());
    for (std::size_t i = 0; i < artifacts.split.test.size(); ++i) {
      const auto& p = artifacts.split.test.pairs[i];
      rows.push_back({p.left_id, p.right_id,
                      artifacts.test_predictions[i] == corpus::Label::match
                          ? "1"
                          : "0"});
    }
    csv::write(out_dir / "predictions.csv",
               {"ltable_id", "rtable_id", "prediction"}, rows);
  }
  corpus::save_split_manifest(artifacts.split, artifacts.filtered_pair_count,
                              out_dir / "split.txt");
  write_report_files(artifacts.report, out_dir);

  auto labels_of = [](const corpus::LabeledPairs& pairs) {
    std::vector<corpus::Label> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs.pairs) out.push_back(p.label);
    return out;
  };
  cfc::export_features(out_dir / "features_train.csv", artifacts.schema,
                       artifacts.train_features,
                       labels_of(artifacts.split.train));
  cfc::export_features(out_dir / "features_test.csv", artifacts.schema,
                       artifacts.test_features, labels_of(artifacts.split.test));
}

std::vector<SweepPoint> sweep(const corpus::EntityTable& table_a,
                              const corpus::EntityTable& table_b,
                              const corpus::LabeledPairs& pairs,
                              const PipelineConfig& base, SweepAxis axis,
                              std::span<const double> values) {
  std::vector<SweepPoint> points;
  points.reserve(values.size());
  for (double v : values) {
    PipelineConfig config = base;
    if (axis == SweepAxis::train_rate) {
      config.train_rate = v;
    } else {
      config.drop_rate = v;
    }
    points.push_back({v, run_pipeline(table_a, table_b, pairs, config).report});
  }
  return points;
}

void write_sweep_csv(const std::filesystem::path& path,
                     std::span<const SweepPoint> points) {
  std::vector<std::string> header = {
      "value",       "precision", "recall",     "f1",
      "tp",          "fp",        "fn",         "tn",
      "hif_train_s", "features_s", "induce_s",  "predict_s"};
  std::vector<std::vector<std::string>> rows;
  char buf[32];
  for (const auto& point : points) {
    std::vector<std::string> row;
    std::snprintf(buf, sizeof(buf), "%g", point.value);
    row.emplace_back(buf);
    row.push_back(format_fraction(point.report.precision));
    row.push_back(format_fraction(point.report.recall));
    row.push_back(format_fraction(point.report.f1));
    row.push_back(std::to_string(point.report.tp));
    row.push_back(std::to_string(point.report.fp));
    row.push_back(std::to_string(point.report.fn));
    row.push_back(std::to_string(point.report.tn));
    for (const char* phase : {"hif_train", "features", "induce", "predict"}) {
      auto it = point.report.durations_s.find(phase);
      std::snprintf(buf, sizeof(buf), "%.3f",
                    it == point.report.durations_s.end() ? 0.0 : it->second);
      row.emplace_back(buf);
    }
    rows.push_back(std::move(row));
  }
  csv::write(path, header, rows);
}

std::string render_report(const EvalReport& report) {
  std::ostringstream out;
  out << "pairs " << report.total() << '\n';
  out << "tp " << report.tp << '\n';
  out << "fp " << report.fp << '\n';
  out << "fn " << report.fn << '\n';
  out << "tn " << report.tn << '\n';
  out << "precision " << format_fraction(report.precision) << '\n';
  out << "recall " << format_fraction(report.recall) << '\n';
  out << "f1 " << format_fraction(report.f1) << '\n';
  for (const auto& [phase, seconds] : report.durations_s) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", seconds);
    out << "duration_" << phase << "_s " << buf << '\n';
  }
  return out.str();
}

void write_report_files(const EvalReport& report,
                        const std::filesystem::path& out_dir) {
  {
    std::ofstream out(out_dir / "report.txt", std::ios::binary);
    if (!out) throw DataError("cannot write report.txt");
    out << render_report(report);
  }
  csv::write(out_dir / "metrics.csv",
             {"tp", "fp", "fn", "tn", "precision", "recall", "f1"},
             {{std::to_string(report.tp), std::to_string(report.fp),
               std::to_string(report.fn), std::to_string(report.tn),
               format_fraction(report.precision), format_fraction(report.recall),
               format_fraction(report.f1)}});
}

PlantedData make_planted(const PlantedConfig& config) {
  if (config.num_entities == 0) {
    throw UsageError("planted dataset needs at least one entity");
  }
  Rng rng(derive_seed(config.seed, "planted"));

  auto word = [](const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%03zu", prefix, i);
    return std::string(buf);
  };

  // Entities follow the shape of product-catalog benchmarks: several
  // mutually redundant text attributes plus numeric fields, so that a
  // dropped value usually survives somewhere else in the record. Table A
  // carries the canonical forms; table B is the noisy source (synonyms).
  struct Entity {
    std::vector<std::size_t> title_words;
    std::vector<std::size_t> extra_words;  // description-only tail
    std::vector<std::size_t> brand_words;
    std::string price;
    std::string year;
    std::string month;
    std::string category;
  };
  std::vector<Entity> entities;
  entities.reserve(config.num_entities);
  for (std::size_t k = 0; k < config.num_entities; ++k) {
    Entity e;
    const std::size_t len = 3 + rng.below(3);  // 3..5 words
    std::set<std::size_t> chosen;
    while (chosen.size() < len + 2) chosen.insert(rng.below(config.word_pool));
    e.title_words.assign(chosen.begin(), chosen.end());
    e.extra_words.assign(e.title_words.end() - 2, e.title_words.end());
    e.title_words.resize(len);
    e.brand_words.push_back(rng.below(config.brand_pool));
    if (rng.bernoulli(0.4)) e.brand_words.push_back(rng.below(config.brand_pool));
    char price[32];
    std::snprintf(price, sizeof(price), "%zu.%02zu", 10 + rng.below(990),
                  rng.below(100));
    e.price = price;
    e.year = std::to_string(1950 + rng.below(71));
    e.month = word("mon", rng.below(12));
    e.category = word("cat", rng.below(config.category_pool));
    entities.push_back(std::move(e));
  }

  // Synonym noise is value-level: a chosen value keeps its meaning but
  // appears in a different literal form (about half of its words flip to
  // their synonym forms).
  auto render_words = [&](const std::vector<std::size_t>& words,
                          const char* base, const char* synonym,
                          bool use_synonyms, Rng& noise) {
    std::string out;
    for (std::size_t w : words) {
      if (!out.empty()) out += ' ';
      out += use_synonyms && noise.bernoulli(0.5) ? word(synonym, w)
                                                  : word(base, w);
    }
    return out;
  };

  auto make_record = [&](const Entity& e, const std::string& id, Rng& noise,
                         bool noisy_side) {
    corpus::Record rec;
    rec.id = id;
    auto synonym_value = [&] {
      return noisy_side && noise.bernoulli(config.synonym_rate);
    };
    std::string title =
        render_words(e.title_words, "w", "syn", synonym_value(), noise);
    std::string alias =
        render_words(e.title_words, "w", "syn", synonym_value(), noise);
    std::vector<std::size_t> desc_words(e.title_words.begin(),
                                        e.title_words.begin() + 2);
    desc_words.insert(desc_words.end(), e.extra_words.begin(),
                      e.extra_words.end());
    std::string description =
        render_words(desc_words, "w", "syn", synonym_value(), noise);
    std::string brand =
        render_words(e.brand_words, "brand", "mfr", synonym_value(), noise);
    std::string maker =
        render_words(e.brand_words, "brand", "mfr", synonym_value(), noise);
    std::string released = e.month + " " + e.year;
    // Misplacement: the brand drifts into the title, leaving brand empty.
    if (noise.bernoulli(config.misplace_rate)) {
      title += " " + brand;
      brand.clear();
    }
    rec.values = {title,   alias,  description, brand,      maker,
                  e.price, e.year, released,    e.category};
    for (auto& value : rec.values) {
      if (noise.bernoulli(config.missing_rate)) value.clear();
    }
    return rec;
  };

  PlantedData data;
  data.table_a.name = "planted_a";
  data.table_b.name = "planted_b";
  data.table_a.attributes = {"title", "alias", "description", "brand", "maker",
                             "price", "year",  "released",    "category"};
  data.table_b.attributes = data.table_a.attributes;

  Rng noise_a(derive_seed(config.seed, "planted-noise-a"));
  Rng noise_b(derive_seed(config.seed, "planted-noise-b"));
  for (std::size_t k = 0; k < config.num_entities; ++k) {
    data.table_a.records.push_back(
        make_record(entities[k], "a" + std::to_string(k), noise_a, false));
    data.table_b.records.push_back(
        make_record(entities[k], "b" + std::to_string(k), noise_b, true));
  }
  data.table_a.rebuild_index();
  data.table_b.rebuild_index();

  for (std::size_t k = 0; k < config.num_entities; ++k) {
    data.pairs.pairs.push_back({"a" + std::to_string(k),
                                "b" + std::to_string(k),
                                corpus::Label::match});
  }
  std::set<std::pair<std::size_t, std::size_t>> negatives;
  Rng neg_rng(derive_seed(config.seed, "planted-negatives"));
  const std::size_t wanted =
      config.num_entities * config.negatives_per_positive;
  std::size_t attempts = 0;
  while (negatives.size() < wanted && attempts < wanted * 50) {
    ++attempts;
    const std::size_t i = neg_rng.below(config.num_entities);
    const std::size_t j = neg_rng.below(config.num_entities);
    if (i == j) continue;
    negatives.emplace(i, j);
  }
  for (const auto& [i, j] : negatives) {
    data.pairs.pairs.push_back({"a" + std::to_string(i),
                                "b" + std::to_string(j),
                                corpus::Label::non_match});
  }
  Rng shuffle_rng(derive_seed(config.seed, "planted-shuffle"));
  shuffle_rng.shuffle(data.pairs.pairs);
  return data;
}

void write_planted_embeddings(const PlantedConfig& config,
                              const std::filesystem::path& path,
                              std::size_t d_e, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "planted-emb"));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  char fmt[64];
  auto emit = [&](const std::string& w, const std::vector<double>& v) {
    out << w;
    for (double x : v) {
      std::snprintf(fmt, sizeof(fmt), " %.8g", x);
      out << fmt;
    }
    out << '\n';
  };
  auto random_vec = [&] {
    std::vector<double> v(d_e);
    for (auto& x : v) x = rng.uniform(-0.3, 0.3);
    return v;
  };
  char buf[32];
  auto emit_synonym_pair = [&](const char* base, const char* synonym,
                               std::size_t i) {
    auto v = random_vec();
    std::snprintf(buf, sizeof(buf), "%s%03zu", base, i);
    emit(buf, v);
    for (auto& x : v) x += rng.uniform(-0.05, 0.05);
    std::snprintf(buf, sizeof(buf), "%s%03zu", synonym, i);
    emit(buf, v);
  };
  for (std::size_t i = 0; i < config.word_pool; ++i) {
    emit_synonym_pair("w", "syn", i);
  }
  for (std::size_t i = 0; i < config.brand_pool; ++i) {
    emit_synonym_pair("brand", "mfr", i);
  }
  for (std::size_t i = 0; i < config.category_pool; ++i) {
    std::snprintf(buf, sizeof(buf), "cat%03zu", i);
    emit(buf, random_vec());
  }
  for (std::size_t i = 0; i < 12; ++i) {
    std::snprintf(buf, sizeof(buf), "mon%03zu", i);
    emit(buf, random_vec());
  }
  for (int year = 1950; year <= 2020; ++year) {
    emit(std::to_string(year), random_vec());
  }
}

}  // namespace emkat::evalharness
