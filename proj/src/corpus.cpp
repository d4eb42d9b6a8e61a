#include "emkat/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "emkat/csv.hpp"
#include "emkat/error.hpp"
#include "emkat/rng.hpp"

namespace emkat::corpus {

namespace {

std::size_t round_half_up(double x) {
  return static_cast<std::size_t>(std::floor(x + 0.5));
}

std::string trimmed(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::size_t EntityTable::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? npos : it->second;
}

const Record& EntityTable::record_by_id(std::string_view id) const {
  std::size_t i = index_of(id);
  if (i == npos) {
    throw DataError("table " + name + ": unknown record id '" +
                    std::string(id) + "'");
  }
  return records[i];
}

void EntityTable::rebuild_index() {
  index_.clear();
  index_.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, inserted] = index_.emplace(records[i].id, i);
    if (!inserted) {
      throw DataError("table " + name + ": duplicate record id '" +
                      records[i].id + "'");
    }
  }
}

EntityTable load_table(const std::filesystem::path& path,
                       std::string_view id_column) {
  csv::Table raw = csv::read(path);
  EntityTable table;
  table.name = path.stem().string();
  table.id_column = std::string(id_column);

  std::size_t id_pos = EntityTable::npos;
  for (std::size_t i = 0; i < raw.header.size(); ++i) {
    if (raw.header[i] == id_column) {
      id_pos = i;
    } else {
      table.attributes.push_back(raw.header[i]);
    }
  }
  if (id_pos == EntityTable::npos) {
    throw DataError(path.string() + ": id column '" + std::string(id_column) +
                    "' not found in header");
  }

  table.records.reserve(raw.rows.size());
  for (std::size_t r = 0; r < raw.rows.size(); ++r) {
    const auto& row = raw.rows[r];
    if (row.size() != raw.header.size()) {
      throw DataError(path.string() + ": row " + std::to_string(r + 1) +
                      " has " + std::to_string(row.size()) + " cells, expected " +
                      std::to_string(raw.header.size()));
    }
    Record rec;
    rec.id = row[id_pos];
    rec.values.reserve(table.attributes.size());
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i != id_pos) rec.values.push_back(row[i]);
    }
    table.records.push_back(std::move(rec));
  }
  table.rebuild_index();
  return table;
}

void save_table(const EntityTable& table, const std::filesystem::path& path) {
  std::vector<std::string> header;
  header.push_back(table.id_column);
  header.insert(header.end(), table.attributes.begin(), table.attributes.end());
  std::vector<std::vector<std::string>> rows;
  rows.reserve(table.records.size());
  for (const auto& rec : table.records) {
    std::vector<std::string> row;
    row.reserve(header.size());
    row.push_back(rec.id);
    row.insert(row.end(), rec.values.begin(), rec.values.end());
    rows.push_back(std::move(row));
  }
  csv::write(path, header, rows);
}

LabeledPairs load_pairs(const std::filesystem::path& path) {
  csv::Table raw = csv::read(path);
  if (raw.header.size() != 3) {
    throw DataError(path.string() + ": expected 3 columns " +
                    "(ltable_id,rtable_id,label), got " +
                    std::to_string(raw.header.size()));
  }
  LabeledPairs out;
  out.pairs.reserve(raw.rows.size());
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t r = 0; r < raw.rows.size(); ++r) {
    const auto& row = raw.rows[r];
    if (row.size() != 3) {
      throw DataError(path.string() + ": row " + std::to_string(r + 1) +
                      " has " + std::to_string(row.size()) + " cells, expected 3");
    }
    std::string label = trimmed(row[2]);
    Label l;
    if (label == "0") {
      l = Label::non_match;
    } else if (label == "1") {
      l = Label::match;
    } else {
      throw DataError(path.string() + ": row " + std::to_string(r + 1) +
                      ": label '" + row[2] + "' is not in {0,1}");
    }
    if (!seen.emplace(row[0], row[1]).second) {
      throw DataError(path.string() + ": duplicate pair (" + row[0] + ", " +
                      row[1] + ") at row " + std::to_string(r + 1));
    }
    out.pairs.push_back({row[0], row[1], l});
  }
  return out;
}

void validate_pairs(const LabeledPairs& pairs, const EntityTable& left,
                    const EntityTable& right) {
  for (const auto& p : pairs.pairs) {
    if (left.index_of(p.left_id) == EntityTable::npos) {
      throw DataError("pair id '" + p.left_id + "' not found in table " +
                      left.name);
    }
    if (right.index_of(p.right_id) == EntityTable::npos) {
      throw DataError("pair id '" + p.right_id + "' not found in table " +
                      right.name);
    }
  }
}

Split split_low_resource(const LabeledPairs& pairs, double rate) {
  if (!(rate > 0.0) || rate > 0.8) {
    throw UsageError("split rate must be in (0, 0.8], got " +
                     std::to_string(rate));
  }
  const std::size_t n = pairs.size();
  std::size_t n_train = std::min(n, round_half_up(rate * static_cast<double>(n)));
  std::size_t n_valid =
      std::min(n - n_train, round_half_up(0.20 * static_cast<double>(n)));

  Split split;
  split.train.pairs.assign(pairs.pairs.begin(), pairs.pairs.begin() + n_train);
  split.valid.pairs.assign(pairs.pairs.end() - n_valid, pairs.pairs.end());
  split.test.pairs.assign(pairs.pairs.begin() + n_train,
                          pairs.pairs.end() - n_valid);
  return split;
}

void save_split_manifest(const Split& split, std::size_t total_pairs,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  const std::size_t n_train = split.train.size();
  const std::size_t n_valid = split.valid.size();
  const std::size_t n_test = split.test.size();
  out << "emkat.split.v1\n";
  auto emit = [&out](std::string_view part, std::size_t begin, std::size_t end) {
    out << part << ":";
    for (std::size_t i = begin; i < end; ++i) out << ' ' << i;
    out << '\n';
  };
  emit("train", 0, n_train);
  emit("test", n_train, n_train + n_test);
  emit("valid", total_pairs - n_valid, total_pairs);
}

EntityTable inject_drop_noise(const EntityTable& table, double p,
                              std::uint64_t seed) {
  if (p < 0.0 || p > 1.0) {
    throw UsageError("drop probability must be in [0, 1], got " +
                     std::to_string(p));
  }
  EntityTable out = table;
  Rng rng(derive_seed(seed, "drop"));
  for (auto& rec : out.records) {
    for (auto& value : rec.values) {
      bool drop = rng.bernoulli(p);
      if (drop && !value.empty()) value.clear();
    }
  }
  out.rebuild_index();
  return out;
}

double record_jaccard(const Record& a, const Record& b) {
  auto tokens = [](const Record& r) {
    std::set<std::string> out;
    for (const auto& value : r.values) {
      std::istringstream ss(value);
      std::string tok;
      while (ss >> tok) out.insert(tok);
    }
    return out;
  };
  std::set<std::string> ta = tokens(a), tb = tokens(b);
  if (ta.empty() && tb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& t : ta) inter += tb.count(t);
  std::size_t uni = ta.size() + tb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

LabeledPairs filter_trivial_pairs(const LabeledPairs& pairs,
                                  const EntityTable& left,
                                  const EntityTable& right,
                                  double match_threshold,
                                  double nonmatch_threshold) {
  if (match_threshold < 0.0 || match_threshold > 1.0 ||
      nonmatch_threshold < 0.0 || nonmatch_threshold > 1.0) {
    throw UsageError("trivial-pair thresholds must be in [0, 1]");
  }
  LabeledPairs out;
  out.pairs.reserve(pairs.size());
  for (const auto& p : pairs.pairs) {
    double j = record_jaccard(left.record_by_id(p.left_id),
                              right.record_by_id(p.right_id));
    bool drop = (p.label == Label::match && j >= match_threshold) ||
                (p.label == Label::non_match && j <= nonmatch_threshold);
    if (!drop) out.pairs.push_back(p);
  }
  return out;
}

}  // namespace emkat::corpus
