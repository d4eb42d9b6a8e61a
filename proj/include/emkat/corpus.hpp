#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace emkat::corpus {

struct Record {
  std::string id;
  std::vector<std::string> values;  // positionally aligned to attributes
};

// Schema-aligned collection of records. Immutable after construction.
struct EntityTable {
  std::string name;
  std::string id_column = "id";
  std::vector<std::string> attributes;
  std::vector<Record> records;

  std::size_t attribute_count() const { return attributes.size(); }

  // Index of the record with the given id, or npos.
  std::size_t index_of(std::string_view id) const;
  const Record& record_by_id(std::string_view id) const;  // DataError if absent

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  void rebuild_index();

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

enum class Label : std::uint8_t { non_match = 0, match = 1 };

struct LabeledPair {
  std::string left_id;
  std::string right_id;
  Label label;
};

struct LabeledPairs {
  std::vector<LabeledPair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

struct Split {
  LabeledPairs train;
  LabeledPairs valid;
  LabeledPairs test;
};

// Loads a comma-separated table with a header row. Missing cells become
// empty strings; attribute order is header order minus the id column.
EntityTable load_table(const std::filesystem::path& path,
                       std::string_view id_column = "id");

void save_table(const EntityTable& table, const std::filesystem::path& path);

// Loads labeled pairs with header (ltable_id, rtable_id, label), label in
// {0,1}. Source order is preserved; duplicate (left, right) pairs error.
LabeledPairs load_pairs(const std::filesystem::path& path);

// Checks that every pair id resolves in its table.
void validate_pairs(const LabeledPairs& pairs, const EntityTable& left,
                    const EntityTable& right);

// Low-resource split: train = first round(rate*n) pairs, valid = last
// round(0.20*n), test = the remainder in the middle. Rounding is half-up;
// train takes precedence, then valid.
Split split_low_resource(const LabeledPairs& pairs, double rate);

// Writes pair indices per partition, relative to the source pair order.
void save_split_manifest(const Split& split, std::size_t total_pairs,
                         const std::filesystem::path& path);

// Replaces each cell independently by "" with probability p. One RNG draw
// is consumed per cell (empty cells are no-ops) so the stream is
// positionally aligned to cells.
EntityTable inject_drop_noise(const EntityTable& table, double p,
                              std::uint64_t seed);

// Whole-record token-set Jaccard: whitespace tokens of all attribute
// values concatenated, set semantics.
double record_jaccard(const Record& a, const Record& b);

// Drops match pairs with record Jaccard >= match_threshold and non-match
// pairs with record Jaccard <= nonmatch_threshold.
LabeledPairs filter_trivial_pairs(const LabeledPairs& pairs,
                                  const EntityTable& left,
                                  const EntityTable& right,
                                  double match_threshold,
                                  double nonmatch_threshold);

}  // namespace emkat::corpus
