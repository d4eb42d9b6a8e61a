#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "emkat/corpus.hpp"

namespace emkat::tokenize {

using TokenId = std::int32_t;

// Reserved ids, in the order they are persisted.
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kBegId = 1;
inline constexpr TokenId kEndId = 2;
inline constexpr TokenId kUnkId = 3;
inline constexpr std::size_t kReservedTokens = 4;

// Lowercases and splits on whitespace. Idempotent; empty input gives an
// empty sequence.
std::vector<std::string> normalize_value(std::string_view raw);

// Bidirectional word <-> id mapping with fixed reserved ids. Frozen after
// construction and shareable across threads.
class Vocab {
 public:
  Vocab();

  // Registers every normalized token of both tables, first-seen order.
  static Vocab build(const corpus::EntityTable& a, const corpus::EntityTable& b);
  static Vocab build(std::span<const corpus::EntityTable* const> tables);

  TokenId add(const std::string& word);
  TokenId id_of(std::string_view word) const;  // kUnkId when unknown
  bool contains(std::string_view word) const;
  const std::string& word_of(TokenId id) const;
  std::size_t size() const { return words_.size(); }

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> ids_;
};

// Tokenized attribute value framed as (BEG, w1..wk, END, PAD...) of exactly
// the configured length.
struct FramedValue {
  std::vector<TokenId> tokens;
  std::size_t original_length = 0;  // content token count before truncation

  std::size_t length() const { return tokens.size(); }
};

FramedValue frame(std::span<const std::string> tokens, std::size_t l,
                  const Vocab& vocab);

// Sparse normalized word-frequency vector, sorted by token id.
struct WbowTarget {
  std::vector<std::pair<TokenId, double>> weights;

  bool empty() const { return weights.empty(); }
};

WbowTarget wbow(std::span<const std::string> tokens, const Vocab& vocab);

// Per-attribute frame lengths; "title" (case-insensitive) defaults to 64,
// everything else to 32.
struct FrameLengths {
  std::size_t title_length = 64;
  std::size_t default_length = 32;
  std::map<std::string, std::size_t> overrides;

  std::size_t for_attribute(std::string_view name) const;
};

struct MaskedCell {
  std::size_t record_index;
  std::string record_id;
  std::size_t attribute;
  WbowTarget target;
};

// A corrupted copy of a table plus the reconstruction targets of every
// masked cell.
struct MaskedCorpus {
  corpus::EntityTable corrupted;
  std::vector<MaskedCell> cells;
};

// Masks each non-empty cell independently with probability mask_prob.
// Deterministic under seed. Errors when the table has no non-empty cell.
MaskedCorpus mask_corrupt(const corpus::EntityTable& table, double mask_prob,
                          std::uint64_t seed, const Vocab& vocab);

}  // namespace emkat::tokenize
