#include "emkat/tokenize.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>

#include "emkat/error.hpp"
#include "emkat/rng.hpp"

namespace emkat::tokenize {

namespace {

const std::array<std::string, kReservedTokens> kReservedWords = {
    "<PAD>", "<BEG>", "<END>", "<UNK>"};

std::string to_lower_ascii(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    out += static_cast<char>(
        std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

}  // namespace

std::vector<std::string> normalize_value(std::string_view raw) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : raw) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) {
        tokens.push_back(to_lower_ascii(current));
        current.clear();
      }
    } else {
      current += c;
    }
  }
  if (!current.empty()) tokens.push_back(to_lower_ascii(current));
  return tokens;
}

Vocab::Vocab() {
  for (const auto& w : kReservedWords) {
    ids_.emplace(w, static_cast<TokenId>(words_.size()));
    words_.push_back(w);
  }
}

Vocab Vocab::build(const corpus::EntityTable& a, const corpus::EntityTable& b) {
  const corpus::EntityTable* tables[] = {&a, &b};
  return build(tables);
}

Vocab Vocab::build(std::span<const corpus::EntityTable* const> tables) {
  Vocab vocab;
  for (const auto* table : tables) {
    for (const auto& rec : table->records) {
      for (const auto& value : rec.values) {
        for (const auto& tok : normalize_value(value)) vocab.add(tok);
      }
    }
  }
  return vocab;
}

TokenId Vocab::add(const std::string& word) {
  auto it = ids_.find(word);
  if (it != ids_.end()) return it->second;
  TokenId id = static_cast<TokenId>(words_.size());
  ids_.emplace(word, id);
  words_.push_back(word);
  return id;
}

TokenId Vocab::id_of(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocab::contains(std::string_view word) const {
  return ids_.find(std::string(word)) != ids_.end();
}

const std::string& Vocab::word_of(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw UsageError("token id out of range: " + std::to_string(id));
  }
  return words_[static_cast<std::size_t>(id)];
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  for (const auto& w : words_) out << w << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  Vocab vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no < kReservedTokens) {
      if (line != kReservedWords[line_no]) {
        throw DataError(path.string() + ": line " + std::to_string(line_no + 1) +
                        ": expected reserved token " + kReservedWords[line_no]);
      }
    } else {
      if (vocab.contains(line)) {
        throw DataError(path.string() + ": duplicate word '" + line + "'");
      }
      vocab.add(line);
    }
    ++line_no;
  }
  if (line_no < kReservedTokens) {
    throw DataError(path.string() + ": vocab file truncated");
  }
  return vocab;
}

FramedValue frame(std::span<const std::string> tokens, std::size_t l,
                  const Vocab& vocab) {
  if (l < 2) {
    throw UsageError("frame length must be at least 2, got " +
                     std::to_string(l));
  }
  FramedValue out;
  out.original_length = tokens.size();
  out.tokens.reserve(l);
  out.tokens.push_back(kBegId);
  const std::size_t content = std::min(tokens.size(), l - 2);
  for (std::size_t i = 0; i < content; ++i) {
    out.tokens.push_back(vocab.id_of(tokens[i]));
  }
  out.tokens.push_back(kEndId);
  out.tokens.resize(l, kPadId);
  return out;
}

WbowTarget wbow(std::span<const std::string> tokens, const Vocab& vocab) {
  WbowTarget target;
  if (tokens.empty()) return target;
  std::map<TokenId, std::size_t> counts;
  for (const auto& tok : tokens) ++counts[vocab.id_of(tok)];
  const double total = static_cast<double>(tokens.size());
  target.weights.reserve(counts.size());
  for (const auto& [id, count] : counts) {
    target.weights.emplace_back(id, static_cast<double>(count) / total);
  }
  return target;
}

std::size_t FrameLengths::for_attribute(std::string_view name) const {
  auto it = overrides.find(std::string(name));
  if (it != overrides.end()) return it->second;
  std::string lower;
  lower.reserve(name.size());
  for (char c : name) {
    lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return lower == "title" ? title_length : default_length;
}

MaskedCorpus mask_corrupt(const corpus::EntityTable& table, double mask_prob,
                          std::uint64_t seed, const Vocab& vocab) {
  if (!(mask_prob > 0.0) || !(mask_prob < 1.0)) {
    throw UsageError("mask probability must be in (0, 1), got " +
                     std::to_string(mask_prob));
  }
  bool any_content = false;
  for (const auto& rec : table.records) {
    for (const auto& v : rec.values) {
      if (!v.empty()) {
        any_content = true;
        break;
      }
    }
    if (any_content) break;
  }
  if (!any_content) {
    throw DataError("mask_corrupt: table '" + table.name +
                    "' has no non-empty cell");
  }

  MaskedCorpus out;
  out.corrupted = table;
  Rng rng(derive_seed(seed, "mask"));
  for (std::size_t r = 0; r < out.corrupted.records.size(); ++r) {
    auto& rec = out.corrupted.records[r];
    for (std::size_t a = 0; a < rec.values.size(); ++a) {
      bool mask = rng.bernoulli(mask_prob);
      if (!mask || rec.values[a].empty()) continue;
      auto tokens = normalize_value(rec.values[a]);
      out.cells.push_back({r, rec.id, a, wbow(tokens, vocab)});
      rec.values[a].clear();
    }
  }
  out.corrupted.rebuild_index();
  return out;
}

}  // namespace emkat::tokenize
