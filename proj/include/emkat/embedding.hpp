#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>

#include "emkat/tokenize.hpp"

namespace emkat::embedding {

// Word-vector table indexed by vocab id. The PAD row is always the zero
// vector and must never be updated by training.
struct EmbeddingStore {
  Eigen::MatrixXd vectors;  // N x d_e

  std::size_t rows() const { return static_cast<std::size_t>(vectors.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }
};

// Reads `word v1 ... v_d` lines (optional `count dim` header line). Vocab
// words absent from the file get seeded uniform(-0.05, 0.05) rows; PAD is
// forced to zero.
EmbeddingStore load_pretrained(const std::filesystem::path& path,
                               const tokenize::Vocab& vocab,
                               std::uint64_t seed);

// Seeded uniform(-0.05, 0.05) rows for every vocab id; PAD zero.
EmbeddingStore random_init(const tokenize::Vocab& vocab, std::size_t d_e,
                           std::uint64_t seed);

// Look-up-table: row t is the embedding of token t. Shape l x d_e.
Eigen::MatrixXd embed_value(const tokenize::FramedValue& framed,
                            const EmbeddingStore& store);

}  // namespace emkat::embedding
