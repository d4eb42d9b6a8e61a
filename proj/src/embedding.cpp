#include "emkat/embedding.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

#include "emkat/error.hpp"
#include "emkat/rng.hpp"

namespace emkat::embedding {

namespace {

void fill_random_row(Eigen::MatrixXd& m, Eigen::Index row, Rng& rng) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    m(row, c) = rng.uniform(-0.05, 0.05);
  }
}

bool parse_double(const std::string& s, double& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

EmbeddingStore load_pretrained(const std::filesystem::path& path,
                               const tokenize::Vocab& vocab,
                               std::uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());

  std::vector<std::pair<std::string, std::vector<double>>> entries;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    std::vector<double> vec;
    std::string tok;
    bool numeric = true;
    while (ss >> tok) {
      double v;
      if (!parse_double(tok, v)) {
        numeric = false;
        break;
      }
      vec.push_back(v);
    }
    // Optional header: two integers (count, dim) on the first line.
    if (line_no == 1 && vec.size() == 1 && numeric) {
      double count;
      if (parse_double(word, count)) continue;
    }
    if (!numeric || vec.empty()) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) +
                      ": malformed vector entry");
    }
    if (dim == 0) {
      dim = vec.size();
    } else if (vec.size() != dim) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) +
                      ": vector length " + std::to_string(vec.size()) +
                      " differs from " + std::to_string(dim));
    }
    if (vocab.contains(word)) entries.emplace_back(word, std::move(vec));
  }
  if (dim == 0) {
    throw DataError(path.string() + ": no vector entries found");
  }

  EmbeddingStore store;
  store.vectors = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(vocab.size()),
                                        static_cast<Eigen::Index>(dim));
  std::vector<bool> filled(vocab.size(), false);
  for (const auto& [word, vec] : entries) {
    auto id = vocab.id_of(word);
    for (std::size_t c = 0; c < dim; ++c) {
      store.vectors(id, static_cast<Eigen::Index>(c)) = vec[c];
    }
    filled[static_cast<std::size_t>(id)] = true;
  }
  Rng rng(derive_seed(seed, "emb-init"));
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    if (!filled[id]) fill_random_row(store.vectors, static_cast<Eigen::Index>(id), rng);
  }
  store.vectors.row(tokenize::kPadId).setZero();
  return store;
}

EmbeddingStore random_init(const tokenize::Vocab& vocab, std::size_t d_e,
                           std::uint64_t seed) {
  if (d_e < 1) throw UsageError("embedding dimension must be positive");
  EmbeddingStore store;
  store.vectors = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(vocab.size()),
                                        static_cast<Eigen::Index>(d_e));
  Rng rng(derive_seed(seed, "emb-init"));
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    if (id == static_cast<std::size_t>(tokenize::kPadId)) continue;
    fill_random_row(store.vectors, static_cast<Eigen::Index>(id), rng);
  }
  return store;
}

Eigen::MatrixXd embed_value(const tokenize::FramedValue& framed,
                            const EmbeddingStore& store) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(framed.tokens.size()),
                      static_cast<Eigen::Index>(store.dim()));
  for (std::size_t t = 0; t < framed.tokens.size(); ++t) {
    auto id = framed.tokens[t];
    if (id < 0 || static_cast<std::size_t>(id) >= store.rows()) {
      throw UsageError("token id out of embedding range: " + std::to_string(id));
    }
    out.row(static_cast<Eigen::Index>(t)) = store.vectors.row(id);
  }
  return out;
}

}  // namespace emkat::embedding
