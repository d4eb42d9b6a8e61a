#include "emkat/run_config.hpp"

#include <charconv>
#include <fstream>

#include "emkat/error.hpp"

namespace emkat::runconfig {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': '" + value +
                     "' is not a number");
  }
}

std::size_t to_size(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    long long v = std::stoll(value, &used);
    if (used != value.size() || v < 0) throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': '" + value +
                     "' is not a nonnegative integer");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': '" + value +
                     "' is not an integer");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw UsageError("config key '" + key + "': '" + value +
                   "' is not a boolean (use 0/1)");
}

}  // namespace

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open config file: " + path.string());

  RunConfig cfg;
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string text = trim(line);
    if (auto hash = text.find('#'); hash != std::string::npos) {
      text = trim(text.substr(0, hash));
    }
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') {
        throw UsageError(path.string() + ":" + std::to_string(line_no) +
                         ": malformed section header");
      }
      section = text.substr(1, text.size() - 2);
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(line_no) +
                       ": expected key = value");
    }
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;

    auto& p = cfg.pipeline;
    if (full == "data.table_a") cfg.table_a = value;
    else if (full == "data.table_b") cfg.table_b = value;
    else if (full == "data.pairs") cfg.pairs = value;
    else if (full == "data.id_column") cfg.id_column = value;
    else if (full == "data.embeddings") p.pretrained_embeddings = value;
    else if (full == "data.out") cfg.out = value;
    else if (full == "split.rate") p.train_rate = to_double(full, value);
    else if (full == "noise.drop_rate") p.drop_rate = to_double(full, value);
    else if (full == "filter.match_threshold")
      p.filter_match_threshold = to_double(full, value);
    else if (full == "filter.nonmatch_threshold")
      p.filter_nonmatch_threshold = to_double(full, value);
    else if (full == "hif.d_e") p.hif.d_e = to_size(full, value);
    else if (full == "hif.d_a") p.hif.d_a = to_size(full, value);
    else if (full == "hif.d_k") p.hif.d_k = to_size(full, value);
    else if (full == "hif.d_v") p.hif.d_v = to_size(full, value);
    else if (full == "hif.d") p.hif.d = to_size(full, value);
    else if (full == "hif.num_heads") p.hif.num_heads = to_size(full, value);
    else if (full == "hif.mask_prob") p.hif.mask_prob = to_double(full, value);
    else if (full == "hif.learning_rate")
      p.hif.learning_rate = to_double(full, value);
    else if (full == "hif.weight_decay")
      p.hif.weight_decay = to_double(full, value);
    else if (full == "hif.batches_per_epoch")
      p.hif.batches_per_epoch = to_size(full, value);
    else if (full == "hif.max_epochs") p.hif.max_epochs = to_size(full, value);
    else if (full == "hif.patience") p.hif.patience = to_size(full, value);
    else if (full == "hif.remask_each_epoch")
      p.hif.remask_each_epoch = to_bool(full, value);
    else if (full == "hif.scale_by_key_dim")
      p.hif.scale_by_key_dim = to_bool(full, value);
    else if (full == "hif.train_embeddings")
      p.hif.train_embeddings = to_bool(full, value);
    else if (full == "frame.title_length")
      p.frame_lengths.title_length = to_size(full, value);
    else if (full == "frame.default_length")
      p.frame_lengths.default_length = to_size(full, value);
    else if (section == "frame" && key.rfind("len.", 0) == 0)
      p.frame_lengths.overrides[key.substr(4)] = to_size(full, value);
    else if (full == "kat.variant")
      p.variant = evalharness::variant_from_name(value);
    else if (full == "kat.max_depth") p.kat_max_depth = to_size(full, value);
    else if (full == "kat.xgb_lambda") p.xgb_lambda = to_double(full, value);
    else if (full == "kat.xgb_gamma") p.xgb_gamma = to_double(full, value);
    else if (full == "seed.seed") p.seed = to_u64(full, value);
    else {
      throw UsageError(path.string() + ":" + std::to_string(line_no) +
                       ": unknown config key '" + full + "'");
    }
  }
  return cfg;
}

void RunConfig::validate() const {
  auto require = [](const std::filesystem::path& p, const char* what) {
    if (p.empty()) {
      throw UsageError(std::string("config is missing data.") + what);
    }
    if (!std::filesystem::exists(p)) {
      throw UsageError(std::string(what) + " path does not exist: " +
                       p.string());
    }
  };
  require(table_a, "table_a");
  require(table_b, "table_b");
  require(pairs, "pairs");
  if (pipeline.pretrained_embeddings &&
      !std::filesystem::exists(*pipeline.pretrained_embeddings)) {
    throw UsageError("embeddings path does not exist: " +
                     pipeline.pretrained_embeddings->string());
  }
  if (!(pipeline.train_rate > 0.0) || pipeline.train_rate > 0.8) {
    throw UsageError("split rate must be in (0, 0.8]");
  }
  if (pipeline.drop_rate < 0.0 || pipeline.drop_rate > 1.0) {
    throw UsageError("drop rate must be in [0, 1]");
  }
  pipeline.hif.validate();
}

}  // namespace emkat::runconfig
