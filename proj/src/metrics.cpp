#include "emkat/metrics.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <vector>

#include "emkat/error.hpp"

namespace emkat::metrics {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> whitespace_tokens(std::string_view s) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) tokens.push_back(s.substr(start, i - start));
  }
  return tokens;
}

std::set<std::string_view> token_set(std::string_view s) {
  auto tokens = whitespace_tokens(s);
  return {tokens.begin(), tokens.end()};
}

std::size_t set_intersection_size(const std::set<std::string_view>& a,
                                  const std::set<std::string_view>& b) {
  std::size_t n = 0;
  for (const auto& t : a) n += b.count(t);
  return n;
}

std::set<std::string> qgram_set(std::string_view s, std::size_t q) {
  std::set<std::string> grams;
  if (s.empty()) return grams;
  if (s.size() < q) {
    grams.emplace(s);
    return grams;
  }
  for (std::size_t i = 0; i + q <= s.size(); ++i) {
    grams.emplace(s.substr(i, q));
  }
  return grams;
}

bool parse_number(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

bool boolean_literal(std::string_view s, bool& alphabetic) {
  std::string lower;
  for (char c : trim(s)) {
    lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (lower == "true" || lower == "false") {
    alphabetic = true;
    return true;
  }
  return lower == "0" || lower == "1";
}

bool name_hints_boolean(std::string_view name) {
  std::string lower;
  for (char c : name) {
    lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return lower.rfind("is_", 0) == 0 || lower.rfind("has_", 0) == 0 ||
         lower == "bool" || lower == "boolean" || lower == "flag";
}

constexpr std::array kBooleanSuite = {MetricId::exact_match_distance};
constexpr std::array kNumberSuite = {
    MetricId::exact_match_distance, MetricId::absolute_distance,
    MetricId::lev_distance, MetricId::lev_similarity};
constexpr std::array kStr1Suite = {
    MetricId::lev_distance,  MetricId::lev_similarity,
    MetricId::jaro,          MetricId::jaro_winkler,
    MetricId::exact_match_distance, MetricId::jaccard_qgram};
constexpr std::array kStr2to5Suite = {
    MetricId::jaccard_qgram, MetricId::jaccard_delim,
    MetricId::lev_distance,  MetricId::lev_similarity,
    MetricId::cosine_delim,  MetricId::monge_elkan,
    MetricId::smith_waterman};
constexpr std::array kStr6to10Suite = {
    MetricId::jaccard_qgram, MetricId::cosine_delim, MetricId::lev_distance,
    MetricId::lev_similarity, MetricId::monge_elkan};
constexpr std::array kStrLongSuite = {MetricId::jaccard_qgram,
                                      MetricId::cosine_delim};

}  // namespace

std::string_view metric_name(MetricId id) {
  switch (id) {
    case MetricId::exact_match_distance: return "exact_match_distance";
    case MetricId::absolute_distance: return "absolute_distance";
    case MetricId::lev_distance: return "lev_distance";
    case MetricId::lev_similarity: return "lev_similarity";
    case MetricId::jaro: return "jaro";
    case MetricId::jaro_winkler: return "jaro_winkler";
    case MetricId::jaccard_qgram: return "jaccard_qgram";
    case MetricId::jaccard_delim: return "jaccard_delim";
    case MetricId::cosine_delim: return "cosine_delim";
    case MetricId::monge_elkan: return "monge_elkan";
    case MetricId::smith_waterman: return "smith_waterman";
  }
  throw UsageError("unknown metric id");
}

std::string_view category_name(AttributeCategory c) {
  switch (c) {
    case AttributeCategory::boolean: return "boolean";
    case AttributeCategory::number: return "number";
    case AttributeCategory::str1: return "str1";
    case AttributeCategory::str2to5: return "str2to5";
    case AttributeCategory::str6to10: return "str6to10";
    case AttributeCategory::strLong: return "strLong";
  }
  throw UsageError("unknown attribute category");
}

AttributeCategory classify_attribute(std::span<const std::string> left_values,
                                     std::span<const std::string> right_values,
                                     std::string_view attribute_name) {
  bool all_boolean = true;
  bool alphabetic_boolean = false;
  bool all_number = true;
  std::size_t non_empty = 0;
  std::size_t token_total = 0;

  auto scan = [&](std::span<const std::string> values) {
    for (const auto& v : values) {
      if (trim(v).empty()) continue;
      ++non_empty;
      token_total += whitespace_tokens(v).size();
      if (all_boolean && !boolean_literal(v, alphabetic_boolean)) {
        all_boolean = false;
      }
      double num;
      if (all_number && !parse_number(v, num)) all_number = false;
    }
  };
  scan(left_values);
  scan(right_values);

  if (non_empty == 0) {
    throw DataError("classify_attribute: attribute '" +
                    std::string(attribute_name) + "' has no non-empty value");
  }
  if (all_boolean && (alphabetic_boolean || name_hints_boolean(attribute_name))) {
    return AttributeCategory::boolean;
  }
  if (all_number) return AttributeCategory::number;

  const double mean_tokens =
      static_cast<double>(token_total) / static_cast<double>(non_empty);
  if (mean_tokens <= 1.0) return AttributeCategory::str1;
  if (mean_tokens <= 5.0) return AttributeCategory::str2to5;
  if (mean_tokens <= 10.0) return AttributeCategory::str6to10;
  return AttributeCategory::strLong;
}

std::size_t lev_distance(std::string_view a, std::string_view b) {
  if (a.empty()) return b.size();
  if (b.empty()) return a.size();
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double lev_similarity(std::string_view a, std::string_view b) {
  if (a.empty() && b.empty()) return 1.0;
  const double longest = static_cast<double>(std::max(a.size(), b.size()));
  return 1.0 - static_cast<double>(lev_distance(a, b)) / longest;
}

double jaro(std::string_view a, std::string_view b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  const std::size_t window =
      std::max(a.size(), b.size()) / 2 == 0 ? 0
                                            : std::max(a.size(), b.size()) / 2 - 1;
  std::vector<bool> a_matched(a.size(), false), b_matched(b.size(), false);
  std::size_t matches = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::size_t lo = i > window ? i - window : 0;
    const std::size_t hi = std::min(b.size(), i + window + 1);
    for (std::size_t j = lo; j < hi; ++j) {
      if (!b_matched[j] && a[i] == b[j]) {
        a_matched[i] = true;
        b_matched[j] = true;
        ++matches;
        break;
      }
    }
  }
  if (matches == 0) return 0.0;
  // Transpositions: mismatched positions among the matched characters.
  std::size_t transpositions = 0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a_matched[i]) continue;
    while (!b_matched[j]) ++j;
    if (a[i] != b[j]) ++transpositions;
    ++j;
  }
  const double m = static_cast<double>(matches);
  return (m / static_cast<double>(a.size()) + m / static_cast<double>(b.size()) +
          (m - static_cast<double>(transpositions / 2)) / m) /
         3.0;
}

double jaro_winkler(std::string_view a, std::string_view b,
                    double prefix_weight) {
  const double j = jaro(a, b);
  std::size_t prefix = 0;
  const std::size_t cap = std::min({a.size(), b.size(), std::size_t{4}});
  while (prefix < cap && a[prefix] == b[prefix]) ++prefix;
  return j + static_cast<double>(prefix) * prefix_weight * (1.0 - j);
}

double jaccard_qgram(std::string_view a, std::string_view b, std::size_t q) {
  auto ga = qgram_set(a, q);
  auto gb = qgram_set(b, q);
  if (ga.empty() && gb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& g : ga) inter += gb.count(g);
  return static_cast<double>(inter) /
         static_cast<double>(ga.size() + gb.size() - inter);
}

double jaccard_delim(std::string_view a, std::string_view b) {
  auto ta = token_set(a);
  auto tb = token_set(b);
  if (ta.empty() && tb.empty()) return 1.0;
  std::size_t inter = set_intersection_size(ta, tb);
  return static_cast<double>(inter) /
         static_cast<double>(ta.size() + tb.size() - inter);
}

double cosine_delim(std::string_view a, std::string_view b) {
  auto ta = token_set(a);
  auto tb = token_set(b);
  if (ta.empty() && tb.empty()) return 1.0;
  if (ta.empty() || tb.empty()) return 0.0;
  std::size_t inter = set_intersection_size(ta, tb);
  return static_cast<double>(inter) /
         std::sqrt(static_cast<double>(ta.size()) *
                   static_cast<double>(tb.size()));
}

double monge_elkan(std::string_view a, std::string_view b) {
  auto ta = whitespace_tokens(a);
  auto tb = whitespace_tokens(b);
  if (ta.empty() && tb.empty()) return 1.0;
  if (ta.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& t : ta) {
    double best = 0.0;
    for (const auto& u : tb) best = std::max(best, jaro_winkler(t, u));
    sum += best;
  }
  return sum / static_cast<double>(ta.size());
}

double smith_waterman(std::string_view a, std::string_view b) {
  if (a.empty() || b.empty()) return 0.0;
  std::vector<double> prev(b.size() + 1, 0.0), cur(b.size() + 1, 0.0);
  double best = 0.0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = 0.0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const double diag =
          prev[j - 1] + (a[i - 1] == b[j - 1] ? 1.0 : 0.0);
      cur[j] = std::max({0.0, diag, prev[j] - 1.0, cur[j - 1] - 1.0});
      best = std::max(best, cur[j]);
    }
    std::swap(prev, cur);
  }
  return best;
}

int exact_match_distance(std::string_view a, std::string_view b) {
  return trim(a) == trim(b) ? 0 : 1;
}

std::optional<double> absolute_distance(std::string_view a,
                                        std::string_view b) {
  double x, y;
  if (!parse_number(a, x) || !parse_number(b, y)) return std::nullopt;
  return std::abs(x - y);
}

std::span<const MetricId> metric_suite_for(AttributeCategory c) {
  switch (c) {
    case AttributeCategory::boolean: return kBooleanSuite;
    case AttributeCategory::number: return kNumberSuite;
    case AttributeCategory::str1: return kStr1Suite;
    case AttributeCategory::str2to5: return kStr2to5Suite;
    case AttributeCategory::str6to10: return kStr6to10Suite;
    case AttributeCategory::strLong: return kStrLongSuite;
  }
  throw UsageError("unknown attribute category");
}

std::optional<double> apply_metric(MetricId id, std::string_view a,
                                   std::string_view b) {
  switch (id) {
    case MetricId::exact_match_distance:
      return static_cast<double>(exact_match_distance(a, b));
    case MetricId::absolute_distance:
      return absolute_distance(a, b);
    case MetricId::lev_distance:
      return static_cast<double>(lev_distance(a, b));
    case MetricId::lev_similarity:
      return lev_similarity(a, b);
    case MetricId::jaro:
      return jaro(a, b);
    case MetricId::jaro_winkler:
      return jaro_winkler(a, b);
    case MetricId::jaccard_qgram:
      return jaccard_qgram(a, b);
    case MetricId::jaccard_delim:
      return jaccard_delim(a, b);
    case MetricId::cosine_delim:
      return cosine_delim(a, b);
    case MetricId::monge_elkan:
      return monge_elkan(a, b);
    case MetricId::smith_waterman:
      return smith_waterman(a, b);
  }
  throw UsageError("unknown metric id");
}

}  // namespace emkat::metrics
