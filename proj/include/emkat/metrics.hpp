#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace emkat::metrics {

// Attribute categories by value type and mean whitespace-token count.
enum class AttributeCategory {
  boolean,
  number,
  str1,
  str2to5,
  str6to10,
  strLong,
};

// Stable metric names; part of the feature-naming and rule-export contract.
enum class MetricId {
  exact_match_distance,
  absolute_distance,
  lev_distance,
  lev_similarity,
  jaro,
  jaro_winkler,
  jaccard_qgram,
  jaccard_delim,
  cosine_delim,
  monge_elkan,
  smith_waterman,
};

std::string_view metric_name(MetricId id);
std::string_view category_name(AttributeCategory c);

// Classifies an attribute from all its non-empty values across both
// tables. The attribute name only matters for the boolean hint.
AttributeCategory classify_attribute(std::span<const std::string> left_values,
                                     std::span<const std::string> right_values,
                                     std::string_view attribute_name = {});

// Minimum insert/delete/substitute operations over character sequences.
std::size_t lev_distance(std::string_view a, std::string_view b);

// 1 - lev_distance / max(|a|, |b|); both empty -> 1.
double lev_similarity(std::string_view a, std::string_view b);

// Standard Jaro matching-window similarity; both empty -> 1, one empty -> 0.
double jaro(std::string_view a, std::string_view b);

// Jaro with common-prefix boost (prefix capped at 4).
double jaro_winkler(std::string_view a, std::string_view b,
                    double prefix_weight = 0.1);

// Token-set Jaccard over character q-grams; a string shorter than q
// contributes itself as one gram. Both token sets empty -> 1.
double jaccard_qgram(std::string_view a, std::string_view b, std::size_t q = 3);

// Token-set Jaccard over whitespace tokens.
double jaccard_delim(std::string_view a, std::string_view b);

// |A∩B| / sqrt(|A|·|B|) over whitespace-token sets; both empty -> 1.
double cosine_delim(std::string_view a, std::string_view b);

// Mean over tokens of a of the best jaro_winkler match in b. Asymmetric.
double monge_elkan(std::string_view a, std::string_view b);

// Local alignment score: match +1, mismatch +0, gap -1, floored at 0.
double smith_waterman(std::string_view a, std::string_view b);

// 0 iff equal after trimming surrounding whitespace, else 1.
int exact_match_distance(std::string_view a, std::string_view b);

// |parse(a) - parse(b)|; parse failure or empty input -> nullopt.
std::optional<double> absolute_distance(std::string_view a, std::string_view b);

// The category-to-metric mapping, in fixed order.
std::span<const MetricId> metric_suite_for(AttributeCategory c);

// Applies one metric; nullopt only for a missing absolute_distance.
std::optional<double> apply_metric(MetricId id, std::string_view a,
                                   std::string_view b);

}  // namespace emkat::metrics
