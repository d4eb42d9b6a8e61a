#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "emkat/error.hpp"
#include "emkat/metrics.hpp"
#include "emkat/rng.hpp"
#include "oracles.hpp"

using namespace emkat;
using namespace emkat::metrics;

TEST_CASE("classify_attribute by value type and token length") {
  std::vector<std::string> years = {"2008", "1999"};
  std::vector<std::string> empty;
  CHECK(classify_attribute(years, empty) == AttributeCategory::number);

  std::vector<std::string> bools = {"true", "FALSE", "true"};
  CHECK(classify_attribute(bools, empty) == AttributeCategory::boolean);

  // 0/1 only counts as boolean with a name hint, otherwise it is numeric.
  std::vector<std::string> zero_one = {"0", "1", "1"};
  CHECK(classify_attribute(zero_one, empty) == AttributeCategory::number);
  CHECK(classify_attribute(zero_one, empty, "is_active") ==
        AttributeCategory::boolean);

  std::vector<std::string> venues = {"vldb", "sigmod", "icde"};
  CHECK(classify_attribute(venues, empty) == AttributeCategory::str1);

  // Mean 7.2 words -> str6to10.
  std::vector<std::string> titles;
  for (int i = 0; i < 4; ++i) titles.push_back("a b c d e f g");   // 7 words
  titles.push_back("a b c d e f g h");                             // 8 words
  CHECK(classify_attribute(titles, empty) == AttributeCategory::str6to10);

  std::vector<std::string> pairs = {"alpha beta", "gamma delta eps"};
  CHECK(classify_attribute(pairs, empty) == AttributeCategory::str2to5);

  std::vector<std::string> essay = {
      "one two three four five six seven eight nine ten eleven"};
  CHECK(classify_attribute(essay, empty) == AttributeCategory::strLong);

  // Bucket boundary: mean exactly 10 stays in str6to10.
  std::vector<std::string> ten = {"a b c d e f g h i j"};
  CHECK(classify_attribute(ten, empty) == AttributeCategory::str6to10);

  std::vector<std::string> blank = {"", "  "};
  CHECK_THROWS_AS(classify_attribute(blank, empty), DataError);
}

TEST_CASE("levenshtein fixtures") {
  CHECK(lev_distance("abc", "abc") == 0);
  CHECK(lev_distance("", "abc") == 3);
  CHECK(lev_distance("kitten", "sitting") == 3);
  CHECK(lev_similarity("abc", "abc") == 1.0);
  CHECK(lev_similarity("", "") == 1.0);
  CHECK(lev_similarity("kitten", "sitting") ==
        doctest::Approx(1.0 - 3.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("jaro and jaro-winkler fixtures") {
  CHECK(jaro("same", "same") == 1.0);
  CHECK(jaro("", "") == 1.0);
  CHECK(jaro("abc", "") == 0.0);
  CHECK(jaro("abc", "xyz") == 0.0);
  CHECK(jaro("martha", "marhta") == doctest::Approx(0.944444).epsilon(1e-4));
  CHECK(jaro_winkler("martha", "marhta") ==
        doctest::Approx(0.961111).epsilon(1e-4));
}

TEST_CASE("jaccard, cosine, monge-elkan, smith-waterman fixtures") {
  CHECK(jaccard_qgram("abcd", "abce") == doctest::Approx(1.0 / 3.0));
  CHECK(jaccard_qgram("same text", "same text") == 1.0);
  CHECK(jaccard_qgram("", "") == 1.0);
  CHECK(jaccard_qgram("", "abc") == 0.0);
  CHECK(jaccard_delim("a b", "b a") == 1.0);
  CHECK(jaccard_delim("a b", "c d") == 0.0);
  CHECK(cosine_delim("a b", "a") == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(cosine_delim("a b", "c") == 0.0);
  CHECK(cosine_delim("", "") == 1.0);
  CHECK(monge_elkan("martha", "marhta") ==
        doctest::Approx(0.961111).epsilon(1e-4));
  CHECK(monge_elkan("a b", "a b") == 1.0);
  CHECK(smith_waterman("cat", "cat") == 3.0);
  CHECK(smith_waterman("", "cat") == 0.0);
  CHECK(smith_waterman("abc", "xbz") == 1.0);
}

TEST_CASE("exact and absolute distances") {
  CHECK(exact_match_distance("2008", "2008") == 0);
  CHECK(exact_match_distance(" 2008 ", "2008") == 0);
  CHECK(exact_match_distance("2008", "2009") == 1);
  CHECK(*absolute_distance("2008", "2008") == 0.0);
  CHECK(*absolute_distance("2008", "2010") == 2.0);
  CHECK(!absolute_distance("2008", "n/a").has_value());
  CHECK(!absolute_distance("", "5").has_value());
}

TEST_CASE("metric suites match the category table") {
  using enum MetricId;
  auto ids = [](AttributeCategory c) {
    auto s = metric_suite_for(c);
    return std::vector<MetricId>(s.begin(), s.end());
  };
  CHECK(ids(AttributeCategory::boolean) ==
        std::vector<MetricId>{exact_match_distance});
  CHECK(ids(AttributeCategory::number) ==
        std::vector<MetricId>{exact_match_distance, absolute_distance,
                              lev_distance, lev_similarity});
  CHECK(ids(AttributeCategory::str1) ==
        std::vector<MetricId>{lev_distance, lev_similarity, jaro, jaro_winkler,
                              exact_match_distance, jaccard_qgram});
  CHECK(ids(AttributeCategory::str2to5) ==
        std::vector<MetricId>{jaccard_qgram, jaccard_delim, lev_distance,
                              lev_similarity, cosine_delim, monge_elkan,
                              smith_waterman});
  CHECK(ids(AttributeCategory::str6to10) ==
        std::vector<MetricId>{jaccard_qgram, cosine_delim, lev_distance,
                              lev_similarity, monge_elkan});
  CHECK(ids(AttributeCategory::strLong) ==
        std::vector<MetricId>{jaccard_qgram, cosine_delim});
}

TEST_CASE("random pairs agree with the oracles") {
  Rng rng(2024);
  for (int i = 0; i < 300; ++i) {
    const std::string a = oracles::random_string(rng, 12, 6);
    const std::string b = oracles::random_string(rng, 12, 6);
    CAPTURE(a);
    CAPTURE(b);
    CHECK(lev_distance(a, b) == oracles::lev(a, b));
    CHECK(jaro(a, b) == doctest::Approx(oracles::jaro(a, b)).epsilon(1e-9));
    CHECK(smith_waterman(a, b) ==
          doctest::Approx(oracles::smith_waterman(a, b)).epsilon(1e-9));
    CHECK(jaccard_qgram(a, b) ==
          doctest::Approx(oracles::jaccard(oracles::qgrams(a, 3),
                                           oracles::qgrams(b, 3)))
              .epsilon(1e-9));
  }
}

TEST_CASE("symmetry, identity, and range properties") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const std::string a = oracles::random_words(rng, 4, 6);
    const std::string b = oracles::random_words(rng, 4, 6);
    CAPTURE(a);
    CAPTURE(b);
    CHECK(lev_distance(a, b) == lev_distance(b, a));
    CHECK(lev_similarity(a, b) == doctest::Approx(lev_similarity(b, a)));
    CHECK(jaro(a, b) == doctest::Approx(jaro(b, a)));
    CHECK(jaro_winkler(a, b) == doctest::Approx(jaro_winkler(b, a)));
    CHECK(jaccard_qgram(a, b) == doctest::Approx(jaccard_qgram(b, a)));
    CHECK(jaccard_delim(a, b) == doctest::Approx(jaccard_delim(b, a)));
    CHECK(cosine_delim(a, b) == doctest::Approx(cosine_delim(b, a)));
    CHECK(smith_waterman(a, b) == doctest::Approx(smith_waterman(b, a)));
    CHECK(exact_match_distance(a, b) == exact_match_distance(b, a));

    for (double s : {jaro(a, b), jaro_winkler(a, b), jaccard_qgram(a, b),
                     jaccard_delim(a, b), cosine_delim(a, b),
                     monge_elkan(a, b), lev_similarity(a, b)}) {
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
    }
    CHECK(smith_waterman(a, b) <= std::min(a.size(), b.size()));

    if (!a.empty()) {
      CHECK(lev_distance(a, a) == 0);
      CHECK(jaro(a, a) == 1.0);
      CHECK(jaccard_qgram(a, a) == 1.0);
      CHECK(monge_elkan(a, a) == doctest::Approx(1.0));
      CHECK(exact_match_distance(a, a) == 0);
    }
  }
}

TEST_CASE("levenshtein triangle inequality") {
  Rng rng(99);
  for (int i = 0; i < 200; ++i) {
    const std::string a = oracles::random_string(rng, 10, 6);
    const std::string b = oracles::random_string(rng, 10, 6);
    const std::string c = oracles::random_string(rng, 10, 6);
    CHECK(lev_distance(a, c) <= lev_distance(a, b) + lev_distance(b, c));
  }
}
