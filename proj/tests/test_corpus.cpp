#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "emkat/corpus.hpp"
#include "emkat/error.hpp"
#include "emkat/rng.hpp"
#include "oracles.hpp"

using namespace emkat;
using namespace emkat::corpus;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
  fs::path p = fs::temp_directory_path() / ("emkat_corpus_" + name);
  std::ofstream out(p, std::ios::binary);
  out << content;
  return p;
}

LabeledPairs sequential_pairs(std::size_t n) {
  LabeledPairs pairs;
  for (std::size_t i = 0; i < n; ++i) {
    pairs.pairs.push_back({"a" + std::to_string(i), "b" + std::to_string(i),
                           i % 3 == 0 ? Label::match : Label::non_match});
  }
  return pairs;
}

}  // namespace

TEST_CASE("load_table basic shape and missing cells") {
  auto p = temp_file("basic.csv",
                     "id,title,year\n1,alpha,2001\n2,beta,\n3,gamma,2003\n");
  auto t = load_table(p);
  CHECK(t.attribute_count() == 2);
  CHECK(t.attributes == std::vector<std::string>{"title", "year"});
  CHECK(t.records.size() == 3);
  CHECK(t.records[1].values[1] == "");
  CHECK(t.record_by_id("3").values[0] == "gamma");
}

TEST_CASE("load_table errors") {
  auto dup = temp_file("dup.csv", "id,title\n7,a\n7,b\n");
  CHECK_THROWS_AS(load_table(dup), DataError);

  auto arity = temp_file("arity.csv", "id,title,year\n1,a,2001\n2,b\n");
  CHECK_THROWS_WITH_AS(load_table(arity),
                       doctest::Contains("row 2"), DataError);

  auto no_id = temp_file("noid.csv", "key,title\n1,a\n");
  CHECK_THROWS_AS(load_table(no_id), DataError);
}

TEST_CASE("quoted fields survive a save/load round trip") {
  EntityTable t;
  t.name = "q";
  t.attributes = {"title", "note"};
  t.records.push_back({"1", {"a, b", "line1\nline2"}});
  t.records.push_back({"2", {"say \"hi\"", ""}});
  t.rebuild_index();
  auto p = fs::temp_directory_path() / "emkat_corpus_quoted.csv";
  save_table(t, p);
  auto back = load_table(p);
  CHECK(back.attributes == t.attributes);
  REQUIRE(back.records.size() == 2);
  CHECK(back.records[0].values[0] == "a, b");
  CHECK(back.records[0].values[1] == "line1\nline2");
  CHECK(back.records[1].values[0] == "say \"hi\"");
}

TEST_CASE("load -> save -> load is a fixed point on random tables") {
  Rng rng(5);
  EntityTable t;
  t.name = "rand";
  t.attributes = {"x", "y", "z"};
  for (int r = 0; r < 25; ++r) {
    Record rec;
    rec.id = "r" + std::to_string(r);
    for (int a = 0; a < 3; ++a) {
      rec.values.push_back(oracles::random_words(rng, 3, 8));
    }
    t.records.push_back(rec);
  }
  t.rebuild_index();
  auto p1 = fs::temp_directory_path() / "emkat_corpus_fp1.csv";
  auto p2 = fs::temp_directory_path() / "emkat_corpus_fp2.csv";
  save_table(t, p1);
  auto once = load_table(p1);
  save_table(once, p2);
  auto twice = load_table(p2);
  REQUIRE(once.records.size() == twice.records.size());
  for (std::size_t i = 0; i < once.records.size(); ++i) {
    CHECK(once.records[i].id == twice.records[i].id);
    CHECK(once.records[i].values == twice.records[i].values);
  }
}

TEST_CASE("load_pairs labels and errors") {
  auto good = temp_file("pairs.csv",
                        "ltable_id,rtable_id,label\na1,b1,1\na1,b2,0\n");
  auto pairs = load_pairs(good);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs.pairs[0].label == Label::match);
  CHECK(pairs.pairs[1].label == Label::non_match);

  auto bad_label = temp_file("pairs_bad.csv",
                             "ltable_id,rtable_id,label\na1,b1,2\n");
  CHECK_THROWS_AS(load_pairs(bad_label), DataError);

  auto dup = temp_file("pairs_dup.csv",
                       "ltable_id,rtable_id,label\na1,b1,1\na1,b1,0\n");
  CHECK_THROWS_AS(load_pairs(dup), DataError);
}

TEST_CASE("validate_pairs rejects unresolvable ids") {
  auto tp = temp_file("vt.csv", "id,x\n1,a\n");
  auto t = load_table(tp);
  LabeledPairs pairs;
  pairs.pairs.push_back({"1", "9", Label::match});
  CHECK_THROWS_AS(validate_pairs(pairs, t, t), DataError);
}

TEST_CASE("split_low_resource boundaries") {
  auto s100 = split_low_resource(sequential_pairs(100), 0.10);
  CHECK(s100.train.size() == 10);
  CHECK(s100.valid.size() == 20);
  CHECK(s100.test.size() == 70);
  CHECK(s100.train.pairs.front().left_id == "a0");
  CHECK(s100.train.pairs.back().left_id == "a9");
  CHECK(s100.test.pairs.front().left_id == "a10");
  CHECK(s100.test.pairs.back().left_id == "a79");
  CHECK(s100.valid.pairs.front().left_id == "a80");
  CHECK(s100.valid.pairs.back().left_id == "a99");

  auto s10 = split_low_resource(sequential_pairs(10), 0.80);
  CHECK(s10.train.size() == 8);
  CHECK(s10.valid.size() == 2);
  CHECK(s10.test.size() == 0);

  // Round-half-up oracle for n = 539, rate = 0.10:
  // round(53.9) = 54 and round(107.8) = 108, so the middle holds 377.
  auto s539 = split_low_resource(sequential_pairs(539), 0.10);
  CHECK(s539.train.size() == 54);
  CHECK(s539.valid.size() == 108);
  CHECK(s539.test.size() == 377);

  CHECK_THROWS_AS(split_low_resource(sequential_pairs(10), 0.0), UsageError);
  CHECK_THROWS_AS(split_low_resource(sequential_pairs(10), 0.81), UsageError);
}

TEST_CASE("split partitions are disjoint, ordered, and deterministic") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(200);
    const double rate = 0.05 + 0.75 * rng.next_double();
    auto pairs = sequential_pairs(n);
    auto s1 = split_low_resource(pairs, rate);
    auto s2 = split_low_resource(pairs, rate);

    std::vector<std::string> seen;
    for (const auto* part : {&s1.train, &s1.test, &s1.valid}) {
      for (const auto& p : part->pairs) seen.push_back(p.left_id);
    }
    CHECK(seen.size() == n);
    // train + test + valid in that order reproduces the source order
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(seen[i] == "a" + std::to_string(i));
    }
    CHECK(s1.train.size() == s2.train.size());
    for (std::size_t i = 0; i < s1.train.size(); ++i) {
      CHECK(s1.train.pairs[i].left_id == s2.train.pairs[i].left_id);
    }
  }
}

TEST_CASE("inject_drop_noise identity, saturation, determinism") {
  EntityTable t;
  t.name = "drop";
  t.attributes = {"a", "b"};
  for (int r = 0; r < 20; ++r) {
    t.records.push_back({"r" + std::to_string(r), {"x y", "z"}});
  }
  t.rebuild_index();

  auto same = inject_drop_noise(t, 0.0, 3);
  for (std::size_t r = 0; r < t.records.size(); ++r) {
    CHECK(same.records[r].values == t.records[r].values);
  }

  auto gone = inject_drop_noise(t, 1.0, 3);
  for (const auto& rec : gone.records) {
    for (const auto& v : rec.values) CHECK(v.empty());
  }

  auto n1 = inject_drop_noise(t, 0.5, 17);
  auto n2 = inject_drop_noise(t, 0.5, 17);
  for (std::size_t r = 0; r < t.records.size(); ++r) {
    CHECK(n1.records[r].values == n2.records[r].values);
  }

  CHECK_THROWS_AS(inject_drop_noise(t, 1.5, 3), UsageError);
}

TEST_CASE("inject_drop_noise drop count stays within the binomial bound") {
  // 1000 cells at p = 0.4: expect 400 empty within 3 sigma, sigma = sqrt(240).
  EntityTable t;
  t.name = "binomial";
  t.attributes = {"a", "b", "c", "d", "e"};
  for (int r = 0; r < 200; ++r) {
    Record rec;
    rec.id = "r" + std::to_string(r);
    rec.values = {"v", "v", "v", "v", "v"};
    t.records.push_back(rec);
  }
  t.rebuild_index();
  auto noisy = inject_drop_noise(t, 0.4, 7);
  std::size_t empty = 0;
  for (const auto& rec : noisy.records) {
    for (const auto& v : rec.values) empty += v.empty();
  }
  const double sigma = std::sqrt(1000 * 0.4 * 0.6);
  CHECK(static_cast<double>(empty) > 400 - 3 * sigma);
  CHECK(static_cast<double>(empty) < 400 + 3 * sigma);
}

TEST_CASE("record jaccard and trivial-pair filtering") {
  EntityTable left, right;
  left.name = "L";
  right.name = "R";
  left.attributes = {"x", "y"};
  right.attributes = {"x", "y"};

  // identical records -> jaccard 1
  left.records.push_back({"l_same", {"alpha beta", "gamma"}});
  right.records.push_back({"r_same", {"alpha beta", "gamma"}});
  // disjoint records -> jaccard 0
  left.records.push_back({"l_disj", {"one two", "three"}});
  right.records.push_back({"r_disj", {"four five", "six"}});
  // overlap 4 of union 13 -> jaccard ~ 0.3077 in (0.30, 0.32)
  left.records.push_back({"l_mid", {"t1 t2 t3 t4", "c1 c2 c3 c4"}});
  right.records.push_back({"r_mid", {"t1 t2 t3 t4 u1 u2", "u3 u4 u5"}});
  left.rebuild_index();
  right.rebuild_index();

  CHECK(record_jaccard(left.record_by_id("l_same"),
                       right.record_by_id("r_same")) == 1.0);
  CHECK(record_jaccard(left.record_by_id("l_disj"),
                       right.record_by_id("r_disj")) == 0.0);
  CHECK(record_jaccard(left.record_by_id("l_mid"),
                       right.record_by_id("r_mid")) ==
        doctest::Approx(4.0 / 13.0));

  LabeledPairs pairs;
  pairs.pairs.push_back({"l_same", "r_same", Label::match});      // dropped
  pairs.pairs.push_back({"l_disj", "r_disj", Label::non_match});  // dropped
  pairs.pairs.push_back({"l_mid", "r_mid", Label::match});        // kept
  pairs.pairs.push_back({"l_mid", "r_mid", Label::non_match});    // kept
  // duplicate (left,right) across labels is fine here; the loader is what
  // rejects duplicates.
  auto kept = filter_trivial_pairs(pairs, left, right, 0.32, 0.30);
  REQUIRE(kept.size() == 2);
  CHECK(kept.pairs[0].left_id == "l_mid");
  CHECK(kept.pairs[1].left_id == "l_mid");
}

TEST_CASE("split manifest lists indices per partition") {
  auto pairs = sequential_pairs(10);
  auto split = split_low_resource(pairs, 0.30);
  auto p = fs::temp_directory_path() / "emkat_corpus_manifest.txt";
  save_split_manifest(split, pairs.size(), p);
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  CHECK(line == "emkat.split.v1");
  std::getline(in, line);
  CHECK(line == "train: 0 1 2");
  std::getline(in, line);
  CHECK(line == "test: 3 4 5 6 7");
  std::getline(in, line);
  CHECK(line == "valid: 8 9");
}
