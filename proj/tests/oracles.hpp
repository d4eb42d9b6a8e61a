// Test-side oracles, kept independent of the library implementations they
// check: plain recursive/dense-matrix algorithms and exhaustive searches.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "emkat/corpus.hpp"
#include "emkat/kat.hpp"
#include "emkat/rng.hpp"

namespace oracles {

// Levenshtein by full dynamic-programming matrix.
inline std::size_t lev(std::string_view a, std::string_view b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<std::size_t>> dp(n + 1,
                                           std::vector<std::size_t>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) dp[i][0] = i;
  for (std::size_t j = 0; j <= m; ++j) dp[0][j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      dp[i][j] = std::min({dp[i - 1][j] + 1, dp[i][j - 1] + 1,
                           dp[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
  }
  return dp[n][m];
}

// Jaro by explicit matched-character lists.
inline double jaro(std::string_view a, std::string_view b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  const std::size_t max_len = std::max(a.size(), b.size());
  const long window =
      std::max<long>(0, static_cast<long>(max_len) / 2 - 1);
  std::vector<bool> used(b.size(), false);
  std::string ma, mb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long lo = std::max<long>(0, static_cast<long>(i) - window);
    const long hi = std::min<long>(b.size() - 1, static_cast<long>(i) + window);
    for (long j = lo; j <= hi; ++j) {
      if (!used[j] && b[j] == a[i]) {
        used[j] = true;
        ma += a[i];
        break;
      }
    }
  }
  for (std::size_t j = 0; j < b.size(); ++j) {
    if (used[j]) mb += b[j];
  }
  if (ma.empty()) return 0.0;
  std::size_t mismatched = 0;
  for (std::size_t k = 0; k < ma.size(); ++k) mismatched += ma[k] != mb[k];
  const double m = static_cast<double>(ma.size());
  const double t = std::floor(static_cast<double>(mismatched) / 2.0);
  return (m / a.size() + m / b.size() + (m - t) / m) / 3.0;
}

inline double jaro_winkler(std::string_view a, std::string_view b) {
  const double j = jaro(a, b);
  std::size_t prefix = 0;
  while (prefix < std::min({a.size(), b.size(), std::size_t{4}}) &&
         a[prefix] == b[prefix]) {
    ++prefix;
  }
  return j + 0.1 * static_cast<double>(prefix) * (1.0 - j);
}

// Smith-Waterman with a full matrix.
inline double smith_waterman(std::string_view a, std::string_view b) {
  std::vector<std::vector<double>> h(a.size() + 1,
                                     std::vector<double>(b.size() + 1, 0.0));
  double best = 0.0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const double diag = h[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 1.0 : 0.0);
      h[i][j] = std::max({0.0, diag, h[i - 1][j] - 1.0, h[i][j - 1] - 1.0});
      best = std::max(best, h[i][j]);
    }
  }
  return best;
}

inline std::set<std::string> qgrams(std::string_view s, std::size_t q) {
  std::set<std::string> out;
  if (s.empty()) return out;
  if (s.size() < q) {
    out.emplace(s);
    return out;
  }
  for (std::size_t i = 0; i + q <= s.size(); ++i) out.emplace(s.substr(i, q));
  return out;
}

inline std::set<std::string> words(std::string_view s) {
  std::set<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n') {
      if (!cur.empty()) out.insert(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.insert(cur);
  return out;
}

inline double jaccard(const std::set<std::string>& a,
                      const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  return static_cast<double>(inter) /
         static_cast<double>(a.size() + b.size() - inter);
}

inline double cosine(const std::set<std::string>& a,
                     const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  return static_cast<double>(inter) /
         std::sqrt(static_cast<double>(a.size()) *
                   static_cast<double>(b.size()));
}

inline double monge_elkan(std::string_view a, std::string_view b) {
  std::vector<std::string> ta, tb;
  {
    std::string cur;
    auto flush = [](std::string& cur, std::vector<std::string>& out) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    };
    for (char c : a) {
      if (c == ' ') flush(cur, ta);
      else cur += c;
    }
    flush(cur, ta);
    for (char c : b) {
      if (c == ' ') flush(cur, tb);
      else cur += c;
    }
    flush(cur, tb);
  }
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

inline std::string random_string(emkat::Rng& rng, std::size_t max_len,
                                 std::size_t alphabet) {
  const std::size_t len = rng.below(max_len + 1);
  std::string out;
  for (std::size_t i = 0; i < len; ++i) {
    out += static_cast<char>('a' + rng.below(alphabet));
  }
  return out;
}

// A string of space-separated short words.
inline std::string random_words(emkat::Rng& rng, std::size_t max_words,
                                std::size_t alphabet) {
  const std::size_t n = rng.below(max_words + 1);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.empty()) out += ' ';
    out += random_string(rng, 5, alphabet);
  }
  return out;
}

// Best training accuracy over all depth-capped binary threshold trees,
// by exhaustive recursion over midpoint thresholds.
inline std::size_t best_tree_correct(const emkat::kat::Dataset& data,
                                     const std::vector<std::size_t>& rows,
                                     int depth) {
  std::size_t pos = 0;
  for (auto r : rows) pos += data.labels[r] == emkat::corpus::Label::match;
  std::size_t best = std::max(pos, rows.size() - pos);
  if (depth == 0 || rows.empty()) return best;
  for (std::size_t f = 0; f < data.width(); ++f) {
    std::vector<double> values;
    for (auto r : rows) values.push_back(data.features[r][f]);
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t i = 1; i < values.size(); ++i) {
      const double threshold = values[i - 1] + (values[i] - values[i - 1]) / 2.0;
      std::vector<std::size_t> left, right;
      for (auto r : rows) {
        (data.features[r][f] < threshold ? left : right).push_back(r);
      }
      best = std::max(best, best_tree_correct(data, left, depth - 1) +
                                best_tree_correct(data, right, depth - 1));
    }
  }
  return best;
}

inline std::size_t tree_training_correct(const emkat::kat::KatTree& tree,
                                         const emkat::kat::Dataset& data) {
  std::size_t correct = 0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    correct += emkat::kat::predict(tree, data.features[r]) == data.labels[r];
  }
  return correct;
}

}  // namespace oracles
