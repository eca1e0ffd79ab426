#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "asag/corpus.hpp"
#include "asag/errors.hpp"
#include "asag/util.hpp"

namespace asag {

// ─── Rank-frequency analysis ─────────────────────────────────────────

struct TextNormalization {
  bool case_fold = true;
  bool collapse_whitespace = true;
  bool strip_punctuation = false;
};

inline std::string normalize_text(const std::string& s,
                                  const TextNormalization& norm) {
  std::string t = s;
  if (norm.case_fold) t = to_lower(t);
  if (norm.strip_punctuation) {
    std::string u;
    for (char c : t)
      if (!std::ispunct(static_cast<unsigned char>(c))) u += c;
    t = u;
  }
  if (norm.collapse_whitespace) {
    auto words = split_whitespace(t);
    std::string u;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) u += ' ';
      u += words[i];
    }
    t = u;
  }
  return t;
}

struct RankCount {
  std::size_t rank;  // 1 = most frequent
  double count;      // integral when produced from data
};

struct RankFrequency {
  std::vector<RankCount> entries;  // counts non-increasing in rank
  TextNormalization normalization;

  double total_count() const {
    double t = 0;
    for (const auto& e : entries) t += e.count;
    return t;
  }
};

// Ties in count are broken by first occurrence in the input.
inline RankFrequency rank_frequency(const std::vector<std::string>& items,
                                    const TextNormalization& norm = {}) {
  if (items.empty()) fail(ErrorKind::Empty, "rank_frequency on empty input");
  std::unordered_map<std::string, std::pair<double, std::size_t>> counts;
  std::size_t order = 0;
  for (const auto& raw : items) {
    std::string key = normalize_text(raw, norm);
    auto [it, inserted] = counts.try_emplace(key, 0.0, order);
    if (inserted) ++order;
    it->second.first += 1.0;
  }
  std::vector<std::pair<std::string, std::pair<double, std::size_t>>> sorted(
      counts.begin(), counts.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.second.first != b.second.first)
      return a.second.first > b.second.first;
    return a.second.second < b.second.second;
  });
  RankFrequency rf;
  rf.normalization = norm;
  rf.entries.reserve(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i)
    rf.entries.push_back({i + 1, sorted[i].second.first});
  return rf;
}

enum class ZipfUnit { Tokens, Responses };

inline RankFrequency corpus_rank_frequency(const Corpus& corpus,
                                           ZipfUnit unit = ZipfUnit::Tokens,
                                           const TextNormalization& norm = {}) {
  std::vector<std::string> items;
  for (const auto& r : corpus.records) {
    if (unit == ZipfUnit::Responses) {
      items.push_back(r.text);
    } else {
      for (auto& tok : split_whitespace(r.text)) items.push_back(tok);
    }
  }
  return rank_frequency(items, norm);
}

// ─── Power-law fit ───────────────────────────────────────────────────

struct ZipfFit {
  double exponent = 0;   // beta: negative slope of the log-log fit
  double intercept = 0;  // in log space
  double r_squared = 0;
  std::size_t sample_size = 0;  // number of ranks fitted
};

// Least squares through (log rank, log count). Optional truncation keeps
// ranks in [min_rank, max_rank] (0 = no upper cut).
inline ZipfFit fit_zipf(const RankFrequency& rf, std::size_t min_rank = 1,
                        std::size_t max_rank = 0) {
  std::vector<double> xs, ys;
  for (const auto& e : rf.entries) {
    if (e.rank < min_rank) continue;
    if (max_rank && e.rank > max_rank) continue;
    if (e.count < 1) continue;
    xs.push_back(std::log(static_cast<double>(e.rank)));
    ys.push_back(std::log(e.count));
  }
  if (xs.size() < 3)
    fail(ErrorKind::TooFewRanks, "need >= 3 distinct ranks, have " +
                                     std::to_string(xs.size()));
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  ZipfFit fit;
  fit.sample_size = xs.size();
  double slope = sxy / sxx;
  fit.exponent = -slope;
  fit.intercept = my - slope * mx;
  fit.r_squared = (syy == 0) ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

inline double singleton_fraction(const RankFrequency& rf) {
  if (rf.entries.empty()) fail(ErrorKind::Empty, "no ranks");
  std::size_t singles = 0;
  for (const auto& e : rf.entries)
    if (e.count == 1.0) ++singles;
  return static_cast<double>(singles) / static_cast<double>(rf.entries.size());
}

inline std::string rank_frequency_csv(const RankFrequency& rf) {
  std::string out = "rank,count\n";
  for (const auto& e : rf.entries) {
    out += std::to_string(e.rank);
    out += ',';
    out += format_fixed(e.count, 0);
    out += '\n';
  }
  return out;
}

}  // namespace asag
