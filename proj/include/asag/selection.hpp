#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asag/errors.hpp"
#include "asag/metrics.hpp"
#include "asag/util.hpp"

namespace asag {

// A learning-curve point. Accuracy is unit-agnostic; callers must feed the
// whole curve on one scale (fractions are in [0,1], accuracies typically
// percentages in exported files).
struct CurvePoint {
  double fraction = 0;
  double accuracy = 0;
};

struct TopKBand {
  double mean = 0;
  double sample_sd = 0;  // n-1 denominator; 0 by convention when k = 1
  double band_low = 0;   // mean - sample_sd
};

// Mean and sample SD of the k highest accuracies; ties at the k boundary
// admit the lowest fraction first.
inline TopKBand top_k_band(const std::vector<CurvePoint>& curve,
                           std::size_t k = 5) {
  if (curve.size() < k)
    fail(ErrorKind::TooFewPoints, std::to_string(curve.size()) +
                                      " points, need " + std::to_string(k));
  if (k == 0) fail(ErrorKind::TooFewPoints, "k must be >= 1");
  std::vector<CurvePoint> sorted = curve;
  std::sort(sorted.begin(), sorted.end(),
            [](const CurvePoint& a, const CurvePoint& b) {
              if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
              return a.fraction < b.fraction;
            });
  std::vector<double> top;
  for (std::size_t i = 0; i < k; ++i) top.push_back(sorted[i].accuracy);
  MeanSd ms = mean_sd(top);
  return {ms.mean, ms.sample_sd, ms.mean - ms.sample_sd};
}

struct SelectionOutcome {
  double chosen_fraction = 0;
  double chosen_accuracy = 0;
  double top_k_mean = 0;
  double top_k_sd = 0;
  double band_low = 0;
  std::size_t k = 5;
  std::vector<CurvePoint> candidates;  // every point at or above the band
};

// The most accurate model with the least data within one standard deviation
// of the top-k average: among points with accuracy >= band_low, take the
// smallest fraction. Curves with fewer than k points use all of them.
inline SelectionOutcome select_model(const std::vector<CurvePoint>& curve,
                                     std::size_t k = 5) {
  if (curve.empty()) fail(ErrorKind::TooFewPoints, "empty curve");
  std::size_t effective_k = std::min(k, curve.size());
  TopKBand band = top_k_band(curve, effective_k);

  SelectionOutcome out;
  out.top_k_mean = band.mean;
  out.top_k_sd = band.sample_sd;
  out.band_low = band.band_low;
  out.k = effective_k;

  const double eps = 1e-12 * std::max(1.0, std::abs(band.band_low));
  for (const auto& p : curve)
    if (p.accuracy >= band.band_low - eps) out.candidates.push_back(p);
  std::sort(out.candidates.begin(), out.candidates.end(),
            [](const CurvePoint& a, const CurvePoint& b) {
              return a.fraction < b.fraction;
            });
  out.chosen_fraction = out.candidates.front().fraction;
  out.chosen_accuracy = out.candidates.front().accuracy;
  return out;
}

// Smallest fraction whose accuracy reaches baseline - tolerance; nullopt if
// the curve never gets there.
inline std::optional<double> baseline_crossing(
    const std::vector<CurvePoint>& curve, double baseline_acc,
    double tolerance_pp = 0.0) {
  if (tolerance_pp < 0)
    fail(ErrorKind::InvalidSpec, "tolerance must be >= 0");
  std::vector<CurvePoint> sorted = curve;
  std::sort(sorted.begin(), sorted.end(),
            [](const CurvePoint& a, const CurvePoint& b) {
              return a.fraction < b.fraction;
            });
  for (const auto& p : sorted)
    if (p.accuracy >= baseline_acc - tolerance_pp) return p.fraction;
  return std::nullopt;
}

// Transfer-curve accuracy at a fraction minus a reference accuracy.
inline double accuracy_advantage(const std::vector<CurvePoint>& transfer_curve,
                                 double scratch_reference_acc,
                                 double at_fraction) {
  for (const auto& p : transfer_curve)
    if (std::abs(p.fraction - at_fraction) < 1e-9)
      return p.accuracy - scratch_reference_acc;
  fail(ErrorKind::MissingFraction, format_fixed(at_fraction, 4));
}

// Fraction of target data at which the transfer curve matches the scratch
// model's full-data accuracy (exact crossing, zero tolerance).
inline std::optional<double> data_advantage(
    const std::vector<CurvePoint>& transfer_curve, double scratch_full_acc) {
  return baseline_crossing(transfer_curve, scratch_full_acc, 0.0);
}

inline nlohmann::json selection_to_json(const SelectionOutcome& o) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& p : o.candidates)
    cands.push_back({{"fraction", p.fraction}, {"accuracy", p.accuracy}});
  return {{"chosen_fraction", o.chosen_fraction},
          {"chosen_accuracy", o.chosen_accuracy},
          {"top_k_mean", o.top_k_mean},
          {"top_k_sd", o.top_k_sd},
          {"band_low", o.band_low},
          {"k", o.k},
          {"candidates", cands}};
}

inline std::string selection_csv_header() {
  return "question,k,top_k_mean,top_k_sd,band_low,chosen_fraction,"
         "chosen_accuracy";
}

inline std::string selection_csv_row(const std::string& question,
                                     const SelectionOutcome& o) {
  std::string row = csv_quote(question);
  row += ',' + std::to_string(o.k);
  row += ',' + format_fixed(o.top_k_mean, 4);
  row += ',' + format_fixed(o.top_k_sd, 4);
  row += ',' + format_fixed(o.band_low, 4);
  row += ',' + format_fixed(o.chosen_fraction, 4);
  row += ',' + format_fixed(o.chosen_accuracy, 4);
  return row;
}

}  // namespace asag
