#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "asag/corpus.hpp"
#include "asag/errors.hpp"
#include "asag/util.hpp"

namespace asag {

// Rows are the human label, columns the prediction, canonical label order.
struct ConfusionMatrix {
  std::array<std::array<long, 3>, 3> cells{};

  long total() const {
    long t = 0;
    for (const auto& row : cells)
      for (long v : row) t += v;
    return t;
  }
  long trace() const { return cells[0][0] + cells[1][1] + cells[2][2]; }
  long row_sum(std::size_t i) const {
    return cells[i][0] + cells[i][1] + cells[i][2];
  }
  long col_sum(std::size_t j) const {
    return cells[0][j] + cells[1][j] + cells[2][j];
  }
};

inline ConfusionMatrix confusion(const std::vector<Label>& truth,
                                 const std::vector<Label>& pred) {
  if (truth.size() != pred.size())
    fail(ErrorKind::LengthMismatch,
         std::to_string(truth.size()) + " vs " + std::to_string(pred.size()));
  if (truth.empty()) fail(ErrorKind::Empty, "no scored records");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto r = static_cast<std::size_t>(label_index(truth[i]));
    auto c = static_cast<std::size_t>(label_index(pred[i]));
    cm.cells[r][c]++;
  }
  return cm;
}

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  long support = 0;
};

// All values in [0,1]; files report them as percentages.
struct MetricsReport {
  double accuracy = 0;
  double macro_precision = 0;
  double macro_recall = 0;
  double macro_f1 = 0;
  std::array<ClassMetrics, 3> per_class{};
  long support = 0;
};

// Zero-denominator cells score 0 so macro means stay total over 3 classes.
inline MetricsReport macro_metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) fail(ErrorKind::EmptyMatrix, "empty confusion matrix");
  MetricsReport rep;
  rep.support = cm.total();
  rep.accuracy =
      static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
  for (std::size_t c = 0; c < 3; ++c) {
    const double tp = static_cast<double>(cm.cells[c][c]);
    const double col = static_cast<double>(cm.col_sum(c));
    const double row = static_cast<double>(cm.row_sum(c));
    ClassMetrics m;
    m.support = cm.row_sum(c);
    m.precision = col > 0 ? tp / col : 0.0;
    m.recall = row > 0 ? tp / row : 0.0;
    m.f1 = (m.precision + m.recall) > 0
               ? 2 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    rep.per_class[c] = m;
    rep.macro_precision += m.precision / 3.0;
    rep.macro_recall += m.recall / 3.0;
    rep.macro_f1 += m.f1 / 3.0;
  }
  return rep;
}

struct MeanSd {
  double mean = 0;
  double sample_sd = 0;  // n-1 denominator; 0 for a single value
};

inline MeanSd mean_sd(const std::vector<double>& values) {
  if (values.empty()) fail(ErrorKind::Empty, "mean_sd of nothing");
  MeanSd out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sample_sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

// CSV row in report column order: model, training-data %, accuracy,
// precision, recall, F1 (percentages, 2 decimals).
inline std::string metrics_csv_header() {
  return "model,training_data_pct,accuracy,precision,recall,f1";
}

inline std::string metrics_csv_row(const std::string& model,
                                   const std::string& training_pct,
                                   const MetricsReport& rep) {
  std::string row = csv_quote(model);
  row += ',';
  row += training_pct;
  for (double v : {rep.accuracy, rep.macro_precision, rep.macro_recall,
                   rep.macro_f1}) {
    row += ',';
    row += format_fixed(v * 100.0, 2);
  }
  return row;
}

}  // namespace asag
