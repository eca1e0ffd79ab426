#pragma once

#include <algorithm>
#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asag/curriculum.hpp"
#include "asag/errors.hpp"
#include "asag/metrics.hpp"
#include "asag/selection.hpp"
#include "asag/util.hpp"

namespace asag {

// ─── Run manifests ───────────────────────────────────────────────────
// Every mutating command emits one: enough to replay the run bit-exactly
// (same binary, same inputs).

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::string> input_hashes;
  std::map<std::string, std::string> output_hashes;
  std::string timestamp;
};

inline std::string now_timestamp() {
  auto t = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void add_input(RunManifest& m, const std::filesystem::path& p) {
  m.input_hashes[p.string()] = file_hash_hex(p);
}

inline void add_output(RunManifest& m, const std::filesystem::path& p) {
  m.output_hashes[p.string()] = file_hash_hex(p);
}

inline void write_manifest(RunManifest m, const std::filesystem::path& path) {
  if (m.timestamp.empty()) m.timestamp = now_timestamp();
  nlohmann::json j;
  j["command"] = m.command;
  j["argv"] = m.argv;
  j["config"] = m.config;
  j["seeds"] = m.seeds;
  j["input_hashes"] = m.input_hashes;
  j["output_hashes"] = m.output_hashes;
  j["timestamp"] = m.timestamp;
  write_file(path, j.dump(2) + "\n");
}

// ─── SVG learning-curve plots ────────────────────────────────────────
// Static image output; accuracy (percent) versus training-data fraction,
// one polyline per curve, optional selection markers.

struct PlotCurve {
  std::string name;
  std::vector<CurvePoint> points;             // accuracy in percent
  std::optional<CurvePoint> selection_point;  // annotated if present
};

inline std::string plot_curves_svg(const std::vector<PlotCurve>& curves,
                                   const std::string& title) {
  if (curves.empty()) fail(ErrorKind::Empty, "nothing to plot");
  const double W = 720, H = 480;
  const double ml = 64, mr = 24, mt = 40, mb = 48;
  double ymin = 1e300, ymax = -1e300;
  for (const auto& c : curves)
    for (const auto& p : c.points) {
      ymin = std::min(ymin, p.accuracy);
      ymax = std::max(ymax, p.accuracy);
    }
  if (ymin > ymax) fail(ErrorKind::Empty, "curves have no points");
  if (ymax - ymin < 1e-9) {
    ymin -= 1.0;
    ymax += 1.0;
  }
  double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;

  auto sx = [&](double f) { return ml + f * (W - ml - mr); };
  auto sy = [&](double a) {
    return H - mb - (a - ymin) / (ymax - ymin) * (H - mt - mb);
  };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b"};

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         format_fixed(W, 0) + "\" height=\"" + format_fixed(H, 0) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + format_fixed(W / 2, 0) +
         "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" "
         "font-family=\"sans-serif\">" + title + "</text>\n";

  // axes
  svg += "<line x1=\"" + format_fixed(ml, 1) + "\" y1=\"" +
         format_fixed(H - mb, 1) + "\" x2=\"" + format_fixed(W - mr, 1) +
         "\" y2=\"" + format_fixed(H - mb, 1) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + format_fixed(ml, 1) + "\" y1=\"" +
         format_fixed(mt, 1) + "\" x2=\"" + format_fixed(ml, 1) + "\" y2=\"" +
         format_fixed(H - mb, 1) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 10; i += 2) {
    double f = i / 10.0;
    svg += "<text x=\"" + format_fixed(sx(f), 1) + "\" y=\"" +
           format_fixed(H - mb + 18, 1) +
           "\" text-anchor=\"middle\" font-size=\"11\" "
           "font-family=\"sans-serif\">" +
           format_fixed(f * 100, 0) + "%</text>\n";
    svg += "<line x1=\"" + format_fixed(sx(f), 1) + "\" y1=\"" +
           format_fixed(H - mb, 1) + "\" x2=\"" + format_fixed(sx(f), 1) +
           "\" y2=\"" + format_fixed(H - mb + 4, 1) + "\" stroke=\"black\"/>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    double a = ymin + (ymax - ymin) * i / 5.0;
    svg += "<text x=\"" + format_fixed(ml - 8, 1) + "\" y=\"" +
           format_fixed(sy(a) + 4, 1) +
           "\" text-anchor=\"end\" font-size=\"11\" "
           "font-family=\"sans-serif\">" +
           format_fixed(a, 1) + "</text>\n";
  }
  svg += "<text x=\"" + format_fixed((ml + W - mr) / 2, 1) + "\" y=\"" +
         format_fixed(H - 10, 1) +
         "\" text-anchor=\"middle\" font-size=\"12\" "
         "font-family=\"sans-serif\">training data percentage</text>\n";
  svg += "<text x=\"16\" y=\"" + format_fixed((mt + H - mb) / 2, 1) +
         "\" text-anchor=\"middle\" font-size=\"12\" "
         "font-family=\"sans-serif\" transform=\"rotate(-90 16 " +
         format_fixed((mt + H - mb) / 2, 1) + ")\">accuracy (%)</text>\n";

  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const auto& c = curves[ci];
    const char* color = colors[ci % 6];
    std::vector<CurvePoint> pts = c.points;
    std::sort(pts.begin(), pts.end(), [](const CurvePoint& a,
                                         const CurvePoint& b) {
      return a.fraction < b.fraction;
    });
    std::string poly;
    for (const auto& p : pts) {
      poly += format_fixed(sx(p.fraction), 1) + "," +
              format_fixed(sy(p.accuracy), 1) + " ";
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"" + poly + "\"/>\n";
    for (const auto& p : pts)
      svg += "<circle cx=\"" + format_fixed(sx(p.fraction), 1) + "\" cy=\"" +
             format_fixed(sy(p.accuracy), 1) + "\" r=\"2\" fill=\"" + color +
             "\"/>\n";
    if (c.selection_point) {
      svg += "<circle cx=\"" + format_fixed(sx(c.selection_point->fraction), 1) +
             "\" cy=\"" + format_fixed(sy(c.selection_point->accuracy), 1) +
             "\" r=\"6\" fill=\"none\" stroke=\"" + color +
             "\" stroke-width=\"2\"/>\n";
      svg += "<text x=\"" + format_fixed(sx(c.selection_point->fraction) + 8, 1) +
             "\" y=\"" + format_fixed(sy(c.selection_point->accuracy) - 8, 1) +
             "\" font-size=\"11\" font-family=\"sans-serif\" fill=\"" + color +
             "\">selected " + format_fixed(c.selection_point->fraction * 100, 1) +
             "% @ " + format_fixed(c.selection_point->accuracy, 2) +
             "</text>\n";
    }
    // legend
    double ly = mt + 16 * static_cast<double>(ci);
    svg += "<rect x=\"" + format_fixed(W - mr - 150, 1) + "\" y=\"" +
           format_fixed(ly, 1) + "\" width=\"12\" height=\"4\" fill=\"" +
           color + "\"/>\n";
    svg += "<text x=\"" + format_fixed(W - mr - 132, 1) + "\" y=\"" +
           format_fixed(ly + 6, 1) +
           "\" font-size=\"11\" font-family=\"sans-serif\">" + c.name +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

// ─── Summary tables ──────────────────────────────────────────────────

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  if (n == 0) return 0;
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Whole-sweep summary plus the 1-SD selection, one row per curve.
inline std::string sweep_summary_csv_header() {
  return "model,mean_acc,median_acc,sd_acc,max_acc,pct_data_for_max,"
         "acc_within_1sd,pct_data_for_1sd";
}

inline std::string sweep_summary_csv_row(const std::string& model,
                                         const std::vector<CurvePoint>& curve,
                                         std::size_t k = 5) {
  std::vector<double> accs;
  for (const auto& p : curve) accs.push_back(p.accuracy);
  MeanSd ms = mean_sd(accs);
  double best_acc = -1e300, best_frac = 0;
  for (const auto& p : curve)
    if (p.accuracy > best_acc ||
        (p.accuracy == best_acc && p.fraction < best_frac)) {
      best_acc = p.accuracy;
      best_frac = p.fraction;
    }
  SelectionOutcome sel = select_model(curve, k);
  std::string row = csv_quote(model);
  row += ',' + format_fixed(ms.mean, 2);
  row += ',' + format_fixed(median_of(accs), 2);
  row += ',' + format_fixed(ms.sample_sd, 2);
  row += ',' + format_fixed(best_acc, 2);
  row += ',' + format_fixed(best_frac * 100, 1);
  row += ',' + format_fixed(sel.chosen_accuracy, 2);
  row += ',' + format_fixed(sel.chosen_fraction * 100, 1);
  return row;
}

// Zero-data accuracy and data needed to reach a comparable baseline.
inline std::string baseline_comparison_csv_header() {
  return "model,acc_at_0pct,baseline_acc,tolerance_pp,pct_data_for_baseline";
}

inline std::string baseline_comparison_csv_row(
    const std::string& model, const std::vector<CurvePoint>& curve,
    double baseline_acc, double tolerance_pp) {
  std::string zero = "";
  for (const auto& p : curve)
    if (std::abs(p.fraction) < 1e-9) zero = format_fixed(p.accuracy, 2);
  auto crossing = baseline_crossing(curve, baseline_acc, tolerance_pp);
  std::string row = csv_quote(model);
  row += ',' + zero;
  row += ',' + format_fixed(baseline_acc, 2);
  row += ',' + format_fixed(tolerance_pp, 2);
  row += ',';
  row += crossing ? format_fixed(*crossing * 100, 1) : std::string("never");
  return row;
}

}  // namespace asag
