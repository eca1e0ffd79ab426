#pragma once

#include <atomic>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "asag/classifier.hpp"
#include "asag/corpus.hpp"
#include "asag/errors.hpp"
#include "asag/metrics.hpp"
#include "asag/partitioning.hpp"
#include "asag/selection.hpp"
#include "asag/util.hpp"

namespace asag {

// ─── Learning curves ─────────────────────────────────────────────────

struct SweepPoint {
  double fraction = 0;
  MetricsReport metrics;          // on the question's test tier
  std::string subset_hash;        // training subset, from the schedule
  std::vector<LineageStep> lineage;
  StopReason stop_reason = StopReason::EmptyTrain;
  long epochs_run = 0;
};

struct SweepCurve {
  std::string question;
  std::vector<LineageStep> base_lineage;
  std::vector<SweepPoint> points;  // fractions strictly increasing

  std::vector<CurvePoint> accuracy_points_pct() const {
    std::vector<CurvePoint> out;
    for (const auto& p : points)
      out.push_back({p.fraction, p.metrics.accuracy * 100.0});
    return out;
  }
};

// Guard for the evaluation rule: a model is only scored on the question its
// lineage currently ends in.
inline void check_evaluation_target(const Checkpoint& ckpt,
                                    const std::string& question) {
  if (ckpt.lineage.empty() || ckpt.lineage.back().question != question)
    fail(ErrorKind::LineageConflict,
         lineage_name(ckpt.lineage) + " evaluated on " + question);
}

// ─── Scratch baselines ───────────────────────────────────────────────

struct ScratchOutcome {
  Checkpoint checkpoint;
  MetricsReport test_metrics;
  TrainingReport training;
};

// Fresh model fine-tuned on the question's full training tier, evaluated on
// that question's test tier only.
inline ScratchOutcome run_scratch(const std::string& question,
                                  const SplitResult& split,
                                  const ClassifierConfig& config) {
  const QuestionTiers& tiers = split.tiers(question);
  Checkpoint base = fresh_checkpoint(config.backend_id, config);
  TrainOutcome trained = train(base, tiers.train, tiers.val, config,
                               LineageStep{question, 1.0});
  ScratchOutcome out;
  out.checkpoint = std::move(trained.checkpoint);
  out.training = std::move(trained.report);
  check_evaluation_target(out.checkpoint, question);
  out.test_metrics = evaluate(out.checkpoint, tiers.test);
  return out;
}

// ─── Fraction sweeps ─────────────────────────────────────────────────

struct SweepOptions {
  long max_parallel = 1;
  bool keep_checkpoints = false;
};

struct SweepResult {
  SweepCurve curve;
  std::vector<Checkpoint> checkpoints;  // aligned with points when kept
};

// One train+evaluate per fraction, each restarting from `base` (never from
// the previous fraction's weights); the 0-fraction point is the identity
// fine-tune of `base`. Points are independent, so execution order and
// parallelism cannot change results.
inline SweepResult run_fraction_sweep_full(
    const Checkpoint& base, const std::string& question,
    const SplitResult& split, const std::vector<double>& fractions,
    const ClassifierConfig& config, const SweepOptions& options = {}) {
  for (const auto& step : base.lineage)
    if (step.question == question)
      fail(ErrorKind::LineageConflict,
           lineage_name(base.lineage) + " already fine-tuned on " + question);
  const QuestionTiers& tiers = split.tiers(question);
  SubsetSchedule schedule =
      build_subset_schedule(tiers.train, config.seed, fractions, question);

  SweepResult res;
  res.curve.question = question;
  res.curve.base_lineage = base.lineage;
  res.curve.points.resize(schedule.fractions.size());
  if (options.keep_checkpoints)
    res.checkpoints.resize(schedule.fractions.size());

  auto run_point = [&](std::size_t i) {
    double f = schedule.fractions[i];
    std::vector<ResponseRecord> subset;
    for (std::size_t m : schedule.member_indices[i])
      subset.push_back(tiers.train[m]);
    TrainOutcome trained =
        train(base, subset, tiers.val, config, LineageStep{question, f});
    SweepPoint point;
    point.fraction = f;
    point.subset_hash = schedule.subset_hashes[i];
    point.lineage = trained.checkpoint.lineage;
    point.stop_reason = trained.report.stop_reason;
    point.epochs_run = static_cast<long>(trained.report.epochs.size());
    check_evaluation_target(trained.checkpoint, question);
    point.metrics = evaluate(trained.checkpoint, tiers.test);
    res.curve.points[i] = std::move(point);
    if (options.keep_checkpoints)
      res.checkpoints[i] = std::move(trained.checkpoint);
  };

  long threads = std::max<long>(1, options.max_parallel);
  if (threads == 1) {
    for (std::size_t i = 0; i < schedule.fractions.size(); ++i) run_point(i);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= schedule.fractions.size()) break;
        run_point(i);
      }
    };
    std::vector<std::thread> pool;
    for (long t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return res;
}

inline SweepCurve run_fraction_sweep(const Checkpoint& base,
                                     const std::string& question,
                                     const SplitResult& split,
                                     const std::vector<double>& fractions,
                                     const ClassifierConfig& config,
                                     long max_parallel = 1) {
  return run_fraction_sweep_full(base, question, split, fractions, config,
                                 {max_parallel, false})
      .curve;
}

// ─── Chains ──────────────────────────────────────────────────────────

struct ChainStepSpec {
  std::string question;
  bool sweep = true;                       // false = full-data fine-tune
  std::vector<double> fractions = fraction_grid();
  std::optional<double> fraction_override;  // pick this point, not the 1-SD rule
};

struct CurriculumSpec {
  std::vector<ChainStepSpec> steps;  // distinct questions, executed in order
  ClassifierConfig config;
  std::size_t top_k = 5;
  long max_parallel = 1;
};

inline void validate_curriculum(const CurriculumSpec& spec) {
  if (spec.steps.empty()) fail(ErrorKind::InvalidSpec, "no chain steps");
  std::set<std::string> seen;
  for (const auto& s : spec.steps)
    if (!seen.insert(s.question).second)
      fail(ErrorKind::InvalidSpec, "duplicate chain question " + s.question);
}

struct ChainStepOutcome {
  std::string question;
  bool swept = false;
  Checkpoint selected;
  MetricsReport selected_metrics;
  std::optional<SweepCurve> curve;
  std::optional<SelectionOutcome> selection;
};

struct ChainOutcome {
  std::vector<ChainStepOutcome> steps;
};

// Scratch first step, then sequential near-domain fine-tuning; each swept
// step's checkpoint (1-SD rule unless overridden) seeds the next question.
inline ChainOutcome run_chain(const CurriculumSpec& spec,
                              const SplitResult& split) {
  validate_curriculum(spec);
  ChainOutcome out;
  std::optional<Checkpoint> current;

  for (std::size_t si = 0; si < spec.steps.size(); ++si) {
    const ChainStepSpec& step = spec.steps[si];
    ChainStepOutcome step_out;
    step_out.question = step.question;

    if (!step.sweep) {
      Checkpoint base = current ? *current
                                : fresh_checkpoint(spec.config.backend_id,
                                                   spec.config);
      const QuestionTiers& tiers = split.tiers(step.question);
      TrainOutcome trained = train(base, tiers.train, tiers.val, spec.config,
                                   LineageStep{step.question, 1.0});
      step_out.swept = false;
      step_out.selected = std::move(trained.checkpoint);
      check_evaluation_target(step_out.selected, step.question);
      step_out.selected_metrics = evaluate(step_out.selected, tiers.test);
    } else {
      Checkpoint base = current ? *current
                                : fresh_checkpoint(spec.config.backend_id,
                                                   spec.config);
      SweepResult swept = run_fraction_sweep_full(
          base, step.question, split, step.fractions, spec.config,
          {spec.max_parallel, true});
      step_out.swept = true;
      step_out.curve = swept.curve;

      std::size_t pick = 0;
      if (step.fraction_override) {
        bool found = false;
        for (std::size_t i = 0; i < swept.curve.points.size(); ++i)
          if (std::abs(swept.curve.points[i].fraction -
                       *step.fraction_override) < 1e-9) {
            pick = i;
            found = true;
          }
        if (!found)
          fail(ErrorKind::MissingFraction,
               format_fixed(*step.fraction_override, 4));
      } else {
        SelectionOutcome sel =
            select_model(swept.curve.accuracy_points_pct(), spec.top_k);
        step_out.selection = sel;
        for (std::size_t i = 0; i < swept.curve.points.size(); ++i)
          if (std::abs(swept.curve.points[i].fraction - sel.chosen_fraction) <
              1e-9)
            pick = i;
      }
      step_out.selected = swept.checkpoints[pick];
      step_out.selected_metrics = swept.curve.points[pick].metrics;
    }
    current = step_out.selected;
    out.steps.push_back(std::move(step_out));
  }
  return out;
}

// ─── Curve serialization ─────────────────────────────────────────────
// Figure-style data file: fraction plus percent metrics.

inline std::string curve_csv_header() {
  return "fraction,accuracy,precision,recall,f1";
}

inline std::string curve_to_csv(const SweepCurve& curve) {
  std::string out = curve_csv_header();
  out += '\n';
  for (const auto& p : curve.points) {
    out += format_fixed(p.fraction, 4);
    for (double v :
         {p.metrics.accuracy, p.metrics.macro_precision,
          p.metrics.macro_recall, p.metrics.macro_f1}) {
      out += ',';
      out += format_fixed(v * 100.0, 4);
    }
    out += '\n';
  }
  return out;
}

struct CurveFile {
  std::vector<CurvePoint> points;  // accuracy in percent
  std::string name;
};

inline CurveFile parse_curve_csv(const std::string& text,
                                 const std::string& name = "") {
  CurveFile out;
  out.name = name;
  auto lines = split_char(text, '\n');
  if (lines.empty()) fail(ErrorKind::Empty, "empty curve file");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto cells = csv_parse_line(lines[i]);
    if (cells.size() < 2)
      fail(ErrorKind::MalformedRecord, "curve row " + std::to_string(i + 1));
    out.points.push_back({std::stod(cells[0]), std::stod(cells[1])});
  }
  if (out.points.empty()) fail(ErrorKind::Empty, "curve has no points");
  return out;
}

inline nlohmann::json curve_to_json(const SweepCurve& curve) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : curve.points) {
    nlohmann::json lineage = nlohmann::json::array();
    for (const auto& s : p.lineage)
      lineage.push_back({{"question", s.question}, {"fraction", s.fraction}});
    points.push_back({{"fraction", p.fraction},
                      {"accuracy", p.metrics.accuracy},
                      {"precision", p.metrics.macro_precision},
                      {"recall", p.metrics.macro_recall},
                      {"f1", p.metrics.macro_f1},
                      {"subset_hash", p.subset_hash},
                      {"stop_reason", to_string(p.stop_reason)},
                      {"epochs_run", p.epochs_run},
                      {"lineage", lineage}});
  }
  nlohmann::json base = nlohmann::json::array();
  for (const auto& s : curve.base_lineage)
    base.push_back({{"question", s.question}, {"fraction", s.fraction}});
  return {{"question", curve.question},
          {"base_lineage", base},
          {"base_name", lineage_name(curve.base_lineage)},
          {"points", points}};
}

}  // namespace asag
