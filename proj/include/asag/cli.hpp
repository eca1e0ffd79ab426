#pragma once

#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "asag/classifier.hpp"
#include "asag/corpus.hpp"
#include "asag/curriculum.hpp"
#include "asag/erroranalysis.hpp"
#include "asag/http_client.hpp"
#include "asag/llmharness.hpp"
#include "asag/metrics.hpp"
#include "asag/partitioning.hpp"
#include "asag/reporting.hpp"
#include "asag/selection.hpp"
#include "asag/zipf.hpp"

namespace asag::cli {

// ─── Shared option plumbing ──────────────────────────────────────────

// Classifier options; precedence is CLI flag > config file > default.
struct TrainFlags {
  std::string config_file;
  std::string backend;
  double learning_rate = -1;
  long batch_size = -1;
  long patience = -1;
  long max_epochs = -1;
  long long seed = -1;
  std::vector<std::string> options;  // key=value backend options

  ClassifierConfig resolve() const {
    ClassifierConfig c;
    if (!config_file.empty()) {
      for (const auto& raw : split_char(read_file(config_file), '\n')) {
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
          fail(ErrorKind::InvalidSpec, "expected key = value: " + line);
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key == "backend") c.backend_id = value;
        else if (key == "learning_rate") c.learning_rate = std::stod(value);
        else if (key == "batch_size") c.batch_size = std::stol(value);
        else if (key == "patience") c.patience_epochs = std::stol(value);
        else if (key == "max_epochs") c.max_epochs = std::stol(value);
        else if (key == "seed") c.seed = std::stoull(value);
        else if (key.rfind("option.", 0) == 0)
          c.backend_options[key.substr(7)] = value;
        else fail(ErrorKind::InvalidSpec, "unknown config key '" + key + "'");
      }
    }
    if (!backend.empty()) c.backend_id = backend;
    if (learning_rate > 0) c.learning_rate = learning_rate;
    if (batch_size > 0) c.batch_size = batch_size;
    if (patience > 0) c.patience_epochs = patience;
    if (max_epochs > 0) c.max_epochs = max_epochs;
    if (seed >= 0) c.seed = static_cast<std::uint64_t>(seed);
    for (const auto& kv : options) {
      auto eq = kv.find('=');
      if (eq == std::string::npos)
        fail(ErrorKind::UsageError, "--option expects key=value");
      c.backend_options[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    validate_config(c);
    return c;
  }
};

inline void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--config", f.config_file, "classifier config file");
  cmd->add_option("--backend", f.backend, "backend id (toy, encoder)");
  cmd->add_option("--lr", f.learning_rate, "learning rate");
  cmd->add_option("--batch-size", f.batch_size, "batch size");
  cmd->add_option("--patience", f.patience, "early-stopping patience epochs");
  cmd->add_option("--max-epochs", f.max_epochs, "epoch cap");
  cmd->add_option("--seed", f.seed, "training seed");
  cmd->add_option("--option", f.options, "backend option key=value")
      ->take_all();
}

// "0:0.025:1" (start:step:end) or a comma list of fractions.
inline std::vector<double> parse_fractions(const std::string& text) {
  if (text.find(':') != std::string::npos) {
    auto parts = split_char(text, ':');
    if (parts.size() != 3)
      fail(ErrorKind::UsageError, "fractions range must be start:step:end");
    double start = std::stod(parts[0]);
    double step = std::stod(parts[1]);
    double end = std::stod(parts[2]);
    if (step <= 0) fail(ErrorKind::UsageError, "fraction step must be > 0");
    std::vector<double> out;
    long n = static_cast<long>(std::floor((end - start) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(start + step * i);
    if (std::abs(out.back() - end) > 1e-9) out.push_back(end);
    return out;
  }
  std::vector<double> out;
  for (const auto& p : split_char(text, ','))
    if (!trim(p).empty()) out.push_back(std::stod(trim(p)));
  return out;
}

inline PromptSamples load_samples(const std::string& path) {
  if (path.empty()) return default_prompt_samples();
  return parse_prompt_samples(read_file(path));
}

struct SplitInputs {
  Corpus corpus;
  SplitResult split;
};

inline SplitInputs load_split_inputs(const std::string& corpus_path,
                                     const std::string& split_path) {
  SplitInputs in;
  in.corpus = load_corpus(corpus_path);
  in.split = load_split(in.corpus, split_path);
  return in;
}

inline RunManifest base_manifest(const std::string& command,
                                 const std::vector<std::string>& argv) {
  RunManifest m;
  m.command = command;
  m.argv = argv;
  return m;
}

// ─── Subcommand bodies ───────────────────────────────────────────────

inline int run(const std::vector<std::string>& args);

inline int run_main(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 0; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

inline int run(const std::vector<std::string>& args) {
  CLI::App app{"short-answer grading experiment harness"};
  app.require_subcommand(1);

  // --- synth ---
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  std::string synth_spec_path, synth_out;
  synth->add_option("--spec", synth_spec_path, "generator spec file")
      ->required();
  synth->add_option("--out", synth_out, "output corpus (JSONL)")->required();
  synth->callback([&] {
    SynthSpec spec = load_synth_spec(synth_spec_path);
    Corpus corpus = generate_synthetic_corpus(spec);
    save_corpus(corpus, synth_out);
    RunManifest m = base_manifest("synth", args);
    m.seeds = {spec.seed};
    add_input(m, synth_spec_path);
    add_output(m, synth_out);
    write_manifest(m, synth_out + ".manifest.json");
    std::cout << "wrote " << corpus.size() << " records to " << synth_out
              << "\n";
  });

  // --- split ---
  auto* split_cmd =
      app.add_subcommand("split", "student-integrity train/val/test split");
  std::string split_corpus, split_out;
  SplitSpec split_spec;
  long long split_seed = 0;
  split_cmd->add_option("--corpus", split_corpus, "corpus JSONL")->required();
  split_cmd->add_option("--out", split_out, "split manifest JSON")->required();
  split_cmd->add_option("--train-ratio", split_spec.train_ratio);
  split_cmd->add_option("--val-ratio", split_spec.val_ratio);
  split_cmd->add_option("--seed", split_seed);
  split_cmd->callback([&] {
    split_spec.seed = static_cast<std::uint64_t>(split_seed);
    Corpus corpus = load_corpus(split_corpus);
    SplitResult result = split_by_student(corpus, split_spec);
    save_split(result, split_out);
    RunManifest m = base_manifest("split", args);
    m.seeds = {split_spec.seed};
    add_input(m, split_corpus);
    add_output(m, split_out);
    write_manifest(m, split_out + ".manifest.json");
    std::cout << "students: " << result.n_train_students << " train / "
              << result.n_val_students << " val / " << result.n_test_students
              << " test\n";
  });

  // --- train (scratch) ---
  auto* train_cmd =
      app.add_subcommand("train", "fine-tune a fresh model on one question");
  std::string tr_corpus, tr_split, tr_question, tr_ckpt_out, tr_report_out;
  TrainFlags tr_flags;
  train_cmd->add_option("--corpus", tr_corpus)->required();
  train_cmd->add_option("--split", tr_split)->required();
  train_cmd->add_option("--question", tr_question)->required();
  train_cmd->add_option("--out-ckpt", tr_ckpt_out, "checkpoint directory")
      ->required();
  train_cmd->add_option("--report", tr_report_out, "training report JSON");
  add_train_flags(train_cmd, tr_flags);
  train_cmd->callback([&] {
    auto in = load_split_inputs(tr_corpus, tr_split);
    ClassifierConfig config = tr_flags.resolve();
    ScratchOutcome out = run_scratch(tr_question, in.split, config);
    save_checkpoint(out.checkpoint, tr_ckpt_out);
    nlohmann::json rep;
    rep["question"] = tr_question;
    rep["model"] = lineage_name(out.checkpoint.lineage);
    rep["test_metrics"] = {{"accuracy", out.test_metrics.accuracy},
                           {"precision", out.test_metrics.macro_precision},
                           {"recall", out.test_metrics.macro_recall},
                           {"f1", out.test_metrics.macro_f1}};
    rep["training"] = report_to_json(out.training);
    std::string report_path =
        tr_report_out.empty() ? tr_ckpt_out + "/report.json" : tr_report_out;
    write_file(report_path, rep.dump(2) + "\n");
    RunManifest m = base_manifest("train", args);
    m.config = config_to_json(config);
    m.seeds = {config.seed};
    add_input(m, tr_corpus);
    add_input(m, tr_split);
    add_output(m, report_path);
    write_manifest(m, tr_ckpt_out + "/run.manifest.json");
    std::cout << lineage_name(out.checkpoint.lineage) << " test accuracy "
              << format_fixed(out.test_metrics.accuracy * 100, 2) << "%\n";
  });

  // --- sweep ---
  auto* sweep_cmd = app.add_subcommand(
      "sweep", "learning curve over nested stratified training fractions");
  std::string sw_corpus, sw_split, sw_question, sw_base, sw_out, sw_out_json;
  std::string sw_schedule_out;
  std::string sw_fractions = "0:0.025:1";
  long sw_parallel = 1;
  TrainFlags sw_flags;
  sweep_cmd->add_option("--corpus", sw_corpus)->required();
  sweep_cmd->add_option("--split", sw_split)->required();
  sweep_cmd->add_option("--question", sw_question)->required();
  sweep_cmd->add_option("--base", sw_base, "base checkpoint directory");
  sweep_cmd->add_option("--out", sw_out, "curve CSV")->required();
  sweep_cmd->add_option("--out-json", sw_out_json, "curve JSON with hashes");
  sweep_cmd->add_option("--schedule-out", sw_schedule_out,
                        "subset schedule manifest JSON");
  sweep_cmd->add_option("--fractions", sw_fractions, "start:step:end or list");
  sweep_cmd->add_option("--parallel", sw_parallel, "concurrent sweep points");
  add_train_flags(sweep_cmd, sw_flags);
  sweep_cmd->callback([&] {
    auto in = load_split_inputs(sw_corpus, sw_split);
    ClassifierConfig config = sw_flags.resolve();
    Checkpoint base = sw_base.empty()
                          ? fresh_checkpoint(config.backend_id, config)
                          : load_checkpoint(sw_base);
    if (!sw_base.empty()) config.backend_id = base.backend_id;
    SweepCurve curve = run_fraction_sweep(base, sw_question, in.split,
                                          parse_fractions(sw_fractions),
                                          config, sw_parallel);
    write_file(sw_out, curve_to_csv(curve));
    if (!sw_out_json.empty())
      write_file(sw_out_json, curve_to_json(curve).dump(2) + "\n");
    if (!sw_schedule_out.empty()) {
      SubsetSchedule sched = build_subset_schedule(
          in.split.tiers(sw_question).train, config.seed,
          parse_fractions(sw_fractions), sw_question);
      write_file(sw_schedule_out, schedule_to_json(sched).dump(2) + "\n");
    }
    RunManifest m = base_manifest("sweep", args);
    m.config = config_to_json(config);
    m.seeds = {config.seed};
    add_input(m, sw_corpus);
    add_input(m, sw_split);
    add_output(m, sw_out);
    write_manifest(m, sw_out + ".manifest.json");
    std::cout << "swept " << curve.points.size() << " fractions for "
              << sw_question << "\n";
  });

  // --- chain ---
  auto* chain_cmd = app.add_subcommand(
      "chain", "sequential near-domain fine-tuning across questions");
  std::string ch_corpus, ch_split, ch_questions = "Q1,Q2,Q3", ch_out_dir;
  std::string ch_fractions = "0:0.025:1";
  std::vector<std::string> ch_overrides;
  std::size_t ch_k = 5;
  long ch_parallel = 1;
  TrainFlags ch_flags;
  chain_cmd->add_option("--corpus", ch_corpus)->required();
  chain_cmd->add_option("--split", ch_split)->required();
  chain_cmd->add_option("--questions", ch_questions, "ordered, comma-separated");
  chain_cmd->add_option("--out-dir", ch_out_dir)->required();
  chain_cmd->add_option("--fractions", ch_fractions);
  chain_cmd->add_option("--k", ch_k, "top-k for the 1-SD rule");
  chain_cmd->add_option("--fraction", ch_overrides,
                        "Q=fraction selection override")
      ->take_all();
  chain_cmd->add_option("--parallel", ch_parallel);
  add_train_flags(chain_cmd, ch_flags);
  chain_cmd->callback([&] {
    auto in = load_split_inputs(ch_corpus, ch_split);
    CurriculumSpec spec;
    spec.config = ch_flags.resolve();
    spec.top_k = ch_k;
    spec.max_parallel = ch_parallel;
    std::map<std::string, double> overrides;
    for (const auto& ov : ch_overrides) {
      auto eq = ov.find('=');
      if (eq == std::string::npos)
        fail(ErrorKind::UsageError, "--fraction expects Q=value");
      overrides[ov.substr(0, eq)] = std::stod(ov.substr(eq + 1));
    }
    auto questions = split_char(ch_questions, ',');
    for (std::size_t i = 0; i < questions.size(); ++i) {
      ChainStepSpec step;
      step.question = trim(questions[i]);
      step.sweep = i > 0;
      step.fractions = parse_fractions(ch_fractions);
      if (auto it = overrides.find(step.question); it != overrides.end())
        step.fraction_override = it->second;
      spec.steps.push_back(std::move(step));
    }
    ChainOutcome chain = run_chain(spec, in.split);

    std::filesystem::create_directories(ch_out_dir);
    nlohmann::json summary = nlohmann::json::array();
    for (const auto& step : chain.steps) {
      std::string name = lineage_name(step.selected.lineage);
      std::string ckpt_dir = ch_out_dir + "/" + name;
      save_checkpoint(step.selected, ckpt_dir);
      nlohmann::json js = {{"question", step.question},
                           {"model", name},
                           {"checkpoint", ckpt_dir},
                           {"accuracy", step.selected_metrics.accuracy}};
      if (step.curve) {
        std::string curve_path = ch_out_dir + "/" + name + "_curve.csv";
        write_file(curve_path, curve_to_csv(*step.curve));
        write_file(ch_out_dir + "/" + name + "_curve.json",
                   curve_to_json(*step.curve).dump(2) + "\n");
        js["curve"] = curve_path;
      }
      if (step.selection) {
        write_file(ch_out_dir + "/" + name + "_selection.json",
                   selection_to_json(*step.selection).dump(2) + "\n");
        js["chosen_fraction"] = step.selection->chosen_fraction;
      }
      summary.push_back(js);
    }
    write_file(ch_out_dir + "/chain.json", summary.dump(2) + "\n");
    RunManifest m = base_manifest("chain", args);
    m.config = config_to_json(spec.config);
    m.seeds = {spec.config.seed};
    add_input(m, ch_corpus);
    add_input(m, ch_split);
    add_output(m, ch_out_dir + "/chain.json");
    write_manifest(m, ch_out_dir + "/run.manifest.json");
    for (const auto& step : chain.steps)
      std::cout << lineage_name(step.selected.lineage) << " accuracy "
                << format_fixed(step.selected_metrics.accuracy * 100, 2)
                << "%\n";
  });

  // --- select ---
  auto* select_cmd =
      app.add_subcommand("select", "top-k / 1-SD model selection on a curve");
  std::string sel_curve, sel_out, sel_out_csv, sel_name = "curve";
  std::size_t sel_k = 5;
  select_cmd->add_option("--curve", sel_curve, "curve CSV")->required();
  select_cmd->add_option("--out", sel_out, "selection JSON")->required();
  select_cmd->add_option("--out-csv", sel_out_csv, "selection CSV row");
  select_cmd->add_option("--k", sel_k);
  select_cmd->add_option("--name", sel_name, "model/question tag");
  select_cmd->callback([&] {
    CurveFile curve = parse_curve_csv(read_file(sel_curve), sel_name);
    SelectionOutcome sel = select_model(curve.points, sel_k);
    nlohmann::json j = selection_to_json(sel);
    j["name"] = sel_name;
    write_file(sel_out, j.dump(2) + "\n");
    if (!sel_out_csv.empty())
      write_file(sel_out_csv, selection_csv_header() + "\n" +
                                  selection_csv_row(sel_name, sel) + "\n");
    RunManifest m = base_manifest("select", args);
    add_input(m, sel_curve);
    add_output(m, sel_out);
    write_manifest(m, sel_out + ".manifest.json");
    std::cout << "selected " << format_fixed(sel.chosen_fraction * 100, 1)
              << "% data @ accuracy " << format_fixed(sel.chosen_accuracy, 2)
              << "\n";
  });

  // --- advantage ---
  auto* adv_cmd = app.add_subcommand(
      "advantage", "accuracy/data advantage of a transfer curve");
  std::string adv_curve, adv_out, adv_out_csv, adv_name = "curve";
  double adv_scratch_acc = 0;
  double adv_at_fraction = -1;
  bool adv_data = false;
  adv_cmd->add_option("--curve", adv_curve)->required();
  adv_cmd->add_option("--scratch-acc", adv_scratch_acc,
                      "reference accuracy (percent)")
      ->required();
  adv_cmd->add_option("--at-fraction", adv_at_fraction,
                      "accuracy advantage at this fraction");
  adv_cmd->add_flag("--data", adv_data, "compute data advantage");
  adv_cmd->add_option("--out", adv_out)->required();
  adv_cmd->add_option("--out-csv", adv_out_csv, "advantage CSV row");
  adv_cmd->add_option("--name", adv_name);
  adv_cmd->callback([&] {
    CurveFile curve = parse_curve_csv(read_file(adv_curve), adv_name);
    nlohmann::json j;
    j["name"] = adv_name;
    j["scratch_acc"] = adv_scratch_acc;
    std::string csv =
        "name,scratch_acc,at_fraction,accuracy_advantage_pp,"
        "data_advantage_fraction\n" +
        csv_quote(adv_name) + "," + format_fixed(adv_scratch_acc, 2);
    if (adv_at_fraction >= 0) {
      double pp =
          accuracy_advantage(curve.points, adv_scratch_acc, adv_at_fraction);
      j["at_fraction"] = adv_at_fraction;
      j["accuracy_advantage_pp"] = pp;
      csv += "," + format_fixed(adv_at_fraction, 4) + "," +
             format_fixed(pp, 2);
    } else {
      csv += ",,";
    }
    if (adv_data) {
      auto da = data_advantage(curve.points, adv_scratch_acc);
      if (da) {
        j["data_advantage_fraction"] = *da;
        csv += "," + format_fixed(*da, 4);
      } else {
        j["data_advantage_fraction"] = nullptr;
        csv += ",never";
      }
    } else {
      csv += ",";
    }
    write_file(adv_out, j.dump(2) + "\n");
    if (!adv_out_csv.empty()) write_file(adv_out_csv, csv + "\n");
    RunManifest m = base_manifest("advantage", args);
    add_input(m, adv_curve);
    add_output(m, adv_out);
    write_manifest(m, adv_out + ".manifest.json");
    std::cout << j.dump() << "\n";
  });

  // --- metrics ---
  auto* metrics_cmd =
      app.add_subcommand("metrics", "evaluate a checkpoint on a split tier");
  std::string me_corpus, me_split, me_question, me_ckpt, me_out;
  std::string me_tier = "test";
  metrics_cmd->add_option("--corpus", me_corpus)->required();
  metrics_cmd->add_option("--split", me_split)->required();
  metrics_cmd->add_option("--question", me_question)->required();
  metrics_cmd->add_option("--ckpt", me_ckpt)->required();
  metrics_cmd->add_option("--tier", me_tier, "train|val|test");
  metrics_cmd->add_option("--out", me_out, "metrics CSV")->required();
  metrics_cmd->callback([&] {
    auto in = load_split_inputs(me_corpus, me_split);
    Checkpoint ckpt = load_checkpoint(me_ckpt);
    const QuestionTiers& tiers = in.split.tiers(me_question);
    const std::vector<ResponseRecord>* records = &tiers.test;
    if (me_tier == "train") records = &tiers.train;
    else if (me_tier == "val") records = &tiers.val;
    else if (me_tier != "test")
      fail(ErrorKind::UsageError, "tier must be train, val, or test");
    check_evaluation_target(ckpt, me_question);
    MetricsReport rep = evaluate(ckpt, *records);
    std::string csv = metrics_csv_header();
    csv += '\n';
    csv += metrics_csv_row(lineage_name(ckpt.lineage), "", rep);
    csv += '\n';
    write_file(me_out, csv);
    RunManifest m = base_manifest("metrics", args);
    add_input(m, me_corpus);
    add_input(m, me_split);
    add_output(m, me_out);
    write_manifest(m, me_out + ".manifest.json");
    std::cout << "accuracy " << format_fixed(rep.accuracy * 100, 2) << "%\n";
  });

  // --- errors ---
  auto* errors_cmd = app.add_subcommand(
      "errors", "disagreement taxonomy for two models on one question");
  std::string er_corpus, er_split, er_question, er_ckpt_a, er_ckpt_b,
      er_out_dir;
  errors_cmd->add_option("--corpus", er_corpus)->required();
  errors_cmd->add_option("--split", er_split)->required();
  errors_cmd->add_option("--question", er_question)->required();
  errors_cmd->add_option("--ckpt-a", er_ckpt_a)->required();
  errors_cmd->add_option("--ckpt-b", er_ckpt_b)->required();
  errors_cmd->add_option("--out-dir", er_out_dir)->required();
  errors_cmd->callback([&] {
    auto in = load_split_inputs(er_corpus, er_split);
    Checkpoint a = load_checkpoint(er_ckpt_a);
    Checkpoint b = load_checkpoint(er_ckpt_b);
    const auto& test = in.split.tiers(er_question).test;
    check_evaluation_target(a, er_question);
    check_evaluation_target(b, er_question);
    auto pa = predicted_labels(predict(a, test));
    auto pb = predicted_labels(predict(b, test));
    std::vector<Label> truth;
    for (const auto& r : test) truth.push_back(r.label);

    std::string name_a = lineage_name(a.lineage);
    std::string name_b = lineage_name(b.lineage);
    auto shared = shared_error_table(truth, pa, pb);
    auto specific = model_specific_table(truth, pa, pb);
    auto disagreements =
        find_disagreements(test, {{name_a, pa}, {name_b, pb}});

    std::filesystem::create_directories(er_out_dir);
    write_file(er_out_dir + "/shared_errors.csv",
               scenario_table_csv(shared_error_scenarios(), shared, name_a,
                                  name_b));
    write_file(er_out_dir + "/model_specific_errors.csv",
               scenario_table_csv(model_specific_scenarios(), specific,
                                  name_a, name_b));
    write_file(er_out_dir + "/review_queue.csv",
               export_review_queue(disagreements.records));
    nlohmann::json counts;
    counts["disagreements"] = disagreements.per_model_counts;
    counts["shared_error_total"] = table_total(shared);
    counts["model_specific_total"] = table_total(specific);
    write_file(er_out_dir + "/counts.json", counts.dump(2) + "\n");
    RunManifest m = base_manifest("errors", args);
    add_input(m, er_corpus);
    add_input(m, er_split);
    add_output(m, er_out_dir + "/counts.json");
    write_manifest(m, er_out_dir + "/run.manifest.json");
    std::cout << "shared errors " << table_total(shared)
              << ", model-specific " << table_total(specific) << "\n";
  });

  // --- review-export ---
  auto* rexp_cmd = app.add_subcommand(
      "review-export", "export human-machine disagreements for expert review");
  std::string rx_corpus, rx_split, rx_question, rx_out;
  std::vector<std::string> rx_ckpts;
  rexp_cmd->add_option("--corpus", rx_corpus)->required();
  rexp_cmd->add_option("--split", rx_split)->required();
  rexp_cmd->add_option("--question", rx_question)->required();
  rexp_cmd->add_option("--ckpt", rx_ckpts, "model checkpoint (repeatable)")
      ->required()
      ->take_all();
  rexp_cmd->add_option("--out", rx_out, "review queue CSV")->required();
  rexp_cmd->callback([&] {
    auto in = load_split_inputs(rx_corpus, rx_split);
    const auto& test = in.split.tiers(rx_question).test;
    std::vector<ModelPredictions> models;
    for (const auto& path : rx_ckpts) {
      Checkpoint ckpt = load_checkpoint(path);
      check_evaluation_target(ckpt, rx_question);
      models.push_back({lineage_name(ckpt.lineage),
                        predicted_labels(predict(ckpt, test))});
    }
    auto disagreements = find_disagreements(test, models);
    write_file(rx_out, export_review_queue(disagreements.records));
    RunManifest m = base_manifest("review-export", args);
    add_input(m, rx_corpus);
    add_input(m, rx_split);
    add_output(m, rx_out);
    write_manifest(m, rx_out + ".manifest.json");
    std::cout << disagreements.records.size() << " records queued\n";
  });

  // --- review-apply ---
  auto* rapp_cmd = app.add_subcommand(
      "review-apply", "apply expert decisions as a label overlay");
  std::string ra_corpus, ra_queue, ra_out;
  rapp_cmd->add_option("--corpus", ra_corpus)->required();
  rapp_cmd->add_option("--queue", ra_queue, "edited review queue CSV")
      ->required();
  rapp_cmd->add_option("--out", ra_out, "overlay JSON")->required();
  rapp_cmd->callback([&] {
    Corpus corpus = load_corpus(ra_corpus);
    auto decisions = parse_review_queue(read_file(ra_queue));
    ReviewOutcome outcome = apply_review(corpus, decisions);
    nlohmann::json overlay = nlohmann::json::object();
    for (const auto& [id, label] : outcome.overlay)
      overlay[id] = label_name(label);
    nlohmann::json j = {{"miscode_count", outcome.miscode_count},
                        {"decisions", decisions.size()},
                        {"overlay", overlay}};
    write_file(ra_out, j.dump(2) + "\n");
    RunManifest m = base_manifest("review-apply", args);
    add_input(m, ra_corpus);
    add_input(m, ra_queue);
    add_output(m, ra_out);
    write_manifest(m, ra_out + ".manifest.json");
    std::cout << outcome.miscode_count << " possible miscodes of "
              << decisions.size() << " decisions\n";
  });

  // --- prompt-export ---
  auto* pexp_cmd =
      app.add_subcommand("prompt-export", "render grading prompts per record");
  std::string px_corpus, px_out, px_samples;
  pexp_cmd->add_option("--corpus", px_corpus)->required();
  pexp_cmd->add_option("--out", px_out, "prompts JSONL")->required();
  pexp_cmd->add_option("--samples", px_samples, "sample answers config");
  pexp_cmd->callback([&] {
    Corpus corpus = load_corpus(px_corpus);
    PromptSamples samples = load_samples(px_samples);
    std::string out;
    for (const auto& r : corpus.records) {
      PromptBundle b =
          build_prompt(r.question.question_type, samples, r.text);
      nlohmann::json j = {{"record_id", r.record_id()},
                          {"question_type", b.question_type},
                          {"system", b.system_text},
                          {"user", b.user_text}};
      out += j.dump();
      out += '\n';
    }
    write_file(px_out, out);
    RunManifest m = base_manifest("prompt-export", args);
    add_input(m, px_corpus);
    add_output(m, px_out);
    write_manifest(m, px_out + ".manifest.json");
    std::cout << corpus.size() << " prompts rendered\n";
  });

  // --- llm-run ---
  auto* llm_cmd = app.add_subcommand(
      "llm-run", "grade a corpus through the chat-completion contract");
  std::string lr_corpus, lr_out, lr_samples, lr_mock, lr_endpoint, lr_cache;
  std::string lr_model = "mock";
  std::string lr_metrics_out;
  std::vector<double> lr_temperatures;
  long lr_concurrency = 1, lr_retries = 3;
  bool lr_exclude_unparseable = false;
  llm_cmd->add_option("--corpus", lr_corpus)->required();
  llm_cmd->add_option("--out", lr_out, "grades CSV")->required();
  llm_cmd->add_option("--samples", lr_samples);
  llm_cmd->add_option("--mock", lr_mock, "mock fixture JSON");
  llm_cmd->add_option("--endpoint", lr_endpoint,
                      "host:port of an OpenAI-compatible endpoint "
                      "(credentials via ASAG_API_KEY)");
  llm_cmd->add_option("--model", lr_model);
  llm_cmd->add_option("--temperature", lr_temperatures, "repeatable")
      ->take_all();
  llm_cmd->add_option("--cache", lr_cache, "response cache directory");
  llm_cmd->add_option("--concurrency", lr_concurrency);
  llm_cmd->add_option("--retries", lr_retries);
  llm_cmd->add_option("--metrics-out", lr_metrics_out, "per-temperature CSV");
  llm_cmd->add_flag("--exclude-unparseable", lr_exclude_unparseable,
                    "drop unparseable completions from the denominator");
  llm_cmd->callback([&] {
    Corpus corpus = load_corpus(lr_corpus);
    PromptSamples samples = load_samples(lr_samples);
    if (lr_temperatures.empty()) lr_temperatures = {0.0, 0.5, 1.0};

    std::unique_ptr<ChatClient> client;
    if (!lr_mock.empty())
      client = std::make_unique<MockChatClient>(
          MockChatClient::from_fixture_json(read_file(lr_mock)));
    else if (!lr_endpoint.empty())
      client = std::make_unique<HttpChatClient>(lr_endpoint);
    else
      fail(ErrorKind::UsageError, "need --mock or --endpoint");

    std::vector<PromptBundle> bundles;
    for (const auto& r : corpus.records) {
      PromptBundle b = build_prompt(r.question.question_type, samples, r.text);
      b.record_id = r.record_id();
      bundles.push_back(std::move(b));
    }

    std::string grades_csv = "record_id,temperature,parsed,raw\n";
    std::string metrics_csv = "temperature,accuracy,precision,recall,f1,"
                              "unparseable,cache_hits,prompt_tokens,"
                              "completion_tokens\n";
    std::vector<MetricsReport> per_temperature;
    for (double temp : lr_temperatures) {
      RunConfig rc;
      rc.model_id = lr_model;
      rc.temperature = temp;
      rc.max_concurrent = lr_concurrency;
      rc.retry.max_attempts = lr_retries;
      rc.cache_dir = lr_cache;
      BatchResultSet res = run_batch(*client, bundles, rc);
      GradedMetrics gm = score_grades(
          corpus.records, res.grades,
          lr_exclude_unparseable ? UnparseablePolicy::Exclude
                                 : UnparseablePolicy::CountAsWrong);
      per_temperature.push_back(gm.report);
      for (std::size_t i = 0; i < res.grades.size(); ++i) {
        const auto& g = res.grades[i];
        grades_csv += csv_quote(bundles[i].record_id) + "," +
                      format_fixed(temp, 2) + "," +
                      (g.label ? label_display(*g.label) : "Unparseable") +
                      "," + csv_quote(g.raw) + "\n";
      }
      metrics_csv += format_fixed(temp, 2);
      for (double v : {gm.report.accuracy, gm.report.macro_precision,
                       gm.report.macro_recall, gm.report.macro_f1})
        metrics_csv += "," + format_fixed(v * 100, 2);
      metrics_csv += "," + std::to_string(gm.n_unparseable);
      metrics_csv += "," + std::to_string(res.ledger.cache_hits());
      metrics_csv += "," + std::to_string(res.ledger.total_prompt_tokens());
      metrics_csv +=
          "," + std::to_string(res.ledger.total_completion_tokens());
      metrics_csv += "\n";
    }
    if (per_temperature.size() > 1) {
      TemperatureAggregate agg = aggregate_temperature_runs(per_temperature);
      metrics_csv += "mean," + format_fixed(agg.accuracy.mean * 100, 2) + "," +
                     format_fixed(agg.precision.mean * 100, 2) + "," +
                     format_fixed(agg.recall.mean * 100, 2) + "," +
                     format_fixed(agg.f1.mean * 100, 2) + ",,,,\n";
      metrics_csv += "sample_sd," +
                     format_fixed(agg.accuracy.sample_sd * 100, 2) + "," +
                     format_fixed(agg.precision.sample_sd * 100, 2) + "," +
                     format_fixed(agg.recall.sample_sd * 100, 2) + "," +
                     format_fixed(agg.f1.sample_sd * 100, 2) + ",,,,\n";
    }
    write_file(lr_out, grades_csv);
    if (!lr_metrics_out.empty()) write_file(lr_metrics_out, metrics_csv);
    RunManifest m = base_manifest("llm-run", args);
    add_input(m, lr_corpus);
    add_output(m, lr_out);
    write_manifest(m, lr_out + ".manifest.json");
    std::cout << "graded " << corpus.size() << " records at "
              << lr_temperatures.size() << " temperatures\n";
  });

  // --- finetune-export ---
  auto* ft_cmd = app.add_subcommand(
      "finetune-export", "chat-format training file from labeled records");
  std::string ft_corpus, ft_out, ft_samples;
  ft_cmd->add_option("--corpus", ft_corpus)->required();
  ft_cmd->add_option("--out", ft_out, "training JSONL")->required();
  ft_cmd->add_option("--samples", ft_samples);
  ft_cmd->callback([&] {
    Corpus corpus = load_corpus(ft_corpus);
    PromptSamples samples = load_samples(ft_samples);
    write_file(ft_out, export_finetune_dataset(corpus.records, samples));
    RunManifest m = base_manifest("finetune-export", args);
    add_input(m, ft_corpus);
    add_output(m, ft_out);
    write_manifest(m, ft_out + ".manifest.json");
    std::cout << corpus.size() << " training examples exported\n";
  });

  // --- zipf ---
  auto* zipf_cmd = app.add_subcommand(
      "zipf", "rank-frequency analysis and power-law fit of response text");
  std::string zf_corpus, zf_out_csv, zf_out_fit;
  std::string zf_unit = "tokens";
  std::size_t zf_min_rank = 1, zf_max_rank = 0;
  zipf_cmd->add_option("--corpus", zf_corpus)->required();
  zipf_cmd->add_option("--out-csv", zf_out_csv, "rank,count CSV");
  zipf_cmd->add_option("--out-fit", zf_out_fit, "fit summary JSON");
  zipf_cmd->add_option("--unit", zf_unit, "tokens|responses");
  zipf_cmd->add_option("--min-rank", zf_min_rank);
  zipf_cmd->add_option("--max-rank", zf_max_rank, "0 = no upper cut");
  zipf_cmd->callback([&] {
    Corpus corpus = load_corpus(zf_corpus);
    ZipfUnit unit = ZipfUnit::Tokens;
    if (zf_unit == "responses") unit = ZipfUnit::Responses;
    else if (zf_unit != "tokens")
      fail(ErrorKind::UsageError, "unit must be tokens or responses");
    RankFrequency rf = corpus_rank_frequency(corpus, unit);
    if (!zf_out_csv.empty()) write_file(zf_out_csv, rank_frequency_csv(rf));
    ZipfFit fit = fit_zipf(rf, zf_min_rank, zf_max_rank);
    nlohmann::json j = {{"exponent", fit.exponent},
                        {"intercept", fit.intercept},
                        {"r_squared", fit.r_squared},
                        {"ranks_fitted", fit.sample_size},
                        {"distinct", rf.entries.size()},
                        {"singleton_fraction", singleton_fraction(rf)}};
    if (!zf_out_fit.empty()) write_file(zf_out_fit, j.dump(2) + "\n");
    if (!zf_out_csv.empty() || !zf_out_fit.empty()) {
      RunManifest m = base_manifest("zipf", args);
      add_input(m, zf_corpus);
      if (!zf_out_csv.empty()) add_output(m, zf_out_csv);
      if (!zf_out_fit.empty()) add_output(m, zf_out_fit);
      std::string manifest_target =
          !zf_out_fit.empty() ? zf_out_fit : zf_out_csv;
      write_manifest(m, manifest_target + ".manifest.json");
    }
    std::cout << "beta " << format_fixed(fit.exponent, 4) << " over "
              << fit.sample_size << " ranks\n";
  });

  // --- report ---
  auto* report_cmd = app.add_subcommand(
      "report", "plots and summary tables from learning curves");
  std::vector<std::string> rp_curves, rp_names;
  std::string rp_out_dir;
  std::size_t rp_k = 5;
  double rp_baseline = -1, rp_tolerance = 1.0;
  std::string rp_title = "accuracy vs training data";
  report_cmd->add_option("--curves", rp_curves, "curve CSVs")
      ->required()
      ->take_all();
  report_cmd->add_option("--names", rp_names, "legend names per curve")
      ->take_all();
  report_cmd->add_option("--out-dir", rp_out_dir)->required();
  report_cmd->add_option("--k", rp_k);
  report_cmd->add_option("--baseline", rp_baseline,
                         "scratch full-data accuracy (percent)");
  report_cmd->add_option("--tolerance", rp_tolerance, "percentage points");
  report_cmd->add_option("--title", rp_title);
  report_cmd->callback([&] {
    std::filesystem::create_directories(rp_out_dir);
    std::vector<PlotCurve> plot;
    std::string summary = sweep_summary_csv_header() + "\n";
    std::string baseline_csv = baseline_comparison_csv_header() + "\n";
    for (std::size_t i = 0; i < rp_curves.size(); ++i) {
      std::string name = i < rp_names.size()
                             ? rp_names[i]
                             : std::filesystem::path(rp_curves[i]).stem()
                                   .string();
      CurveFile curve = parse_curve_csv(read_file(rp_curves[i]), name);
      PlotCurve pc;
      pc.name = name;
      pc.points = curve.points;
      if (curve.points.size() > 1) {
        SelectionOutcome sel = select_model(curve.points, rp_k);
        pc.selection_point =
            CurvePoint{sel.chosen_fraction, sel.chosen_accuracy};
      }
      summary += sweep_summary_csv_row(name, curve.points, rp_k) + "\n";
      if (rp_baseline >= 0)
        baseline_csv += baseline_comparison_csv_row(name, curve.points,
                                                    rp_baseline, rp_tolerance) +
                        "\n";
      plot.push_back(std::move(pc));
    }
    write_file(rp_out_dir + "/curves.svg", plot_curves_svg(plot, rp_title));
    write_file(rp_out_dir + "/sweep_summary.csv", summary);
    if (rp_baseline >= 0)
      write_file(rp_out_dir + "/baseline_comparison.csv", baseline_csv);
    RunManifest m = base_manifest("report", args);
    for (const auto& c : rp_curves) add_input(m, c);
    add_output(m, rp_out_dir + "/curves.svg");
    add_output(m, rp_out_dir + "/sweep_summary.csv");
    write_manifest(m, rp_out_dir + "/run.manifest.json");
    std::cout << "report written to " << rp_out_dir << "\n";
  });

  // ─── dispatch ───
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()),
              const_cast<char**>(argv.data()));
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::IoError ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace asag::cli
