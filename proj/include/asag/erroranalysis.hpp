#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "asag/corpus.hpp"
#include "asag/errors.hpp"
#include "asag/util.hpp"

namespace asag {

// ─── Disagreements ───────────────────────────────────────────────────

struct ModelPredictions {
  std::string model_name;
  std::vector<Label> labels;  // aligned with the record list
};

struct DisagreementRecord {
  std::string record_id;
  std::string question;
  std::string text;
  Label human_label = Label::Correct;
  std::vector<std::pair<std::string, Label>> model_labels;
};

struct DisagreementReport {
  std::vector<DisagreementRecord> records;
  std::map<std::string, long> per_model_counts;
};

inline DisagreementReport find_disagreements(
    const std::vector<ResponseRecord>& records,
    const std::vector<ModelPredictions>& models) {
  for (const auto& m : models)
    if (m.labels.size() != records.size())
      fail(ErrorKind::LengthMismatch, m.model_name + ": " +
                                          std::to_string(m.labels.size()) +
                                          " predictions for " +
                                          std::to_string(records.size()) +
                                          " records");
  DisagreementReport out;
  for (const auto& m : models) out.per_model_counts[m.model_name] = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    bool any = false;
    DisagreementRecord d;
    for (const auto& m : models) {
      d.model_labels.emplace_back(m.model_name, m.labels[i]);
      if (m.labels[i] != records[i].label) {
        any = true;
        out.per_model_counts[m.model_name]++;
      }
    }
    if (any) {
      d.record_id = records[i].record_id();
      d.question = records[i].question.id;
      d.text = records[i].text;
      d.human_label = records[i].label;
      out.records.push_back(std::move(d));
    }
  }
  return out;
}

// ─── Scenario tables ─────────────────────────────────────────────────
// Shared errors: both models wrong, 12 scenarios
// (3 human labels x 2 wrong options each model).
// Model-specific errors: exactly one model wrong, 12 scenarios
// (3 human labels x which model x 2 wrong options).

struct ScenarioKey {
  Label human;
  Label model_a;
  Label model_b;

  bool operator<(const ScenarioKey& o) const {
    if (human != o.human) return label_index(human) < label_index(o.human);
    if (model_a != o.model_a)
      return label_index(model_a) < label_index(o.model_a);
    return label_index(model_b) < label_index(o.model_b);
  }
  bool operator==(const ScenarioKey& o) const {
    return human == o.human && model_a == o.model_a && model_b == o.model_b;
  }
};

using ScenarioTable = std::map<ScenarioKey, long>;

inline std::vector<Label> wrong_options(Label human) {
  std::vector<Label> out;
  for (Label l : kLabelOrder)
    if (l != human) out.push_back(l);
  return out;
}

// Table rows in canonical order: human label, then model-A wrong option,
// then model-B wrong option.
inline std::vector<ScenarioKey> shared_error_scenarios() {
  std::vector<ScenarioKey> out;
  for (Label h : kLabelOrder)
    for (Label a : wrong_options(h))
      for (Label b : wrong_options(h)) out.push_back({h, a, b});
  return out;
}

// Rows where model A is right come first (B wrong), then A-wrong rows.
inline std::vector<ScenarioKey> model_specific_scenarios() {
  std::vector<ScenarioKey> out;
  for (Label h : kLabelOrder) {
    for (Label b : wrong_options(h)) out.push_back({h, h, b});
    for (Label a : wrong_options(h)) out.push_back({h, a, h});
  }
  return out;
}

inline void check_aligned(const std::vector<Label>& truth,
                          const std::vector<Label>& a,
                          const std::vector<Label>& b) {
  if (truth.size() != a.size() || truth.size() != b.size())
    fail(ErrorKind::LengthMismatch, "prediction lists not aligned with truth");
}

inline ScenarioTable shared_error_table(const std::vector<Label>& truth,
                                        const std::vector<Label>& pred_a,
                                        const std::vector<Label>& pred_b) {
  check_aligned(truth, pred_a, pred_b);
  ScenarioTable table;
  for (const auto& key : shared_error_scenarios()) table[key] = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (pred_a[i] != truth[i] && pred_b[i] != truth[i])
      table[{truth[i], pred_a[i], pred_b[i]}]++;
  return table;
}

inline ScenarioTable model_specific_table(const std::vector<Label>& truth,
                                          const std::vector<Label>& pred_a,
                                          const std::vector<Label>& pred_b) {
  check_aligned(truth, pred_a, pred_b);
  ScenarioTable table;
  for (const auto& key : model_specific_scenarios()) table[key] = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    bool wrong_a = pred_a[i] != truth[i];
    bool wrong_b = pred_b[i] != truth[i];
    if (wrong_a != wrong_b) table[{truth[i], pred_a[i], pred_b[i]}]++;
  }
  return table;
}

inline long table_total(const ScenarioTable& table) {
  long t = 0;
  for (const auto& [k, v] : table) t += v;
  return t;
}

inline std::string scenario_table_csv(
    const std::vector<ScenarioKey>& row_order, const ScenarioTable& table,
    const std::string& model_a_name, const std::string& model_b_name) {
  std::string out = "human_label," + csv_quote(model_a_name) + "," +
                    csv_quote(model_b_name) + ",count\n";
  for (const auto& key : row_order) {
    long count = 0;
    if (auto it = table.find(key); it != table.end()) count = it->second;
    out += std::string(label_display(key.human)) + "," +
           label_display(key.model_a) + "," + label_display(key.model_b) +
           "," + std::to_string(count) + "\n";
  }
  return out;
}

// ─── Expert re-review ────────────────────────────────────────────────
// Offline batch exchange: export a CSV queue, a human fills the
// expert_label column (blank = upheld), apply produces a label overlay
// that never mutates the source corpus.

struct ReviewDecision {
  std::string record_id;
  Label original;
  Label expert;

  bool is_miscode() const { return expert != original; }
};

struct ReviewOutcome {
  std::map<std::string, Label> overlay;  // record id -> expert label
  long miscode_count = 0;
};

inline std::string export_review_queue(
    const std::vector<DisagreementRecord>& records) {
  std::string header = "id,question,text,human_label";
  std::size_t n_models = records.empty() ? 0 : records[0].model_labels.size();
  for (std::size_t m = 0; m < n_models; ++m)
    header += "," + csv_quote(records[0].model_labels[m].first);
  header += ",expert_label\n";
  std::string out = header;
  for (const auto& r : records) {
    // the text column is informational; keep the file one row per record
    std::string flat_text = r.text;
    for (auto& ch : flat_text)
      if (ch == '\n' || ch == '\r') ch = ' ';
    out += csv_quote(r.record_id) + "," + csv_quote(r.question) + "," +
           csv_quote(flat_text) + "," + label_display(r.human_label);
    for (const auto& [name, label] : r.model_labels)
      out += std::string(",") + label_display(label);
    out += ",\n";  // expert_label left blank
  }
  return out;
}

// Parse an edited review queue back into decisions: rows with a filled
// expert_label column. Rows left blank are upheld and produce no decision.
inline std::vector<ReviewDecision> parse_review_queue(const std::string& csv) {
  auto lines = split_char(csv, '\n');
  if (lines.empty()) return {};
  auto header = csv_parse_line(lines[0]);
  std::size_t id_col = 0, label_col = 0, expert_col = 0;
  bool found_expert = false;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "id") id_col = i;
    if (header[i] == "human_label") label_col = i;
    if (header[i] == "expert_label") {
      expert_col = i;
      found_expert = true;
    }
  }
  if (!found_expert)
    fail(ErrorKind::MalformedRecord, "review queue lacks expert_label column");
  std::vector<ReviewDecision> out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    auto cells = csv_parse_line(lines[li]);
    if (cells.size() <= expert_col || trim(cells[expert_col]).empty())
      continue;
    ReviewDecision d;
    d.record_id = cells[id_col];
    d.original = parse_label(cells[label_col]);
    d.expert = parse_label(cells[expert_col]);
    out.push_back(std::move(d));
  }
  return out;
}

// Overlay semantics: raw labels stay untouched so original and reviewed
// metrics remain computable side by side. Replaying identical decisions is
// idempotent; two decisions for one record are an error.
inline ReviewOutcome apply_review(const Corpus& corpus,
                                  const std::vector<ReviewDecision>& decisions) {
  std::set<std::string> known;
  for (const auto& r : corpus.records) known.insert(r.record_id());
  ReviewOutcome out;
  std::set<std::string> seen;
  for (const auto& d : decisions) {
    if (!known.count(d.record_id))
      fail(ErrorKind::UnknownRecordId, d.record_id);
    if (!seen.insert(d.record_id).second)
      fail(ErrorKind::DuplicateDecision, d.record_id);
    if (d.is_miscode()) {
      out.overlay[d.record_id] = d.expert;
      out.miscode_count++;
    }
  }
  return out;
}

inline Label effective_label(const ReviewOutcome& review,
                             const ResponseRecord& record) {
  auto it = review.overlay.find(record.record_id());
  return it == review.overlay.end() ? record.label : it->second;
}

}  // namespace asag
