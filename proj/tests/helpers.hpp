#pragma once

#include <unistd.h>

#include <atomic>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "asag/classifier.hpp"
#include "asag/corpus.hpp"

namespace asag::testing {

// Backend whose validation accuracy follows a script, one value per epoch.
// The parameter blob is just the epoch marker, so best-epoch restoration is
// observable exactly. Script comes from backend_options["script"] as a
// comma-separated accuracy list.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(const ClassifierConfig& config) {
    auto it = config.backend_options.find("script");
    if (it != config.backend_options.end())
      for (const auto& v : split_char(it->second, ','))
        if (!trim(v).empty()) script_.push_back(std::stod(trim(v)));
    if (script_.empty()) script_.push_back(0.5);
  }

  std::string id() const override { return "scripted"; }

  void reset(const ClassifierConfig&) override { marker_ = 0; }

  std::vector<std::uint8_t> serialize() const override {
    std::vector<std::uint8_t> out(12);
    std::memcpy(out.data(), "SCR1", 4);
    std::uint64_t m = marker_;
    std::memcpy(out.data() + 4, &m, 8);
    return out;
  }

  void deserialize(const std::vector<std::uint8_t>& blob) override {
    if (blob.size() != 12 || std::memcmp(blob.data(), "SCR1", 4) != 0)
      fail(ErrorKind::CorruptCheckpoint, "scripted blob");
    std::uint64_t m = 0;
    std::memcpy(&m, blob.data() + 4, 8);
    marker_ = m;
  }

  void on_epoch_begin(long epoch) override {
    marker_ = static_cast<std::uint64_t>(epoch);
  }

  BatchResult train_batch(const std::vector<const ResponseRecord*>&,
                          const ClassifierConfig&) override {
    return {1.0, current_accuracy()};
  }

  PredictionSet predict(
      const std::vector<ResponseRecord>& records) const override {
    PredictionSet out;
    double acc = current_accuracy();
    auto hits = static_cast<std::size_t>(
        round_half_up(acc * static_cast<double>(records.size())));
    for (std::size_t i = 0; i < records.size(); ++i) {
      Prediction p;
      if (i < hits) {
        p.label = records[i].label;
      } else {
        p.label = kLabelOrder[(static_cast<std::size_t>(
                                   label_index(records[i].label)) +
                               1) % 3];
      }
      p.scores = {0, 0, 0};
      p.scores[static_cast<std::size_t>(label_index(p.label))] = 1.0;
      out.items.push_back(p);
    }
    return out;
  }

  std::uint64_t marker() const { return marker_; }

 private:
  double current_accuracy() const {
    if (marker_ == 0) return 0.0;
    std::size_t idx =
        std::min<std::size_t>(static_cast<std::size_t>(marker_ - 1),
                              script_.size() - 1);
    return script_[idx];
  }

  std::vector<double> script_;
  std::uint64_t marker_ = 0;
};

inline void ensure_scripted_backend() {
  static bool once = [] {
    BackendRegistry::instance().register_backend(
        "scripted", [](const ClassifierConfig& c) {
          return std::make_unique<ScriptedBackend>(c);
        });
    return true;
  }();
  (void)once;
}

inline std::filesystem::path fresh_temp_dir(const std::string& tag) {
  static std::atomic<unsigned> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("asag_" + tag + "_" + std::to_string(::getpid()) + "_" +
              std::to_string(counter.fetch_add(1)));
  std::filesystem::create_directories(dir);
  return dir;
}

inline ResponseRecord make_record(const std::string& student,
                                  const std::string& question,
                                  const std::string& text, Label label) {
  ResponseRecord r;
  r.student_id = student;
  r.question = default_question(question);
  r.text = text;
  r.label = label;
  return r;
}

// Uniform random corpus: one record per (student, question).
inline Corpus random_corpus(std::mt19937_64& rng, std::size_t n_students,
                            const std::vector<std::string>& questions) {
  Corpus corpus;
  corpus.provenance = "test";
  for (std::size_t s = 0; s < n_students; ++s) {
    for (const auto& q : questions) {
      Label label = kLabelOrder[rng() % 3];
      corpus.records.push_back(make_record(
          "s" + std::to_string(s), q,
          "tok" + std::to_string(rng() % 50) + " tok" +
              std::to_string(rng() % 50),
          label));
    }
  }
  return corpus;
}

inline std::vector<double> val_script(const TrainingReport& report) {
  std::vector<double> out;
  for (const auto& e : report.epochs) out.push_back(e.val_acc);
  return out;
}

}  // namespace asag::testing
