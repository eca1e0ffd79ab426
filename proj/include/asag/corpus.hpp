#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "asag/errors.hpp"
#include "asag/util.hpp"

namespace asag {

// ─── Labels ──────────────────────────────────────────────────────────
// Three-way scheme. Canonical ordering for matrices and reports is
// (Correct, Incomplete, Incorrect).

enum class Label : int { Correct = 0, Incomplete = 1, Incorrect = 2 };

inline constexpr std::array<Label, 3> kLabelOrder = {
    Label::Correct, Label::Incomplete, Label::Incorrect};

inline const char* label_name(Label l) {
  switch (l) {
    case Label::Correct: return "correct";
    case Label::Incomplete: return "incomplete";
    case Label::Incorrect: return "incorrect";
  }
  return "?";
}

inline const char* label_display(Label l) {
  switch (l) {
    case Label::Correct: return "Correct";
    case Label::Incomplete: return "Incomplete";
    case Label::Incorrect: return "Incorrect";
  }
  return "?";
}

// Case-insensitive normalization onto the three canonical labels; anything
// else is a hard error, never a fourth class.
inline Label parse_label(const std::string& raw) {
  std::string s = to_lower(trim(raw));
  if (s == "correct") return Label::Correct;
  if (s == "incomplete") return Label::Incomplete;
  if (s == "incorrect") return Label::Incorrect;
  fail(ErrorKind::UnknownLabel, "'" + raw + "' is not a known label");
}

inline int label_index(Label l) { return static_cast<int>(l); }

// ─── Questions ───────────────────────────────────────────────────────

struct QuestionId {
  std::string id;             // e.g. "Q1"
  std::string question_type;  // e.g. "replication"; must be nonempty

  bool operator==(const QuestionId& o) const { return id == o.id; }
  bool operator<(const QuestionId& o) const { return id < o.id; }
};

inline QuestionId make_question(const std::string& id,
                                const std::string& type) {
  if (trim(type).empty())
    fail(ErrorKind::InvalidSpec, "question_type must be nonempty for " + id);
  return QuestionId{id, trim(type)};
}

// The three stock questions used by default corpora.
inline QuestionId default_question(const std::string& id) {
  if (id == "Q1") return QuestionId{"Q1", "replication"};
  if (id == "Q2") return QuestionId{"Q2", "transcription"};
  if (id == "Q3") return QuestionId{"Q3", "translation"};
  return QuestionId{id, "unknown"};
}

// ─── Records and corpora ─────────────────────────────────────────────

struct ResponseRecord {
  std::string student_id;
  QuestionId question;
  std::string text;  // nonempty after trim
  Label label = Label::Correct;

  std::string record_id() const { return student_id + "|" + question.id; }
};

struct Corpus {
  std::vector<ResponseRecord> records;
  std::string provenance;  // source path or generator spec + seed

  std::size_t size() const { return records.size(); }
};

inline void validate_record(const ResponseRecord& r) {
  if (trim(r.text).empty())
    fail(ErrorKind::EmptyText, "empty text for " + r.record_id());
  if (trim(r.question.question_type).empty())
    fail(ErrorKind::InvalidSpec, "missing question_type for " + r.record_id());
}

// Enforces the (student_id, question) uniqueness invariant.
inline void validate_corpus(const Corpus& corpus) {
  std::set<std::string> seen;
  for (const auto& r : corpus.records) {
    validate_record(r);
    if (!seen.insert(r.record_id()).second)
      fail(ErrorKind::DuplicateKey, "duplicate record " + r.record_id());
  }
}

// A corpus is complete for training when every question present carries at
// least one record of each label.
inline bool is_training_complete(const Corpus& corpus);

inline void validate_training_complete(const Corpus& corpus) {
  std::map<std::string, std::array<long, 3>> counts;
  for (const auto& r : corpus.records)
    counts[r.question.id][static_cast<std::size_t>(label_index(r.label))]++;
  for (const auto& [q, c] : counts)
    for (std::size_t l = 0; l < 3; ++l)
      if (c[l] == 0)
        fail(ErrorKind::InvalidSpec,
             q + " has no " + std::string(label_name(kLabelOrder[l])) +
                 " records; not complete for training");
}

inline bool is_training_complete(const Corpus& corpus) {
  try {
    validate_training_complete(corpus);
    return true;
  } catch (const Error&) {
    return false;
  }
}

// ─── Stats ───────────────────────────────────────────────────────────

struct CorpusStats {
  // question id -> per-label counts in canonical order
  std::map<std::string, std::array<long, 3>> by_question;

  std::array<long, 3> counts(const std::string& q) const {
    auto it = by_question.find(q);
    if (it == by_question.end()) return {0, 0, 0};
    return it->second;
  }
  long question_total(const std::string& q) const {
    auto c = counts(q);
    return c[0] + c[1] + c[2];
  }
  long total() const {
    long t = 0;
    for (const auto& [q, c] : by_question) t += c[0] + c[1] + c[2];
    return t;
  }
};

inline CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats s;
  for (const auto& r : corpus.records) {
    auto& c = s.by_question[r.question.id];
    c[static_cast<std::size_t>(label_index(r.label))]++;
  }
  return s;
}

// ─── JSONL I/O ───────────────────────────────────────────────────────
// One record per line:
// {"student_id": str, "question": str, "question_type": str,
//  "text": str, "label": str}

inline std::string record_to_json_line(const ResponseRecord& r) {
  nlohmann::json j;
  j["student_id"] = r.student_id;
  j["question"] = r.question.id;
  j["question_type"] = r.question.question_type;
  j["text"] = r.text;
  j["label"] = label_name(r.label);
  return j.dump();
}

inline ResponseRecord record_from_json_line(const std::string& line,
                                            std::size_t lineno) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    fail(ErrorKind::MalformedRecord,
         "line " + std::to_string(lineno) + ": " + e.what());
  }
  for (const char* field :
       {"student_id", "question", "question_type", "text", "label"}) {
    if (!j.contains(field) || !j[field].is_string())
      fail(ErrorKind::MalformedRecord, "line " + std::to_string(lineno) +
                                           ": missing field '" + field + "'");
  }
  ResponseRecord r;
  r.student_id = j["student_id"].get<std::string>();
  r.question = make_question(j["question"].get<std::string>(),
                             j["question_type"].get<std::string>());
  r.text = j["text"].get<std::string>();
  if (trim(r.text).empty())
    fail(ErrorKind::EmptyText, "line " + std::to_string(lineno));
  r.label = parse_label(j["label"].get<std::string>());
  return r;
}

inline Corpus load_corpus(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    fail(ErrorKind::IoError, "no such file: " + path.string());
  Corpus corpus;
  corpus.provenance = path.string();
  std::string content = read_file(path);
  std::size_t lineno = 0;
  std::size_t begin = 0;
  std::set<std::string> seen;
  while (begin < content.size()) {
    std::size_t end = content.find('\n', begin);
    if (end == std::string::npos) end = content.size();
    std::string line = content.substr(begin, end - begin);
    begin = end + 1;
    ++lineno;
    if (trim(line).empty()) continue;
    ResponseRecord r = record_from_json_line(line, lineno);
    if (!seen.insert(r.record_id()).second)
      fail(ErrorKind::DuplicateKey, "line " + std::to_string(lineno) +
                                        ": repeated " + r.record_id());
    corpus.records.push_back(std::move(r));
  }
  return corpus;
}

inline void save_corpus(const Corpus& corpus,
                        const std::filesystem::path& path) {
  std::string out;
  for (const auto& r : corpus.records) {
    out += record_to_json_line(r);
    out += '\n';
  }
  write_file(path, out);
}

// ─── Synthetic corpora ───────────────────────────────────────────────
// Token texts are integer-named words. Per label there is a sublexicon
// shared across questions; with probability signal_strength a token is
// drawn from the record's label sublexicon, otherwise from the shared
// background lexicon. Both draws are Zipf(beta) over their own ranks, so
// a bag-of-tokens model can learn labels and a model trained on one
// question transfers to the others.

struct SynthSpec {
  // question id -> canonical-order label counts
  std::map<std::string, std::array<long, 3>> counts;
  // question id -> question_type (defaults applied for Q1/Q2/Q3)
  std::map<std::string, std::string> question_types;
  long vocabulary_size = 600;
  double zipf_exponent = 1.1;     // >= 0
  double signal_strength = 0.5;   // in [0,1]
  long tokens_per_record = 12;
  std::uint64_t seed = 0;

  std::string describe() const {
    std::string s = "synth(seed=" + std::to_string(seed) +
                    ",vocab=" + std::to_string(vocabulary_size) +
                    ",beta=" + format_fixed(zipf_exponent, 4) +
                    ",signal=" + format_fixed(signal_strength, 4) + ")";
    return s;
  }
};

inline void validate_spec(const SynthSpec& spec) {
  if (spec.counts.empty())
    fail(ErrorKind::InvalidSpec, "no per-question counts given");
  for (const auto& [q, c] : spec.counts)
    if (c[0] < 0 || c[1] < 0 || c[2] < 0)
      fail(ErrorKind::InvalidSpec, "negative count for " + q);
  if (spec.vocabulary_size < 3 * 3)
    fail(ErrorKind::InvalidSpec, "vocabulary size must be >= 3 x labels");
  if (spec.zipf_exponent < 0)
    fail(ErrorKind::InvalidSpec, "zipf exponent must be >= 0");
  if (spec.signal_strength < 0 || spec.signal_strength > 1)
    fail(ErrorKind::InvalidSpec, "signal strength must lie in [0,1]");
  if (spec.tokens_per_record < 1)
    fail(ErrorKind::InvalidSpec, "tokens_per_record must be >= 1");
}

namespace detail {

// Inverse-CDF sampler over ranks 1..n with weights rank^-beta. Implemented
// directly (not via std::discrete_distribution) so output is identical
// across standard libraries.
class ZipfSampler {
 public:
  ZipfSampler(long n, double beta) : cum_(static_cast<std::size_t>(n)) {
    double total = 0;
    for (long r = 1; r <= n; ++r) {
      total += std::pow(static_cast<double>(r), -beta);
      cum_[static_cast<std::size_t>(r - 1)] = total;
    }
    for (auto& v : cum_) v /= total;
  }

  // returns rank-1 index in [0, n)
  long sample(std::mt19937_64& rng) const {
    double u = uniform01(rng);
    auto it = std::lower_bound(cum_.begin(), cum_.end(), u);
    if (it == cum_.end()) --it;
    return static_cast<long>(it - cum_.begin());
  }

 private:
  std::vector<double> cum_;
};

}  // namespace detail

inline Corpus generate_synthetic_corpus(const SynthSpec& spec) {
  validate_spec(spec);
  const long V = spec.vocabulary_size;
  const long sub = std::max<long>(1, V / 6);  // per-label sublexicon size
  const long background = V - 3 * sub;        // >= 1 given V >= 9

  detail::ZipfSampler sub_sampler(sub, spec.zipf_exponent);
  detail::ZipfSampler bg_sampler(background, spec.zipf_exponent);
  std::mt19937_64 rng(spec.seed);

  // Stable question order: by question id.
  Corpus corpus;
  corpus.provenance = spec.describe();
  for (const auto& [qid, counts] : spec.counts) {
    std::string qtype;
    if (auto it = spec.question_types.find(qid);
        it != spec.question_types.end())
      qtype = it->second;
    else
      qtype = default_question(qid).question_type;
    QuestionId question = make_question(qid, qtype);

    long n_students = counts[0] + counts[1] + counts[2];
    // Label list shuffled so labels are not correlated with student index.
    std::vector<Label> labels;
    labels.reserve(static_cast<std::size_t>(n_students));
    for (std::size_t li = 0; li < 3; ++li)
      for (long i = 0; i < counts[li]; ++i) labels.push_back(kLabelOrder[li]);
    std::shuffle(labels.begin(), labels.end(), rng);

    for (long s = 0; s < n_students; ++s) {
      ResponseRecord r;
      r.student_id = "s" + std::to_string(s);
      r.question = question;
      r.label = labels[static_cast<std::size_t>(s)];
      std::string text;
      for (long t = 0; t < spec.tokens_per_record; ++t) {
        long idx;
        if (uniform01(rng) < spec.signal_strength) {
          long base = static_cast<long>(label_index(r.label)) * sub;
          idx = base + sub_sampler.sample(rng);
        } else {
          idx = 3 * sub + bg_sampler.sample(rng);
        }
        if (t) text += ' ';
        text += "w" + std::to_string(idx);
      }
      r.text = std::move(text);
      corpus.records.push_back(std::move(r));
    }
  }
  validate_corpus(corpus);
  return corpus;
}

// ─── SynthSpec config file ───────────────────────────────────────────
// Human-readable key-value lines, e.g.
//   seed = 7
//   vocabulary_size = 600
//   zipf_exponent = 1.1
//   signal_strength = 0.5
//   tokens_per_record = 12
//   count.Q1 = 20,20,20          # correct,incomplete,incorrect
//   question_type.Q1 = replication

inline SynthSpec parse_synth_spec(const std::string& text) {
  SynthSpec spec;
  std::size_t lineno = 0;
  for (const auto& raw : split_char(text, '\n')) {
    ++lineno;
    std::string line = raw;
    if (auto pos = line.find('#'); pos != std::string::npos)
      line = line.substr(0, pos);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::InvalidSpec,
           "line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "seed") spec.seed = std::stoull(value);
      else if (key == "vocabulary_size") spec.vocabulary_size = std::stol(value);
      else if (key == "zipf_exponent") spec.zipf_exponent = std::stod(value);
      else if (key == "signal_strength") spec.signal_strength = std::stod(value);
      else if (key == "tokens_per_record") spec.tokens_per_record = std::stol(value);
      else if (key.rfind("count.", 0) == 0) {
        auto parts = split_char(value, ',');
        if (parts.size() != 3)
          fail(ErrorKind::InvalidSpec, "count needs 3 comma-separated values");
        spec.counts[key.substr(6)] = {std::stol(trim(parts[0])),
                                      std::stol(trim(parts[1])),
                                      std::stol(trim(parts[2]))};
      } else if (key.rfind("question_type.", 0) == 0) {
        spec.question_types[key.substr(14)] = value;
      } else {
        fail(ErrorKind::InvalidSpec, "unknown key '" + key + "'");
      }
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      fail(ErrorKind::InvalidSpec,
           "line " + std::to_string(lineno) + ": bad value '" + value + "'");
    }
  }
  validate_spec(spec);
  return spec;
}

inline SynthSpec load_synth_spec(const std::filesystem::path& path) {
  return parse_synth_spec(read_file(path));
}

}  // namespace asag
