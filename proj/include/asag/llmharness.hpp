#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "asag/corpus.hpp"
#include "asag/errors.hpp"
#include "asag/metrics.hpp"
#include "asag/util.hpp"

namespace asag {

// ─── Prompt construction ─────────────────────────────────────────────

// Two-sentence grading persona; verbatim golden text, do not reflow.
inline const char* root_prompt() {
  return
      "You are a fair and knowledgeable instructor whose task is to evaluate "
      "the student’s assignments in accordance with the correct answers "
      "to each of the questions that are presented in the section that "
      "follows.\n"
      "The student does not need to share every information from the model "
      "answer category as long as they convey the right idea.";
}

inline const char* question_template() {
  return
      "Question:\n"
      "The following DNA sequence occurs near the middle of the coding "
      "region of a gene.\n"
      "DNA 5' A A T G A A T G G* G A G C C T G A A G G A 3’\n"
      "There is a G to A base change at the position marked with an "
      "asterisk. Consequently, a codon normally encoding an amino acid "
      "becomes a stop codon.\n"
      "How will this alteration influence DNA <question_type>?\n"
      "Model Answer:\n"
      "1. Correct: <sample_correct>\n"
      "2. Incomplete/Irrelevant: <sample_incomplete>\n"
      "3. Incorrect: <sample_incorrect>.\n"
      "Student Answer:\n"
      "1. <substring>\n"
      "Which of the following categories does the student response fall "
      "in?\n"
      "A. Correct\n"
      "B. Incorrect\n"
      "C. Incomplete";
}

struct SampleTriple {
  std::string correct;
  std::string incomplete;
  std::string incorrect;
};

// question_type -> sample answers spliced into the prompt.
using PromptSamples = std::map<std::string, SampleTriple>;

inline PromptSamples default_prompt_samples() {
  PromptSamples s;
  s["replication"] = {
      "It will not have any effect on the replication process.",
      "This would be an example of a nonsense mutation.",
      "The DNA will stop replicating when it reaches the stop codon."};
  s["transcription"] = {
      "It will not have any effect on transcription.",
      "This will cause a mutation in the transcription process.",
      "In the process of transcribing DNA into RNA, the newly added stop "
      "codon will inhibit the rest of the chain from being transcribed into "
      "RNA."};
  s["translation"] = {
      "This will influence translation because the stop codon will cause "
      "the amino acid sequence to end before it should. This will create a "
      "different polypeptide or protein that will either not function or "
      "function differently than it should have.",
      "The code will be translated with a different base and will be read "
      "differently. This will result in a different protein being built.",
      "This will have no influence on translation."};
  return s;
}

// Samples config file: key-value lines "<question_type>.<label> = text".
inline PromptSamples parse_prompt_samples(const std::string& text) {
  PromptSamples out;
  for (const auto& raw : split_char(text, '\n')) {
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    auto dot = key.find('.');
    if (dot == std::string::npos)
      fail(ErrorKind::InvalidSpec, "expected <question_type>.<label> = text");
    std::string qtype = key.substr(0, dot);
    std::string which = key.substr(dot + 1);
    if (which == "correct") out[qtype].correct = value;
    else if (which == "incomplete") out[qtype].incomplete = value;
    else if (which == "incorrect") out[qtype].incorrect = value;
    else fail(ErrorKind::InvalidSpec, "unknown sample slot '" + which + "'");
  }
  return out;
}

struct PromptBundle {
  std::string system_text;
  std::string user_text;
  std::string question_type;
  std::string student_answer;
  std::string record_id;  // optional alignment tag
};

namespace detail {

inline std::string replace_all(std::string s, const std::string& from,
                               const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

}  // namespace detail

inline PromptBundle build_prompt(const std::string& question_type,
                                 const PromptSamples& samples,
                                 const std::string& student_answer) {
  if (trim(student_answer).empty())
    fail(ErrorKind::EmptyAnswer, "student answer is empty");
  auto it = samples.find(question_type);
  if (it == samples.end())
    fail(ErrorKind::UnknownQuestionType, question_type);
  const SampleTriple& t = it->second;
  if (trim(t.correct).empty() || trim(t.incomplete).empty() ||
      trim(t.incorrect).empty())
    fail(ErrorKind::EmptySamples, "missing sample answers for " + question_type);

  PromptBundle b;
  b.system_text = root_prompt();
  b.question_type = question_type;
  b.student_answer = student_answer;
  std::string user = question_template();
  user = detail::replace_all(user, "<question_type>", question_type);
  user = detail::replace_all(user, "<sample_correct>", t.correct);
  user = detail::replace_all(user, "<sample_incomplete>", t.incomplete);
  user = detail::replace_all(user, "<sample_incorrect>", t.incorrect);
  user = detail::replace_all(user, "<substring>", student_answer);
  b.user_text = user;
  return b;
}

// ─── Grade parsing ───────────────────────────────────────────────────
// Option order in the prompt is A Correct, B Incorrect, C Incomplete;
// this mapping layer owns that permutation (canonical corpus order is
// Correct, Incomplete, Incorrect).

inline std::string label_to_option(Label l) {
  switch (l) {
    case Label::Correct: return "A. Correct";
    case Label::Incorrect: return "B. Incorrect";
    case Label::Incomplete: return "C. Incomplete";
  }
  return "";
}

inline std::optional<Label> option_letter_label(char c) {
  switch (c) {
    case 'A': case 'a': return Label::Correct;
    case 'B': case 'b': return Label::Incorrect;
    case 'C': case 'c': return Label::Incomplete;
    default: return std::nullopt;
  }
}

struct GradeParse {
  std::string raw;
  std::optional<Label> label;  // nullopt = unparseable, queue for a human
  std::string note;

  bool unparseable() const { return !label.has_value(); }
};

// Cascade: leading option letter, else a unique label word, else give up.
inline GradeParse parse_grade(const std::string& completion_text) {
  GradeParse g;
  g.raw = completion_text;

  std::string s = trim(completion_text);
  if (!s.empty()) {
    bool solo = s.size() == 1;
    bool delimited =
        s.size() > 1 && !std::isalnum(static_cast<unsigned char>(s[1]));
    if (solo || delimited) {
      if (auto l = option_letter_label(s[0])) {
        g.label = *l;
        return g;
      }
    }
  }

  // Word-boundary matching: "incorrect" must not register as "correct".
  std::set<Label> found;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    std::string w = to_lower(word);
    if (w == "correct") found.insert(Label::Correct);
    else if (w == "incomplete") found.insert(Label::Incomplete);
    else if (w == "incorrect") found.insert(Label::Incorrect);
    word.clear();
  };
  for (char c : s) {
    if (std::isalpha(static_cast<unsigned char>(c))) word += c;
    else flush();
  }
  flush();
  if (found.size() == 1) {
    g.label = *found.begin();
    return g;
  }
  g.note = found.empty() ? "no grade keyword" : "ambiguous grade keywords";
  return g;
}

// ─── Chat-completion client contract ─────────────────────────────────

struct ChatMessage {
  std::string role;
  std::string content;
};

struct Completion {
  std::string text;
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  // Throws on transport/model failure; run_batch retries per policy.
  virtual Completion complete(const std::string& model,
                              const std::vector<ChatMessage>& messages,
                              double temperature) = 0;
};

inline long count_tokens(const std::string& text) {
  return static_cast<long>(split_whitespace(text).size());
}

// Scripted client. Rules match on a substring of the user message so
// behavior is independent of request arrival order; fail_times injects
// transient failures per rule.
class MockChatClient : public ChatClient {
 public:
  struct Rule {
    std::string match;  // substring of the user message; empty = default
    std::string text;
    long fail_times = 0;
  };

  explicit MockChatClient(std::string default_text = "A")
      : default_text_(std::move(default_text)) {}

  static MockChatClient from_fixture_json(const std::string& json_text) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json_text);
    } catch (const std::exception& e) {
      fail(ErrorKind::InvalidSpec, "bad mock fixture: " + std::string(e.what()));
    }
    MockChatClient client(j.value("default", std::string("A")));
    client.default_fail_times_ = j.value("default_fail_times", 0L);
    if (j.contains("responses"))
      for (const auto& r : j["responses"])
        client.rules_.push_back({r.value("match", std::string()),
                                 r.value("text", std::string()),
                                 r.value("fail_times", 0L)});
    return client;
  }

  void add_rule(Rule rule) { rules_.push_back(std::move(rule)); }

  Completion complete(const std::string& model,
                      const std::vector<ChatMessage>& messages,
                      double temperature) override {
    (void)model;
    (void)temperature;
    std::string user;
    std::string all;
    for (const auto& m : messages) {
      all += m.content;
      all += '\n';
      if (m.role == "user") user = m.content;
    }
    std::lock_guard<std::mutex> lock(*mu_);
    ++calls_;
    for (auto& r : rules_) {
      if (!r.match.empty() && user.find(r.match) != std::string::npos) {
        if (r.fail_times > 0) {
          --r.fail_times;
          throw std::runtime_error("mock transient failure");
        }
        return {r.text, count_tokens(all), count_tokens(r.text)};
      }
    }
    if (default_fail_times_ > 0) {
      --default_fail_times_;
      throw std::runtime_error("mock transient failure");
    }
    return {default_text_, count_tokens(all), count_tokens(default_text_)};
  }

  long calls() const {
    std::lock_guard<std::mutex> lock(*mu_);
    return calls_;
  }

 private:
  std::string default_text_;
  long default_fail_times_ = 0;
  std::vector<Rule> rules_;
  std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
  long calls_ = 0;
};

// ─── Batched execution ───────────────────────────────────────────────

struct RetryPolicy {
  long max_attempts = 3;
  long backoff_ms = 100;  // linear: attempt * backoff_ms
};

struct RunConfig {
  std::string model_id = "mock";
  double temperature = 0;
  long max_concurrent = 1;
  RetryPolicy retry;
  std::string cache_dir;  // empty = caching disabled
};

struct CostEntry {
  long prompt_tokens = 0;
  long completion_tokens = 0;
  bool cached = false;
  long attempts = 0;
};

struct CostLedger {
  std::vector<CostEntry> entries;

  long total_prompt_tokens() const {
    long t = 0;
    for (const auto& e : entries) t += e.prompt_tokens;
    return t;
  }
  long total_completion_tokens() const {
    long t = 0;
    for (const auto& e : entries) t += e.completion_tokens;
    return t;
  }
  long cache_hits() const {
    long t = 0;
    for (const auto& e : entries) t += e.cached ? 1 : 0;
    return t;
  }
};

struct BatchResultSet {
  std::vector<GradeParse> grades;  // positionally aligned with bundles
  CostLedger ledger;
};

inline std::string request_cache_key(const std::string& model,
                                     double temperature,
                                     const PromptBundle& bundle) {
  std::uint64_t h = fnv1a64(model);
  h = fnv1a64(format_fixed(temperature, 6), h);
  h = fnv1a64(bundle.system_text, h);
  h = fnv1a64(bundle.user_text, h);
  return hex64(h);
}

inline BatchResultSet run_batch(ChatClient& client,
                                const std::vector<PromptBundle>& bundles,
                                const RunConfig& config) {
  if (config.max_concurrent < 1)
    fail(ErrorKind::InvalidSpec, "max_concurrent must be >= 1");
  if (config.temperature > 1.0)
    std::cerr << "warning: temperature " << config.temperature
              << " > 1 tends to produce unusable output\n";

  BatchResultSet out;
  out.grades.resize(bundles.size());
  out.ledger.entries.resize(bundles.size());

  std::filesystem::path cache_dir;
  if (!config.cache_dir.empty()) {
    cache_dir = config.cache_dir;
    std::error_code ec;
    std::filesystem::create_directories(cache_dir, ec);
  }

  std::atomic<std::size_t> next{0};
  std::atomic<long> successes{0};
  std::atomic<long> hits{0};

  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= bundles.size()) break;
      const PromptBundle& b = bundles[i];
      CostEntry entry;
      std::string key = request_cache_key(config.model_id, config.temperature, b);

      if (!cache_dir.empty()) {
        auto path = cache_dir / (key + ".json");
        if (std::filesystem::exists(path)) {
          try {
            auto j = nlohmann::json::parse(read_file(path));
            entry.cached = true;
            entry.prompt_tokens = j.value("prompt_tokens", 0L);
            entry.completion_tokens = j.value("completion_tokens", 0L);
            out.grades[i] = parse_grade(j.at("text").get<std::string>());
            out.ledger.entries[i] = entry;
            hits.fetch_add(1);
            continue;
          } catch (const std::exception&) {
            // unreadable cache entry: fall through to a live call
          }
        }
      }

      std::vector<ChatMessage> messages = {{"system", b.system_text},
                                           {"user", b.user_text}};
      std::optional<Completion> completion;
      std::string last_error;
      for (long attempt = 1; attempt <= config.retry.max_attempts; ++attempt) {
        entry.attempts = attempt;
        try {
          completion =
              client.complete(config.model_id, messages, config.temperature);
          break;
        } catch (const std::exception& e) {
          last_error = e.what();
          if (attempt < config.retry.max_attempts && config.retry.backoff_ms > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(
                attempt * config.retry.backoff_ms));
        }
      }
      if (completion) {
        successes.fetch_add(1);
        entry.prompt_tokens = completion->prompt_tokens;
        entry.completion_tokens = completion->completion_tokens;
        out.grades[i] = parse_grade(completion->text);
        if (!cache_dir.empty()) {
          nlohmann::json j = {{"text", completion->text},
                              {"prompt_tokens", completion->prompt_tokens},
                              {"completion_tokens", completion->completion_tokens}};
          write_file_atomic(cache_dir / (key + ".json"), j.dump());
        }
      } else {
        GradeParse g;
        g.note = "error: " + last_error;
        out.grades[i] = g;
      }
      out.ledger.entries[i] = entry;
    }
  };

  if (config.max_concurrent == 1 || bundles.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    long n = std::min<long>(config.max_concurrent,
                            static_cast<long>(bundles.size()));
    for (long t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  if (!bundles.empty() && successes.load() == 0 && hits.load() == 0)
    fail(ErrorKind::ClientUnavailable, "no successful calls and no cache hits");
  return out;
}

// ─── Scoring parsed grades ───────────────────────────────────────────

enum class UnparseablePolicy {
  CountAsWrong,  // default: disagrees with every human label
  Exclude,       // drop from the denominator
};

struct GradedMetrics {
  MetricsReport report;
  long n_unparseable = 0;
  long n_scored = 0;
};

inline GradedMetrics score_grades(const std::vector<ResponseRecord>& records,
                                  const std::vector<GradeParse>& grades,
                                  UnparseablePolicy policy =
                                      UnparseablePolicy::CountAsWrong) {
  if (records.size() != grades.size())
    fail(ErrorKind::LengthMismatch, "records vs grades");
  GradedMetrics out;
  std::vector<Label> truth, pred;
  long hits = 0, total = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (grades[i].unparseable()) {
      out.n_unparseable++;
      if (policy == UnparseablePolicy::CountAsWrong) ++total;
      continue;
    }
    truth.push_back(records[i].label);
    pred.push_back(*grades[i].label);
    if (*grades[i].label == records[i].label) ++hits;
    ++total;
  }
  out.n_scored = total;
  if (!truth.empty()) {
    out.report = macro_metrics(confusion(truth, pred));
    // Accuracy over the configured denominator; macro P/R/F1 are over the
    // parsed subset (unparseable completions have no prediction column).
    out.report.accuracy =
        total > 0 ? static_cast<double>(hits) / static_cast<double>(total) : 0;
    out.report.support = total;
  }
  return out;
}

// Per-metric mean and sample SD across temperature runs.
struct TemperatureAggregate {
  MeanSd accuracy;
  MeanSd precision;
  MeanSd recall;
  MeanSd f1;
};

inline TemperatureAggregate aggregate_temperature_runs(
    const std::vector<MetricsReport>& runs) {
  if (runs.empty()) fail(ErrorKind::Empty, "no temperature runs");
  std::vector<double> acc, prec, rec, f1;
  for (const auto& r : runs) {
    acc.push_back(r.accuracy);
    prec.push_back(r.macro_precision);
    rec.push_back(r.macro_recall);
    f1.push_back(r.macro_f1);
  }
  return {mean_sd(acc), mean_sd(prec), mean_sd(rec), mean_sd(f1)};
}

// ─── Fine-tune dataset export ────────────────────────────────────────
// One JSON object per line with system/user/assistant messages; the
// assistant message is the option line that matches the human label.

inline std::string export_finetune_dataset(
    const std::vector<ResponseRecord>& records, const PromptSamples& samples) {
  std::string out;
  for (const auto& r : records) {
    PromptBundle b = build_prompt(r.question.question_type, samples, r.text);
    nlohmann::json j = {
        {"messages",
         {{{"role", "system"}, {"content", b.system_text}},
          {{"role", "user"}, {"content", b.user_text}},
          {{"role", "assistant"}, {"content", label_to_option(r.label)}}}}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

struct FinetuneExample {
  std::string system_text;
  std::string user_text;
  Label label;
};

inline std::vector<FinetuneExample> parse_finetune_dataset(
    const std::string& jsonl) {
  std::vector<FinetuneExample> out;
  std::size_t lineno = 0;
  for (const auto& line : split_char(jsonl, '\n')) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      fail(ErrorKind::MalformedRecord,
           "line " + std::to_string(lineno) + ": " + e.what());
    }
    FinetuneExample ex{};
    bool have_label = false;
    for (const auto& m : j.at("messages")) {
      std::string role = m.at("role").get<std::string>();
      std::string content = m.at("content").get<std::string>();
      if (role == "system") ex.system_text = content;
      else if (role == "user") ex.user_text = content;
      else if (role == "assistant") {
        auto g = parse_grade(content);
        if (g.unparseable())
          fail(ErrorKind::MalformedRecord,
               "line " + std::to_string(lineno) + ": bad assistant grade");
        ex.label = *g.label;
        have_label = true;
      }
    }
    if (!have_label)
      fail(ErrorKind::MalformedRecord,
           "line " + std::to_string(lineno) + ": no assistant message");
    out.push_back(std::move(ex));
  }
  return out;
}

// ─── Minimal OpenAI-compatible HTTP client ───────────────────────────
// Plain-HTTP endpoints only (local gateways). Credentials come from the
// environment (ASAG_API_KEY) and are never logged.

class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(std::string host_port, std::string path =
                              "/v1/chat/completions")
      : host_port_(std::move(host_port)), path_(std::move(path)) {}

  Completion complete(const std::string& model,
                      const std::vector<ChatMessage>& messages,
                      double temperature) override;

 private:
  std::string host_port_;
  std::string path_;
};

}  // namespace asag
