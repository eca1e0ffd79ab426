#include <catch2/catch_amalgamated.hpp>

#include "asag/llmharness.hpp"
#include "helpers.hpp"

using namespace asag;
using asag::testing::fresh_temp_dir;
using asag::testing::make_record;

namespace {

std::string golden(const std::string& name) {
  return read_file(std::filesystem::path(ASAG_GOLDEN_DIR) / name);
}

class AlwaysFailClient : public ChatClient {
 public:
  Completion complete(const std::string&, const std::vector<ChatMessage>&,
                      double) override {
    throw std::runtime_error("endpoint down");
  }
};

RunConfig quick_config(const std::string& cache = "") {
  RunConfig rc;
  rc.model_id = "mock";
  rc.temperature = 0;
  rc.retry.backoff_ms = 0;
  rc.cache_dir = cache;
  return rc;
}

}  // namespace

TEST_CASE("rendered prompts byte-match the golden templates") {
  PromptSamples samples = default_prompt_samples();
  const std::string answer = "It would not affect the process.";
  for (const auto& [qtype, file] :
       std::vector<std::pair<std::string, std::string>>{
           {"replication", "prompt_replication.txt"},
           {"transcription", "prompt_transcription.txt"},
           {"translation", "prompt_translation.txt"}}) {
    PromptBundle b = build_prompt(qtype, samples, answer);
    CHECK(b.system_text + "\n\n" + b.user_text == golden(file));
  }
}

TEST_CASE("prompt substitution is complete and faithful") {
  PromptSamples samples = default_prompt_samples();
  PromptBundle b = build_prompt("replication", samples, "some answer");
  CHECK(b.user_text.find("How will this alteration influence DNA "
                         "replication?") != std::string::npos);
  CHECK(b.user_text.find("The DNA will stop replicating when it reaches the "
                         "stop codon.") != std::string::npos);
  CHECK(b.user_text.find('<') == std::string::npos);
  CHECK(b.system_text.find('<') == std::string::npos);
  CHECK(b.user_text.find("some answer") != std::string::npos);
}

TEST_CASE("prompt construction validates its inputs") {
  PromptSamples samples = default_prompt_samples();
  CHECK_THROWS_MATCHES(build_prompt("replication", samples, "   "), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.kind() == ErrorKind::EmptyAnswer;
                       }));
  CHECK_THROWS_MATCHES(build_prompt("osmosis", samples, "x"), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.kind() == ErrorKind::UnknownQuestionType;
                       }));
  samples["replication"].incomplete = "";
  CHECK_THROWS_MATCHES(build_prompt("replication", samples, "x"), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.kind() == ErrorKind::EmptySamples;
                       }));
}

TEST_CASE("grade parsing cascade") {
  SECTION("leading option letters") {
    CHECK(parse_grade("A").label == Label::Correct);
    CHECK(parse_grade("B").label == Label::Incorrect);
    CHECK(parse_grade("C").label == Label::Incomplete);
    CHECK(parse_grade(" A. Correct").label == Label::Correct);
    CHECK(parse_grade("b) it is wrong").label == Label::Incorrect);
  }
  SECTION("unique keyword match when no leading letter") {
    CHECK(parse_grade("The student response falls in category C. Incomplete")
              .label == Label::Incomplete);
    CHECK(parse_grade("this is clearly incorrect").label == Label::Incorrect);
    CHECK(parse_grade("Looks Correct to me").label == Label::Correct);
  }
  SECTION("word boundaries keep incorrect from matching correct") {
    CHECK(parse_grade("the answer is incorrect").label == Label::Incorrect);
    CHECK(parse_grade("incorrectly reasoned but fine").unparseable());
  }
  SECTION("ambiguity and absence are unparseable") {
    CHECK(parse_grade("It depends").unparseable());
    CHECK(parse_grade("correct or incorrect, who knows").unparseable());
    CHECK(parse_grade("").unparseable());
    CHECK(parse_grade("About right").unparseable());
  }
  SECTION("option mapping is the inverse of export mapping") {
    for (Label l : kLabelOrder) {
      GradeParse g = parse_grade(label_to_option(l));
      REQUIRE_FALSE(g.unparseable());
      CHECK(*g.label == l);
    }
  }
}

TEST_CASE("run_batch grades bundles positionally") {
  PromptSamples samples = default_prompt_samples();
  std::vector<PromptBundle> bundles;
  for (int i = 0; i < 6; ++i)
    bundles.push_back(build_prompt("replication", samples,
                                   "student answer " + std::to_string(i)));

  SECTION("echo mock marks everything correct without retries") {
    MockChatClient client("A");
    BatchResultSet res = run_batch(client, bundles, quick_config());
    REQUIRE(res.grades.size() == 6);
    for (const auto& g : res.grades) CHECK(g.label == Label::Correct);
    for (const auto& e : res.ledger.entries) {
      CHECK(e.attempts == 1);
      CHECK_FALSE(e.cached);
      CHECK(e.prompt_tokens > 0);
    }
    CHECK(res.ledger.total_completion_tokens() == 6);
    CHECK(client.calls() == 6);
  }

  SECTION("substring rules route specific answers") {
    MockChatClient client("A");
    client.add_rule({"student answer 3", "C. Incomplete", 0});
    BatchResultSet res = run_batch(client, bundles, quick_config());
    CHECK(res.grades[3].label == Label::Incomplete);
    CHECK(res.grades[2].label == Label::Correct);
  }

  SECTION("second identical run is served from cache") {
    auto cache = fresh_temp_dir("llmcache");
    MockChatClient client("B");
    RunConfig rc = quick_config(cache.string());
    BatchResultSet first = run_batch(client, bundles, rc);
    CHECK(first.ledger.cache_hits() == 0);
    long calls_after_first = client.calls();
    BatchResultSet second = run_batch(client, bundles, rc);
    CHECK(second.ledger.cache_hits() == 6);
    CHECK(client.calls() == calls_after_first);
    for (std::size_t i = 0; i < 6; ++i)
      CHECK(second.grades[i].label == first.grades[i].label);
  }

  SECTION("transient failures are retried to success") {
    MockChatClient client("A");
    client.add_rule({"student answer 1", "B", 2});
    RunConfig rc = quick_config();
    rc.retry.max_attempts = 3;
    BatchResultSet res = run_batch(client, bundles, rc);
    CHECK(res.grades[1].label == Label::Incorrect);
    CHECK(res.ledger.entries[1].attempts == 3);
    CHECK(res.ledger.entries[0].attempts == 1);
  }

  SECTION("exhausted retries leave an unparseable grade with a note") {
    MockChatClient client("A");
    client.add_rule({"student answer 2", "A", 100});
    RunConfig rc = quick_config();
    rc.retry.max_attempts = 2;
    BatchResultSet res = run_batch(client, bundles, rc);
    CHECK(res.grades[2].unparseable());
    CHECK(res.grades[2].note.find("error:") == 0);
    CHECK(res.grades[0].label == Label::Correct);
  }

  SECTION("total failure with an empty cache raises ClientUnavailable") {
    AlwaysFailClient client;
    RunConfig rc = quick_config();
    rc.retry.max_attempts = 2;
    CHECK_THROWS_MATCHES(run_batch(client, bundles, rc), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.kind() == ErrorKind::ClientUnavailable;
                         }));
  }

  SECTION("concurrent execution matches sequential results") {
    MockChatClient seq("A");
    seq.add_rule({"student answer 4", "C", 0});
    BatchResultSet expected = run_batch(seq, bundles, quick_config());
    MockChatClient par("A");
    par.add_rule({"student answer 4", "C", 0});
    RunConfig rc = quick_config();
    rc.max_concurrent = 4;
    BatchResultSet got = run_batch(par, bundles, rc);
    REQUIRE(got.grades.size() == expected.grades.size());
    for (std::size_t i = 0; i < got.grades.size(); ++i)
      CHECK(got.grades[i].label == expected.grades[i].label);
  }
}

TEST_CASE("mock fixtures load from JSON") {
  auto client = MockChatClient::from_fixture_json(
      R"({"default": "B", "responses": [{"match": "special", "text": "C", "fail_times": 1}]})");
  std::vector<ChatMessage> plain = {{"user", "ordinary"}};
  CHECK(client.complete("m", plain, 0).text == "B");
  std::vector<ChatMessage> special = {{"user", "the special one"}};
  CHECK_THROWS(client.complete("m", special, 0));
  CHECK(client.complete("m", special, 0).text == "C");
}

TEST_CASE("grade scoring policies") {
  std::vector<ResponseRecord> records = {
      make_record("s0", "Q1", "a", Label::Correct),
      make_record("s1", "Q1", "b", Label::Incomplete),
      make_record("s2", "Q1", "c", Label::Incorrect),
      make_record("s3", "Q1", "d", Label::Correct)};
  std::vector<GradeParse> grades(4);
  grades[0] = parse_grade("A");            // right
  grades[1] = parse_grade("C");            // right
  grades[2] = parse_grade("A");            // wrong
  grades[3] = parse_grade("no idea");      // unparseable

  GradedMetrics wrong_policy = score_grades(records, grades);
  CHECK(wrong_policy.n_unparseable == 1);
  CHECK(wrong_policy.n_scored == 4);
  CHECK(wrong_policy.report.accuracy == Catch::Approx(0.5));

  GradedMetrics excluded =
      score_grades(records, grades, UnparseablePolicy::Exclude);
  CHECK(excluded.n_scored == 3);
  CHECK(excluded.report.accuracy == Catch::Approx(2.0 / 3.0));
}

TEST_CASE("temperature aggregation reproduces published mean/SD cells") {
  auto report_with_acc = [](double pct) {
    MetricsReport r;
    r.accuracy = pct / 100.0;
    return r;
  };
  SECTION("three temperatures") {
    TemperatureAggregate agg = aggregate_temperature_runs(
        {report_with_acc(69.46), report_with_acc(68.76),
         report_with_acc(66.37)});
    CHECK(format_fixed(agg.accuracy.mean * 100, 2) == "68.20");
    CHECK(format_fixed(agg.accuracy.sample_sd * 100, 2) == "1.62");
  }
  SECTION("another row") {
    TemperatureAggregate agg = aggregate_temperature_runs(
        {report_with_acc(77.84), report_with_acc(77.45),
         report_with_acc(78.04)});
    CHECK(format_fixed(agg.accuracy.mean * 100, 2) == "77.78");
    CHECK(format_fixed(agg.accuracy.sample_sd * 100, 2) == "0.30");
  }
  SECTION("single run has zero SD") {
    TemperatureAggregate agg =
        aggregate_temperature_runs({report_with_acc(50)});
    CHECK(agg.accuracy.mean == Catch::Approx(0.5));
    CHECK(agg.accuracy.sample_sd == 0.0);
  }
  SECTION("empty input is an error") {
    CHECK_THROWS_MATCHES(aggregate_temperature_runs({}), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.kind() == ErrorKind::Empty;
                         }));
  }
}

TEST_CASE("fine-tune export writes one chat example per record") {
  PromptSamples samples = default_prompt_samples();
  std::vector<ResponseRecord> records = {
      make_record("s0", "Q1", "all good", Label::Correct),
      make_record("s1", "Q2", "missing bits", Label::Incomplete),
      make_record("s2", "Q3", "nope", Label::Incorrect)};
  std::string jsonl = export_finetune_dataset(records, samples);
  auto lines = split_char(jsonl, '\n');
  CHECK(lines.size() == 4);  // 3 records + trailing empty

  auto first = nlohmann::json::parse(lines[0]);
  CHECK(first["messages"][2]["content"] == "A. Correct");
  auto second = nlohmann::json::parse(lines[1]);
  CHECK(second["messages"][2]["content"] == "C. Incomplete");

  auto examples = parse_finetune_dataset(jsonl);
  REQUIRE(examples.size() == 3);
  CHECK(examples[0].label == Label::Correct);
  CHECK(examples[1].label == Label::Incomplete);
  CHECK(examples[2].label == Label::Incorrect);
  CHECK(examples[0].system_text == root_prompt());
  CHECK(examples[1].user_text.find("missing bits") != std::string::npos);
}
