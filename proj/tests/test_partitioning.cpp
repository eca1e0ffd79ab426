#include <map>
#include <set>

#include <catch2/catch_amalgamated.hpp>

#include "asag/partitioning.hpp"
#include "helpers.hpp"

using namespace asag;
using asag::testing::fresh_temp_dir;
using asag::testing::random_corpus;

namespace {

Corpus corpus_of_students(std::size_t n,
                          const std::vector<std::string>& questions = {"Q1",
                                                                       "Q2",
                                                                       "Q3"}) {
  std::mt19937_64 rng(n);
  return random_corpus(rng, n, questions);
}

}  // namespace

TEST_CASE("split tier sizes follow the floor rule with remainder to test") {
  SECTION("n = 2861 gives 1430 / 429 / 1002") {
    Corpus c = corpus_of_students(2861, {"Q1"});
    SplitResult s = split_by_student(c, {0.5, 0.15, 0});
    CHECK(s.n_train_students == 1430);
    CHECK(s.n_val_students == 429);
    CHECK(s.n_test_students == 1002);
  }
  SECTION("n = 10 gives 5 / 1 / 4") {
    Corpus c = corpus_of_students(10, {"Q1"});
    SplitResult s = split_by_student(c, {0.5, 0.15, 0});
    CHECK(s.n_train_students == 5);
    CHECK(s.n_val_students == 1);
    CHECK(s.n_test_students == 4);
  }
}

TEST_CASE("every student's records share one tier") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    Corpus c = random_corpus(rng, 20 + rng() % 60, {"Q1", "Q2", "Q3"});
    SplitResult s = split_by_student(c, {0.5, 0.15, rng()});
    std::map<std::string, std::set<int>> tiers_of_student;
    for (const auto& [q, tiers] : s.by_question) {
      for (const auto& r : tiers.train) tiers_of_student[r.student_id].insert(0);
      for (const auto& r : tiers.val) tiers_of_student[r.student_id].insert(1);
      for (const auto& r : tiers.test) tiers_of_student[r.student_id].insert(2);
    }
    for (const auto& [student, tiers] : tiers_of_student)
      CHECK(tiers.size() == 1);
  }
}

TEST_CASE("splits are deterministic in corpus and seed") {
  Corpus c = corpus_of_students(40);
  SplitResult a = split_by_student(c, {0.5, 0.15, 7});
  SplitResult b = split_by_student(c, {0.5, 0.15, 7});
  CHECK(a.student_permutation == b.student_permutation);
  SplitResult other = split_by_student(c, {0.5, 0.15, 8});
  CHECK(a.student_permutation != other.student_permutation);
}

TEST_CASE("split rejects bad input") {
  CHECK_THROWS_MATCHES(split_by_student(Corpus{}, {0.5, 0.15, 0}), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.kind() == ErrorKind::EmptyCorpus;
                       }));
  Corpus c = corpus_of_students(4);
  CHECK_THROWS(split_by_student(c, {0.9, 0.2, 0}));
  CHECK_THROWS(split_by_student(c, {0.0, 0.15, 0}));
}

TEST_CASE("split manifests round trip through JSON") {
  Corpus c = corpus_of_students(30);
  SplitResult s = split_by_student(c, {0.5, 0.15, 3});
  auto dir = fresh_temp_dir("split");
  save_split(s, dir / "split.json");
  SplitResult back = load_split(c, dir / "split.json");
  CHECK(back.student_permutation == s.student_permutation);
  for (const auto& [q, tiers] : s.by_question) {
    CHECK(back.tiers(q).train.size() == tiers.train.size());
    CHECK(back.tiers(q).test.size() == tiers.test.size());
  }
}

TEST_CASE("largest remainder reproduces the worked 2.5% example") {
  auto k = largest_remainder_counts({759, 220, 451}, 0.025);
  CHECK(k == std::array<long, 3>{19, 6, 11});
  CHECK(k[0] + k[1] + k[2] == 36);
}

TEST_CASE("stratified subsets honor the worked example end to end") {
  // Base with label counts (759, 220, 451); subset at 2.5% has 36 records
  // split 19/6/11.
  std::vector<ResponseRecord> base;
  long idx = 0;
  auto push = [&](Label l, long n) {
    for (long i = 0; i < n; ++i)
      base.push_back(asag::testing::make_record("s" + std::to_string(idx++),
                                                "Q2", "tok", l));
  };
  push(Label::Correct, 759);
  push(Label::Incomplete, 220);
  push(Label::Incorrect, 451);

  auto subset = stratified_subset(base, 0.025, 42);
  REQUIRE(subset.size() == 36);
  auto counts = label_counts(subset);
  CHECK(counts == std::array<long, 3>{19, 6, 11});
}

TEST_CASE("subset edges: empty at 0, whole base at 1, range checked") {
  std::vector<ResponseRecord> base;
  for (int i = 0; i < 9; ++i)
    base.push_back(asag::testing::make_record("s" + std::to_string(i), "Q1",
                                              "tok", kLabelOrder[i % 3]));
  CHECK(stratified_subset(base, 0.0, 1).empty());
  CHECK(stratified_subset(base, 1.0, 1).size() == base.size());
  CHECK(stratified_subset({}, 0.0, 1).empty());
  CHECK_THROWS_MATCHES(stratified_subset(base, 1.5, 1), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.kind() == ErrorKind::FractionOutOfRange;
                       }));
  CHECK_THROWS(stratified_subset({}, 0.5, 1));
}

TEST_CASE("schedules nest and stay within one of proportional targets") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    std::array<long, 3> want{static_cast<long>(40 + rng() % 400),
                             static_cast<long>(10 + rng() % 200),
                             static_cast<long>(10 + rng() % 300)};
    std::vector<ResponseRecord> base;
    long idx = 0;
    for (std::size_t l = 0; l < 3; ++l)
      for (long i = 0; i < want[l]; ++i)
        base.push_back(asag::testing::make_record(
            "s" + std::to_string(idx++), "Q1", "tok", kLabelOrder[l]));
    SubsetSchedule sched = build_subset_schedule(base, rng());

    const long N = want[0] + want[1] + want[2];
    std::set<std::size_t> prev;
    for (std::size_t fi = 0; fi < sched.fractions.size(); ++fi) {
      double f = sched.fractions[fi];
      const auto& members = sched.member_indices[fi];
      // exact target size
      CHECK(static_cast<long long>(members.size()) ==
            round_half_up(f * static_cast<double>(N)));
      // nesting
      std::set<std::size_t> cur(members.begin(), members.end());
      for (std::size_t m : prev) CHECK(cur.count(m) == 1);
      // stratification error <= 1 per label
      std::array<long, 3> got{0, 0, 0};
      for (std::size_t m : members)
        got[static_cast<std::size_t>(label_index(base[m].label))]++;
      for (std::size_t l = 0; l < 3; ++l)
        CHECK(std::abs(static_cast<double>(got[l]) -
                       f * static_cast<double>(want[l])) <= 1.0 + 1e-9);
      prev = std::move(cur);
    }
    CHECK(sched.member_indices.front().empty());
    CHECK(sched.member_indices.back().size() == base.size());
  }
}

TEST_CASE("schedules are deterministic and seed-sensitive") {
  std::vector<ResponseRecord> base;
  for (int i = 0; i < 80; ++i)
    base.push_back(asag::testing::make_record("s" + std::to_string(i), "Q1",
                                              "tok", kLabelOrder[i % 3]));
  SubsetSchedule a = build_subset_schedule(base, 5);
  SubsetSchedule b = build_subset_schedule(base, 5);
  SubsetSchedule c = build_subset_schedule(base, 6);
  CHECK(a.member_indices == b.member_indices);
  CHECK(a.subset_hashes == b.subset_hashes);
  CHECK(a.member_indices != c.member_indices);
}

TEST_CASE("single-fraction subsets agree with the default schedule") {
  std::vector<ResponseRecord> base;
  for (int i = 0; i < 120; ++i)
    base.push_back(asag::testing::make_record("s" + std::to_string(i), "Q1",
                                              "tok", kLabelOrder[i % 3]));
  SubsetSchedule sched = build_subset_schedule(base, 9);
  for (double f : {0.025, 0.1, 0.5, 0.975}) {
    auto direct = stratified_subset(base, f, 9);
    const auto& via = sched.members_at(f);
    REQUIRE(direct.size() == via.size());
    std::set<std::string> a, b;
    for (const auto& r : direct) a.insert(r.record_id());
    for (std::size_t m : via) b.insert(base[m].record_id());
    CHECK(a == b);
  }
}

TEST_CASE("schedule JSON carries per-fraction hashes and ids") {
  std::vector<ResponseRecord> base;
  for (int i = 0; i < 40; ++i)
    base.push_back(asag::testing::make_record("s" + std::to_string(i), "Q1",
                                              "tok", kLabelOrder[i % 3]));
  SubsetSchedule sched =
      build_subset_schedule(base, 4, {0.0, 0.5, 1.0}, "Q1");
  auto j = schedule_to_json(sched);
  CHECK(j["question"] == "Q1");
  REQUIRE(j["subsets"].size() == 3);
  CHECK(j["subsets"][2]["record_ids"].size() == 40);
  CHECK(j["subsets"][1]["hash"] == sched.hash_at(0.5));
}

TEST_CASE("effective batch count drops the remainder, keeps tiny sets") {
  CHECK(effective_batched_count(1430, 16) == 1424);
  CHECK(effective_batched_count(16, 16) == 16);
  CHECK(effective_batched_count(35, 16) == 32);
  CHECK(effective_batched_count(7, 16) == 7);
  CHECK(effective_batched_count(0, 16) == 0);
  CHECK(effective_batched_count(15, 16) == 15);
  CHECK(effective_batched_count(17, 16) == 16);
  CHECK_THROWS(effective_batched_count(10, 0));
}
