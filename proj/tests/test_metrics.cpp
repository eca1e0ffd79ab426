#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "asag/metrics.hpp"

using namespace asag;

namespace {

// Independent recomputation used as the oracle: per-class tallies counted
// directly from label pairs, no shared code with macro_metrics.
struct OracleMetrics {
  double accuracy, precision, recall, f1;
};

OracleMetrics brute_force(const std::vector<Label>& truth,
                          const std::vector<Label>& pred) {
  double hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] == pred[i]) hits += 1;
  OracleMetrics out{};
  out.accuracy = hits / static_cast<double>(truth.size());
  for (Label cls : kLabelOrder) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (pred[i] == cls && truth[i] == cls) tp += 1;
      if (pred[i] == cls && truth[i] != cls) fp += 1;
      if (pred[i] != cls && truth[i] == cls) fn += 1;
    }
    double p = tp + fp > 0 ? tp / (tp + fp) : 0;
    double r = tp + fn > 0 ? tp / (tp + fn) : 0;
    double f = p + r > 0 ? 2 * p * r / (p + r) : 0;
    out.precision += p / 3;
    out.recall += r / 3;
    out.f1 += f / 3;
  }
  return out;
}

}  // namespace

TEST_CASE("confusion matrix counts truth-by-prediction cells") {
  SECTION("perfect agreement is diagonal") {
    std::vector<Label> t(10, Label::Correct), p(10, Label::Correct);
    t[3] = p[3] = Label::Incomplete;
    t[7] = p[7] = Label::Incorrect;
    ConfusionMatrix cm = confusion(t, p);
    CHECK(cm.trace() == 10);
    CHECK(cm.total() == 10);
  }
  SECTION("hand-counted cells") {
    std::vector<Label> t{Label::Correct, Label::Correct, Label::Incomplete,
                         Label::Incorrect};
    std::vector<Label> p{Label::Correct, Label::Incomplete, Label::Incomplete,
                         Label::Correct};
    ConfusionMatrix cm = confusion(t, p);
    CHECK(cm.cells[0][0] == 1);
    CHECK(cm.cells[0][1] == 1);
    CHECK(cm.cells[1][1] == 1);
    CHECK(cm.cells[2][0] == 1);
    CHECK(cm.total() == 4);
  }
  SECTION("permutation invariance") {
    std::mt19937_64 rng(3);
    std::vector<Label> t, p;
    for (int i = 0; i < 50; ++i) {
      t.push_back(kLabelOrder[rng() % 3]);
      p.push_back(kLabelOrder[rng() % 3]);
    }
    ConfusionMatrix before = confusion(t, p);
    std::vector<std::size_t> order(t.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Label> t2, p2;
    for (std::size_t i : order) {
      t2.push_back(t[i]);
      p2.push_back(p[i]);
    }
    CHECK(confusion(t2, p2).cells == before.cells);
  }
  SECTION("errors") {
    CHECK_THROWS_MATCHES(
        confusion({Label::Correct}, {}), Error,
        Catch::Matchers::Predicate<Error>([](const Error& e) {
          return e.kind() == ErrorKind::LengthMismatch;
        }));
    CHECK_THROWS_MATCHES(confusion({}, {}), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.kind() == ErrorKind::Empty;
                         }));
  }
}

TEST_CASE("macro metrics from a confusion matrix") {
  SECTION("perfect diagonal") {
    ConfusionMatrix cm;
    cm.cells = {{{5, 0, 0}, {0, 3, 0}, {0, 0, 2}}};
    MetricsReport r = macro_metrics(cm);
    CHECK(r.accuracy == 1.0);
    CHECK(r.macro_precision == 1.0);
    CHECK(r.macro_recall == 1.0);
    CHECK(r.macro_f1 == 1.0);
  }
  SECTION("worked example, frozen from the brute-force oracle") {
    ConfusionMatrix cm;
    cm.cells = {{{8, 2, 0}, {1, 6, 3}, {0, 2, 8}}};
    MetricsReport r = macro_metrics(cm);
    CHECK(r.accuracy == Catch::Approx(22.0 / 30.0).epsilon(1e-12));
    // per-class precisions 8/9, 6/10, 8/11; recalls 0.8, 0.6, 0.8
    CHECK(r.macro_precision == Catch::Approx(0.7387205387).epsilon(1e-9));
    CHECK(r.macro_recall == Catch::Approx(0.7333333333).epsilon(1e-9));
    CHECK(r.macro_f1 == Catch::Approx(0.7346700084).epsilon(1e-9));
  }
  SECTION("class absent from truth and prediction scores zero") {
    ConfusionMatrix cm;
    cm.cells = {{{4, 1, 0}, {2, 3, 0}, {0, 0, 0}}};
    MetricsReport r = macro_metrics(cm);
    CHECK(r.per_class[2].precision == 0.0);
    CHECK(r.per_class[2].recall == 0.0);
    CHECK(r.per_class[2].f1 == 0.0);
    // macro still averages over 3 classes
    CHECK(r.macro_precision ==
          Catch::Approx((4.0 / 6 + 3.0 / 4 + 0) / 3).epsilon(1e-12));
  }
  SECTION("empty matrix is an error") {
    CHECK_THROWS_MATCHES(macro_metrics(ConfusionMatrix{}), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.kind() == ErrorKind::EmptyMatrix;
                         }));
  }
}

TEST_CASE("macro metrics agree with brute force on random matrices") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t n = 1 + rng() % 60;
    std::vector<Label> t, p;
    for (std::size_t i = 0; i < n; ++i) {
      t.push_back(kLabelOrder[rng() % 3]);
      p.push_back(kLabelOrder[rng() % 3]);
    }
    MetricsReport fast = macro_metrics(confusion(t, p));
    OracleMetrics slow = brute_force(t, p);
    REQUIRE(fast.accuracy == Catch::Approx(slow.accuracy).epsilon(1e-12));
    REQUIRE(fast.macro_precision ==
            Catch::Approx(slow.precision).margin(1e-12));
    REQUIRE(fast.macro_recall == Catch::Approx(slow.recall).margin(1e-12));
    REQUIRE(fast.macro_f1 == Catch::Approx(slow.f1).margin(1e-12));
  }
}

TEST_CASE("mean and sample standard deviation") {
  SECTION("published per-temperature accuracy cells") {
    MeanSd a = mean_sd({93.71, 93.81, 93.41});
    CHECK(a.mean == Catch::Approx(93.64333333).epsilon(1e-9));
    CHECK(format_fixed(a.mean, 2) == "93.64");
    CHECK(format_fixed(a.sample_sd, 2) == "0.21");

    MeanSd b = mean_sd({93.91, 93.91, 93.91});
    CHECK(format_fixed(b.mean, 2) == "93.91");
    CHECK(format_fixed(b.sample_sd, 2) == "0.00");
  }
  SECTION("hand arithmetic") {
    MeanSd m = mean_sd({1, 3});
    CHECK(m.mean == 2.0);
    CHECK(m.sample_sd == Catch::Approx(std::sqrt(2.0)).epsilon(1e-12));
  }
  SECTION("single value has zero SD by convention") {
    MeanSd m = mean_sd({42.0});
    CHECK(m.mean == 42.0);
    CHECK(m.sample_sd == 0.0);
  }
  SECTION("empty is an error") {
    CHECK_THROWS_MATCHES(mean_sd({}), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.kind() == ErrorKind::Empty;
                         }));
  }
}

TEST_CASE("metrics CSV row uses percent with two decimals") {
  ConfusionMatrix cm;
  cm.cells = {{{5, 0, 0}, {0, 3, 0}, {0, 0, 2}}};
  MetricsReport r = macro_metrics(cm);
  CHECK(metrics_csv_row("BMQ1", "100", r) ==
        "BMQ1,100,100.00,100.00,100.00,100.00");
}
