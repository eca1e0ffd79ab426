#pragma once

#include <array>
#include <cstdint>
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

// In-place Fisher-Yates driven directly by mt19937_64 draws; std::shuffle is
// implementation-defined, this is reproducible everywhere.
template <typename T>
inline void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

// ─── Student-integrity splits ────────────────────────────────────────

struct SplitSpec {
  double train_ratio = 0.50;
  double val_ratio = 0.15;
  std::uint64_t seed = 0;
};

inline void validate_split_spec(const SplitSpec& spec) {
  if (spec.train_ratio <= 0 || spec.val_ratio <= 0)
    fail(ErrorKind::InvalidSpec, "split ratios must be > 0");
  if (spec.train_ratio + spec.val_ratio >= 1.0)
    fail(ErrorKind::InvalidSpec, "train_ratio + val_ratio must be < 1");
}

struct QuestionTiers {
  std::vector<ResponseRecord> train;
  std::vector<ResponseRecord> val;
  std::vector<ResponseRecord> test;
};

struct SplitResult {
  SplitSpec spec;
  std::vector<std::string> student_permutation;
  std::size_t n_train_students = 0;
  std::size_t n_val_students = 0;
  std::size_t n_test_students = 0;
  std::map<std::string, QuestionTiers> by_question;
  std::map<std::string, QuestionId> questions;

  const QuestionTiers& tiers(const std::string& question) const {
    auto it = by_question.find(question);
    if (it == by_question.end())
      fail(ErrorKind::MissingQuestion, question + " not present in split");
    return it->second;
  }
  bool has_question(const std::string& question) const {
    return by_question.count(question) > 0;
  }
};

// All records of one student land in the same tier. Tier sizes use
// p = floor(train_ratio * n), q = floor(val_ratio * n); the remainder of
// the student permutation goes to test.
inline SplitResult split_by_student(const Corpus& corpus,
                                    const SplitSpec& spec) {
  validate_split_spec(spec);
  if (corpus.records.empty()) fail(ErrorKind::EmptyCorpus, "nothing to split");

  std::set<std::string> unique;
  for (const auto& r : corpus.records) unique.insert(r.student_id);
  std::vector<std::string> students(unique.begin(), unique.end());
  std::mt19937_64 rng(spec.seed);
  deterministic_shuffle(students, rng);

  const auto n = static_cast<long long>(students.size());
  const auto p = floor_snapped(spec.train_ratio * static_cast<double>(n));
  const auto q = floor_snapped(spec.val_ratio * static_cast<double>(n));

  SplitResult out;
  out.spec = spec;
  out.student_permutation = students;
  out.n_train_students = static_cast<std::size_t>(p);
  out.n_val_students = static_cast<std::size_t>(q);
  out.n_test_students = static_cast<std::size_t>(n - p - q);

  std::map<std::string, int> tier_of;  // 0 train, 1 val, 2 test
  for (long long i = 0; i < n; ++i) {
    int tier = i < p ? 0 : (i < p + q ? 1 : 2);
    tier_of[students[static_cast<std::size_t>(i)]] = tier;
  }
  std::map<std::string, long long> perm_index;
  for (long long i = 0; i < n; ++i)
    perm_index[students[static_cast<std::size_t>(i)]] = i;

  // Records grouped per question, ordered by student permutation.
  std::vector<const ResponseRecord*> ordered;
  ordered.reserve(corpus.records.size());
  for (const auto& r : corpus.records) ordered.push_back(&r);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [&](const ResponseRecord* a, const ResponseRecord* b) {
                     return perm_index[a->student_id] <
                            perm_index[b->student_id];
                   });
  for (const ResponseRecord* r : ordered) {
    out.questions.emplace(r->question.id, r->question);
    auto& tiers = out.by_question[r->question.id];
    switch (tier_of[r->student_id]) {
      case 0: tiers.train.push_back(*r); break;
      case 1: tiers.val.push_back(*r); break;
      default: tiers.test.push_back(*r); break;
    }
  }
  return out;
}

inline nlohmann::json split_to_json(const SplitResult& split) {
  nlohmann::json j;
  j["train_ratio"] = split.spec.train_ratio;
  j["val_ratio"] = split.spec.val_ratio;
  j["seed"] = split.spec.seed;
  j["student_permutation"] = split.student_permutation;
  j["n_train_students"] = split.n_train_students;
  j["n_val_students"] = split.n_val_students;
  j["n_test_students"] = split.n_test_students;
  nlohmann::json tiers = nlohmann::json::object();
  for (const auto& [q, t] : split.by_question) {
    auto ids = [](const std::vector<ResponseRecord>& v) {
      std::vector<std::string> out;
      for (const auto& r : v) out.push_back(r.record_id());
      return out;
    };
    tiers[q] = {{"train", ids(t.train)}, {"val", ids(t.val)},
                {"test", ids(t.test)}};
  }
  j["tiers"] = tiers;
  return j;
}

inline void save_split(const SplitResult& split,
                       const std::filesystem::path& path) {
  write_file(path, split_to_json(split).dump(2) + "\n");
}

// Rebuild a split from its manifest against the same corpus; tier membership
// is replayed from the stored permutation so results are bit-identical.
inline SplitResult load_split(const Corpus& corpus,
                              const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const std::exception& e) {
    fail(ErrorKind::IoError, "bad split manifest: " + std::string(e.what()));
  }
  SplitSpec spec;
  spec.train_ratio = j.at("train_ratio").get<double>();
  spec.val_ratio = j.at("val_ratio").get<double>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  SplitResult rebuilt = split_by_student(corpus, spec);
  auto stored =
      j.at("student_permutation").get<std::vector<std::string>>();
  if (stored != rebuilt.student_permutation)
    fail(ErrorKind::InvalidSpec,
         "split manifest does not match corpus (student sets differ)");
  return rebuilt;
}

// ─── Stratified nested subsets ───────────────────────────────────────

inline std::array<long, 3> label_counts(
    const std::vector<ResponseRecord>& records) {
  std::array<long, 3> c{0, 0, 0};
  for (const auto& r : records)
    c[static_cast<std::size_t>(label_index(r.label))]++;
  return c;
}

// Largest-remainder allocation: floors of proportional targets topped up by
// largest fractional remainder (ties by canonical label order) until the
// round-half-up target size is reached.
inline std::array<long, 3> largest_remainder_counts(
    const std::array<long, 3>& counts, double fraction) {
  const long long N = counts[0] + counts[1] + counts[2];
  const long long T = round_half_up(fraction * static_cast<double>(N));
  std::array<long, 3> k{};
  std::array<double, 3> rem{};
  long long given = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    double quota = fraction * static_cast<double>(counts[i]);
    k[i] = static_cast<long>(
        std::min<long long>(counts[i], floor_snapped(quota)));
    rem[i] = quota - static_cast<double>(k[i]);
    given += k[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rem[a] > rem[b];
  });
  std::size_t idx = 0;
  while (given < T) {
    std::size_t lab = order[idx % 3];
    if (k[lab] < counts[lab]) {
      ++k[lab];
      ++given;
    }
    ++idx;
  }
  return k;
}

namespace detail {

using Counts3 = std::array<long, 3>;

// States with |k_i - f*c_i| <= width and sum(k) = round_half_up(f*N).
inline std::vector<Counts3> quota_band_states(const Counts3& counts, double f,
                                              long width) {
  const long long N = counts[0] + counts[1] + counts[2];
  const long long T = round_half_up(f * static_cast<double>(N));
  std::array<std::pair<long, long>, 3> range;
  for (std::size_t i = 0; i < 3; ++i) {
    double q = f * static_cast<double>(counts[i]);
    long lo = static_cast<long>(
        std::max<long long>(0, ceil_snapped(q - static_cast<double>(width))));
    long hi = static_cast<long>(std::min<long long>(
        counts[i], floor_snapped(q + static_cast<double>(width))));
    range[i] = {lo, hi};
  }
  std::vector<Counts3> out;
  for (long a = range[0].first; a <= range[0].second; ++a)
    for (long b = range[1].first; b <= range[1].second; ++b) {
      long long c = T - a - b;
      if (c >= range[2].first && c <= range[2].second)
        out.push_back({a, b, static_cast<long>(c)});
    }
  return out;
}

inline bool dominates(const Counts3& hi, const Counts3& lo) {
  return hi[0] >= lo[0] && hi[1] >= lo[1] && hi[2] >= lo[2];
}

// Per-fraction label counts that are simultaneously (a) within 1 of the
// proportional target, (b) nested across the fraction grid, and (c) equal to
// the largest-remainder allocation at as many grid points as possible.
// Pure largest remainder alone is not monotone in the fraction (Alabama
// paradox), so a tiny DP over quota-band states arbitrates.
inline std::vector<Counts3> nested_label_counts(
    const Counts3& counts, const std::vector<double>& fractions) {
  const std::size_t n = fractions.size();
  std::vector<Counts3> result(n);
  for (long width = 1; ; ++width) {
    std::vector<std::vector<Counts3>> layers(n);
    std::vector<Counts3> target(n);
    bool feasible = true;
    for (std::size_t i = 0; i < n; ++i) {
      layers[i] = quota_band_states(counts, fractions[i], width);
      target[i] = largest_remainder_counts(counts, fractions[i]);
      if (layers[i].empty()) feasible = false;
    }
    if (!feasible) continue;

    // Backward pass: best achievable number of largest-remainder matches
    // from layer i on, given the state at layer i.
    std::vector<std::vector<int>> score(n);
    for (std::size_t i = 0; i < n; ++i)
      score[i].assign(layers[i].size(), -1);
    for (std::size_t s = 0; s < layers[n - 1].size(); ++s)
      score[n - 1][s] = layers[n - 1][s] == target[n - 1] ? 1 : 0;
    for (std::size_t i = n - 1; i-- > 0;) {
      for (std::size_t s = 0; s < layers[i].size(); ++s) {
        int best = -1;
        for (std::size_t t = 0; t < layers[i + 1].size(); ++t) {
          if (score[i + 1][t] < 0) continue;
          if (dominates(layers[i + 1][t], layers[i][s]))
            best = std::max(best, score[i + 1][t]);
        }
        if (best >= 0)
          score[i][s] = best + (layers[i][s] == target[i] ? 1 : 0);
      }
    }

    bool start_ok = false;
    for (int v : score[0]) start_ok = start_ok || v >= 0;
    if (!start_ok) continue;

    // Forward pass: walk an optimal path; ties prefer the exact
    // largest-remainder state, then the smallest quota deviation, then the
    // lexicographically smallest counts.
    Counts3 prev{0, 0, 0};
    bool first = true;
    for (std::size_t i = 0; i < n; ++i) {
      int best_score = -1;
      std::size_t best_idx = 0;
      double best_dev = 0;
      for (std::size_t s = 0; s < layers[i].size(); ++s) {
        if (score[i][s] < 0) continue;
        if (!first && !dominates(layers[i][s], prev)) continue;
        double dev = 0;
        for (std::size_t l = 0; l < 3; ++l)
          dev += std::abs(static_cast<double>(layers[i][s][l]) -
                          fractions[i] * static_cast<double>(counts[l]));
        bool is_target = layers[i][s] == target[i];
        bool better = false;
        if (score[i][s] > best_score) {
          better = true;
        } else if (score[i][s] == best_score) {
          bool cur_target = layers[i][best_idx] == target[i];
          if (is_target != cur_target) better = is_target;
          else if (dev != best_dev) better = dev < best_dev;
          else better = layers[i][s] < layers[i][best_idx];
        }
        if (better) {
          best_score = score[i][s];
          best_idx = s;
          best_dev = dev;
        }
      }
      if (best_score < 0) {
        feasible = false;
        break;
      }
      result[i] = layers[i][best_idx];
      prev = result[i];
      first = false;
    }
    if (feasible) return result;
  }
}

}  // namespace detail

struct SubsetSchedule {
  std::string question;
  std::uint64_t seed = 0;
  double step = 0.025;
  std::vector<double> fractions;
  std::vector<std::string> base_record_ids;
  // per fraction: indices into the base record list, ascending
  std::vector<std::vector<std::size_t>> member_indices;
  std::vector<std::string> subset_hashes;

  std::size_t fraction_index(double f) const {
    for (std::size_t i = 0; i < fractions.size(); ++i)
      if (std::abs(fractions[i] - f) < 1e-9) return i;
    fail(ErrorKind::FractionOutOfRange,
         format_fixed(f, 4) + " not on the schedule grid");
  }
  const std::vector<std::size_t>& members_at(double f) const {
    return member_indices[fraction_index(f)];
  }
  const std::string& hash_at(double f) const {
    return subset_hashes[fraction_index(f)];
  }
};

inline std::vector<double> fraction_grid(double step = 0.025) {
  std::vector<double> out;
  long steps = round_half_up(1.0 / step);
  for (long i = 0; i <= steps; ++i)
    out.push_back(static_cast<double>(i) / static_cast<double>(steps));
  return out;
}

inline SubsetSchedule build_subset_schedule(
    const std::vector<ResponseRecord>& base, std::uint64_t seed,
    std::vector<double> fractions = fraction_grid(),
    const std::string& question = "") {
  for (double f : fractions)
    if (f < 0 || f > 1)
      fail(ErrorKind::FractionOutOfRange, format_fixed(f, 4));
  std::sort(fractions.begin(), fractions.end());
  fractions.erase(std::unique(fractions.begin(), fractions.end(),
                              [](double a, double b) {
                                return std::abs(a - b) < 1e-9;
                              }),
                  fractions.end());
  if (base.empty() && !(fractions.size() == 1 && fractions[0] == 0.0))
    fail(ErrorKind::EmptyCorpus, "schedule over an empty base set");

  SubsetSchedule sched;
  sched.question = question;
  sched.seed = seed;
  sched.fractions = fractions;
  if (fractions.size() >= 2) sched.step = fractions[1] - fractions[0];
  for (const auto& r : base) sched.base_record_ids.push_back(r.record_id());

  // Per-label orders: seeded shuffle of each label's base indices.
  std::array<std::vector<std::size_t>, 3> by_label;
  for (std::size_t i = 0; i < base.size(); ++i)
    by_label[static_cast<std::size_t>(label_index(base[i].label))].push_back(i);
  std::mt19937_64 rng(seed);
  for (auto& group : by_label) deterministic_shuffle(group, rng);

  auto counts = label_counts(base);
  auto per_fraction = detail::nested_label_counts(counts, fractions);

  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    std::vector<std::size_t> members;
    for (std::size_t l = 0; l < 3; ++l) {
      long take = per_fraction[fi][l];
      members.insert(members.end(), by_label[l].begin(),
                     by_label[l].begin() + take);
    }
    std::sort(members.begin(), members.end());
    std::string ids;
    for (std::size_t m : members) {
      ids += sched.base_record_ids[m];
      ids += '\n';
    }
    sched.subset_hashes.push_back(hex64(fnv1a64(ids)));
    sched.member_indices.push_back(std::move(members));
  }
  return sched;
}

// Stratified subset at a single fraction; allocation agrees with the default
// 2.5%-step schedule so sweep subsets and ad-hoc subsets coincide.
inline std::vector<ResponseRecord> stratified_subset(
    const std::vector<ResponseRecord>& base, double fraction,
    std::uint64_t seed) {
  if (fraction < 0 || fraction > 1)
    fail(ErrorKind::FractionOutOfRange, format_fixed(fraction, 6));
  if (base.empty()) {
    if (fraction == 0) return {};
    fail(ErrorKind::EmptyCorpus, "subset of an empty base set");
  }
  auto grid = fraction_grid();
  grid.push_back(fraction);
  SubsetSchedule sched = build_subset_schedule(base, seed, grid);
  std::vector<ResponseRecord> out;
  for (std::size_t i : sched.members_at(fraction)) out.push_back(base[i]);
  return out;
}

inline nlohmann::json schedule_to_json(const SubsetSchedule& sched) {
  nlohmann::json j;
  j["question"] = sched.question;
  j["seed"] = sched.seed;
  j["step"] = sched.step;
  j["fractions"] = sched.fractions;
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t i = 0; i < sched.fractions.size(); ++i) {
    std::vector<std::string> ids;
    for (std::size_t m : sched.member_indices[i])
      ids.push_back(sched.base_record_ids[m]);
    per.push_back({{"fraction", sched.fractions[i]},
                   {"hash", sched.subset_hashes[i]},
                   {"record_ids", ids}});
  }
  j["subsets"] = per;
  return j;
}

// ─── Batch arithmetic ────────────────────────────────────────────────

// floor(n/batch)*batch, except a single partial batch is kept when
// 0 < n < batch so tiny sweep fractions still train on something.
inline long long effective_batched_count(long long n_records,
                                         long long batch_size = 16) {
  if (batch_size < 1) fail(ErrorKind::InvalidSpec, "batch_size must be >= 1");
  if (n_records <= 0) return 0;
  if (n_records < batch_size) return n_records;
  return (n_records / batch_size) * batch_size;
}

}  // namespace asag
