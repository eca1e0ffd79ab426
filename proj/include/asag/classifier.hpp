#pragma once

#include <chrono>
#include <cstring>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asag/corpus.hpp"
#include "asag/errors.hpp"
#include "asag/metrics.hpp"
#include "asag/partitioning.hpp"
#include "asag/util.hpp"

namespace asag {

// ─── Configuration ───────────────────────────────────────────────────

struct ClassifierConfig {
  std::string backend_id = "toy";
  double learning_rate = 1e-5;
  long batch_size = 16;
  long patience_epochs = 10;
  long max_epochs = 200;  // termination cap; not a tuned value
  std::uint64_t seed = 0;
  std::string loss = "categorical_cross_entropy";
  std::string monitor = "val_accuracy";
  std::map<std::string, std::string> backend_options;
};

inline void validate_config(const ClassifierConfig& c) {
  if (c.learning_rate <= 0)
    fail(ErrorKind::InvalidSpec, "learning_rate must be > 0");
  if (c.patience_epochs < 1)
    fail(ErrorKind::InvalidSpec, "patience_epochs must be >= 1");
  if (c.max_epochs < 1) fail(ErrorKind::InvalidSpec, "max_epochs must be >= 1");
  if (c.batch_size < 1) fail(ErrorKind::InvalidSpec, "batch_size must be >= 1");
}

inline long option_long(const ClassifierConfig& c, const std::string& key,
                        long fallback) {
  auto it = c.backend_options.find(key);
  return it == c.backend_options.end() ? fallback : std::stol(it->second);
}

inline double option_double(const ClassifierConfig& c, const std::string& key,
                            double fallback) {
  auto it = c.backend_options.find(key);
  return it == c.backend_options.end() ? fallback : std::stod(it->second);
}

inline nlohmann::json config_to_json(const ClassifierConfig& c) {
  return {{"backend_id", c.backend_id},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"patience_epochs", c.patience_epochs},
          {"max_epochs", c.max_epochs},
          {"seed", c.seed},
          {"loss", c.loss},
          {"monitor", c.monitor},
          {"backend_options", c.backend_options}};
}

inline ClassifierConfig config_from_json(const nlohmann::json& j) {
  ClassifierConfig c;
  c.backend_id = j.at("backend_id").get<std::string>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<long>();
  c.patience_epochs = j.at("patience_epochs").get<long>();
  c.max_epochs = j.at("max_epochs").get<long>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.loss = j.value("loss", c.loss);
  c.monitor = j.value("monitor", c.monitor);
  if (j.contains("backend_options"))
    c.backend_options =
        j["backend_options"].get<std::map<std::string, std::string>>();
  return c;
}

// ─── Checkpoints, reports, predictions ───────────────────────────────

struct LineageStep {
  std::string question;
  double fraction = 1.0;

  bool operator==(const LineageStep& o) const {
    return question == o.question && fraction == o.fraction;
  }
};

struct Checkpoint {
  std::string backend_id;
  std::vector<std::uint8_t> params;
  std::array<Label, 3> label_order = kLabelOrder;
  ClassifierConfig config;
  std::vector<LineageStep> lineage;  // nonempty iff trained
};

// "B0" for an untrained model, else "BM" + the question ids in order.
inline std::string lineage_name(const std::vector<LineageStep>& lineage) {
  if (lineage.empty()) return "B0";
  std::string s = "BM";
  for (const auto& step : lineage) s += step.question;
  return s;
}

struct EpochStats {
  double train_loss = 0;
  double train_acc = 0;
  double val_acc = 0;
};

enum class StopReason { PatienceExhausted, MaxEpochs, EmptyTrain };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::PatienceExhausted: return "patience_exhausted";
    case StopReason::MaxEpochs: return "max_epochs";
    case StopReason::EmptyTrain: return "empty_train";
  }
  return "?";
}

struct TrainingReport {
  std::vector<EpochStats> epochs;
  long best_epoch = 0;  // 1-based; earliest epoch attaining the max val acc
  StopReason stop_reason = StopReason::EmptyTrain;
  double wall_seconds = 0;
};

inline nlohmann::json report_to_json(const TrainingReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"train_loss", e.train_loss},
                      {"train_acc", e.train_acc},
                      {"val_acc", e.val_acc}});
  return {{"epochs", epochs},
          {"best_epoch", r.best_epoch},
          {"stop_reason", to_string(r.stop_reason)},
          {"wall_seconds", r.wall_seconds}};
}

struct Prediction {
  Label label = Label::Correct;
  std::array<double, 3> scores{};  // canonical order, sums to 1
};

struct PredictionSet {
  std::vector<Prediction> items;
};

inline std::vector<Label> predicted_labels(const PredictionSet& p) {
  std::vector<Label> out;
  out.reserve(p.items.size());
  for (const auto& it : p.items) out.push_back(it.label);
  return out;
}

inline double prediction_accuracy(const PredictionSet& preds,
                                  const std::vector<ResponseRecord>& records) {
  if (preds.items.size() != records.size())
    fail(ErrorKind::LengthMismatch, "predictions vs records");
  if (records.empty()) return 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (preds.items[i].label == records[i].label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

// Argmax with ties resolved by canonical label order.
inline Prediction make_prediction(const std::array<double, 3>& scores) {
  Prediction p;
  p.scores = scores;
  std::size_t best = 0;
  for (std::size_t i = 1; i < 3; ++i)
    if (scores[i] > scores[best]) best = i;
  p.label = kLabelOrder[best];
  return p;
}

// ─── Backend contract ────────────────────────────────────────────────

struct BatchResult {
  double loss = 0;
  double accuracy = 0;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  virtual void reset(const ClassifierConfig& config) = 0;  // fresh init
  virtual std::vector<std::uint8_t> serialize() const = 0;
  virtual void deserialize(const std::vector<std::uint8_t>& blob) = 0;
  virtual void begin_training(const ClassifierConfig&) {}
  virtual void on_epoch_begin(long) {}
  // Forward+backward+update on one batch; loss/accuracy are pre-update.
  virtual BatchResult train_batch(
      const std::vector<const ResponseRecord*>& batch,
      const ClassifierConfig& config) = 0;
  virtual PredictionSet predict(
      const std::vector<ResponseRecord>& records) const = 0;
};

class BackendRegistry {
 public:
  using Factory =
      std::function<std::unique_ptr<Backend>(const ClassifierConfig&)>;

  static BackendRegistry& instance();

  void register_backend(const std::string& id, Factory factory) {
    factories_[id] = std::move(factory);
  }
  bool has(const std::string& id) const { return factories_.count(id) > 0; }
  std::unique_ptr<Backend> create(const std::string& id,
                                  const ClassifierConfig& config) const {
    auto it = factories_.find(id);
    if (it == factories_.end())
      fail(ErrorKind::UnknownBackend, "no backend '" + id + "' registered");
    return it->second(config);
  }

 private:
  std::map<std::string, Factory> factories_;
};

namespace detail {

inline void append_bytes(std::vector<std::uint8_t>& out, const void* p,
                         std::size_t n) {
  auto b = static_cast<const std::uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

inline void read_bytes(const std::vector<std::uint8_t>& in, std::size_t& pos,
                       void* p, std::size_t n) {
  if (pos + n > in.size())
    fail(ErrorKind::CorruptCheckpoint, "parameter blob truncated");
  std::memcpy(p, in.data() + pos, n);
  pos += n;
}

// Shared Adam state for the small dense backends.
struct AdamState {
  std::vector<double> m, v;
  long t = 0;

  void reset(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    t = 0;
  }
  void step(std::vector<double>& params, const std::vector<double>& grad,
            double lr, double beta1 = 0.9, double beta2 = 0.999,
            double eps = 1e-8) {
    if (m.size() != params.size()) reset(params.size());
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1 - beta2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
};

inline std::array<double, 3> softmax3(const std::array<double, 3>& logits) {
  double mx = std::max({logits[0], logits[1], logits[2]});
  std::array<double, 3> e{};
  double sum = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    e[i] = std::exp(logits[i] - mx);
    sum += e[i];
  }
  for (auto& v : e) v /= sum;
  return e;
}

}  // namespace detail

// ─── Toy backend ─────────────────────────────────────────────────────
// Bag-of-tokens linear model with a 3-way softmax head: tokens are hashed
// into a fixed feature space, features are L1-normalized counts. Fast
// enough that full sweep experiments run in seconds.

class ToyBackend : public Backend {
 public:
  explicit ToyBackend(const ClassifierConfig& config) {
    dim_ = option_long(config, "hash_dim", 1024);
    init_scale_ = option_double(config, "init_scale", 0.1);
    reset(config);
  }

  std::string id() const override { return "toy"; }

  void reset(const ClassifierConfig& config) override {
    params_.assign(static_cast<std::size_t>(3 * dim_ + 3), 0.0);
    std::mt19937_64 rng(config.seed);
    for (auto& w : params_) w = (uniform01(rng) * 2.0 - 1.0) * init_scale_;
    adam_.reset(params_.size());
  }

  std::vector<std::uint8_t> serialize() const override {
    std::vector<std::uint8_t> out;
    const char magic[4] = {'A', 'T', 'B', '1'};
    detail::append_bytes(out, magic, 4);
    std::uint64_t dim = static_cast<std::uint64_t>(dim_);
    detail::append_bytes(out, &dim, sizeof dim);
    detail::append_bytes(out, params_.data(),
                         params_.size() * sizeof(double));
    return out;
  }

  void deserialize(const std::vector<std::uint8_t>& blob) override {
    std::size_t pos = 0;
    char magic[4];
    detail::read_bytes(blob, pos, magic, 4);
    if (std::memcmp(magic, "ATB1", 4) != 0)
      fail(ErrorKind::CorruptCheckpoint, "bad toy parameter blob magic");
    std::uint64_t dim = 0;
    detail::read_bytes(blob, pos, &dim, sizeof dim);
    dim_ = static_cast<long>(dim);
    params_.assign(static_cast<std::size_t>(3 * dim_ + 3), 0.0);
    detail::read_bytes(blob, pos, params_.data(),
                       params_.size() * sizeof(double));
    if (pos != blob.size())
      fail(ErrorKind::CorruptCheckpoint, "trailing bytes in parameter blob");
    adam_.reset(params_.size());
  }

  void begin_training(const ClassifierConfig&) override {
    adam_.reset(params_.size());
  }

  BatchResult train_batch(const std::vector<const ResponseRecord*>& batch,
                          const ClassifierConfig& config) override {
    std::vector<double> grad;
    BatchResult res = loss_and_gradient(batch, &grad);
    adam_.step(params_, grad, config.learning_rate);
    return res;
  }

  PredictionSet predict(
      const std::vector<ResponseRecord>& records) const override {
    PredictionSet out;
    out.items.reserve(records.size());
    for (const auto& r : records)
      out.items.push_back(make_prediction(scores(r.text)));
    return out;
  }

  // Forward-only entry points used by gradient checks.
  double batch_loss(const std::vector<const ResponseRecord*>& batch) const {
    return const_cast<ToyBackend*>(this)->loss_and_gradient(batch, nullptr)
        .loss;
  }
  std::vector<double> batch_gradient(
      const std::vector<const ResponseRecord*>& batch) const {
    std::vector<double> grad;
    const_cast<ToyBackend*>(this)->loss_and_gradient(batch, &grad);
    return grad;
  }
  std::vector<double>& raw_params() { return params_; }
  long feature_dim() const { return dim_; }

 private:
  std::vector<std::pair<std::size_t, double>> features(
      const std::string& text) const {
    auto tokens = split_whitespace(to_lower(text));
    std::map<std::size_t, double> acc;
    for (const auto& t : tokens)
      acc[static_cast<std::size_t>(fnv1a64(t) %
                                   static_cast<std::uint64_t>(dim_))] += 1.0;
    std::vector<std::pair<std::size_t, double>> out(acc.begin(), acc.end());
    if (!tokens.empty())
      for (auto& [i, v] : out) v /= static_cast<double>(tokens.size());
    return out;
  }

  std::array<double, 3> scores(const std::string& text) const {
    auto x = features(text);
    std::array<double, 3> logits{};
    const double* b = params_.data() + 3 * dim_;
    for (std::size_t c = 0; c < 3; ++c) {
      double z = b[c];
      const double* w = params_.data() + c * static_cast<std::size_t>(dim_);
      for (const auto& [i, v] : x) z += w[i] * v;
      logits[c] = z;
    }
    return detail::softmax3(logits);
  }

  BatchResult loss_and_gradient(
      const std::vector<const ResponseRecord*>& batch,
      std::vector<double>* grad_out) {
    if (grad_out) grad_out->assign(params_.size(), 0.0);
    BatchResult res;
    if (batch.empty()) return res;
    const double inv = 1.0 / static_cast<double>(batch.size());
    std::size_t hits = 0;
    for (const ResponseRecord* r : batch) {
      auto x = features(r->text);
      auto p = scores(r->text);
      auto y = static_cast<std::size_t>(label_index(r->label));
      res.loss += -std::log(std::max(p[y], 1e-300)) * inv;
      std::size_t best = 0;
      for (std::size_t i = 1; i < 3; ++i)
        if (p[i] > p[best]) best = i;
      if (best == y) ++hits;
      if (grad_out) {
        for (std::size_t c = 0; c < 3; ++c) {
          double d = (p[c] - (c == y ? 1.0 : 0.0)) * inv;
          double* gw = grad_out->data() + c * static_cast<std::size_t>(dim_);
          for (const auto& [i, v] : x) gw[i] += d * v;
          (*grad_out)[static_cast<std::size_t>(3 * dim_) + c] += d;
        }
      }
    }
    res.accuracy = static_cast<double>(hits) / static_cast<double>(batch.size());
    return res;
  }

  long dim_ = 1024;
  double init_scale_ = 0.1;
  std::vector<double> params_;  // W row-major (3 x dim) then bias (3)
  detail::AdamState adam_;
};

// ─── Encoder backend ─────────────────────────────────────────────────
// Pretrained-encoder architecture contract: 12 layers, 12 heads, 768-wide
// pooled output feeding a 512-unit intermediate layer and a 3-way head.
// The encoder itself is an input supplied through PooledEncoder; a
// deterministic hashing stand-in ships so the backend runs without one.

struct EncoderArchitecture {
  long vocab_size = 28996;
  long max_positions = 512;
  long type_vocab = 2;
  long hidden = 768;
  long layers = 12;
  long heads = 12;
  long feed_forward = 3072;
  long intermediate = 512;
  long classes = 3;

  long long encoder_parameter_count() const {
    const long long h = hidden;
    long long embeddings = static_cast<long long>(vocab_size) * h +
                           static_cast<long long>(max_positions) * h +
                           static_cast<long long>(type_vocab) * h + 2 * h;
    long long per_layer = 4 * (h * h + h)      // q,k,v,attention output
                          + 2 * h              // attention layer norm
                          + h * feed_forward + feed_forward
                          + static_cast<long long>(feed_forward) * h + h
                          + 2 * h;             // output layer norm
    long long pooler = h * h + h;
    return embeddings + layers * per_layer + pooler;
  }
  long long intermediate_parameter_count() const {
    return static_cast<long long>(hidden) * intermediate + intermediate;
  }
  long long head_parameter_count() const {
    return static_cast<long long>(intermediate) * classes + classes;
  }
};

class PooledEncoder {
 public:
  virtual ~PooledEncoder() = default;
  virtual std::string name() const = 0;
  virtual std::vector<double> encode(const std::string& text) const = 0;
};

// Hash tokens into a signed, L2-normalized fixed-width vector. Stands in
// for a mounted pretrained encoder in desk-scale runs.
class HashingPooledEncoder : public PooledEncoder {
 public:
  explicit HashingPooledEncoder(long dim = 768) : dim_(dim) {}
  std::string name() const override { return "hashing"; }
  std::vector<double> encode(const std::string& text) const override {
    std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
    for (const auto& t : split_whitespace(to_lower(text))) {
      auto h = fnv1a64(t);
      auto idx = static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim_));
      v[idx] += (h >> 63) ? -1.0 : 1.0;
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    if (norm > 0) {
      norm = std::sqrt(norm);
      for (auto& x : v) x /= norm;
    }
    return v;
  }

 private:
  long dim_;
};

class EncoderBackend : public Backend {
 public:
  explicit EncoderBackend(const ClassifierConfig& config,
                          std::shared_ptr<PooledEncoder> encoder = nullptr)
      : encoder_(encoder ? std::move(encoder)
                         : std::make_shared<HashingPooledEncoder>()) {
    reset(config);
  }

  std::string id() const override { return "encoder"; }

  const EncoderArchitecture& architecture() const { return arch_; }

  void reset(const ClassifierConfig& config) override {
    const auto n = trainable_size();
    params_.assign(n, 0.0);
    std::mt19937_64 rng(config.seed);
    for (auto& w : params_) w = (uniform01(rng) * 2.0 - 1.0) * 0.05;
    adam_.reset(params_.size());
  }

  std::vector<std::uint8_t> serialize() const override {
    std::vector<std::uint8_t> out;
    const char magic[4] = {'A', 'E', 'B', '1'};
    detail::append_bytes(out, magic, 4);
    std::uint64_t dims[2] = {static_cast<std::uint64_t>(arch_.hidden),
                             static_cast<std::uint64_t>(arch_.intermediate)};
    detail::append_bytes(out, dims, sizeof dims);
    detail::append_bytes(out, params_.data(), params_.size() * sizeof(double));
    return out;
  }

  void deserialize(const std::vector<std::uint8_t>& blob) override {
    std::size_t pos = 0;
    char magic[4];
    detail::read_bytes(blob, pos, magic, 4);
    if (std::memcmp(magic, "AEB1", 4) != 0)
      fail(ErrorKind::CorruptCheckpoint, "bad encoder parameter blob magic");
    std::uint64_t dims[2];
    detail::read_bytes(blob, pos, dims, sizeof dims);
    arch_.hidden = static_cast<long>(dims[0]);
    arch_.intermediate = static_cast<long>(dims[1]);
    params_.assign(trainable_size(), 0.0);
    detail::read_bytes(blob, pos, params_.data(),
                       params_.size() * sizeof(double));
    if (pos != blob.size())
      fail(ErrorKind::CorruptCheckpoint, "trailing bytes in parameter blob");
    adam_.reset(params_.size());
  }

  void begin_training(const ClassifierConfig&) override {
    adam_.reset(params_.size());
  }

  BatchResult train_batch(const std::vector<const ResponseRecord*>& batch,
                          const ClassifierConfig& config) override {
    BatchResult res;
    if (batch.empty()) return res;
    std::vector<double> grad(params_.size(), 0.0);
    const double inv = 1.0 / static_cast<double>(batch.size());
    const auto H = static_cast<std::size_t>(arch_.hidden);
    const auto I = static_cast<std::size_t>(arch_.intermediate);
    std::size_t hits = 0;
    for (const ResponseRecord* r : batch) {
      auto h = encoder_->encode(r->text);
      std::vector<double> z1(I), a1(I);
      forward(h, z1, a1);
      auto p = head_scores(a1);
      auto y = static_cast<std::size_t>(label_index(r->label));
      res.loss += -std::log(std::max(p[y], 1e-300)) * inv;
      std::size_t best = 0;
      for (std::size_t i = 1; i < 3; ++i)
        if (p[i] > p[best]) best = i;
      if (best == y) ++hits;

      // backprop
      std::array<double, 3> dlogit{};
      for (std::size_t c = 0; c < 3; ++c)
        dlogit[c] = (p[c] - (c == y ? 1.0 : 0.0)) * inv;
      const double* w2 = params_.data() + w2_off();
      std::vector<double> da1(I, 0.0);
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < I; ++i) {
          grad[w2_off() + c * I + i] += dlogit[c] * a1[i];
          da1[i] += dlogit[c] * w2[c * I + i];
        }
        grad[b2_off() + c] += dlogit[c];
      }
      for (std::size_t i = 0; i < I; ++i) {
        double dz1 = da1[i] * (1.0 - a1[i] * a1[i]);  // tanh'
        for (std::size_t j = 0; j < H; ++j)
          grad[w1_off() + i * H + j] += dz1 * h[j];
        grad[b1_off() + i] += dz1;
      }
    }
    res.accuracy = static_cast<double>(hits) / static_cast<double>(batch.size());
    adam_.step(params_, grad, config.learning_rate);
    return res;
  }

  PredictionSet predict(
      const std::vector<ResponseRecord>& records) const override {
    PredictionSet out;
    out.items.reserve(records.size());
    const auto I = static_cast<std::size_t>(arch_.intermediate);
    for (const auto& r : records) {
      auto h = encoder_->encode(r.text);
      std::vector<double> z1(I), a1(I);
      forward(h, z1, a1);
      out.items.push_back(make_prediction(head_scores(a1)));
    }
    return out;
  }

 private:
  std::size_t trainable_size() const {
    return static_cast<std::size_t>(arch_.intermediate_parameter_count() +
                                    arch_.head_parameter_count());
  }
  std::size_t w1_off() const { return 0; }
  std::size_t b1_off() const {
    return static_cast<std::size_t>(arch_.hidden * arch_.intermediate);
  }
  std::size_t w2_off() const {
    return b1_off() + static_cast<std::size_t>(arch_.intermediate);
  }
  std::size_t b2_off() const {
    return w2_off() + static_cast<std::size_t>(3 * arch_.intermediate);
  }

  void forward(const std::vector<double>& h, std::vector<double>& z1,
               std::vector<double>& a1) const {
    const auto H = static_cast<std::size_t>(arch_.hidden);
    const auto I = static_cast<std::size_t>(arch_.intermediate);
    const double* w1 = params_.data() + w1_off();
    const double* b1 = params_.data() + b1_off();
    for (std::size_t i = 0; i < I; ++i) {
      double z = b1[i];
      for (std::size_t j = 0; j < H; ++j) z += w1[i * H + j] * h[j];
      z1[i] = z;
      a1[i] = std::tanh(z);
    }
  }
  std::array<double, 3> head_scores(const std::vector<double>& a1) const {
    const auto I = static_cast<std::size_t>(arch_.intermediate);
    const double* w2 = params_.data() + w2_off();
    const double* b2 = params_.data() + b2_off();
    std::array<double, 3> logits{};
    for (std::size_t c = 0; c < 3; ++c) {
      double z = b2[c];
      for (std::size_t i = 0; i < I; ++i) z += w2[c * I + i] * a1[i];
      logits[c] = z;
    }
    return detail::softmax3(logits);
  }

  EncoderArchitecture arch_;
  std::shared_ptr<PooledEncoder> encoder_;
  std::vector<double> params_;
  detail::AdamState adam_;
};

inline BackendRegistry& BackendRegistry::instance() {
  static BackendRegistry registry = [] {
    BackendRegistry r;
    r.register_backend("toy", [](const ClassifierConfig& c) {
      return std::make_unique<ToyBackend>(c);
    });
    r.register_backend("encoder", [](const ClassifierConfig& c) {
      return std::make_unique<EncoderBackend>(c);
    });
    return r;
  }();
  return registry;
}

// ─── Training loop ───────────────────────────────────────────────────

inline Checkpoint fresh_checkpoint(const std::string& backend_id,
                                   const ClassifierConfig& config) {
  ClassifierConfig c = config;
  c.backend_id = backend_id;
  auto backend = BackendRegistry::instance().create(backend_id, c);
  Checkpoint ckpt;
  ckpt.backend_id = backend_id;
  ckpt.params = backend->serialize();
  ckpt.config = c;
  return ckpt;
}

struct TrainOutcome {
  Checkpoint checkpoint;
  TrainingReport report;
};

// Fine-tune starting from `init`. Empty training data is the identity
// fine-tune: parameters pass through untouched (the 0%-data sweep point).
// Otherwise epochs run until validation accuracy fails to improve for
// `patience_epochs` epochs (ties do not count as improvement) or the
// max_epochs cap; the best-epoch parameters are restored.
inline TrainOutcome train(const Checkpoint& init,
                          const std::vector<ResponseRecord>& train_set,
                          const std::vector<ResponseRecord>& val_set,
                          const ClassifierConfig& config,
                          std::optional<LineageStep> step = std::nullopt) {
  validate_config(config);
  if (val_set.empty())
    fail(ErrorKind::EmptyValidation, "validation set must be nonempty");
  if (!config.backend_id.empty() && config.backend_id != init.backend_id)
    fail(ErrorKind::BackendMismatch,
         init.backend_id + " checkpoint, " + config.backend_id + " requested");

  auto started = std::chrono::steady_clock::now();
  TrainOutcome out;
  out.checkpoint = init;
  out.checkpoint.config = config;
  out.checkpoint.config.backend_id = init.backend_id;

  if (!step) {
    // Derive the lineage entry from the training data when uniform.
    std::string q;
    bool uniform = !train_set.empty();
    for (const auto& r : train_set) {
      if (q.empty()) q = r.question.id;
      else if (q != r.question.id) uniform = false;
    }
    if (uniform && !q.empty()) step = LineageStep{q, 1.0};
  }

  if (train_set.empty()) {
    out.report.stop_reason = StopReason::EmptyTrain;
    if (step) out.checkpoint.lineage.push_back(*step);
    out.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      started)
            .count();
    return out;
  }

  auto backend =
      BackendRegistry::instance().create(init.backend_id, out.checkpoint.config);
  backend->deserialize(init.params);
  backend->begin_training(config);

  const auto n = static_cast<long long>(train_set.size());
  const long long effective = effective_batched_count(n, config.batch_size);

  double best_val = -std::numeric_limits<double>::infinity();
  long best_epoch = 0;
  std::vector<std::uint8_t> best_params;
  long since_best = 0;
  StopReason reason = StopReason::MaxEpochs;

  for (long epoch = 1; epoch <= config.max_epochs; ++epoch) {
    backend->on_epoch_begin(epoch);
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(config.seed ^
                        (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch)));
    deterministic_shuffle(order, rng);

    double loss_sum = 0, acc_sum = 0;
    long long batches = 0;
    for (long long start = 0; start < effective; start += config.batch_size) {
      long long stop = std::min<long long>(start + config.batch_size, effective);
      std::vector<const ResponseRecord*> batch;
      for (long long i = start; i < stop; ++i)
        batch.push_back(&train_set[order[static_cast<std::size_t>(i)]]);
      BatchResult br = backend->train_batch(batch, config);
      loss_sum += br.loss;
      acc_sum += br.accuracy;
      ++batches;
    }

    double val_acc = prediction_accuracy(backend->predict(val_set), val_set);
    out.report.epochs.push_back(
        {batches ? loss_sum / static_cast<double>(batches) : 0.0,
         batches ? acc_sum / static_cast<double>(batches) : 0.0, val_acc});

    if (val_acc > best_val) {
      best_val = val_acc;
      best_epoch = epoch;
      best_params = backend->serialize();
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= config.patience_epochs) {
      reason = StopReason::PatienceExhausted;
      break;
    }
  }

  out.checkpoint.params = std::move(best_params);
  if (step) out.checkpoint.lineage.push_back(*step);
  out.report.best_epoch = best_epoch;
  out.report.stop_reason = reason;
  out.report.wall_seconds = std::chrono::duration<double>(
                                std::chrono::steady_clock::now() - started)
                                .count();
  return out;
}

inline PredictionSet predict(const Checkpoint& ckpt,
                             const std::vector<ResponseRecord>& records) {
  if (records.empty()) return {};
  auto backend =
      BackendRegistry::instance().create(ckpt.backend_id, ckpt.config);
  backend->deserialize(ckpt.params);
  return backend->predict(records);
}

inline MetricsReport evaluate(const Checkpoint& ckpt,
                              const std::vector<ResponseRecord>& records) {
  auto preds = predict(ckpt, records);
  std::vector<Label> truth;
  for (const auto& r : records) truth.push_back(r.label);
  return macro_metrics(confusion(truth, predicted_labels(preds)));
}

// ─── Checkpoint directory I/O ────────────────────────────────────────
// Layout: <dir>/manifest.json + <dir>/params.bin.

inline void save_checkpoint(const Checkpoint& ckpt,
                            const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  nlohmann::json manifest;
  manifest["backend_id"] = ckpt.backend_id;
  manifest["config"] = config_to_json(ckpt.config);
  nlohmann::json lineage = nlohmann::json::array();
  for (const auto& s : ckpt.lineage)
    lineage.push_back({{"question", s.question}, {"fraction", s.fraction}});
  manifest["lineage"] = lineage;
  manifest["param_file"] = "params.bin";
  manifest["param_hash"] =
      hex64(fnv1a64(ckpt.params.data(), ckpt.params.size()));
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  std::string blob(reinterpret_cast<const char*>(ckpt.params.data()),
                   ckpt.params.size());
  write_file(dir / "params.bin", blob);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorKind::CorruptCheckpoint, "bad manifest: " + std::string(e.what()));
  }
  Checkpoint ckpt;
  try {
    ckpt.backend_id = manifest.at("backend_id").get<std::string>();
    ckpt.config = config_from_json(manifest.at("config"));
    for (const auto& s : manifest.at("lineage"))
      ckpt.lineage.push_back({s.at("question").get<std::string>(),
                              s.at("fraction").get<double>()});
  } catch (const std::exception& e) {
    fail(ErrorKind::CorruptCheckpoint,
         "manifest fields: " + std::string(e.what()));
  }
  if (!BackendRegistry::instance().has(ckpt.backend_id))
    fail(ErrorKind::UnknownBackend, ckpt.backend_id);
  std::string blob = read_file(dir / "params.bin");
  ckpt.params.assign(blob.begin(), blob.end());
  auto expect = manifest.at("param_hash").get<std::string>();
  if (hex64(fnv1a64(ckpt.params.data(), ckpt.params.size())) != expect)
    fail(ErrorKind::CorruptCheckpoint, "parameter blob hash mismatch");
  return ckpt;
}

}  // namespace asag
