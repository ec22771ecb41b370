#pragma once
#ifndef FAIREQUITY_FL_ENGINE_HPP
#define FAIREQUITY_FL_ENGINE_HPP

// Minimal FedAvg: per-sample cross-entropy, local mini-batch SGD and the
// unweighted delta-averaging server step. Models plug in through the
// `Model` concept; SoftmaxRegression is the default.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fairequity/data_fabric.hpp"
#include "fairequity/error.hpp"
#include "fairequity/random.hpp"

namespace fairequity {

struct ModelParams {
  std::vector<double> w;

  std::size_t dimension() const { return w.size(); }
  bool all_finite() const {
    return std::all_of(w.begin(), w.end(), [](double v) { return std::isfinite(v); });
  }
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

template <typename M>
concept Model = requires(const M& m, const ModelParams& p, std::span<const double> x, Label y, double scale,
                         std::span<double> grad) {
  { m.dimension() } -> std::convertible_to<std::size_t>;
  { m.num_classes() } -> std::convertible_to<std::uint32_t>;
  { m.num_features() } -> std::convertible_to<std::uint32_t>;
  { m.loss(p, x, y) } -> std::convertible_to<double>;
  { m.add_gradient(p, x, y, scale, grad) };  // grad += scale * d loss / d w
  { m.predict(p, x) } -> std::convertible_to<Label>;
};

/// Multinomial logistic regression. Parameter layout: class-major weight
/// rows (num_classes x num_features) followed by one bias per class.
class SoftmaxRegression {
 public:
  SoftmaxRegression(std::uint32_t num_classes, std::uint32_t num_features)
      : classes_(num_classes), features_(num_features) {
    if (num_classes < 2 || num_features < 1) throw Error("fl_engine", "model needs >= 2 classes and >= 1 feature");
  }

  std::size_t dimension() const { return std::size_t{classes_} * (features_ + 1); }
  std::uint32_t num_classes() const { return classes_; }
  std::uint32_t num_features() const { return features_; }

  ModelParams zeros() const { return ModelParams{std::vector<double>(dimension(), 0.0)}; }

  double loss(const ModelParams& p, std::span<const double> x, Label y) const {
    check(p, x, y);
    scores(p, x);
    const double top = *std::max_element(scratch_.begin(), scratch_.end());
    double sum = 0.0;
    for (double s : scratch_) sum += std::exp(s - top);
    return std::log(sum) + top - scratch_[y];
  }

  void add_gradient(const ModelParams& p, std::span<const double> x, Label y, double scale,
                    std::span<double> grad) const {
    check(p, x, y);
    if (grad.size() != dimension()) throw Error("fl_engine", "gradient buffer has wrong dimension");
    probabilities(p, x);
    const std::size_t bias = std::size_t{classes_} * features_;
    for (std::uint32_t c = 0; c < classes_; ++c) {
      const double residual = scale * (scratch_[c] - (c == y ? 1.0 : 0.0));
      double* row = grad.data() + std::size_t{c} * features_;
      for (std::uint32_t j = 0; j < features_; ++j) row[j] += residual * x[j];
      grad[bias + c] += residual;
    }
  }

  /// Argmax of the scores; ties go to the lowest class index.
  Label predict(const ModelParams& p, std::span<const double> x) const {
    check_shape(p, x);
    scores(p, x);
    return static_cast<Label>(std::max_element(scratch_.begin(), scratch_.end()) - scratch_.begin());
  }

 private:
  void check_shape(const ModelParams& p, std::span<const double> x) const {
    if (p.dimension() != dimension()) throw Error("fl_engine", "parameter vector has wrong dimension");
    if (x.size() != features_)
      throw Error("fl_engine", "feature vector has " + std::to_string(x.size()) + " entries, model expects " +
                                   std::to_string(features_));
  }
  void check(const ModelParams& p, std::span<const double> x, Label y) const {
    check_shape(p, x);
    if (y >= classes_) throw Error("fl_engine", "label " + std::to_string(y) + " out of range");
  }

  void scores(const ModelParams& p, std::span<const double> x) const {
    scratch_.assign(classes_, 0.0);
    const std::size_t bias = std::size_t{classes_} * features_;
    for (std::uint32_t c = 0; c < classes_; ++c) {
      const double* row = p.w.data() + std::size_t{c} * features_;
      double s = p.w[bias + c];
      for (std::uint32_t j = 0; j < features_; ++j) s += row[j] * x[j];
      scratch_[c] = s;
    }
  }

  void probabilities(const ModelParams& p, std::span<const double> x) const {
    scores(p, x);
    const double top = *std::max_element(scratch_.begin(), scratch_.end());
    double sum = 0.0;
    for (double& s : scratch_) sum += (s = std::exp(s - top));
    for (double& s : scratch_) s /= sum;
  }

  std::uint32_t classes_;
  std::uint32_t features_;
  // Per-instance scratch; a model object must not be shared across threads.
  mutable std::vector<double> scratch_;
};

static_assert(Model<SoftmaxRegression>);

struct TrainConfig {
  std::uint32_t local_epochs = 1;
  std::uint32_t batch_size = 10;
  double local_lr = 0.1;
  double global_lr = 1.0;        // alpha_q at q = 0
  double global_lr_decay = 0.0;  // alpha_q = global_lr / (1 + decay * q)
  bool weighted_aggregation = false;
  double poison_scale = 5.0;     // update_negate: delta <- -poison_scale * delta
  std::uint64_t seed = 1;

  double global_lr_at(std::uint32_t q) const { return global_lr / (1.0 + global_lr_decay * q); }

  void validate() const {
    auto fail = [](const std::string& msg) { throw Error("fl_engine", "invalid TrainConfig: " + msg); };
    if (local_epochs < 1) fail("local_epochs must be >= 1");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (!(local_lr >= 0.0)) fail("local_lr must be >= 0");
    if (!(global_lr > 0.0)) fail("global_lr must be > 0");
    if (!(global_lr_decay >= 0.0)) fail("global_lr_decay must be >= 0");
    if (!(poison_scale >= 0.0)) fail("poison_scale must be >= 0");
  }
};

struct LocalUpdate {
  ClientId client_id = 0;
  std::vector<double> delta;  // local minus received global parameters
  std::size_t sample_count = 0;
  double local_loss = 0.0;
};

template <Model M>
double sample_loss(const M& model, const ModelParams& p, std::span<const double> x, Label y) {
  return model.loss(p, x, y);
}

template <Model M>
std::vector<double> sample_gradient(const M& model, const ModelParams& p, std::span<const double> x, Label y) {
  std::vector<double> g(model.dimension(), 0.0);
  model.add_gradient(p, x, y, 1.0, g);
  return g;
}

/// Mean sample loss over one client's data.
template <Model M>
double local_loss(const M& model, const ModelParams& p, std::span<const Sample> data) {
  if (data.empty()) throw Error("fl_engine", "local_loss of an empty dataset");
  double sum = 0.0;
  for (const auto& s : data) sum += model.loss(p, s.x, s.label);
  return sum / static_cast<double>(data.size());
}

/// Pooled mean over every sample held by every client.
template <Model M>
double global_loss(const M& model, const ModelParams& p, std::span<const ClientDataset> clients) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& c : clients) {
    for (const auto& s : c.samples) sum += model.loss(p, s.x, s.label);
    count += c.samples.size();
  }
  if (count == 0) throw Error("fl_engine", "global_loss with no samples");
  return sum / static_cast<double>(count);
}

/// Local SGD from the received global parameters. Batches are reshuffled
/// every epoch from `seed`; a trailing partial batch is kept.
template <Model M>
LocalUpdate local_train(const M& model, const ModelParams& global, const ClientDataset& data, const TrainConfig& cfg,
                        std::uint64_t seed) {
  cfg.validate();
  if (data.samples.empty())
    throw Error("fl_engine", "client " + std::to_string(data.client_id) + " has no samples to train on");

  ModelParams local = global;
  std::vector<double> grad(model.dimension());
  std::vector<std::size_t> order(data.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);

  for (std::uint32_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = data.samples[order[i]];
        model.add_gradient(local, s.x, s.label, scale, grad);
      }
      for (std::size_t k = 0; k < grad.size(); ++k) local.w[k] -= cfg.local_lr * grad[k];
    }
    if (!local.all_finite())
      throw Error("fl_engine", "local training diverged for client " + std::to_string(data.client_id));
  }

  LocalUpdate update;
  update.client_id = data.client_id;
  update.sample_count = data.samples.size();
  update.local_loss = local_loss(model, local, data.samples);
  update.delta.resize(local.w.size());
  for (std::size_t k = 0; k < local.w.size(); ++k) update.delta[k] = local.w[k] - global.w[k];
  if (data.poison_mode == PoisonMode::update_negate)
    for (double& d : update.delta) d *= -cfg.poison_scale;
  return update;
}

/// w <- w + alpha * mean(delta). With `weighted`, the mean is weighted by
/// sample counts instead.
inline ModelParams aggregate(const ModelParams& global, std::span<const LocalUpdate> updates, double alpha,
                             bool weighted = false) {
  if (updates.empty()) throw Error("fl_engine", "aggregate called with no updates");
  double total_weight = 0.0;
  for (const auto& u : updates) {
    if (u.delta.size() != global.dimension())
      throw Error("fl_engine", "update from client " + std::to_string(u.client_id) + " has wrong dimension");
    total_weight += weighted ? static_cast<double>(u.sample_count) : 1.0;
  }
  if (!(total_weight > 0.0)) throw Error("fl_engine", "aggregate with zero total weight");

  ModelParams next = global;
  for (std::size_t k = 0; k < next.w.size(); ++k) {
    double sum = 0.0;
    for (const auto& u : updates) sum += (weighted ? static_cast<double>(u.sample_count) : 1.0) * u.delta[k];
    next.w[k] += alpha * (sum / total_weight);
  }
  return next;
}

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

template <Model M>
Evaluation evaluate(const M& model, const ModelParams& p, std::span<const Sample> test) {
  if (test.empty()) throw Error("fl_engine", "evaluate on an empty test set");
  std::size_t correct = 0;
  double loss = 0.0;
  for (const auto& s : test) {
    correct += model.predict(p, s.x) == s.label;
    loss += model.loss(p, s.x, s.label);
  }
  const auto n = static_cast<double>(test.size());
  return {static_cast<double>(correct) / n, loss / n};
}

}  // namespace fairequity

#endif  // FAIREQUITY_FL_ENGINE_HPP
