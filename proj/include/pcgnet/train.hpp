#pragma once

// Training loop: inverse-frequency class weighting, Adam, stepped learning-rate
// decay, and early stopping with best-weight restore.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "pcgnet/autodiff.hpp"
#include "pcgnet/common.hpp"
#include "pcgnet/model.hpp"

namespace pcgnet::train {

using ad::TensorPtr;

// w_k = N / (K * n_k): rarer classes weigh more; a balanced set yields all 1s.
inline std::vector<double> class_weights(const std::vector<int>& labels, int num_classes) {
  if (labels.empty()) throw EmptyDataset("cannot derive class weights from an empty label set");
  if (num_classes < 2) throw ConfigInvalid("need at least two classes");
  std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw UnknownLabel("label index " + std::to_string(y) + " out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  std::vector<double> w(static_cast<std::size_t>(num_classes));
  const double n = static_cast<double>(labels.size());
  for (int k = 0; k < num_classes; ++k) {
    if (counts[static_cast<std::size_t>(k)] == 0)
      throw MissingClass("class " + std::to_string(k) + " has no samples");
    w[static_cast<std::size_t>(k)] = n / (num_classes * static_cast<double>(counts[static_cast<std::size_t>(k)]));
  }
  return w;
}

// --- Adam ---------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers per parameter tensor, plus the shared step count.
struct AdamState {
  explicit AdamState(const std::vector<model::Param>& params) {
    for (const auto& p : params) {
      m.emplace_back(p.tensor->data.size(), 0.0);
      v.emplace_back(p.tensor->data.size(), 0.0);
    }
  }
  std::vector<std::vector<double>> m, v;
  std::int64_t t = 0;
};

inline void adam_step(std::vector<model::Param>& params, AdamState& state, const AdamConfig& cfg,
                      double lr) {
  if (params.size() != state.m.size()) throw ShapeMismatch("optimizer state does not match parameters");
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& tensor = *params[i].tensor;
    if (tensor.grad.size() != tensor.data.size()) continue;  // no gradient reached this tensor
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < tensor.data.size(); ++j) {
      const double g = tensor.grad[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      tensor.data[j] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// --- schedule / stopping --------------------------------------------------------

struct LrSchedule {
  double base_lr = 1e-3;
  int step_epochs = 10;   // halve every this many epochs
  double decay = 0.5;
};

inline double lr_at(const LrSchedule& s, int epoch) {
  if (epoch < 0) throw ConfigInvalid("epoch must be non-negative");
  if (s.step_epochs < 1) throw ConfigInvalid("lr step must be >= 1");
  return s.base_lr * std::pow(s.decay, static_cast<double>(epoch / s.step_epochs));
}

struct EarlyStopping {
  int patience = 10;
  double min_delta = 0.0;

  double best = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int since_best = 0;

  // Returns true when the new validation loss is an improvement.
  bool update(int epoch, double val_loss) {
    if (val_loss < best - min_delta) {
      best = val_loss;
      best_epoch = epoch;
      since_best = 0;
      return true;
    }
    ++since_best;
    return false;
  }
  bool should_stop() const { return since_best >= patience; }
};

// --- fit -------------------------------------------------------------------------

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct History {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_val_loss = std::numeric_limits<double>::infinity();
  bool early_stopped = false;
  // Weights as of the last completed epoch, captured before the best-epoch
  // restore so callers can persist both states.
  std::vector<std::vector<double>> final_weights;
};

struct FitConfig {
  int batch_size = 32;
  int max_epochs = 100;
  int patience = 10;
  LrSchedule schedule;
  AdamConfig adam;
  std::uint64_t shuffle_seed = 1;
  bool use_class_weights = true;
  // Called after every epoch; return false to abort (used by external monitors).
  std::function<bool(const EpochStats&)> on_epoch;
};

// Dense training set: signals as [C,L] rows, labels as class indices.
struct TrainSet {
  std::vector<std::vector<double>> inputs;  // each of length channels*length
  std::vector<int> labels;
  int channels = 1;
  int length = 0;
};

namespace detail_train {

inline TensorPtr batch_inputs(const TrainSet& set, const std::vector<std::size_t>& idx, std::size_t lo,
                              std::size_t hi) {
  const int B = static_cast<int>(hi - lo);
  auto x = ad::make_tensor({B, set.channels, set.length});
  const std::size_t row = static_cast<std::size_t>(set.channels) * set.length;
  for (std::size_t b = 0; b < static_cast<std::size_t>(B); ++b)
    std::copy(set.inputs[idx[lo + b]].begin(), set.inputs[idx[lo + b]].end(), x->data.begin() + b * row);
  return x;
}

inline TensorPtr batch_targets(const TrainSet& set, const std::vector<std::size_t>& idx, std::size_t lo,
                               std::size_t hi, int num_classes) {
  const int B = static_cast<int>(hi - lo);
  auto t = ad::make_tensor({B, num_classes});
  for (std::size_t b = 0; b < static_cast<std::size_t>(B); ++b)
    t->data[b * num_classes + static_cast<std::size_t>(set.labels[idx[lo + b]])] = 1.0;
  return t;
}

}  // namespace detail_train

// Weighted cross-entropy over one already-built batch (shared by the training
// and validation passes).
inline TensorPtr batch_loss(ad::Tape* tape, model::Network& net, const TensorPtr& x,
                            const TensorPtr& targets, const std::vector<double>& weights,
                            ad::Mode mode) {
  TensorPtr probs = model::forward(tape, net, x, mode);
  return ad::weighted_cce(tape, probs, targets, weights);
}

// Trains in place. Validation loss drives the schedule-independent early
// stopping; on exit the network holds the best-epoch weights.
inline History fit(model::Network& net, const TrainSet& train_set, const TrainSet& val_set,
                   const FitConfig& cfg) {
  if (train_set.inputs.empty() || val_set.inputs.empty())
    throw EmptyDataset("fit requires non-empty train and validation sets");
  if (train_set.inputs.size() != train_set.labels.size() ||
      val_set.inputs.size() != val_set.labels.size())
    throw LengthMismatch("inputs and labels must align");
  if (cfg.batch_size < 1 || cfg.max_epochs < 1) throw ConfigInvalid("batch size and epochs must be >= 1");

  const int K = net.config.num_classes;
  std::vector<double> weights(static_cast<std::size_t>(K), 1.0);
  if (cfg.use_class_weights) weights = class_weights(train_set.labels, K);

  auto params = model::trainable_parameters(net);
  AdamState adam(params);
  EarlyStopping stopper{cfg.patience};
  History history;

  std::vector<std::size_t> order(train_set.inputs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> val_order(val_set.inputs.size());
  std::iota(val_order.begin(), val_order.end(), 0);
  std::mt19937_64 rng(cfg.shuffle_seed);

  std::vector<std::vector<double>> best_snapshot = model::snapshot_weights(net);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = lr_at(cfg.schedule, epoch);
    std::shuffle(order.begin(), order.end(), rng);

    double train_loss_sum = 0.0;
    std::size_t train_batches = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(cfg.batch_size));
      auto x = detail_train::batch_inputs(train_set, order, lo, hi);
      auto t = detail_train::batch_targets(train_set, order, lo, hi, K);
      ad::Tape tape;
      TensorPtr loss = batch_loss(&tape, net, x, t, weights, ad::Mode::TRAIN);
      for (auto& p : params) {
        p.tensor->ensure_grad();
        p.tensor->zero_grad();
      }
      tape.backward(loss);
      adam_step(params, adam, cfg.adam, lr);
      train_loss_sum += loss->data[0];
      ++train_batches;
    }

    // validation pass: EVAL mode, no tape
    double val_loss_sum = 0.0;
    std::size_t val_batches = 0, correct = 0;
    for (std::size_t lo = 0; lo < val_order.size(); lo += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t hi = std::min(val_order.size(), lo + static_cast<std::size_t>(cfg.batch_size));
      auto x = detail_train::batch_inputs(val_set, val_order, lo, hi);
      auto t = detail_train::batch_targets(val_set, val_order, lo, hi, K);
      TensorPtr probs = model::forward(nullptr, net, x, ad::Mode::EVAL);
      TensorPtr loss = ad::weighted_cce(nullptr, probs, t, weights);
      val_loss_sum += loss->data[0];
      ++val_batches;
      const int B = probs->shape[0];
      for (int b = 0; b < B; ++b) {
        const double* row = probs->data.data() + static_cast<std::size_t>(b) * K;
        int arg = 0;
        for (int k = 1; k < K; ++k)
          if (row[k] > row[arg]) arg = k;
        if (arg == val_set.labels[val_order[lo + static_cast<std::size_t>(b)]]) ++correct;
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_loss = train_loss_sum / static_cast<double>(train_batches);
    stats.val_loss = val_loss_sum / static_cast<double>(val_batches);
    stats.val_accuracy = static_cast<double>(correct) / static_cast<double>(val_set.inputs.size());
    history.epochs.push_back(stats);

    if (stopper.update(epoch, stats.val_loss)) best_snapshot = model::snapshot_weights(net);
    if (cfg.on_epoch && !cfg.on_epoch(stats)) break;
    if (stopper.should_stop()) {
      history.early_stopped = true;
      break;
    }
  }

  history.best_epoch = stopper.best_epoch;
  history.best_val_loss = stopper.best;
  history.final_weights = model::snapshot_weights(net);
  model::restore_weights(net, best_snapshot);
  return history;
}

}  // namespace pcgnet::train
