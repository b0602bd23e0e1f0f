#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tagcn/model.hpp"
#include "tagcn/streams.hpp"

namespace tagcn {

// Piecewise-constant rate: `initial`, divided by `decay_factor` at each
// boundary epoch.
struct LrSchedule {
  double initial = 0.1;
  std::vector<int> boundaries;
  double decay_factor = 10.0;
  int total_epochs = 50;
};

inline void validate_schedule(const LrSchedule& s) {
  if (s.initial <= 0.0) fail(ErrorKind::validation, "schedule: initial rate must be positive");
  if (s.decay_factor <= 0.0) fail(ErrorKind::validation, "schedule: decay factor must be positive");
  if (s.total_epochs < 1) fail(ErrorKind::validation, "schedule: total epochs must be positive");
  for (std::size_t i = 0; i < s.boundaries.size(); ++i) {
    if (s.boundaries[i] < 1 || s.boundaries[i] >= s.total_epochs)
      fail(ErrorKind::validation, "schedule: boundary " + std::to_string(s.boundaries[i]) +
                                      " outside 1.." + std::to_string(s.total_epochs - 1));
    if (i > 0 && s.boundaries[i] <= s.boundaries[i - 1])
      fail(ErrorKind::validation, "schedule: boundaries must be strictly increasing");
  }
}

inline double lr_at(const LrSchedule& s, int epoch) {
  validate_schedule(s);
  if (epoch < 0 || epoch >= s.total_epochs)
    fail(ErrorKind::validation, "schedule: epoch " + std::to_string(epoch) + " outside 0.." +
                                    std::to_string(s.total_epochs - 1));
  double rate = s.initial;
  for (int b : s.boundaries)
    if (epoch >= b) rate /= s.decay_factor;
  return rate;
}

struct TrainConfig {
  LrSchedule schedule;
  double weight_decay = 1e-4;
  double momentum = 0.9;
  int batch_size = 8;
  std::uint64_t seed = 1;
  std::string precision = "f64";
};

// Large-dataset presets; desk-scale runs shrink the schedule and batch.
inline TrainConfig ntu_preset() {
  TrainConfig cfg;
  cfg.schedule = {0.1, {30, 40}, 10.0, 50};
  cfg.batch_size = 32;
  return cfg;
}

inline TrainConfig kinetics_preset() {
  TrainConfig cfg;
  cfg.schedule = {0.1, {45, 55}, 10.0, 65};
  cfg.batch_size = 128;
  return cfg;
}

inline void validate_train_config(const TrainConfig& cfg) {
  validate_schedule(cfg.schedule);
  if (cfg.batch_size < 1) fail(ErrorKind::validation, "train config: batch size must be positive");
  if (cfg.weight_decay < 0.0) fail(ErrorKind::validation, "train config: negative weight decay");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
    fail(ErrorKind::validation, "train config: momentum outside [0, 1)");
  if (cfg.precision != "f64")
    fail(ErrorKind::validation,
         "train config: precision '" + cfg.precision + "' unsupported, training runs in f64");
}

// Heavy-ball buffers, one per parameter, allocated on the first step.
struct SgdState {
  std::vector<Tensor> velocity;
};

// velocity = momentum*velocity + grad + weight_decay*param; param -= lr*velocity.
// Decay-exempt parameters (biases, norm affine pairs) skip the decay term.
// Gradients are read from the tensors themselves and are expected to already
// be averaged over the batch.
inline void sgd_step(const std::vector<ParamRef>& params, SgdState& state, double lr,
                     double momentum, double weight_decay) {
  if (state.velocity.empty()) {
    state.velocity.reserve(params.size());
    for (const auto& p : params) state.velocity.push_back(Tensor::zeros(p.tensor.shape()));
  }
  if (state.velocity.size() != params.size())
    fail(ErrorKind::shape, "sgd_step: " + std::to_string(state.velocity.size()) +
                               " velocity buffers for " + std::to_string(params.size()) +
                               " parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    Tensor& v = state.velocity[i];
    if (v.shape() != t.shape())
      fail(ErrorKind::shape, "sgd_step: parameter '" + params[i].name + "' is " +
                                 shape_str(t.shape()) + ", velocity buffer is " +
                                 shape_str(v.shape()));
    const double wd = params[i].decay ? weight_decay : 0.0;
    v.values() = momentum * v.values() + t.grad() + wd * t.values();
    t.values() -= lr * v.values();
  }
}

// True when `label` ranks among the k largest scores, ties broken toward the
// smaller index (a tied later class does not displace an earlier one).
inline bool top_k_hit(const std::vector<double>& scores, Index label, int k) {
  if (label < 0 || label >= static_cast<Index>(scores.size()))
    fail(ErrorKind::validation, "top_k_hit: label " + std::to_string(label) + " outside [0," +
                                    std::to_string(scores.size()) + ")");
  int ahead = 0;
  const double own = scores[static_cast<std::size_t>(label)];
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (static_cast<Index>(i) == label) continue;
    const double s = scores[i];
    if (s > own || (s == own && static_cast<Index>(i) < label)) ++ahead;
  }
  return ahead < k;
}

struct EvalResult {
  double top1 = 0.0;
  double top5 = 0.0;
  double mean_loss = 0.0;
  Index count = 0;
};

// Inference normalizes with each sample's own statistics (train_no_update):
// the network only ever sees per-sample normalization during training, so
// running averages are a poor stand-in at batch size one. They are still
// maintained and checkpointed for the eval-mode forward path.
inline EvalResult evaluate(Network& net, const std::vector<SkeletonSequence>& samples) {
  if (samples.empty()) fail(ErrorKind::validation, "evaluate: no samples");
  EvalResult r;
  r.count = static_cast<Index>(samples.size());
  Index hits1 = 0, hits5 = 0;
  for (const auto& s : samples) {
    if (s.label < 0) fail(ErrorKind::validation, "evaluate: unlabeled sample");
    Tensor logits = network_forward(net, s.data, BatchNormMode::train_no_update);
    std::vector<double> scores(logits.values().data(), logits.values().data() + logits.size());
    if (top_k_hit(scores, s.label, 1)) ++hits1;
    if (top_k_hit(scores, s.label, 5)) ++hits5;
    r.mean_loss += cross_entropy(logits, s.label).item();
  }
  r.top1 = static_cast<double>(hits1) / static_cast<double>(r.count);
  r.top5 = static_cast<double>(hits5) / static_cast<double>(r.count);
  r.mean_loss /= static_cast<double>(r.count);
  return r;
}

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_val_acc = 0.0;
  Checkpoint best_state;
  std::string log_text;
};

namespace detail {

inline std::string format_epoch(const EpochStats& st, bool has_val) {
  std::ostringstream os;
  os << std::setprecision(17) << "epoch " << st.epoch << " lr " << st.lr << " loss "
     << st.train_loss << " acc " << st.train_acc;
  if (has_val) os << " val_loss " << st.val_loss << " val_acc " << st.val_acc;
  return os.str();
}

}  // namespace detail

// Accuracy thresholds that end a run early; the defaults never trigger.
struct StopRule {
  double train_acc = 2.0;
  double val_acc = 2.0;
};

// Runs the schedule: seeded shuffle each epoch, per-sample backward with
// gradients averaged over the batch, one optimizer step per batch. Keeps the
// checkpoint of the best validation epoch (best train epoch when there is no
// validation split).

inline TrainResult train(Network& net, const Dataset& data, const TrainConfig& cfg,
                         std::ostream* live = nullptr, StopRule stop = {}) {
  validate_train_config(cfg);
  if (data.train.empty()) fail(ErrorKind::validation, "train: empty training split");
  const bool has_val = !data.val.empty();

  auto params = named_parameters(net);
  SgdState opt;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  std::ostringstream log;
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.schedule.total_epochs; ++epoch) {
    const double lr = lr_at(cfg.schedule, epoch);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);

    double loss_sum = 0.0;
    Index hits = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop_at = std::min(order.size(), start + batch);
      for (auto& p : params) {
        Tensor t = p.tensor;
        t.zero_grad();
      }
      for (std::size_t k = start; k < stop_at; ++k) {
        const auto& s = data.train[order[k]];
        if (s.label < 0) fail(ErrorKind::validation, "train: unlabeled sample");
        Tensor logits = network_forward(net, s.data, BatchNormMode::train);
        Tensor loss = cross_entropy(logits, s.label);
        const double lv = loss.item();
        if (!std::isfinite(lv))
          fail(ErrorKind::numeric, "train: non-finite loss at epoch " + std::to_string(epoch) +
                                       ", sample " + std::to_string(order[k]) + " (label " +
                                       std::to_string(s.label) + ")");
        loss_sum += lv;
        std::vector<double> scores(logits.values().data(),
                                   logits.values().data() + logits.size());
        if (top_k_hit(scores, s.label, 1)) ++hits;
        backward(loss);
      }
      const double inv = 1.0 / static_cast<double>(stop_at - start);
      for (auto& p : params) {
        auto& g = p.tensor.node()->grad;
        if (g.size() != 0) g *= inv;
      }
      sgd_step(params, opt, lr, cfg.momentum, cfg.weight_decay);
    }

    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    st.train_loss = loss_sum / static_cast<double>(order.size());
    st.train_acc = static_cast<double>(hits) / static_cast<double>(order.size());
    if (has_val) {
      EvalResult ev = evaluate(net, data.val);
      st.val_loss = ev.mean_loss;
      st.val_acc = ev.top1;
      if (result.best_epoch < 0 || ev.top1 > result.best_val_acc) {
        result.best_val_acc = ev.top1;
        result.best_epoch = epoch;
        result.best_state = network_state(net);
      }
    } else if (result.best_epoch < 0 || st.train_acc > result.best_val_acc) {
      result.best_val_acc = st.train_acc;
      result.best_epoch = epoch;
      result.best_state = network_state(net);
    }
    result.epochs.push_back(st);
    const std::string line = detail::format_epoch(st, has_val);
    log << line << "\n";
    if (live) *live << line << "\n";

    if (st.train_acc >= stop.train_acc && (!has_val || st.val_acc >= stop.val_acc)) break;
  }
  result.log_text = log.str();
  return result;
}

}  // namespace tagcn
