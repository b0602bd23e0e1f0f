#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tagcn/checkpoint.hpp"
#include "tagcn/graph.hpp"
#include "tagcn/layers.hpp"
#include "tagcn/random.hpp"
#include "tagcn/tam.hpp"

namespace tagcn {

struct LayerPlan {
  Index out_channels = 0;
  Index stride = 1;
  bool temporal = true;
  bool residual = true;
};

// Frame selection inserted after block `after_layer` (1-based); 0 disables.
struct TamPlan {
  int after_layer = 0;
  Index t_prime = 0;
};

struct ModelConfig {
  std::string arch = "tagcn";
  Index input_channels = 6;
  Index num_joints = 25;
  Index sequence_length = 300;
  Index num_classes = 60;
  std::vector<LayerPlan> plan;
  TamPlan tam;
  MaskMode mask_mode = MaskMode::add;
  double width_scale = 1.0;
};

// Temporal extent after a strided block (odd taps, symmetric padding).
inline Index strided_extent(Index t, Index stride) { return (t - 1) / stride + 1; }

// Frame count entering block `layer` (0-based; pass plan.size() for the
// final extent), accounting for the TAM cut and every temporal stride.
inline Index extent_before_layer(const ModelConfig& cfg, std::size_t layer) {
  Index t = cfg.sequence_length;
  for (std::size_t i = 0; i < layer; ++i) {
    if (cfg.plan[i].temporal) t = strided_extent(t, cfg.plan[i].stride);
    if (cfg.tam.after_layer == static_cast<int>(i) + 1) t = cfg.tam.t_prime;
  }
  return t;
}

inline void validate_config(const ModelConfig& cfg) {
  if (cfg.input_channels < 1 || cfg.num_joints < 1 || cfg.sequence_length < 1 ||
      cfg.num_classes < 1)
    fail(ErrorKind::validation, "model config: extents must be positive");
  if (cfg.plan.empty()) fail(ErrorKind::validation, "model config: empty layer plan");
  for (const auto& l : cfg.plan) {
    if (l.out_channels < 1) fail(ErrorKind::validation, "model config: non-positive layer width");
    if (l.stride < 1) fail(ErrorKind::validation, "model config: non-positive stride");
    if (!l.temporal && l.stride != 1)
      fail(ErrorKind::validation, "model config: spatial-only layer cannot stride");
    if (!l.temporal && l.residual)
      fail(ErrorKind::validation, "model config: residual requires the temporal stage");
  }
  if (cfg.tam.after_layer != 0) {
    if (cfg.tam.after_layer < 1 || cfg.tam.after_layer > static_cast<int>(cfg.plan.size()))
      fail(ErrorKind::validation, "model config: frame selection position out of range");
    const Index t_here =
        extent_before_layer(ModelConfig{cfg.arch, cfg.input_channels, cfg.num_joints,
                                        cfg.sequence_length, cfg.num_classes, cfg.plan,
                                        TamPlan{}, cfg.mask_mode, cfg.width_scale},
                            static_cast<std::size_t>(cfg.tam.after_layer));
    if (cfg.tam.t_prime < 1 || cfg.tam.t_prime > t_here)
      fail(ErrorKind::validation,
           "model config: t_prime " + std::to_string(cfg.tam.t_prime) + " outside 1.." +
               std::to_string(t_here) + " frames available at the selection point");
  }
  if (cfg.width_scale <= 0.0) fail(ErrorKind::validation, "model config: width_scale must be positive");
}

struct Network {
  ModelConfig config;  // resolved: plan filled, widths scaled
  SkeletonTopology topology;
  PartitionedAdjacency graph;
  std::array<Tensor, 3> a_hat;
  std::vector<STBlock<double>> blocks;
  bool has_tam = false;
  TemporalAttention<double> tam;
  Tensor head_weight, head_bias;
};

// One handle per learnable tensor. `decay` marks tensors subject to weight
// decay; batch-norm affine pairs and biases are exempt.
struct ParamRef {
  std::string name;
  Tensor tensor;
  bool decay = true;
};

inline std::vector<ParamRef> named_parameters(const Network& net) {
  std::vector<ParamRef> out;
  auto push = [&](const std::string& name, const Tensor& t, bool decay) {
    if (t.defined()) out.push_back({name, t, decay});
  };
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    const auto& b = net.blocks[i];
    const std::string base = "layers." + std::to_string(i) + ".";
    for (std::size_t p = 0; p < 3; ++p) {
      push(base + "spatial.weight." + std::to_string(p), b.spatial.weight[p], true);
      push(base + "spatial.mask." + std::to_string(p), b.spatial.mask[p], true);
    }
    push(base + "spatial.bias", b.spatial.bias, false);
    push(base + "norm1.gamma", b.bn1_gamma, false);
    push(base + "norm1.beta", b.bn1_beta, false);
    if (b.use_temporal) {
      push(base + "temporal.weight", b.temporal.weight, true);
      push(base + "temporal.bias", b.temporal.bias, false);
      push(base + "norm2.gamma", b.bn2_gamma, false);
      push(base + "norm2.beta", b.bn2_beta, false);
    }
    push(base + "residual.weight", b.residual_weight, true);
  }
  if (net.has_tam) push("tam.theta", net.tam.theta, true);
  push("head.weight", net.head_weight, true);
  push("head.bias", net.head_bias, false);
  return out;
}

inline std::int64_t parameter_count(const Network& net) {
  std::int64_t total = 0;
  for (const auto& p : named_parameters(net)) total += p.tensor.size();
  return total;
}

namespace detail {

inline Tensor kaiming_conv(Index c_out, Index c_in, Index k_t, Rng& rng) {
  Tensor w = Tensor::from_shape({c_out, c_in, k_t, 1});
  const double stddev = std::sqrt(2.0 / static_cast<double>(c_in * k_t));
  for (Index i = 0; i < w.size(); ++i) w.values()(i) = rng.normal(0.0, stddev);
  return w;
}

}  // namespace detail

// Assembles the blocks, selection module, and classifier head for a resolved
// config (plan already in place, widths already scaled).
inline Network build_network(const ModelConfig& cfg, const SkeletonTopology& topo, Rng& rng) {
  validate_config(cfg);
  if (topo.num_joints != cfg.num_joints)
    fail(ErrorKind::validation, "model config expects " + std::to_string(cfg.num_joints) +
                                    " joints, topology '" + topo.name + "' has " +
                                    std::to_string(topo.num_joints));
  Network net;
  net.config = cfg;
  net.topology = topo;
  net.graph = partition_adjacency(topo);
  net.a_hat = graph_tensors(net.graph);

  const Index n = cfg.num_joints;
  Index c_in = cfg.input_channels;
  for (const auto& plan : cfg.plan) {
    STBlock<double> b;
    b.spatial.mode = cfg.mask_mode;
    const Index c_out = plan.out_channels;
    for (std::size_t p = 0; p < 3; ++p) {
      b.spatial.weight[p] = detail::kaiming_conv(c_out, c_in, 1, rng);
      b.spatial.mask[p] = cfg.mask_mode == MaskMode::multiply ? Tensor::ones({n, n})
                                                              : Tensor::zeros({n, n});
    }
    b.spatial.bias = Tensor::zeros({c_out});
    b.bn1_gamma = Tensor::ones({c_out});
    b.bn1_beta = Tensor::zeros({c_out});
    b.bn1 = BatchNormState<double>(c_out);
    b.use_temporal = plan.temporal;
    b.use_residual = plan.residual;
    if (plan.temporal) {
      b.temporal.weight = detail::kaiming_conv(c_out, c_out, 9, rng);
      b.temporal.bias = Tensor::zeros({c_out});
      b.temporal.stride = plan.stride;
      b.bn2_gamma = Tensor::ones({c_out});
      b.bn2_beta = Tensor::zeros({c_out});
      b.bn2 = BatchNormState<double>(c_out);
    }
    if (plan.residual && (c_in != c_out || plan.stride != 1))
      b.residual_weight = detail::kaiming_conv(c_out, c_in, 1, rng);
    net.blocks.push_back(std::move(b));
    c_in = c_out;
  }

  if (cfg.tam.after_layer != 0) {
    net.has_tam = true;
    const Index t_here = extent_before_layer(
        ModelConfig{cfg.arch, cfg.input_channels, cfg.num_joints, cfg.sequence_length,
                    cfg.num_classes, cfg.plan, TamPlan{}, cfg.mask_mode, cfg.width_scale},
        static_cast<std::size_t>(cfg.tam.after_layer));
    net.tam = make_temporal_attention(t_here, cfg.tam.t_prime, rng);
  }

  net.head_weight = Tensor::from_shape({cfg.num_classes, c_in});
  const double stddev = std::sqrt(2.0 / static_cast<double>(c_in));
  for (Index i = 0; i < net.head_weight.size(); ++i)
    net.head_weight.values()(i) = rng.normal(0.0, stddev);
  net.head_bias = Tensor::zeros({cfg.num_classes});

  for (auto& p : named_parameters(net)) p.tensor.set_requires_grad(true);
  return net;
}

inline Index scaled_width(Index channels, double width_scale) {
  const auto scaled = static_cast<Index>(std::floor(static_cast<double>(channels) * width_scale));
  return std::max<Index>(1, scaled);
}

// The 6-layer network: two spatial-only widening stages, frame selection,
// then two stride-2 doubling stages each followed by a consolidation stage.
inline Network build_tagcn(ModelConfig cfg, const SkeletonTopology& topo, Rng& rng) {
  cfg.arch = "tagcn";
  cfg.plan.clear();
  auto w = [&](Index c) { return scaled_width(c, cfg.width_scale); };
  cfg.plan.push_back({w(64), 1, false, false});
  cfg.plan.push_back({w(64), 1, false, false});
  cfg.plan.push_back({w(128), 2, true, true});
  cfg.plan.push_back({w(128), 1, true, true});
  cfg.plan.push_back({w(256), 2, true, true});
  cfg.plan.push_back({w(256), 1, true, true});
  if (cfg.tam.after_layer == 0) {
    cfg.tam.after_layer = 2;
    if (cfg.tam.t_prime == 0) cfg.tam.t_prime = cfg.sequence_length / 2;
  }
  return build_network(cfg, topo, rng);
}

// Nine-block reference stack used for cost comparisons: multiplicative
// masks, residuals throughout, strides at the fifth and eighth blocks.
inline Network build_stgcn_baseline(ModelConfig cfg, const SkeletonTopology& topo, Rng& rng) {
  cfg.arch = "stgcn";
  cfg.mask_mode = MaskMode::multiply;
  cfg.tam = TamPlan{};
  cfg.plan.clear();
  auto w = [&](Index c) { return scaled_width(c, cfg.width_scale); };
  const Index widths[9] = {64, 64, 64, 64, 128, 128, 128, 256, 256};
  for (int i = 0; i < 9; ++i)
    cfg.plan.push_back({w(widths[i]), (i == 4 || i == 7) ? Index{2} : Index{1}, true, true});
  return build_network(cfg, topo, rng);
}

// Logits for one (C, T, N) sample. Pass `attn_out` to capture the selection
// the forward made.
inline Tensor network_forward(Network& net, const Tensor& x, BatchNormMode mode,
                              AttentionResult<double>* attn_out = nullptr) {
  if (x.rank() != 3 || x.extent(0) != net.config.input_channels ||
      x.extent(1) != net.config.sequence_length || x.extent(2) != net.config.num_joints)
    fail(ErrorKind::shape,
         "network_forward: expected input (" + std::to_string(net.config.input_channels) + "," +
             std::to_string(net.config.sequence_length) + "," +
             std::to_string(net.config.num_joints) + "), got " + shape_str(x.shape()));
  Tensor h = x;
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    h = block_forward(h, net.blocks[i], net.a_hat, mode);
    if (net.has_tam && net.config.tam.after_layer == static_cast<int>(i) + 1) {
      AttentionResult<double> res = tam_forward(h, net.tam);
      h = res.selected_frames;
      if (attn_out) *attn_out = std::move(res);
    }
  }
  return linear(global_avg_pool(h), net.head_weight, net.head_bias);
}

struct Prediction {
  Index label = 0;
  std::vector<double> scores;
};

// Argmax with ties to the smaller class, plus the softmax distribution.
inline Prediction predict(const Tensor& logits) {
  Prediction p;
  p.scores = softmax_values(logits);
  for (std::size_t k = 1; k < p.scores.size(); ++k)
    if (p.scores[k] > p.scores[static_cast<std::size_t>(p.label)])
      p.label = static_cast<Index>(k);
  return p;
}

// Sum of per-stream score vectors, argmax with ties to the smaller class.
inline Prediction ensemble(const std::vector<std::vector<double>>& score_sets) {
  if (score_sets.empty()) fail(ErrorKind::validation, "ensemble: no score sets");
  Prediction p;
  p.scores = score_sets[0];
  for (std::size_t s = 1; s < score_sets.size(); ++s) {
    if (score_sets[s].size() != p.scores.size())
      fail(ErrorKind::shape, "ensemble: score sets disagree on class count");
    for (std::size_t k = 0; k < p.scores.size(); ++k) p.scores[k] += score_sets[s][k];
  }
  for (std::size_t k = 1; k < p.scores.size(); ++k)
    if (p.scores[k] > p.scores[static_cast<std::size_t>(p.label)])
      p.label = static_cast<Index>(k);
  return p;
}

// ---- persistence ------------------------------------------------------------

inline Checkpoint network_state(const Network& net) {
  Checkpoint ck;
  for (const auto& p : named_parameters(net)) ck.put_tensor(p.name, p.tensor);
  auto put_running = [&](const std::string& base, const BatchNormState<double>& bn) {
    Checkpoint::Entry mean, var;
    mean.shape = {bn.running_mean.size()};
    mean.data.assign(bn.running_mean.data(), bn.running_mean.data() + bn.running_mean.size());
    var.shape = {bn.running_var.size()};
    var.data.assign(bn.running_var.data(), bn.running_var.data() + bn.running_var.size());
    ck.entries[base + ".running_mean"] = std::move(mean);
    ck.entries[base + ".running_var"] = std::move(var);
  };
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    const std::string base = "layers." + std::to_string(i);
    put_running(base + ".norm1", net.blocks[i].bn1);
    if (net.blocks[i].use_temporal) put_running(base + ".norm2", net.blocks[i].bn2);
  }
  return ck;
}

inline void load_network_state(Network& net, const Checkpoint& ck) {
  for (auto& p : named_parameters(net)) {
    const auto& e = ck.get(p.name);
    if (e.shape != p.tensor.shape())
      fail(ErrorKind::shape, "checkpoint entry '" + p.name + "' has shape " + shape_str(e.shape) +
                                 ", model wants " + shape_str(p.tensor.shape()));
    for (Index i = 0; i < p.tensor.size(); ++i)
      p.tensor.values()(i) = e.data[static_cast<std::size_t>(i)];
  }
  auto get_running = [&](const std::string& base, BatchNormState<double>& bn) {
    const auto& mean = ck.get(base + ".running_mean");
    const auto& var = ck.get(base + ".running_var");
    if (static_cast<Index>(mean.data.size()) != bn.running_mean.size() ||
        static_cast<Index>(var.data.size()) != bn.running_var.size())
      fail(ErrorKind::shape, "checkpoint entry '" + base + "' running stats size mismatch");
    for (Index i = 0; i < bn.running_mean.size(); ++i) {
      bn.running_mean(i) = mean.data[static_cast<std::size_t>(i)];
      bn.running_var(i) = var.data[static_cast<std::size_t>(i)];
    }
  };
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    const std::string base = "layers." + std::to_string(i);
    get_running(base + ".norm1", net.blocks[i].bn1);
    if (net.blocks[i].use_temporal) get_running(base + ".norm2", net.blocks[i].bn2);
  }
}

inline void save_network(const Network& net, const std::string& path) {
  save_checkpoint(network_state(net), path);
}

inline void load_network(Network& net, const std::string& path) {
  load_network_state(net, load_checkpoint(path));
}

}  // namespace tagcn
