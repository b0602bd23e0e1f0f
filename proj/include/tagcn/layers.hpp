#pragma once

#include <array>

#include "tagcn/graph.hpp"
#include "tagcn/ops.hpp"

namespace tagcn {

// How the learnable joint-interaction masks combine with the normalized
// partition matrices during spatial aggregation.
enum class MaskMode { multiply, add };

inline const char* mask_mode_name(MaskMode m) {
  return m == MaskMode::multiply ? "multiply" : "add";
}

// The three normalized partition matrices lifted into constant tensors, in
// the layout spatial aggregation wants: column j of entry (i, j) scatters
// from neighbor j into receiver i once transposed inside the layer.
template <typename Scalar = double>
std::array<TensorT<Scalar>, 3> graph_tensors(const PartitionedAdjacency& graph) {
  return {matrix_to_tensor<Scalar>(graph.normalized[0]),
          matrix_to_tensor<Scalar>(graph.normalized[1]),
          matrix_to_tensor<Scalar>(graph.normalized[2])};
}

// Per-partition 1x1 convolutions plus learnable N x N masks. The mask either
// gates the normalized adjacency elementwise or adds extra edge weight to it.
template <typename Scalar>
struct SpatialGraphConv {
  MaskMode mode = MaskMode::add;
  std::array<TensorT<Scalar>, 3> weight;  // each (C_out, C_in, 1, 1)
  std::array<TensorT<Scalar>, 3> mask;    // each (N, N)
  TensorT<Scalar> bias;                   // optional (C_out)
};

// Aggregation before the activation: for each partition p,
//   out[:, t, i] += sum_j combined_p[i, j] * (W_p x)[:, t, j]
// with combined_p = A_hat_p (*) M_p or A_hat_p + M_p by mode.
template <typename Scalar>
TensorT<Scalar> spatial_presum(const TensorT<Scalar>& x, const SpatialGraphConv<Scalar>& layer,
                               const std::array<TensorT<Scalar>, 3>& a_hat) {
  if (x.rank() != 3) fail(ErrorKind::shape, "spatial_presum: rank 3 input required");
  const Index n = x.extent(2);
  TensorT<Scalar> acc;
  for (std::size_t p = 0; p < 3; ++p) {
    if (a_hat[p].extent(0) != n || layer.mask[p].extent(0) != n)
      fail(ErrorKind::shape, "spatial_presum: graph is " + std::to_string(a_hat[p].extent(0)) +
                                 " joints, input has " + std::to_string(n));
    TensorT<Scalar> combined = layer.mode == MaskMode::multiply
                                   ? mul(a_hat[p], layer.mask[p])
                                   : add(a_hat[p], layer.mask[p]);
    TensorT<Scalar> term = matmul_last(conv2d(x, layer.weight[p], 1, 0), transpose2d(combined));
    acc = p == 0 ? term : add(acc, term);
  }
  if (layer.bias.defined()) acc = add_channel_bias(acc, layer.bias);
  return acc;
}

template <typename Scalar>
TensorT<Scalar> spatial_forward(const TensorT<Scalar>& x, const SpatialGraphConv<Scalar>& layer,
                                const std::array<TensorT<Scalar>, 3>& a_hat) {
  return relu(spatial_presum(x, layer, a_hat));
}

// Per-joint 1-D convolution over frames; odd taps with symmetric padding so
// stride 1 preserves the frame count and stride 2 halves it (ceil).
template <typename Scalar>
struct TemporalConv {
  TensorT<Scalar> weight;  // (C_out, C_in, K_t, 1)
  TensorT<Scalar> bias;    // (C_out)
  Index stride = 1;
};

template <typename Scalar>
TensorT<Scalar> temporal_forward(const TensorT<Scalar>& x, const TemporalConv<Scalar>& layer) {
  const Index k_t = layer.weight.extent(2);
  if (k_t % 2 == 0) fail(ErrorKind::validation, "temporal_forward: tap count must be odd");
  return layer.bias.defined()
             ? conv2d(x, layer.weight, layer.bias, layer.stride, (k_t - 1) / 2)
             : conv2d(x, layer.weight, layer.stride, (k_t - 1) / 2);
}

// Spatial conv -> BN -> ReLU, then optionally temporal conv -> BN ->
// (+ residual) -> ReLU. The first stages of the network run spatial-only.
// The residual is the identity when shapes already agree, otherwise a
// bias-free strided 1x1 projection.
template <typename Scalar>
struct STBlock {
  SpatialGraphConv<Scalar> spatial;
  TensorT<Scalar> bn1_gamma, bn1_beta;
  BatchNormState<Scalar> bn1;
  bool use_temporal = false;
  bool use_residual = false;
  TemporalConv<Scalar> temporal;
  TensorT<Scalar> bn2_gamma, bn2_beta;
  BatchNormState<Scalar> bn2;
  TensorT<Scalar> residual_weight;  // defined only when a projection is needed

  STBlock() : bn1(0), bn2(0) {}
};

template <typename Scalar>
TensorT<Scalar> block_forward(const TensorT<Scalar>& x, STBlock<Scalar>& block,
                              const std::array<TensorT<Scalar>, 3>& a_hat, BatchNormMode mode) {
  TensorT<Scalar> s = spatial_presum(x, block.spatial, a_hat);
  s = relu(batch_norm(s, block.bn1_gamma, block.bn1_beta, block.bn1, mode));
  if (!block.use_temporal) return s;
  TensorT<Scalar> t = temporal_forward(s, block.temporal);
  t = batch_norm(t, block.bn2_gamma, block.bn2_beta, block.bn2, mode);
  if (block.use_residual) {
    TensorT<Scalar> shortcut = block.residual_weight.defined()
                                   ? conv2d(x, block.residual_weight, block.temporal.stride, 0)
                                   : x;
    t = add(t, shortcut);
  }
  return relu(t);
}

}  // namespace tagcn
