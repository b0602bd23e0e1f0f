#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "tagcn/ops.hpp"
#include "tagcn/random.hpp"

namespace tagcn {

// Frame scoring and hard frame selection. A length-T descriptor (the mean
// over features and joints) is pushed through a learnable T x T map and a
// sigmoid; the T' best-scored frames survive.
template <typename Scalar>
struct TemporalAttention {
  TensorT<Scalar> theta;  // (T, T)
  Index t_prime = 0;
  bool preserve_temporal_order = true;
};

// Theta starts as the identity with a little uniform noise: initial scores
// track per-frame energy, which is what makes early selection sensible,
// while the noise lets off-diagonal structure develop.
template <typename Scalar = double>
TemporalAttention<Scalar> make_temporal_attention(Index t, Index t_prime, Rng& rng,
                                                  bool preserve_temporal_order = true) {
  if (t < 1 || t_prime < 1 || t_prime > t)
    fail(ErrorKind::validation, "make_temporal_attention: need 1 <= t_prime <= t");
  TemporalAttention<Scalar> att;
  att.theta = TensorT<Scalar>::from_shape({t, t});
  const double amp = 1.0 / std::sqrt(static_cast<double>(t));
  for (Index i = 0; i < t; ++i)
    for (Index j = 0; j < t; ++j)
      att.theta.values()(i * t + j) =
          static_cast<Scalar>((i == j ? 1.0 : 0.0) + rng.uniform(-amp, amp));
  att.t_prime = t_prime;
  att.preserve_temporal_order = preserve_temporal_order;
  return att;
}

template <typename Scalar>
TensorT<Scalar> attention_scores(const TensorT<Scalar>& h, const TensorT<Scalar>& theta) {
  if (h.rank() != 3) fail(ErrorKind::shape, "attention_scores: rank 3 input required");
  if (theta.rank() != 2 || theta.extent(0) != theta.extent(1) || theta.extent(0) != h.extent(1))
    fail(ErrorKind::shape, "attention_scores: theta must be square with side " +
                               std::to_string(h.extent(1)) + ", got " + shape_str(theta.shape()));
  return sigmoid(vec_mat(frame_mean(h), theta));
}

// Score-weighted frames. The ReLU only matters for inputs that can go
// negative; the network feeds this post-activation features.
template <typename Scalar>
TensorT<Scalar> apply_attention(const TensorT<Scalar>& h, const TensorT<Scalar>& scores) {
  return relu(scale_frames(h, scores));
}

// Indices of the t_prime largest scores; equal scores prefer the earlier
// frame. Emission order is temporal (ascending index) by default, otherwise
// by descending score.
inline std::vector<Index> select_top(const std::vector<double>& scores, Index t_prime,
                                     bool preserve_temporal_order = true) {
  const Index t = static_cast<Index>(scores.size());
  if (t_prime < 1 || t_prime > t)
    fail(ErrorKind::validation, "select_top: t_prime " + std::to_string(t_prime) +
                                    " outside 1.." + std::to_string(t));
  std::vector<Index> order(scores.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double sa = scores[static_cast<std::size_t>(a)];
    const double sb = scores[static_cast<std::size_t>(b)];
    return sa != sb ? sa > sb : a < b;
  });
  order.resize(static_cast<std::size_t>(t_prime));
  if (preserve_temporal_order) std::sort(order.begin(), order.end());
  return order;
}

template <typename Scalar>
struct AttentionResult {
  TensorT<Scalar> scores;            // (T), strictly inside (0, 1)
  std::vector<Index> selected;       // t_prime distinct frame indices
  TensorT<Scalar> attended;          // (C, T, N)
  TensorT<Scalar> selected_frames;   // (C, t_prime, N)
};

// Hard selection: downstream gradient reaches only the surviving frames of
// the attended map (and theta through their scores); dropped frames get
// nothing.
template <typename Scalar>
AttentionResult<Scalar> tam_forward(const TensorT<Scalar>& h,
                                    const TemporalAttention<Scalar>& att) {
  AttentionResult<Scalar> out;
  out.scores = attention_scores(h, att.theta);
  out.attended = apply_attention(h, out.scores);
  std::vector<double> score_values(static_cast<std::size_t>(out.scores.size()));
  for (Index i = 0; i < out.scores.size(); ++i)
    score_values[static_cast<std::size_t>(i)] = static_cast<double>(out.scores.values()(i));
  out.selected = select_top(score_values, att.t_prime, att.preserve_temporal_order);
  out.selected_frames = select_frames(out.attended, out.selected);
  return out;
}

}  // namespace tagcn
