#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <vector>

#include "tagcn/tensor.hpp"

namespace tagcn {

namespace detail {

template <typename Scalar>
using MatRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using MapM = Eigen::Map<MatRM<Scalar>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename Scalar>
using CMapM = Eigen::Map<const MatRM<Scalar>, Eigen::Unaligned, Eigen::OuterStride<>>;

using DynStride = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using SMapM = Eigen::Map<MatRM<Scalar>, Eigen::Unaligned, DynStride>;
template <typename Scalar>
using CSMapM = Eigen::Map<const MatRM<Scalar>, Eigen::Unaligned, DynStride>;

template <typename Scalar>
void check_same_shape(const TensorT<Scalar>& a, const TensorT<Scalar>& b, const char* op) {
  if (a.shape() != b.shape())
    fail(ErrorKind::shape, std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                               " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

template <typename Scalar>
TensorT<Scalar> add(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  detail::check_same_shape(a, b, "add");
  return detail::make_op_node<Scalar>(
      a.shape(), a.values() + b.values(), {a.node(), b.node()},
      [](TensorNode<Scalar>& self) {
        self.parents[0]->accumulate(self.grad);
        self.parents[1]->accumulate(self.grad);
      });
}

template <typename Scalar>
TensorT<Scalar> sub(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  detail::check_same_shape(a, b, "sub");
  return detail::make_op_node<Scalar>(
      a.shape(), a.values() - b.values(), {a.node(), b.node()},
      [](TensorNode<Scalar>& self) {
        self.parents[0]->accumulate(self.grad);
        self.parents[1]->accumulate(-self.grad);
      });
}

template <typename Scalar>
TensorT<Scalar> mul(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  detail::check_same_shape(a, b, "mul");
  return detail::make_op_node<Scalar>(
      a.shape(), a.values() * b.values(), {a.node(), b.node()},
      [](TensorNode<Scalar>& self) {
        self.parents[0]->accumulate((self.grad * self.parents[1]->value).eval());
        self.parents[1]->accumulate((self.grad * self.parents[0]->value).eval());
      });
}

template <typename Scalar>
TensorT<Scalar> scale(const TensorT<Scalar>& a, Scalar c) {
  return detail::make_op_node<Scalar>(
      a.shape(), (a.values() * c).eval(), {a.node()},
      [c](TensorNode<Scalar>& self) { self.parents[0]->accumulate((self.grad * c).eval()); });
}

template <typename Scalar>
TensorT<Scalar> relu(const TensorT<Scalar>& a) {
  // Subgradient convention: derivative at exactly zero is zero.
  return detail::make_op_node<Scalar>(
      a.shape(), a.values().max(Scalar(0)), {a.node()},
      [](TensorNode<Scalar>& self) {
        const auto& x = self.parents[0]->value;
        self.parents[0]->accumulate(
            (self.grad * (x > Scalar(0)).template cast<Scalar>()).eval());
      });
}

template <typename Scalar>
TensorT<Scalar> sigmoid(const TensorT<Scalar>& a) {
  typename TensorNode<Scalar>::Storage out(a.size());
  for (Index i = 0; i < a.size(); ++i) {
    const Scalar x = a.values()(i);
    out(i) = x >= 0 ? Scalar(1) / (Scalar(1) + std::exp(-x))
                    : std::exp(x) / (Scalar(1) + std::exp(x));
  }
  return detail::make_op_node<Scalar>(
      a.shape(), std::move(out), {a.node()}, [](TensorNode<Scalar>& self) {
        self.parents[0]->accumulate(
            (self.grad * self.value * (Scalar(1) - self.value)).eval());
      });
}

template <typename Scalar>
TensorT<Scalar> sum_all(const TensorT<Scalar>& a) {
  typename TensorNode<Scalar>::Storage out(1);
  out(0) = a.values().sum();
  return detail::make_op_node<Scalar>(
      {1}, std::move(out), {a.node()}, [](TensorNode<Scalar>& self) {
        auto& p = *self.parents[0];
        p.accumulate(TensorNode<Scalar>::Storage::Constant(p.value.size(), self.grad(0)));
      });
}

template <typename Scalar>
TensorT<Scalar> mean_all(const TensorT<Scalar>& a) {
  return scale(sum_all(a), Scalar(1) / static_cast<Scalar>(a.size()));
}

// ---- matrix / contraction ---------------------------------------------------

// out[..., i] = sum_j input[..., j] * m[j, i]; contracts the last axis of
// `input` against the rows of `m`.
template <typename Scalar>
TensorT<Scalar> matmul_last(const TensorT<Scalar>& input, const TensorT<Scalar>& m) {
  if (m.rank() != 2) fail(ErrorKind::shape, "matmul_last: matrix must be rank 2, got " + shape_str(m.shape()));
  if (input.rank() < 1) fail(ErrorKind::shape, "matmul_last: input must have rank >= 1");
  const Index n = input.extent(input.rank() - 1);
  if (m.extent(0) != n)
    fail(ErrorKind::shape, "matmul_last: input last extent " + std::to_string(n) +
                               " vs matrix rows " + std::to_string(m.extent(0)));
  const Index cols = m.extent(1);
  const Index rows = input.size() / n;

  detail::CMapM<Scalar> in_mat(input.values().data(), rows, n, Eigen::OuterStride<>(n));
  detail::CMapM<Scalar> m_mat(m.values().data(), n, cols, Eigen::OuterStride<>(cols));
  typename TensorNode<Scalar>::Storage out(rows * cols);
  detail::MapM<Scalar>(out.data(), rows, cols, Eigen::OuterStride<>(cols)) = in_mat * m_mat;

  Shape out_shape = input.shape();
  out_shape.back() = cols;
  return detail::make_op_node<Scalar>(
      std::move(out_shape), std::move(out), {input.node(), m.node()},
      [rows, n, cols](TensorNode<Scalar>& self) {
        detail::CMapM<Scalar> g(self.grad.data(), rows, cols, Eigen::OuterStride<>(cols));
        detail::CMapM<Scalar> in_mat(self.parents[0]->value.data(), rows, n, Eigen::OuterStride<>(n));
        detail::CMapM<Scalar> m_mat(self.parents[1]->value.data(), n, cols, Eigen::OuterStride<>(cols));
        typename TensorNode<Scalar>::Storage gi(rows * n);
        detail::MapM<Scalar>(gi.data(), rows, n, Eigen::OuterStride<>(n)) = g * m_mat.transpose();
        self.parents[0]->accumulate(gi);
        typename TensorNode<Scalar>::Storage gm(n * cols);
        detail::MapM<Scalar>(gm.data(), n, cols, Eigen::OuterStride<>(cols)) = in_mat.transpose() * g;
        self.parents[1]->accumulate(gm);
      });
}

template <typename Scalar>
TensorT<Scalar> transpose2d(const TensorT<Scalar>& m) {
  if (m.rank() != 2) fail(ErrorKind::shape, "transpose2d: rank 2 required, got " + shape_str(m.shape()));
  const Index r = m.extent(0), c = m.extent(1);
  typename TensorNode<Scalar>::Storage out(r * c);
  detail::MapM<Scalar>(out.data(), c, r, Eigen::OuterStride<>(r)) =
      detail::CMapM<Scalar>(m.values().data(), r, c, Eigen::OuterStride<>(c)).transpose();
  return detail::make_op_node<Scalar>(
      {c, r}, std::move(out), {m.node()}, [r, c](TensorNode<Scalar>& self) {
        typename TensorNode<Scalar>::Storage g(r * c);
        detail::MapM<Scalar>(g.data(), r, c, Eigen::OuterStride<>(c)) =
            detail::CMapM<Scalar>(self.grad.data(), c, r, Eigen::OuterStride<>(r)).transpose();
        self.parents[0]->accumulate(g);
      });
}

// logits = w x + b for a vector input: x (C), w (K, C), b (K) -> (K).
template <typename Scalar>
TensorT<Scalar> linear(const TensorT<Scalar>& x, const TensorT<Scalar>& w, const TensorT<Scalar>& b) {
  if (x.rank() != 1 || w.rank() != 2 || b.rank() != 1)
    fail(ErrorKind::shape, "linear: expected x rank 1, w rank 2, b rank 1");
  const Index c = x.extent(0), k = w.extent(0);
  if (w.extent(1) != c || b.extent(0) != k)
    fail(ErrorKind::shape, "linear: w " + shape_str(w.shape()) + " incompatible with x " +
                               shape_str(x.shape()) + ", b " + shape_str(b.shape()));
  detail::CMapM<Scalar> wm(w.values().data(), k, c, Eigen::OuterStride<>(c));
  typename TensorNode<Scalar>::Storage out = (wm * x.values().matrix()).array() + b.values();
  return detail::make_op_node<Scalar>(
      {k}, std::move(out), {x.node(), w.node(), b.node()},
      [k, c](TensorNode<Scalar>& self) {
        detail::CMapM<Scalar> wm(self.parents[1]->value.data(), k, c, Eigen::OuterStride<>(c));
        self.parents[0]->accumulate((wm.transpose() * self.grad.matrix()).array().eval());
        typename TensorNode<Scalar>::Storage gw(k * c);
        detail::MapM<Scalar>(gw.data(), k, c, Eigen::OuterStride<>(c)) =
            self.grad.matrix() * self.parents[0]->value.matrix().transpose();
        self.parents[1]->accumulate(gw);
        self.parents[2]->accumulate(self.grad);
      });
}

// ---- convolution ------------------------------------------------------------

// 2D convolution over a (C_in, T, N) tensor with a (C_out, C_in, k_t, 1)
// kernel: temporal window k_t with zero padding `pad_t` and stride
// `stride_t`, pointwise over the node axis. T_out = (T + 2*pad_t - k_t) /
// stride_t + 1 (floor).
template <typename Scalar>
TensorT<Scalar> conv2d(const TensorT<Scalar>& input, const TensorT<Scalar>& kernel,
                       const TensorT<Scalar>& bias, Index stride_t, Index pad_t) {
  if (input.rank() != 3) fail(ErrorKind::shape, "conv2d: input rank 3 required, got " + shape_str(input.shape()));
  if (kernel.rank() != 4) fail(ErrorKind::shape, "conv2d: kernel rank 4 required, got " + shape_str(kernel.shape()));
  const Index c_in = input.extent(0), t_in = input.extent(1), n = input.extent(2);
  const Index c_out = kernel.extent(0), k_t = kernel.extent(2), k_n = kernel.extent(3);
  if (kernel.extent(1) != c_in)
    fail(ErrorKind::shape, "conv2d: kernel expects " + std::to_string(kernel.extent(1)) +
                               " input channels, input has " + std::to_string(c_in));
  if (k_n != 1) fail(ErrorKind::shape, "conv2d: node-axis kernel extent must be 1, got " + std::to_string(k_n));
  if (stride_t < 1 || pad_t < 0) fail(ErrorKind::shape, "conv2d: stride must be >= 1 and padding >= 0");
  if (bias.defined() && (bias.rank() != 1 || bias.extent(0) != c_out))
    fail(ErrorKind::shape, "conv2d: bias must have shape (" + std::to_string(c_out) + ")");
  const Index t_out = (t_in + 2 * pad_t - k_t) / stride_t + 1;
  if (t_in + 2 * pad_t < k_t || t_out < 1)
    fail(ErrorKind::shape, "conv2d: temporal extent " + std::to_string(t_in) + " too small for kernel " +
                               std::to_string(k_t) + " with padding " + std::to_string(pad_t));

  typename TensorNode<Scalar>::Storage out(c_out * t_out * n);
  const Scalar* in_ptr = input.values().data();
  const Scalar* w_ptr = kernel.values().data();
  for (Index to = 0; to < t_out; ++to) {
    detail::MapM<Scalar> out_slab(out.data() + to * n, c_out, n, Eigen::OuterStride<>(t_out * n));
    if (bias.defined())
      out_slab.colwise() = bias.values().matrix();
    else
      out_slab.setZero();
    for (Index kt = 0; kt < k_t; ++kt) {
      const Index ti = to * stride_t - pad_t + kt;
      if (ti < 0 || ti >= t_in) continue;
      detail::CMapM<Scalar> in_slab(in_ptr + ti * n, c_in, n, Eigen::OuterStride<>(t_in * n));
      // kernel slice (c_out, c_in) at temporal tap kt
      detail::CSMapM<Scalar> w_kt(w_ptr + kt, c_out, c_in, detail::DynStride(c_in * k_t, k_t));
      out_slab.noalias() += w_kt * in_slab;
    }
  }

  std::vector<std::shared_ptr<TensorNode<Scalar>>> parents{input.node(), kernel.node()};
  if (bias.defined()) parents.push_back(bias.node());
  const bool has_bias = bias.defined();
  return detail::make_op_node<Scalar>(
      {c_out, t_out, n}, std::move(out), std::move(parents),
      [c_in, t_in, n, c_out, k_t, t_out, stride_t, pad_t, has_bias](TensorNode<Scalar>& self) {
        auto& in_node = *self.parents[0];
        auto& w_node = *self.parents[1];
        typename TensorNode<Scalar>::Storage g_in =
            TensorNode<Scalar>::Storage::Zero(in_node.value.size());
        typename TensorNode<Scalar>::Storage g_w =
            TensorNode<Scalar>::Storage::Zero(w_node.value.size());
        for (Index to = 0; to < t_out; ++to) {
          detail::CMapM<Scalar> g_slab(self.grad.data() + to * n, c_out, n,
                                       Eigen::OuterStride<>(t_out * n));
          for (Index kt = 0; kt < k_t; ++kt) {
            const Index ti = to * stride_t - pad_t + kt;
            if (ti < 0 || ti >= t_in) continue;
            detail::CMapM<Scalar> in_slab(in_node.value.data() + ti * n, c_in, n,
                                          Eigen::OuterStride<>(t_in * n));
            detail::CSMapM<Scalar> w_kt(w_node.value.data() + kt, c_out, c_in,
                                        detail::DynStride(c_in * k_t, k_t));
            detail::MapM<Scalar> g_in_slab(g_in.data() + ti * n, c_in, n,
                                           Eigen::OuterStride<>(t_in * n));
            g_in_slab.noalias() += w_kt.transpose() * g_slab;
            detail::SMapM<Scalar> g_w_kt(g_w.data() + kt, c_out, c_in,
                                         detail::DynStride(c_in * k_t, k_t));
            g_w_kt.noalias() += g_slab * in_slab.transpose();
          }
        }
        in_node.accumulate(g_in);
        w_node.accumulate(g_w);
        if (has_bias) {
          typename TensorNode<Scalar>::Storage g_b(c_out);
          detail::CMapM<Scalar> g_all(self.grad.data(), c_out, t_out * n,
                                      Eigen::OuterStride<>(t_out * n));
          g_b = g_all.rowwise().sum().array();
          self.parents[2]->accumulate(g_b);
        }
      });
}

// Convenience for bias-free convolution.
template <typename Scalar>
TensorT<Scalar> conv2d(const TensorT<Scalar>& input, const TensorT<Scalar>& kernel,
                       Index stride_t, Index pad_t) {
  return conv2d(input, kernel, TensorT<Scalar>(), stride_t, pad_t);
}

// ---- pooling / reductions ----------------------------------------------------

// (C, T, N) -> (C): mean over the temporal and node axes.
// Broadcasts b over everything after the channel axis: out[c,...] = x[c,...] + b[c].
template <typename Scalar>
TensorT<Scalar> add_channel_bias(const TensorT<Scalar>& x, const TensorT<Scalar>& b) {
  if (x.rank() < 1 || b.rank() != 1 || b.extent(0) != x.extent(0))
    fail(ErrorKind::shape, "add_channel_bias: bias " + shape_str(b.shape()) +
                               " does not match leading axis of " + shape_str(x.shape()));
  const Index c = x.extent(0), rest = x.size() / x.extent(0);
  typename TensorNode<Scalar>::Storage out = x.values();
  detail::MapM<Scalar> om(out.data(), c, rest, Eigen::OuterStride<>(rest));
  om.colwise() += b.values().matrix();
  return detail::make_op_node<Scalar>(
      x.shape(), std::move(out), {x.node(), b.node()}, [c, rest](TensorNode<Scalar>& self) {
        self.parents[0]->accumulate(self.grad);
        detail::CMapM<Scalar> gm(self.grad.data(), c, rest, Eigen::OuterStride<>(rest));
        self.parents[1]->accumulate(gm.rowwise().sum().array());
      });
}

template <typename Scalar>
TensorT<Scalar> global_avg_pool(const TensorT<Scalar>& x) {
  if (x.rank() != 3) fail(ErrorKind::shape, "global_avg_pool: rank 3 required, got " + shape_str(x.shape()));
  const Index c = x.extent(0), t = x.extent(1), n = x.extent(2);
  detail::CMapM<Scalar> xm(x.values().data(), c, t * n, Eigen::OuterStride<>(t * n));
  typename TensorNode<Scalar>::Storage out = xm.rowwise().mean().array();
  return detail::make_op_node<Scalar>(
      {c}, std::move(out), {x.node()}, [c, t, n](TensorNode<Scalar>& self) {
        typename TensorNode<Scalar>::Storage g(c * t * n);
        detail::MapM<Scalar> gm(g.data(), c, t * n, Eigen::OuterStride<>(t * n));
        gm.colwise() = (self.grad / static_cast<Scalar>(t * n)).matrix();
        self.parents[0]->accumulate(g);
      });
}

// (C, T, N) -> (T): mean over the feature and node axes (the attention
// module's frame descriptor).
template <typename Scalar>
TensorT<Scalar> frame_mean(const TensorT<Scalar>& x) {
  if (x.rank() != 3) fail(ErrorKind::shape, "frame_mean: rank 3 required, got " + shape_str(x.shape()));
  const Index c = x.extent(0), t = x.extent(1), n = x.extent(2);
  typename TensorNode<Scalar>::Storage out = TensorNode<Scalar>::Storage::Zero(t);
  const Scalar inv = Scalar(1) / static_cast<Scalar>(c * n);
  const Scalar* p = x.values().data();
  for (Index ci = 0; ci < c; ++ci)
    for (Index ti = 0; ti < t; ++ti)
      for (Index ni = 0; ni < n; ++ni) out(ti) += p[(ci * t + ti) * n + ni];
  out *= inv;
  return detail::make_op_node<Scalar>(
      {t}, std::move(out), {x.node()}, [c, t, n, inv](TensorNode<Scalar>& self) {
        typename TensorNode<Scalar>::Storage g(c * t * n);
        Scalar* gp = g.data();
        for (Index ci = 0; ci < c; ++ci)
          for (Index ti = 0; ti < t; ++ti) {
            const Scalar v = self.grad(ti) * inv;
            for (Index ni = 0; ni < n; ++ni) gp[(ci * t + ti) * n + ni] = v;
          }
        self.parents[0]->accumulate(g);
      });
}

// h (T) treated as a row vector: out[j] = sum_t h[t] * m[t, j].
template <typename Scalar>
TensorT<Scalar> vec_mat(const TensorT<Scalar>& h, const TensorT<Scalar>& m) {
  if (h.rank() != 1 || m.rank() != 2 || m.extent(0) != h.extent(0))
    fail(ErrorKind::shape, "vec_mat: h " + shape_str(h.shape()) + " vs m " + shape_str(m.shape()));
  const Index t = h.extent(0), j = m.extent(1);
  detail::CMapM<Scalar> mm(m.values().data(), t, j, Eigen::OuterStride<>(j));
  typename TensorNode<Scalar>::Storage out = (mm.transpose() * h.values().matrix()).array();
  return detail::make_op_node<Scalar>(
      {j}, std::move(out), {h.node(), m.node()}, [t, j](TensorNode<Scalar>& self) {
        detail::CMapM<Scalar> mm(self.parents[1]->value.data(), t, j, Eigen::OuterStride<>(j));
        self.parents[0]->accumulate((mm * self.grad.matrix()).array().eval());
        typename TensorNode<Scalar>::Storage gm(t * j);
        detail::MapM<Scalar>(gm.data(), t, j, Eigen::OuterStride<>(j)).noalias() =
            self.parents[0]->value.matrix() * self.grad.matrix().transpose();
        self.parents[1]->accumulate(gm);
      });
}

// out[c, t, n] = x[c, t, n] * a[t]: per-frame scaling by an attention vector.
template <typename Scalar>
TensorT<Scalar> scale_frames(const TensorT<Scalar>& x, const TensorT<Scalar>& a) {
  if (x.rank() != 3 || a.rank() != 1 || a.extent(0) != x.extent(1))
    fail(ErrorKind::shape, "scale_frames: x " + shape_str(x.shape()) + " vs a " + shape_str(a.shape()));
  const Index c = x.extent(0), t = x.extent(1), n = x.extent(2);
  typename TensorNode<Scalar>::Storage out(x.size());
  const Scalar* xp = x.values().data();
  for (Index ci = 0; ci < c; ++ci)
    for (Index ti = 0; ti < t; ++ti) {
      const Scalar s = a.values()(ti);
      for (Index ni = 0; ni < n; ++ni) {
        const Index off = (ci * t + ti) * n + ni;
        out(off) = xp[off] * s;
      }
    }
  return detail::make_op_node<Scalar>(
      x.shape(), std::move(out), {x.node(), a.node()},
      [c, t, n](TensorNode<Scalar>& self) {
        const auto& xv = self.parents[0]->value;
        const auto& av = self.parents[1]->value;
        typename TensorNode<Scalar>::Storage gx(xv.size());
        typename TensorNode<Scalar>::Storage ga = TensorNode<Scalar>::Storage::Zero(t);
        for (Index ci = 0; ci < c; ++ci)
          for (Index ti = 0; ti < t; ++ti)
            for (Index ni = 0; ni < n; ++ni) {
              const Index off = (ci * t + ti) * n + ni;
              gx(off) = self.grad(off) * av(ti);
              ga(ti) += self.grad(off) * xv(off);
            }
        self.parents[0]->accumulate(gx);
        self.parents[1]->accumulate(ga);
      });
}

// Gathers frames along the temporal axis: out[c, k, n] = x[c, idx[k], n].
// Gradients flow only into the gathered frames; unselected frames get zero.
template <typename Scalar>
TensorT<Scalar> select_frames(const TensorT<Scalar>& x, const std::vector<Index>& idx) {
  if (x.rank() != 3) fail(ErrorKind::shape, "select_frames: rank 3 required, got " + shape_str(x.shape()));
  const Index c = x.extent(0), t = x.extent(1), n = x.extent(2);
  if (idx.empty()) fail(ErrorKind::shape, "select_frames: empty index list");
  for (Index i : idx)
    if (i < 0 || i >= t)
      fail(ErrorKind::shape, "select_frames: index " + std::to_string(i) + " out of range [0," +
                                 std::to_string(t) + ")");
  const Index k = static_cast<Index>(idx.size());
  typename TensorNode<Scalar>::Storage out(c * k * n);
  const Scalar* xp = x.values().data();
  for (Index ci = 0; ci < c; ++ci)
    for (Index ki = 0; ki < k; ++ki)
      for (Index ni = 0; ni < n; ++ni)
        out((ci * k + ki) * n + ni) = xp[(ci * t + idx[static_cast<std::size_t>(ki)]) * n + ni];
  return detail::make_op_node<Scalar>(
      {c, k, n}, std::move(out), {x.node()},
      [c, t, n, k, idx](TensorNode<Scalar>& self) {
        typename TensorNode<Scalar>::Storage g = TensorNode<Scalar>::Storage::Zero(c * t * n);
        for (Index ci = 0; ci < c; ++ci)
          for (Index ki = 0; ki < k; ++ki)
            for (Index ni = 0; ni < n; ++ni)
              g((ci * t + idx[static_cast<std::size_t>(ki)]) * n + ni) +=
                  self.grad((ci * k + ki) * n + ni);
        self.parents[0]->accumulate(g);
      });
}

// (C1, T, N) ++ (C2, T, N) -> (C1 + C2, T, N) along the channel axis.
template <typename Scalar>
TensorT<Scalar> concat_channels(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.extent(1) != b.extent(1) || a.extent(2) != b.extent(2))
    fail(ErrorKind::shape, "concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const Index ca = a.extent(0), cb = b.extent(0), t = a.extent(1), n = a.extent(2);
  typename TensorNode<Scalar>::Storage out(( ca + cb) * t * n);
  std::copy(a.values().data(), a.values().data() + a.size(), out.data());
  std::copy(b.values().data(), b.values().data() + b.size(), out.data() + a.size());
  return detail::make_op_node<Scalar>(
      {ca + cb, t, n}, std::move(out), {a.node(), b.node()},
      [](TensorNode<Scalar>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        pa.accumulate(self.grad.head(pa.value.size()).eval());
        pb.accumulate(self.grad.tail(pb.value.size()).eval());
      });
}

// ---- batch norm ---------------------------------------------------------------

enum class BatchNormMode {
  train,            // batch statistics, updates running estimates
  train_no_update,  // batch statistics, running estimates untouched (pure)
  eval,             // running statistics
};

template <typename Scalar>
struct BatchNormState {
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  Storage running_mean;
  Storage running_var;
  Scalar momentum = Scalar(0.1);
  Scalar eps = Scalar(1e-5);

  explicit BatchNormState(Index channels = 0, Scalar momentum_ = Scalar(0.1))
      : running_mean(Storage::Zero(channels)),
        running_var(Storage::Ones(channels)),
        momentum(momentum_) {}
};

// Per-channel standardization over all trailing axes (channel = axis 0).
template <typename Scalar>
TensorT<Scalar> batch_norm(const TensorT<Scalar>& x, const TensorT<Scalar>& gamma,
                           const TensorT<Scalar>& beta, BatchNormState<Scalar>& state,
                           BatchNormMode mode) {
  if (x.rank() < 2) fail(ErrorKind::shape, "batch_norm: rank >= 2 required, got " + shape_str(x.shape()));
  const Index c = x.extent(0);
  const Index m = x.size() / c;
  if (gamma.rank() != 1 || gamma.extent(0) != c || beta.rank() != 1 || beta.extent(0) != c)
    fail(ErrorKind::shape, "batch_norm: gamma/beta must have shape (" + std::to_string(c) + ")");
  if (state.running_mean.size() != c)
    fail(ErrorKind::shape, "batch_norm: state tracks " + std::to_string(state.running_mean.size()) +
                               " channels, input has " + std::to_string(c));

  using Storage = typename TensorNode<Scalar>::Storage;
  detail::CMapM<Scalar> xm(x.values().data(), c, m, Eigen::OuterStride<>(m));
  Storage mean(c), var(c);
  if (mode == BatchNormMode::eval) {
    mean = state.running_mean;
    var = state.running_var;
  } else {
    mean = xm.rowwise().mean().array();
    for (Index ci = 0; ci < c; ++ci)
      var(ci) = (xm.row(ci).array() - mean(ci)).square().mean();
    if (mode == BatchNormMode::train) {
      state.running_mean = (Scalar(1) - state.momentum) * state.running_mean + state.momentum * mean;
      state.running_var = (Scalar(1) - state.momentum) * state.running_var + state.momentum * var;
    }
  }
  Storage inv_sigma = (var + state.eps).sqrt().inverse();
  Storage out(x.size());
  Storage xhat(x.size());
  {
    detail::MapM<Scalar> om(out.data(), c, m, Eigen::OuterStride<>(m));
    detail::MapM<Scalar> hm(xhat.data(), c, m, Eigen::OuterStride<>(m));
    for (Index ci = 0; ci < c; ++ci) {
      hm.row(ci).array() = (xm.row(ci).array() - mean(ci)) * inv_sigma(ci);
      om.row(ci).array() = hm.row(ci).array() * gamma.values()(ci) + beta.values()(ci);
    }
  }

  const bool batch_stats = mode != BatchNormMode::eval;
  return detail::make_op_node<Scalar>(
      x.shape(), std::move(out), {x.node(), gamma.node(), beta.node()},
      [c, m, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma),
       batch_stats](TensorNode<Scalar>& self) {
        using Storage = typename TensorNode<Scalar>::Storage;
        detail::CMapM<Scalar> gm(self.grad.data(), c, m, Eigen::OuterStride<>(m));
        detail::CMapM<Scalar> hm(xhat.data(), c, m, Eigen::OuterStride<>(m));
        const auto& gamma_v = self.parents[1]->value;
        Storage g_gamma(c), g_beta(c), g_x(self.parents[0]->value.size());
        detail::MapM<Scalar> gxm(g_x.data(), c, m, Eigen::OuterStride<>(m));
        for (Index ci = 0; ci < c; ++ci) {
          const auto g_row = gm.row(ci).array();
          const auto h_row = hm.row(ci).array();
          g_gamma(ci) = (g_row * h_row).sum();
          g_beta(ci) = g_row.sum();
          if (batch_stats) {
            const Scalar mg = g_row.mean();
            const Scalar mgh = (g_row * h_row).mean();
            gxm.row(ci).array() = (gamma_v(ci) * inv_sigma(ci)) * (g_row - mg - h_row * mgh);
          } else {
            gxm.row(ci).array() = (gamma_v(ci) * inv_sigma(ci)) * g_row;
          }
        }
        self.parents[0]->accumulate(g_x);
        self.parents[1]->accumulate(g_gamma);
        self.parents[2]->accumulate(g_beta);
      });
}

// ---- classification losses -----------------------------------------------------

// Numerically stable cross entropy of a single logit vector against an
// integer label (max-subtracted log-sum-exp).
template <typename Scalar>
TensorT<Scalar> cross_entropy(const TensorT<Scalar>& logits, Index label) {
  if (logits.rank() != 1) fail(ErrorKind::shape, "cross_entropy: logits rank 1 required");
  const Index k = logits.extent(0);
  if (label < 0 || label >= k)
    fail(ErrorKind::validation, "cross_entropy: label " + std::to_string(label) + " outside [0," +
                                    std::to_string(k) + ")");
  const auto& z = logits.values();
  const Scalar mx = z.maxCoeff();
  const Scalar lse = mx + std::log((z - mx).exp().sum());
  typename TensorNode<Scalar>::Storage out(1);
  out(0) = lse - z(label);
  return detail::make_op_node<Scalar>(
      {1}, std::move(out), {logits.node()}, [label, lse](TensorNode<Scalar>& self) {
        const auto& z = self.parents[0]->value;
        typename TensorNode<Scalar>::Storage g = (z - lse).exp();
        g(label) -= Scalar(1);
        self.parents[0]->accumulate((g * self.grad(0)).eval());
      });
}

// Softmax probabilities as plain values (no recorded gradient); used for
// prediction and score-level ensembling.
template <typename Scalar>
std::vector<Scalar> softmax_values(const TensorT<Scalar>& logits) {
  const auto& z = logits.values();
  const Scalar mx = z.maxCoeff();
  Eigen::Array<Scalar, Eigen::Dynamic, 1> e = (z - mx).exp();
  e /= e.sum();
  return std::vector<Scalar>(e.data(), e.data() + e.size());
}

template <typename Scalar>
bool all_finite(const TensorT<Scalar>& t) {
  return t.values().isFinite().all();
}

}  // namespace tagcn
