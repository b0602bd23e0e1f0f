#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tagcn/error.hpp"

namespace tagcn {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& s) {
  Index n = 1;
  for (Index e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

inline void check_shape_valid(const Shape& s, const char* what) {
  for (Index e : s) {
    if (e <= 0) fail(ErrorKind::shape, std::string(what) + ": nonpositive extent in " + shape_str(s));
  }
}

// One recorded value in a forward computation. Nodes are created in program
// order; ids are strictly increasing, so descending id order is a valid
// reverse-topological replay order (an operation's inputs always predate it).
template <typename Scalar>
struct TensorNode {
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Shape shape;
  Storage value;
  Storage grad;  // kept empty until the first accumulation
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Distributes this node's grad into its parents. Set only on nodes produced
  // by an operation with at least one grad-requiring input.
  std::function<void(TensorNode&)> pull;

  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
  }

  void accumulate(const Storage& g) {
    if (grad.size() == 0) grad = Storage::Zero(value.size());
    grad += g;
  }

  const Storage& grad_or_zero() {
    if (grad.size() == 0) grad = Storage::Zero(value.size());
    return grad;
  }
};

// Dense row-major tensor with reverse-mode autodiff. Copies share the
// underlying node; operations on tensors whose inputs require gradients
// extend the implicit computation record.
template <typename Scalar>
class TensorT {
 public:
  using Node = TensorNode<Scalar>;
  using Storage = typename Node::Storage;

  TensorT() = default;
  explicit TensorT(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static TensorT from_shape(Shape shape) {
    check_shape_valid(shape, "tensor");
    auto node = std::make_shared<Node>();
    node->id = Node::next_id();
    node->value = Storage::Zero(shape_size(shape));
    node->shape = std::move(shape);
    return TensorT(std::move(node));
  }

  static TensorT zeros(Shape shape) { return from_shape(std::move(shape)); }

  static TensorT constant(Shape shape, Scalar v) {
    TensorT t = from_shape(std::move(shape));
    t.node_->value.setConstant(v);
    return t;
  }

  static TensorT ones(Shape shape) { return constant(std::move(shape), Scalar(1)); }

  static TensorT scalar(Scalar v) { return constant({1}, v); }

  static TensorT from_data(Shape shape, const std::vector<Scalar>& data) {
    TensorT t = from_shape(std::move(shape));
    if (static_cast<Index>(data.size()) != t.size())
      fail(ErrorKind::shape, "from_data: " + std::to_string(data.size()) +
                                 " values for shape " + shape_str(t.shape()));
    std::copy(data.begin(), data.end(), t.node_->value.data());
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index size() const { return node_->value.size(); }
  Index extent(Index axis) const { return node_->shape[static_cast<std::size_t>(axis)]; }

  Storage& values() { return node_->value; }
  const Storage& values() const { return node_->value; }

  Scalar item() const {
    if (size() != 1) fail(ErrorKind::shape, "item: tensor has " + std::to_string(size()) + " elements");
    return node_->value(0);
  }

  Index offset(std::initializer_list<Index> idx) const {
    if (static_cast<Index>(idx.size()) != rank())
      fail(ErrorKind::shape, "index rank mismatch for " + shape_str(shape()));
    Index off = 0;
    std::size_t d = 0;
    for (Index i : idx) {
      off = off * node_->shape[d] + i;
      ++d;
    }
    return off;
  }

  Scalar& at(std::initializer_list<Index> idx) { return node_->value(offset(idx)); }
  Scalar at(std::initializer_list<Index> idx) const { return node_->value(offset(idx)); }

  bool requires_grad() const { return node_->requires_grad; }
  TensorT& set_requires_grad(bool v) {
    node_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return node_->grad.size() != 0; }
  const Storage& grad() const {
    if (node_->grad.size() == 0) node_->grad = Storage::Zero(node_->value.size());
    return node_->grad;
  }
  void zero_grad() { node_->grad.resize(0); }

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// The ordered list of recorded nodes that a scalar output depends on,
// ascending in creation order. Replayed back-to-front, each node is visited
// exactly once and pushes its accumulated gradient into its parents.
template <typename Scalar>
struct ComputationRecord {
  std::vector<std::shared_ptr<TensorNode<Scalar>>> order;
};

template <typename Scalar>
ComputationRecord<Scalar> record_from(const TensorT<Scalar>& output) {
  ComputationRecord<Scalar> rec;
  if (!output.defined() || !output.node()->requires_grad) return rec;
  std::vector<std::shared_ptr<TensorNode<Scalar>>> stack{output.node()};
  std::unordered_set<const TensorNode<Scalar>*> seen;
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    if (!seen.insert(n.get()).second) continue;
    rec.order.push_back(std::move(n));
    for (const auto& p : rec.order.back()->parents)
      if (p->requires_grad) stack.push_back(p);
  }
  std::sort(rec.order.begin(), rec.order.end(),
            [](const auto& a, const auto& b) { return a->id < b->id; });
  return rec;
}

template <typename Scalar>
void replay_backward(ComputationRecord<Scalar>& rec) {
  for (auto it = rec.order.rbegin(); it != rec.order.rend(); ++it) {
    auto& node = **it;
    if (node.pull && node.grad.size() != 0) node.pull(node);
  }
}

// Reverse-mode gradient of a scalar output with respect to every
// grad-requiring tensor it was computed from. Gradients accumulate
// additively across calls until explicitly zeroed.
template <typename Scalar>
void backward(const TensorT<Scalar>& loss) {
  if (loss.size() != 1) fail(ErrorKind::shape, "backward: output must be scalar, got " + shape_str(loss.shape()));
  if (!loss.requires_grad())
    fail(ErrorKind::validation, "backward: output does not depend on any grad-requiring tensor");
  auto rec = record_from(loss);
  typename TensorNode<Scalar>::Storage seed(1);
  seed(0) = Scalar(1);
  loss.node()->accumulate(seed);
  replay_backward(rec);
}

using Tensor = TensorT<double>;
using TensorF = TensorT<float>;

namespace detail {

// Builds the output node of an operation: value computed eagerly by the
// caller, parents and pull closure attached only when gradients can flow.
template <typename Scalar>
TensorT<Scalar> make_op_node(Shape shape, typename TensorNode<Scalar>::Storage value,
                             std::vector<std::shared_ptr<TensorNode<Scalar>>> parents,
                             std::function<void(TensorNode<Scalar>&)> pull) {
  auto node = std::make_shared<TensorNode<Scalar>>();
  node->id = TensorNode<Scalar>::next_id();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  for (const auto& p : parents) needs |= p->requires_grad;
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->pull = std::move(pull);
  }
  return TensorT<Scalar>(std::move(node));
}

}  // namespace detail

}  // namespace tagcn
