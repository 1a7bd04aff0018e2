#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "c2w2c/errors.hpp"

namespace c2w2c {

/// Dense row-major tensor with optional reverse-mode gradient tracking.
///
/// Copies are shallow (shared storage); every operation in ops.hpp produces a
/// tensor with fresh storage, so storage identity doubles as graph identity.
/// Values are immutable once created, except for in-place optimizer updates
/// through mutable_data().

enum class OpKind {
  leaf,
  matmul,
  add,
  sub,
  mul,
  scale,
  shift,
  one_minus,
  tanh_op,
  sigmoid_op,
  softmax,
  pairwise_max,
  lookup,
  cross_entropy,
  slice,
  concat,
  sum,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::shift: return "shift";
    case OpKind::one_minus: return "one_minus";
    case OpKind::tanh_op: return "tanh";
    case OpKind::sigmoid_op: return "sigmoid";
    case OpKind::softmax: return "softmax";
    case OpKind::pairwise_max: return "pairwise_max";
    case OpKind::lookup: return "lookup";
    case OpKind::cross_entropy: return "cross_entropy";
    case OpKind::slice: return "slice";
    case OpKind::concat: return "concat";
    case OpKind::sum: return "sum";
  }
  return "?";
}

namespace detail {

// Thread-local switch; NoGradGuard flips it off for inference paths.
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline std::uint64_t next_node_seq() {
  thread_local std::uint64_t seq = 0;
  return ++seq;
}

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

struct NoGradGuard {
  NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
class Tensor;

/// One recorded operation: the parents it read and how to push a gradient
/// back into them. parent_grads[i] is null when parent i needs no gradient.
template <typename T>
struct Node {
  OpKind op = OpKind::leaf;
  std::uint64_t seq = 0;  // creation order, used by non-finite diagnostics
  std::vector<Tensor<T>> parents;
  std::function<void(const std::vector<T>& out_grad, const std::vector<std::vector<T>*>& parent_grads)> backward;
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    return Tensor(std::move(shape), T(0), requires_grad);
  }

  static Tensor full(std::vector<int> shape, T value, bool requires_grad = false) {
    return Tensor(std::move(shape), value, requires_grad);
  }

  static Tensor from(std::vector<int> shape, std::vector<T> values, bool requires_grad = false) {
    Tensor t(std::move(shape), T(0), requires_grad);
    if (values.size() != t.size()) {
      throw DimensionError("tensor data length " + std::to_string(values.size()) +
                           " does not match shape product " + std::to_string(t.size()));
    }
    *t.storage_ = std::move(values);
    return t;
  }

  static Tensor scalar(T value) { return Tensor(std::vector<int>{}, value, false); }

  bool defined() const { return storage_ != nullptr; }
  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return storage_ ? storage_->size() : 0; }

  const std::vector<T>& data() const { return *storage_; }

  // Reserved for the optimizer; everything else treats tensors as immutable.
  std::vector<T>& mutable_data() { return *storage_; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool v) { requires_grad_ = v; }

  /// Scalar access; valid for any single-element tensor.
  T item() const {
    if (size() != 1) {
      throw DimensionError("item() on tensor with " + std::to_string(size()) + " elements");
    }
    return (*storage_)[0];
  }

  T at(std::size_t flat_index) const { return storage_->at(flat_index); }

  /// Same values, fresh storage, no graph history.
  Tensor detach() const {
    Tensor t;
    t.shape_ = shape_;
    t.storage_ = std::make_shared<std::vector<T>>(*storage_);
    t.requires_grad_ = false;
    return t;
  }

  /// Storage identity; keys gradient maps and the optimizer state.
  const void* id() const { return storage_.get(); }

  std::shared_ptr<Node<T>> node;

  static std::string shape_string(const std::vector<int>& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) os << 'x';
      os << s[i];
    }
    os << ']';
    return os.str();
  }

  std::string shape_string() const { return shape_string(shape_); }

 private:
  Tensor(std::vector<int> shape, T fill, bool requires_grad) : shape_(std::move(shape)), requires_grad_(requires_grad) {
    std::size_t n = 1;
    for (int d : shape_) {
      if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_string(shape_));
      n *= static_cast<std::size_t>(d);
    }
    storage_ = std::make_shared<std::vector<T>>(n, fill);
  }

  std::vector<int> shape_;
  std::shared_ptr<std::vector<T>> storage_;
  bool requires_grad_ = false;
};

/// Reverse-mode pass over one recorded graph.
///
/// backward() seeds the scalar loss with 1, walks the graph once in reverse
/// topological order and accumulates a gradient per distinct tensor. The
/// context keeps the loss (and through it the whole graph) alive until
/// reset(), so storage addresses stay unique while gradients are read.
template <typename T>
class GradContext {
 public:
  void backward(const Tensor<T>& loss) {
    if (ran_) throw TrainingError("backward() called twice on the same GradContext without reset()");
    if (!loss.defined() || loss.size() != 1) {
      throw DimensionError("backward() expects a scalar loss");
    }
    ran_ = true;
    root_ = loss;
    grads_[loss.id()] = std::vector<T>(1, T(1));
    if (!loss.node) return;

    // Iterative DFS postorder; graphs from long BPTT windows can be deep.
    std::vector<Node<T>*> order;
    std::unordered_set<const Node<T>*> visited;
    struct Frame {
      Node<T>* node;
      std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.node.get(), 0});
    visited.insert(loss.node.get());
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.node->parents.size()) {
        const Tensor<T>& p = f.node->parents[f.next_parent++];
        if (p.node && !visited.count(p.node.get())) {
          visited.insert(p.node.get());
          stack.push_back({p.node.get(), 0});
        }
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }

    // Nodes must run after every consumer; creation order gives that once we
    // sort the postorder by descending seq.
    std::sort(order.begin(), order.end(), [](const Node<T>* a, const Node<T>* b) { return a->seq > b->seq; });

    // Map node -> its output tensor id. The node is owned by exactly one
    // output tensor; recover the pairing by walking parents.
    std::unordered_map<const Node<T>*, const void*> node_out;
    node_out[loss.node.get()] = loss.id();
    std::unordered_map<const Node<T>*, std::vector<int>> node_out_shape;
    node_out_shape[loss.node.get()] = loss.shape();
    for (Node<T>* n : order) {
      for (const Tensor<T>& p : n->parents) {
        if (p.node) {
          node_out[p.node.get()] = p.id();
          node_out_shape[p.node.get()] = p.shape();
        }
      }
    }

    for (Node<T>* n : order) {
      auto git = grads_.find(node_out[n]);
      if (git == grads_.end()) continue;  // not reachable from the loss
      const std::vector<T>& gout = git->second;
      std::vector<std::vector<T>*> pgrads(n->parents.size(), nullptr);
      for (std::size_t i = 0; i < n->parents.size(); ++i) {
        const Tensor<T>& p = n->parents[i];
        if (!p.requires_grad()) continue;
        auto [it, inserted] = grads_.try_emplace(p.id());
        if (inserted) it->second.assign(p.size(), T(0));
        pgrads[i] = &it->second;
      }
      n->backward(gout, pgrads);
    }
  }

  bool has_grad(const Tensor<T>& t) const { return grads_.count(t.id()) > 0; }

  const std::vector<T>& grad(const Tensor<T>& t) const {
    auto it = grads_.find(t.id());
    if (it == grads_.end()) {
      throw TrainingError("no gradient recorded for tensor (unreachable from the loss or backward() not run)");
    }
    return it->second;
  }

  Tensor<T> grad_tensor(const Tensor<T>& t) const { return Tensor<T>::from(t.shape(), grad(t)); }

  void reset() {
    grads_.clear();
    root_ = Tensor<T>();
    ran_ = false;
  }

  bool consumed() const { return ran_; }

 private:
  std::unordered_map<const void*, std::vector<T>> grads_;
  Tensor<T> root_;
  bool ran_ = false;
};

}  // namespace c2w2c
