#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "c2w2c/tensor.hpp"

namespace c2w2c::ops {

namespace detail {

template <typename T>
bool want_grad(const Tensor<T>& t) {
  return grad_enabled() && t.requires_grad();
}

template <typename T, typename Backward>
void record(Tensor<T>& out, OpKind op, std::vector<Tensor<T>> parents, Backward&& backward) {
  bool any = false;
  for (const auto& p : parents) any = any || want_grad(p);
  if (!any) return;
  out.set_requires_grad(true);
  out.node = std::make_shared<Node<T>>();
  out.node->op = op;
  out.node->seq = c2w2c::detail::next_node_seq();
  out.node->parents = std::move(parents);
  out.node->backward = std::forward<Backward>(backward);
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

}  // namespace detail

/// Matrix product. a is [m x k] or a vector [k] (treated as one row, giving a
/// vector result [n]); b is [k x n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (b.rank() != 2) throw DimensionError("matmul: right operand must be rank 2, got " + b.shape_string());
  const bool vec = a.rank() == 1;
  if (!vec && a.rank() != 2) throw DimensionError("matmul: left operand must be rank 1 or 2, got " + a.shape_string());
  const int m = vec ? 1 : a.dim(0);
  const int k = vec ? a.dim(0) : a.dim(1);
  if (k != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree " + a.shape_string() + " vs " + b.shape_string());
  }
  const int n = b.dim(1);

  Tensor<T> out = Tensor<T>::zeros(vec ? std::vector<int>{n} : std::vector<int>{m, n});
  {
    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& od = out.mutable_data();
    for (int i = 0; i < m; ++i) {
      for (int kk = 0; kk < k; ++kk) {
        const T av = ad[static_cast<std::size_t>(i) * k + kk];
        if (av == T(0)) continue;
        const std::size_t brow = static_cast<std::size_t>(kk) * n;
        const std::size_t orow = static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) od[orow + j] += av * bd[brow + j];
      }
    }
  }

  detail::record(out, OpKind::matmul, {a, b},
                 [m, k, n, ad = a.data(), bd = b.data()](const std::vector<T>& g, const std::vector<std::vector<T>*>& pg) {
                   if (pg[0]) {  // dA = G . B^T
                     auto& ga = *pg[0];
                     for (int i = 0; i < m; ++i)
                       for (int kk = 0; kk < k; ++kk) {
                         T acc = 0;
                         const std::size_t grow = static_cast<std::size_t>(i) * n;
                         const std::size_t brow = static_cast<std::size_t>(kk) * n;
                         for (int j = 0; j < n; ++j) acc += g[grow + j] * bd[brow + j];
                         ga[static_cast<std::size_t>(i) * k + kk] += acc;
                       }
                   }
                   if (pg[1]) {  // dB = A^T . G
                     auto& gb = *pg[1];
                     for (int kk = 0; kk < k; ++kk)
                       for (int i = 0; i < m; ++i) {
                         const T av = ad[static_cast<std::size_t>(i) * k + kk];
                         if (av == T(0)) continue;
                         const std::size_t grow = static_cast<std::size_t>(i) * n;
                         const std::size_t brow = static_cast<std::size_t>(kk) * n;
                         for (int j = 0; j < n; ++j) gb[brow + j] += av * g[grow + j];
                       }
                   }
                 });
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto& od = out.mutable_data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = a.data()[i] + b.data()[i];
  detail::record(out, OpKind::add, {a, b}, [](const std::vector<T>& g, const std::vector<std::vector<T>*>& pg) {
    for (int p = 0; p < 2; ++p)
      if (pg[p])
        for (std::size_t i = 0; i < g.size(); ++i) (*pg[p])[i] += g[i];
  });
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto& od = out.mutable_data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = a.data()[i] - b.data()[i];
  detail::record(out, OpKind::sub, {a, b}, [](const std::vector<T>& g, const std::vector<std::vector<T>*>& pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
    if (pg[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] -= g[i];
  });
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto& od = out.mutable_data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = a.data()[i] * b.data()[i];
  detail::record(out, OpKind::mul, {a, b},
                 [ad = a.data(), bd = b.data()](const std::vector<T>& g, const std::vector<std::vector<T>*>& pg) {
                   if (pg[0])
                     for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * bd[i];
                   if (pg[1])
                     for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] += g[i] * ad[i];
                 });
  return out;
}

/// Scalar broadcast multiply.
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto& od = out.mutable_data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = x.data()[i] * factor;
  detail::record(out, OpKind::scale, {x}, [factor](const std::vector<T>& g, const std::vector<std::vector<T>*>& pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * factor;
  });
  return out;
}

/// Scalar broadcast add.
template <typename T>
Tensor<T> shift(const Tensor<T>& x, T constant) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto& od = out.mutable_data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = x.data()[i] + constant;
  detail::record(out, OpKind::shift, {x}, [](const std::vector<T>& g, const std::vector<std::vector<T>*>& pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
  });
  return out;
}

template <typename T>
Tensor<T> one_minus(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto& od = out.mutable_data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = T(1) - x.data()[i];
  detail::record(out, OpKind::one_minus, {x}, [](const std::vector<T>& g, const std::vector<std::vector<T>*>& pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] -= g[i];
  });
  return out;
}

template <typename T>
Tensor<T> tanh_(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto& od = out.mutable_data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = std::tanh(x.data()[i]);
  detail::record(out, OpKind::tanh_op, {x}, [vals = out.data()](const std::vector<T>& g, const std::vector<std::vector<T>*>& pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * (T(1) - vals[i] * vals[i]);
  });
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto& od = out.mutable_data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = T(1) / (T(1) + std::exp(-x.data()[i]));
  detail::record(out, OpKind::sigmoid_op, {x},
                 [vals = out.data()](const std::vector<T>& g, const std::vector<std::vector<T>*>& pg) {
                   if (pg[0])
                     for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * vals[i] * (T(1) - vals[i]);
                 });
  return out;
}

/// Softmax over a vector, computed with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 1) throw DimensionError("softmax: expects a vector, got " + logits.shape_string());
  if (logits.size() == 0) throw DimensionError("softmax: empty input");
  Tensor<T> out = Tensor<T>::zeros(logits.shape());
  {
    const auto& xd = logits.data();
    auto& od = out.mutable_data();
    T mx = xd[0];
    for (T v : xd) mx = std::max(mx, v);
    T denom = 0;
    for (std::size_t i = 0; i < xd.size(); ++i) {
      od[i] = std::exp(xd[i] - mx);
      denom += od[i];
    }
    for (auto& v : od) v /= denom;
  }
  detail::record(out, OpKind::softmax, {logits},
                 [p = out.data()](const std::vector<T>& g, const std::vector<std::vector<T>*>& pg) {
                   if (!pg[0]) return;
                   T dot = 0;
                   for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * p[i];
                   for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += p[i] * (g[i] - dot);
                 });
  return out;
}

/// Elementwise maximum. On exact ties the gradient goes to the first operand.
template <typename T>
Tensor<T> pairwise_max(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "pairwise_max");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto& od = out.mutable_data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = std::max(a.data()[i], b.data()[i]);
  detail::record(out, OpKind::pairwise_max, {a, b},
                 [ad = a.data(), bd = b.data()](const std::vector<T>& g, const std::vector<std::vector<T>*>& pg) {
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     const bool first_wins = ad[i] >= bd[i];
                     if (first_wins && pg[0]) (*pg[0])[i] += g[i];
                     if (!first_wins && pg[1]) (*pg[1])[i] += g[i];
                   }
                 });
  return out;
}

/// Row copy from an embedding table [v x d]; the gradient accumulates into the
/// indexed row only.
template <typename T>
Tensor<T> lookup(const Tensor<T>& table, int index) {
  if (table.rank() != 2) throw DimensionError("lookup: table must be rank 2, got " + table.shape_string());
  const int v = table.dim(0);
  const int d = table.dim(1);
  if (index < 0 || index >= v) {
    throw IndexError("lookup: index " + std::to_string(index) + " out of range for table with " + std::to_string(v) +
                     " rows");
  }
  Tensor<T> out = Tensor<T>::zeros({d});
  auto& od = out.mutable_data();
  const std::size_t base = static_cast<std::size_t>(index) * d;
  for (int j = 0; j < d; ++j) od[j] = table.data()[base + j];
  detail::record(out, OpKind::lookup, {table}, [base, d](const std::vector<T>& g, const std::vector<std::vector<T>*>& pg) {
    if (pg[0])
      for (int j = 0; j < d; ++j) (*pg[0])[base + j] += g[j];
  });
  return out;
}

/// Contiguous range of a vector.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int offset, int length) {
  if (x.rank() != 1) throw DimensionError("slice: expects a vector, got " + x.shape_string());
  if (offset < 0 || length <= 0 || offset + length > x.dim(0)) {
    throw DimensionError("slice: range [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                         ") invalid for " + x.shape_string());
  }
  Tensor<T> out = Tensor<T>::zeros({length});
  auto& od = out.mutable_data();
  for (int j = 0; j < length; ++j) od[j] = x.data()[static_cast<std::size_t>(offset) + j];
  detail::record(out, OpKind::slice, {x}, [offset, length](const std::vector<T>& g, const std::vector<std::vector<T>*>& pg) {
    if (pg[0])
      for (int j = 0; j < length; ++j) (*pg[0])[static_cast<std::size_t>(offset) + j] += g[j];
  });
  return out;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 1 || b.rank() != 1) {
    throw DimensionError("concat: expects vectors, got " + a.shape_string() + " and " + b.shape_string());
  }
  const int na = a.dim(0);
  const int nb = b.dim(0);
  Tensor<T> out = Tensor<T>::zeros({na + nb});
  auto& od = out.mutable_data();
  for (int j = 0; j < na; ++j) od[j] = a.data()[j];
  for (int j = 0; j < nb; ++j) od[na + j] = b.data()[j];
  detail::record(out, OpKind::concat, {a, b}, [na, nb](const std::vector<T>& g, const std::vector<std::vector<T>*>& pg) {
    if (pg[0])
      for (int j = 0; j < na; ++j) (*pg[0])[j] += g[j];
    if (pg[1])
      for (int j = 0; j < nb; ++j) (*pg[1])[j] += g[static_cast<std::size_t>(na) + j];
  });
  return out;
}

/// Sum of all elements, as a scalar tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros({});
  T acc = 0;
  for (T v : x.data()) acc += v;
  out.mutable_data()[0] = acc;
  detail::record(out, OpKind::sum, {x}, [](const std::vector<T>& g, const std::vector<std::vector<T>*>& pg) {
    if (pg[0])
      for (auto& v : *pg[0]) v += g[0];
  });
  return out;
}

/// Negative log-likelihood -ln p[target] of a categorical distribution.
///
/// When the input is the live output of softmax(), the op fuses with it: the
/// value is computed from the logits via log-sum-exp and the gradient written
/// straight into the logits as p - onehot(target), so an underflowed
/// probability never reaches ln().
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& probabilities, int target) {
  if (probabilities.rank() != 1) {
    throw DimensionError("cross_entropy: expects a probability vector, got " + probabilities.shape_string());
  }
  const int n = probabilities.dim(0);
  if (target < 0 || target >= n) {
    throw IndexError("cross_entropy: target " + std::to_string(target) + " out of range for " + std::to_string(n) +
                     " classes");
  }

  if (probabilities.node && probabilities.node->op == OpKind::softmax) {
    const Tensor<T>& logits = probabilities.node->parents[0];
    const auto& ld = logits.data();
    T mx = ld[0];
    for (T v : ld) mx = std::max(mx, v);
    T denom = 0;
    for (T v : ld) denom += std::exp(v - mx);
    Tensor<T> out = Tensor<T>::zeros({});
    out.mutable_data()[0] = std::log(denom) + mx - ld[static_cast<std::size_t>(target)];
    detail::record(out, OpKind::cross_entropy, {logits},
                   [p = probabilities.data(), target](const std::vector<T>& g, const std::vector<std::vector<T>*>& pg) {
                     if (!pg[0]) return;
                     for (std::size_t i = 0; i < p.size(); ++i) {
                       (*pg[0])[i] += g[0] * (p[i] - (static_cast<int>(i) == target ? T(1) : T(0)));
                     }
                   });
    return out;
  }

  Tensor<T> out = Tensor<T>::zeros({});
  const T p_t = probabilities.data()[static_cast<std::size_t>(target)];
  out.mutable_data()[0] = -std::log(p_t);
  detail::record(out, OpKind::cross_entropy, {probabilities},
                 [p_t, target](const std::vector<T>& g, const std::vector<std::vector<T>*>& pg) {
                   if (pg[0]) (*pg[0])[static_cast<std::size_t>(target)] += g[0] * (T(-1) / p_t);
                 });
  return out;
}

/// Walks the graph under `root` in creation order and reports the first
/// tensor holding a non-finite value, if any. Used by the training loop's
/// abort diagnostic.
template <typename T>
std::optional<std::string> first_nonfinite(const Tensor<T>& root) {
  struct Entry {
    std::uint64_t seq;
    const Tensor<T>* t;
  };
  std::vector<Tensor<T>> all;
  std::vector<const Node<T>*> pending;
  std::unordered_set<const void*> seen;
  all.push_back(root);
  seen.insert(root.id());
  if (root.node) pending.push_back(root.node.get());
  std::unordered_set<const Node<T>*> visited(pending.begin(), pending.end());
  while (!pending.empty()) {
    const Node<T>* n = pending.back();
    pending.pop_back();
    for (const Tensor<T>& p : n->parents) {
      if (seen.insert(p.id()).second) all.push_back(p);
      if (p.node && visited.insert(p.node.get()).second) pending.push_back(p.node.get());
    }
  }
  std::sort(all.begin(), all.end(),
            [](const Tensor<T>& a, const Tensor<T>& b) { return (a.node ? a.node->seq : 0) < (b.node ? b.node->seq : 0); });
  for (const Tensor<T>& t : all) {
    for (T v : t.data()) {
      if (!std::isfinite(v)) {
        return std::string(t.node ? op_name(t.node->op) : "leaf") + " output " + t.shape_string();
      }
    }
  }
  return std::nullopt;
}

}  // namespace c2w2c::ops
