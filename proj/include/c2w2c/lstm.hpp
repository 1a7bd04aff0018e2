#pragma once

#include <utility>

#include "c2w2c/ops.hpp"
#include "c2w2c/tensor.hpp"

namespace c2w2c {

/// One LSTM cell with packed gate weights: preactivations are
/// x.w_x + h.w_h + b, split into the four gates in (input, forget, cell,
/// output) order. The forget-gate bias slice is initialized to 1.
template <typename T>
struct LstmCellParams {
  int input_size = 0;
  int hidden_size = 0;
  Tensor<T> w_x;  // [input_size x 4*hidden_size]
  Tensor<T> w_h;  // [hidden_size x 4*hidden_size]
  Tensor<T> b;    // [4*hidden_size]

  LstmCellParams() = default;
  LstmCellParams(int in, int hidden)
      : input_size(in),
        hidden_size(hidden),
        w_x(Tensor<T>::zeros({in, 4 * hidden}, true)),
        w_h(Tensor<T>::zeros({hidden, 4 * hidden}, true)),
        b(Tensor<T>::zeros({4 * hidden}, true)) {}

  std::size_t param_count() const { return w_x.size() + w_h.size() + b.size(); }
};

template <typename T>
struct LstmState {
  Tensor<T> h;
  Tensor<T> c;
};

template <typename T>
LstmState<T> zero_lstm_state(const LstmCellParams<T>& cell) {
  return {Tensor<T>::zeros({cell.hidden_size}), Tensor<T>::zeros({cell.hidden_size})};
}

template <typename T>
LstmState<T> lstm_step(const LstmCellParams<T>& cell, const Tensor<T>& x, const LstmState<T>& prev) {
  using namespace ops;
  const int h = cell.hidden_size;
  Tensor<T> pre = add(add(matmul(x, cell.w_x), matmul(prev.h, cell.w_h)), cell.b);
  Tensor<T> gi = sigmoid(slice(pre, 0, h));
  Tensor<T> gf = sigmoid(slice(pre, h, h));
  Tensor<T> gg = tanh_(slice(pre, 2 * h, h));
  Tensor<T> go = sigmoid(slice(pre, 3 * h, h));
  Tensor<T> c_next = add(mul(gf, prev.c), mul(gi, gg));
  Tensor<T> h_next = mul(go, tanh_(c_next));
  return {h_next, c_next};
}

}  // namespace c2w2c
