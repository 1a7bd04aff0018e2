#pragma once

// Independent reference computations the test suites check the library
// against. Nothing here may call back into the implementation path under
// test: gradients come from central finite differences, recurrences from
// scalar loops over raw parameter data, probabilities from direct products.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "c2w2c/model.hpp"
#include "c2w2c/tensor.hpp"

namespace oracles {

// Central-difference error model at eps=1e-5 and loss values of a few nats:
// roundoff ~1e-10, truncation ~1e-9. Gradients are accepted when they agree
// to the relative tolerance, or absolutely within kFdAbsFloor, which sits
// well above that noise and far below any plausible gradient-rule bug.
inline constexpr double kFdEps = 1e-5;
inline constexpr double kFdAbsFloor = 5e-8;

inline bool grad_close(double analytic, double numeric, double rel_tol) {
  const double err = std::abs(analytic - numeric);
  if (err <= kFdAbsFloor) return true;
  return err <= rel_tol * std::max(std::abs(analytic), std::abs(numeric));
}

/// Central finite differences of `loss` with respect to every entry of `t`,
/// checked against `analytic`. Returns the number of failing entries and
/// reports the worst offender through the out-parameters.
struct FdReport {
  std::size_t failures = 0;
  std::size_t checked = 0;
  double worst_abs_err = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t worst_index = 0;
};

inline FdReport check_gradient_fd(c2w2c::Tensor<double>& t, const std::vector<double>& analytic,
                                  const std::function<double()>& loss, double rel_tol = 1e-4, double eps = kFdEps) {
  FdReport rep;
  auto& data = t.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + eps;
    const double up = loss();
    data[i] = saved - eps;
    const double down = loss();
    data[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    ++rep.checked;
    if (!grad_close(analytic[i], numeric, rel_tol)) {
      ++rep.failures;
      const double err = std::abs(analytic[i] - numeric);
      if (err > rep.worst_abs_err) {
        rep.worst_abs_err = err;
        rep.worst_analytic = analytic[i];
        rep.worst_numeric = numeric;
        rep.worst_index = i;
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Scalar recurrence references (plain loops over raw parameter data)

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// x.M for a row vector, reading the matrix row-major.
inline std::vector<double> vec_mat(const std::vector<double>& x, const c2w2c::Tensor<double>& m) {
  const int rows = m.dim(0);
  const int cols = m.dim(1);
  std::vector<double> out(static_cast<std::size_t>(cols), 0.0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      out[static_cast<std::size_t>(c)] += x[static_cast<std::size_t>(r)] * m.data()[static_cast<std::size_t>(r) * cols + c];
    }
  }
  return out;
}

struct ScalarLstmState {
  std::vector<double> h;
  std::vector<double> c;
};

/// One LSTM step evaluated entry by entry, gate order (i, f, g, o).
inline ScalarLstmState scalar_lstm_step(const c2w2c::LstmCellParams<double>& cell, const std::vector<double>& x,
                                        const ScalarLstmState& prev) {
  const int h = cell.hidden_size;
  std::vector<double> pre = vec_mat(x, cell.w_x);
  const std::vector<double> hh = vec_mat(prev.h, cell.w_h);
  for (int j = 0; j < 4 * h; ++j) pre[static_cast<std::size_t>(j)] += hh[static_cast<std::size_t>(j)] + cell.b.data()[static_cast<std::size_t>(j)];
  ScalarLstmState next{std::vector<double>(static_cast<std::size_t>(h)), std::vector<double>(static_cast<std::size_t>(h))};
  for (int j = 0; j < h; ++j) {
    const double gi = sigmoid(pre[static_cast<std::size_t>(j)]);
    const double gf = sigmoid(pre[static_cast<std::size_t>(h + j)]);
    const double gg = std::tanh(pre[static_cast<std::size_t>(2 * h + j)]);
    const double go = sigmoid(pre[static_cast<std::size_t>(3 * h + j)]);
    next.c[static_cast<std::size_t>(j)] = gf * prev.c[static_cast<std::size_t>(j)] + gi * gg;
    next.h[static_cast<std::size_t>(j)] = go * std::tanh(next.c[static_cast<std::size_t>(j)]);
  }
  return next;
}

/// Character probabilities of one decoder step, evaluated with scalar loops
/// straight from the printed recurrence and readout.
struct ScalarDecoderStep {
  std::vector<double> h;
  std::vector<double> probs;
};

inline ScalarDecoderStep scalar_w2c_step(const c2w2c::W2CParams<double>& p, const std::vector<double>& h_prev,
                                         const std::vector<double>& context, int prev_char) {
  const int d_h = p.u_z.dim(0);
  const int d_c = p.w_z.dim(0);
  std::vector<double> e(static_cast<std::size_t>(d_c), 0.0);
  if (prev_char != c2w2c::kDecoderStart) {
    for (int j = 0; j < d_c; ++j) e[static_cast<std::size_t>(j)] = p.char_table.data()[static_cast<std::size_t>(prev_char) * d_c + j];
  }
  auto add3 = [](std::vector<double> a, const std::vector<double>& b, const std::vector<double>& c) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i] + c[i];
    return a;
  };
  std::vector<double> z = add3(vec_mat(e, p.w_z), vec_mat(h_prev, p.u_z), vec_mat(context, p.c_z));
  std::vector<double> r = add3(vec_mat(e, p.w_r), vec_mat(h_prev, p.u_r), vec_mat(context, p.c_r));
  for (auto& v : z) v = sigmoid(v);
  for (auto& v : r) v = sigmoid(v);
  std::vector<double> inner = vec_mat(h_prev, p.u_h);
  const std::vector<double> ch = vec_mat(context, p.c_h);
  for (int j = 0; j < d_h; ++j) inner[static_cast<std::size_t>(j)] = r[static_cast<std::size_t>(j)] * (inner[static_cast<std::size_t>(j)] + ch[static_cast<std::size_t>(j)]);
  std::vector<double> h_cand = vec_mat(e, p.w_h);
  for (int j = 0; j < d_h; ++j) h_cand[static_cast<std::size_t>(j)] = std::tanh(h_cand[static_cast<std::size_t>(j)] + inner[static_cast<std::size_t>(j)]);
  std::vector<double> h(static_cast<std::size_t>(d_h));
  for (int j = 0; j < d_h; ++j) {
    h[static_cast<std::size_t>(j)] = z[static_cast<std::size_t>(j)] * h_prev[static_cast<std::size_t>(j)] +
                                     (1.0 - z[static_cast<std::size_t>(j)]) * h_cand[static_cast<std::size_t>(j)];
  }

  std::vector<double> s1 = add3(vec_mat(h, p.o1_h), vec_mat(e, p.o1_e), vec_mat(context, p.o1_c));
  std::vector<double> s2 = add3(vec_mat(h, p.o2_h), vec_mat(e, p.o2_e), vec_mat(context, p.o2_c));
  for (int j = 0; j < d_c; ++j) {
    s1[static_cast<std::size_t>(j)] += p.maxout_b.data()[static_cast<std::size_t>(j)];
    s2[static_cast<std::size_t>(j)] += p.maxout_b.data()[static_cast<std::size_t>(j)];
    s1[static_cast<std::size_t>(j)] = std::max(s1[static_cast<std::size_t>(j)], s2[static_cast<std::size_t>(j)]);
  }
  std::vector<double> logits = vec_mat(s1, p.out_proj);
  for (int j = 0; j < p.vocab_size; ++j) logits[static_cast<std::size_t>(j)] += p.out_b.data()[static_cast<std::size_t>(j)];
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double denom = 0.0;
  for (auto& v : logits) {
    v = std::exp(v - mx);
    denom += v;
  }
  for (auto& v : logits) v /= denom;
  return {std::move(h), std::move(logits)};
}

/// Word probability as the direct product of its character probabilities
/// (with the EOW step when the word fits the budget), teacher forced.
inline double scalar_word_probability(const c2w2c::W2CParams<double>& p, const std::vector<double>& context,
                                      const c2w2c::EncodedWord& target) {
  std::vector<double> h = vec_mat(context, p.v);
  for (auto& v : h) v = std::tanh(v);
  std::vector<int> targets(target.char_ids.begin(), target.char_ids.begin() + target.true_length);
  if (target.has_eow()) targets.push_back(c2w2c::CharVocab::kEow);
  double prob = 1.0;
  int prev = c2w2c::kDecoderStart;
  for (int tgt : targets) {
    ScalarDecoderStep step = scalar_w2c_step(p, h, context, prev);
    prob *= step.probs[static_cast<std::size_t>(tgt)];
    h = step.h;
    prev = tgt;
  }
  return prob;
}

/// One bias-corrected Adam update for a single coordinate, starting from
/// zero moments at step 1.
inline double adam_first_update(double gradient, double lr, double beta1, double beta2, double eps) {
  const double m = (1.0 - beta1) * gradient;
  const double v = (1.0 - beta2) * gradient * gradient;
  const double m_hat = m / (1.0 - beta1);
  const double v_hat = v / (1.0 - beta2);
  return -lr * m_hat / (std::sqrt(v_hat) + eps);
}

}  // namespace oracles
