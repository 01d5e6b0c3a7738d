#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pacq/common/errors.hpp"
#include "pacq/common/rng.hpp"

namespace pacq::num {

// All tensors are dense row-major rank-2 [rows x cols] of 64-bit floats;
// scalars are [1 x 1]. Values must stay finite: every op checks its output
// and throws NumericError instead of propagating NaN/Inf.
struct TensorData {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;
  std::vector<double> grad;  // allocated on first accumulation
  bool requires_grad = false;

  std::size_t size() const { return values.size(); }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor full(int rows, int cols, double value, bool requires_grad = false);
  static Tensor from(std::vector<double> values, int rows, int cols,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // Uniform in [-limit, limit] with limit = sqrt(6 / (fan_in + fan_out)).
  static Tensor xavier_uniform(int rows, int cols, Rng& rng, bool requires_grad = true);

  bool defined() const { return static_cast<bool>(d_); }
  int rows() const { return d_->rows; }
  int cols() const { return d_->cols; }
  std::size_t size() const { return d_->values.size(); }
  std::vector<int> shape() const { return {d_->rows, d_->cols}; }

  double at(int i, int j) const { return d_->values[static_cast<std::size_t>(i) * d_->cols + j]; }
  double& at(int i, int j) { return d_->values[static_cast<std::size_t>(i) * d_->cols + j]; }
  double item() const;

  const std::vector<double>& values() const { return d_->values; }
  std::vector<double>& values() { return d_->values; }
  const std::vector<double>& grad() const { return d_->grad; }
  bool has_grad() const { return !d_->grad.empty(); }
  double grad_at(int i, int j) const {
    return d_->grad[static_cast<std::size_t>(i) * d_->cols + j];
  }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool rg) { d_->requires_grad = rg; }
  void zero_grad() {
    if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
  }

  std::shared_ptr<TensorData> data_ptr() const { return d_; }

 private:
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData> d_;

  friend Tensor wrap(std::shared_ptr<TensorData> d);
};

Tensor wrap(std::shared_ptr<TensorData> d);

// Ordered record of primitive ops; replayed in reverse by backward().
// Single-threaded; independent tapes may run on independent threads.
class Tape {
 public:
  void record(std::shared_ptr<TensorData> output, std::function<void()> backward_fn) {
    outputs_.push_back(std::move(output));
    ops_.push_back(std::move(backward_fn));
  }
  std::size_t size() const { return ops_.size(); }
  void clear() {
    ops_.clear();
    outputs_.clear();
  }

  // Zeroes the grads of every op output on this tape. Leaf tensors (user
  // created parameters) are untouched, so their grads accumulate across
  // backward() calls.
  void zero_output_grads() {
    for (auto& o : outputs_)
      if (!o->grad.empty()) std::fill(o->grad.begin(), o->grad.end(), 0.0);
  }

  // Replays adjoints of all recorded ops in reverse order.
  void replay_backward() {
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> ops_;
  std::vector<std::shared_ptr<TensorData>> outputs_;
};

// Thread-local active tape. Ops record adjoints only while a tape is active
// and some input requires grad; otherwise they are pure computations.
Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Seeds d(loss)/d(loss) = 1 and replays the active tape in reverse, adding
// into .grad of every tensor that requires grad. Calling again without
// clearing grads accumulates.
void backward(const Tensor& loss);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor logistic(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor normal_cdf(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);
Tensor clamp(const Tensor& a, double lo, double hi);

// ---- broadcast ----
Tensor add_rowvec(const Tensor& a, const Tensor& v);  // v is [1 x cols]
Tensor mul_rowvec(const Tensor& a, const Tensor& v);

// ---- matrix ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---- reductions / shape ----
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor sum_cols(const Tensor& a);  // [r x c] -> [r x 1]
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& a, const std::vector<int>& indices);
Tensor select_cols_per_row(const Tensor& a, const std::vector<int>& col_index);
Tensor reshape(const Tensor& a, int rows, int cols);

// ---- softmax family ----
// Shared column mask; masked entries are exactly 0 in the output.
Tensor masked_softmax(const Tensor& logits, const std::vector<std::uint8_t>& mask);
// Per-row masks, same semantics.
Tensor masked_softmax_rows(const Tensor& logits, const std::vector<std::uint8_t>& masks);
// Per-row masked log-softmax; masked entries are set to exactly 0 and carry
// no gradient (callers must only consume legal entries).
Tensor masked_log_softmax_rows(const Tensor& logits, const std::vector<std::uint8_t>& masks);

// ---- fused neural-net primitives ----
// Row-wise layer normalization: y = (x - mean) / sqrt(var + eps).
Tensor layernorm_rows(const Tensor& x, double eps = 1e-5);

// Multi-head self-attention over B stacked sequences of T tokens each
// (inputs are [B*T x d]). legal[b*T + t] marks tokens that may be attended
// to; every query row attends the legal keys of its own sequence. Rows of
// sequences with zero legal keys are not permitted.
Tensor masked_mha(const Tensor& q, const Tensor& k, const Tensor& v,
                  const std::vector<std::uint8_t>& legal, int batch, int seq_len,
                  int n_heads);

// ---- optimizer ----
class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  void step();
  void zero_grad();
  // Scales gradients so their global L2 norm is at most max_norm.
  void clip_grad_norm(double max_norm);

  const std::vector<Tensor>& params() const { return params_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long step_count_ = 0;
};

}  // namespace pacq::num
