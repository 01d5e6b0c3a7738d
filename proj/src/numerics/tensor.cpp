#include "pacq/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace pacq::num {

namespace {

thread_local Tape* g_active_tape = nullptr;

void check_finite(const TensorData& t, const char* op) {
  for (double v : t.values) {
    if (!std::isfinite(v))
      throw NumericError(std::string("non-finite value produced by op '") + op + "'");
  }
}

std::shared_ptr<TensorData> make_data(int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw ShapeError("tensor dimensions must be positive");
  auto d = std::make_shared<TensorData>();
  d->rows = rows;
  d->cols = cols;
  d->values.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  return d;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch");
}

bool want_grad(const Tensor& a) { return g_active_tape && a.requires_grad(); }

// ---- raw matmul kernels (accumulating) ----

// C[m x n] += A[m x k] * B[k x n]
void mm_nn(const double* A, const double* B, double* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* Ai = A + static_cast<std::size_t>(i) * k;
    double* Ci = C + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      double a = Ai[p];
      if (a == 0.0) continue;
      const double* Bp = B + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) Ci[j] += a * Bp[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T
void mm_nt(const double* A, const double* B, double* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* Ai = A + static_cast<std::size_t>(i) * k;
    double* Ci = C + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* Bj = B + static_cast<std::size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += Ai[p] * Bj[p];
      Ci[j] += s;
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
void mm_tn(const double* A, const double* B, double* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* Ai = A + static_cast<std::size_t>(i) * k;
    const double* Bi = B + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      double a = Ai[p];
      if (a == 0.0) continue;
      double* Cp = C + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) Cp[j] += a * Bi[j];
    }
  }
}

double phi_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double phi_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

using UnaryFn = double (*)(double);
using UnaryDeriv = double (*)(double a, double c);  // a = input, c = output

Tensor unary_op(const Tensor& a, const char* name, UnaryFn f, UnaryDeriv deriv) {
  auto out = make_data(a.rows(), a.cols());
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->values[i] = f(av[i]);
  check_finite(*out, name);
  if (want_grad(a)) {
    out->requires_grad = true;
    auto ad = a.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, od, deriv]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      for (std::size_t i = 0; i < od->grad.size(); ++i)
        ad->grad[i] += od->grad[i] * deriv(ad->values[i], od->values[i]);
    });
  }
  return wrap(out);
}

}  // namespace

Tensor wrap(std::shared_ptr<TensorData> d) { return Tensor(std::move(d)); }

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  auto d = make_data(rows, cols);
  d->requires_grad = requires_grad;
  return wrap(d);
}

Tensor Tensor::full(int rows, int cols, double value, bool requires_grad) {
  auto d = make_data(rows, cols);
  std::fill(d->values.begin(), d->values.end(), value);
  d->requires_grad = requires_grad;
  return wrap(d);
}

Tensor Tensor::from(std::vector<double> values, int rows, int cols, bool requires_grad) {
  if (values.size() != static_cast<std::size_t>(rows) * cols)
    throw ShapeError("Tensor::from: values length does not match shape");
  auto d = std::make_shared<TensorData>();
  d->rows = rows;
  d->cols = cols;
  d->values = std::move(values);
  d->requires_grad = requires_grad;
  check_finite(*d, "from");
  return wrap(d);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({value}, 1, 1, requires_grad);
}

Tensor Tensor::xavier_uniform(int rows, int cols, Rng& rng, bool requires_grad) {
  auto d = make_data(rows, cols);
  double limit = std::sqrt(6.0 / (rows + cols));
  for (auto& v : d->values) v = rng.uniform(-limit, limit);
  d->requires_grad = requires_grad;
  return wrap(d);
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item(): tensor is not a scalar");
  return d_->values[0];
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

void backward(const Tensor& loss) {
  if (loss.size() != 1) throw ShapeError("backward: loss must be a scalar");
  Tape* tape = g_active_tape;
  if (!tape) throw NumericError("backward: no active tape");
  if (!loss.requires_grad())
    throw NumericError("backward: loss does not require grad (not produced on the tape?)");
  tape->zero_output_grads();
  loss.data_ptr()->ensure_grad();
  loss.data_ptr()->grad[0] = 1.0;
  tape->replay_backward();
}

// ---- elementwise binary ----

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto out = make_data(a.rows(), a.cols());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->values[i] = av[i] + bv[i];
  check_finite(*out, "add");
  if (want_grad(a) || want_grad(b)) {
    out->requires_grad = true;
    auto ad = a.data_ptr(), bd = b.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, bd, od]() {
      if (od->grad.empty()) return;
      if (ad->requires_grad) {
        ad->ensure_grad();
        for (std::size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i];
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        for (std::size_t i = 0; i < od->grad.size(); ++i) bd->grad[i] += od->grad[i];
      }
    });
  }
  return wrap(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto out = make_data(a.rows(), a.cols());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->values[i] = av[i] - bv[i];
  check_finite(*out, "sub");
  if (want_grad(a) || want_grad(b)) {
    out->requires_grad = true;
    auto ad = a.data_ptr(), bd = b.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, bd, od]() {
      if (od->grad.empty()) return;
      if (ad->requires_grad) {
        ad->ensure_grad();
        for (std::size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i];
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        for (std::size_t i = 0; i < od->grad.size(); ++i) bd->grad[i] -= od->grad[i];
      }
    });
  }
  return wrap(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto out = make_data(a.rows(), a.cols());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->values[i] = av[i] * bv[i];
  check_finite(*out, "mul");
  if (want_grad(a) || want_grad(b)) {
    out->requires_grad = true;
    auto ad = a.data_ptr(), bd = b.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, bd, od]() {
      if (od->grad.empty()) return;
      if (ad->requires_grad) {
        ad->ensure_grad();
        for (std::size_t i = 0; i < od->grad.size(); ++i)
          ad->grad[i] += od->grad[i] * bd->values[i];
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        for (std::size_t i = 0; i < od->grad.size(); ++i)
          bd->grad[i] += od->grad[i] * ad->values[i];
      }
    });
  }
  return wrap(out);
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  auto out = make_data(a.rows(), a.cols());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->values[i] = av[i] / bv[i];
  check_finite(*out, "div");
  if (want_grad(a) || want_grad(b)) {
    out->requires_grad = true;
    auto ad = a.data_ptr(), bd = b.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, bd, od]() {
      if (od->grad.empty()) return;
      if (ad->requires_grad) {
        ad->ensure_grad();
        for (std::size_t i = 0; i < od->grad.size(); ++i)
          ad->grad[i] += od->grad[i] / bd->values[i];
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        for (std::size_t i = 0; i < od->grad.size(); ++i)
          bd->grad[i] -= od->grad[i] * od->values[i] / bd->values[i];
      }
    });
  }
  return wrap(out);
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "minimum");
  auto out = make_data(a.rows(), a.cols());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->values[i] = std::min(av[i], bv[i]);
  check_finite(*out, "minimum");
  if (want_grad(a) || want_grad(b)) {
    out->requires_grad = true;
    auto ad = a.data_ptr(), bd = b.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, bd, od]() {
      if (od->grad.empty()) return;
      // ties route the gradient to a
      for (std::size_t i = 0; i < od->grad.size(); ++i) {
        bool take_a = ad->values[i] <= bd->values[i];
        if (take_a && ad->requires_grad) {
          ad->ensure_grad();
          ad->grad[i] += od->grad[i];
        } else if (!take_a && bd->requires_grad) {
          bd->ensure_grad();
          bd->grad[i] += od->grad[i];
        }
      }
    });
  }
  return wrap(out);
}

// ---- elementwise unary ----

Tensor neg(const Tensor& a) {
  return unary_op(a, "neg", [](double x) { return -x; },
                  [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double s) {
  auto out = make_data(a.rows(), a.cols());
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->values[i] = av[i] * s;
  check_finite(*out, "scale");
  if (want_grad(a)) {
    out->requires_grad = true;
    auto ad = a.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, od, s]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      for (std::size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i] * s;
    });
  }
  return wrap(out);
}

Tensor add_scalar(const Tensor& a, double s) {
  auto out = make_data(a.rows(), a.cols());
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->values[i] = av[i] + s;
  check_finite(*out, "add_scalar");
  if (want_grad(a)) {
    out->requires_grad = true;
    auto ad = a.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, od]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      for (std::size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i];
    });
  }
  return wrap(out);
}

Tensor exp(const Tensor& a) {
  return unary_op(a, "exp", [](double x) { return std::exp(x); },
                  [](double, double c) { return c; });
}

Tensor log(const Tensor& a) {
  return unary_op(a, "log", [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

Tensor tanh(const Tensor& a) {
  return unary_op(a, "tanh", [](double x) { return std::tanh(x); },
                  [](double, double c) { return 1.0 - c * c; });
}

Tensor logistic(const Tensor& a) {
  return unary_op(a, "logistic",
                  [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                                 : std::exp(x) / (1.0 + std::exp(x)); },
                  [](double, double c) { return c * (1.0 - c); });
}

Tensor softplus(const Tensor& a) {
  return unary_op(a, "softplus",
                  [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
                  [](double x, double) {
                    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                    : std::exp(x) / (1.0 + std::exp(x));
                  });
}

Tensor relu(const Tensor& a) {
  return unary_op(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary_op(a, "square", [](double x) { return x * x; },
                  [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
  return unary_op(a, "sqrt", [](double x) { return std::sqrt(x); },
                  [](double, double c) { return 0.5 / c; });
}

Tensor normal_cdf(const Tensor& a) {
  return unary_op(a, "normal_cdf", [](double x) { return phi_cdf(x); },
                  [](double x, double) { return phi_pdf(x); });
}

Tensor clamp_min(const Tensor& a, double lo) {
  auto out = make_data(a.rows(), a.cols());
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->values[i] = std::max(av[i], lo);
  check_finite(*out, "clamp_min");
  if (want_grad(a)) {
    out->requires_grad = true;
    auto ad = a.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, od, lo]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      for (std::size_t i = 0; i < od->grad.size(); ++i)
        if (ad->values[i] > lo) ad->grad[i] += od->grad[i];
    });
  }
  return wrap(out);
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  auto out = make_data(a.rows(), a.cols());
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->values[i] = std::clamp(av[i], lo, hi);
  check_finite(*out, "clamp");
  if (want_grad(a)) {
    out->requires_grad = true;
    auto ad = a.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, od, lo, hi]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      for (std::size_t i = 0; i < od->grad.size(); ++i)
        if (ad->values[i] > lo && ad->values[i] < hi) ad->grad[i] += od->grad[i];
    });
  }
  return wrap(out);
}

// ---- broadcast ----

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  if (v.rows() != 1 || v.cols() != a.cols())
    throw ShapeError("add_rowvec: v must be [1 x cols]");
  auto out = make_data(a.rows(), a.cols());
  const auto& av = a.values();
  const auto& vv = v.values();
  int c = a.cols();
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < c; ++j)
      out->values[static_cast<std::size_t>(i) * c + j] =
          av[static_cast<std::size_t>(i) * c + j] + vv[j];
  check_finite(*out, "add_rowvec");
  if (want_grad(a) || want_grad(v)) {
    out->requires_grad = true;
    auto ad = a.data_ptr(), vd = v.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, vd, od]() {
      if (od->grad.empty()) return;
      int rows = od->rows, cols = od->cols;
      if (ad->requires_grad) {
        ad->ensure_grad();
        for (std::size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i];
      }
      if (vd->requires_grad) {
        vd->ensure_grad();
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < cols; ++j)
            vd->grad[j] += od->grad[static_cast<std::size_t>(i) * cols + j];
      }
    });
  }
  return wrap(out);
}

Tensor mul_rowvec(const Tensor& a, const Tensor& v) {
  if (v.rows() != 1 || v.cols() != a.cols())
    throw ShapeError("mul_rowvec: v must be [1 x cols]");
  auto out = make_data(a.rows(), a.cols());
  const auto& av = a.values();
  const auto& vv = v.values();
  int c = a.cols();
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < c; ++j)
      out->values[static_cast<std::size_t>(i) * c + j] =
          av[static_cast<std::size_t>(i) * c + j] * vv[j];
  check_finite(*out, "mul_rowvec");
  if (want_grad(a) || want_grad(v)) {
    out->requires_grad = true;
    auto ad = a.data_ptr(), vd = v.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, vd, od]() {
      if (od->grad.empty()) return;
      int rows = od->rows, cols = od->cols;
      if (ad->requires_grad) {
        ad->ensure_grad();
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < cols; ++j)
            ad->grad[static_cast<std::size_t>(i) * cols + j] +=
                od->grad[static_cast<std::size_t>(i) * cols + j] * vd->values[j];
      }
      if (vd->requires_grad) {
        vd->ensure_grad();
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < cols; ++j)
            vd->grad[j] += od->grad[static_cast<std::size_t>(i) * cols + j] *
                           ad->values[static_cast<std::size_t>(i) * cols + j];
      }
    });
  }
  return wrap(out);
}

// ---- matrix ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions disagree");
  int m = a.rows(), k = a.cols(), n = b.cols();
  auto out = make_data(m, n);
  mm_nn(a.values().data(), b.values().data(), out->values.data(), m, k, n);
  check_finite(*out, "matmul");
  if (want_grad(a) || want_grad(b)) {
    out->requires_grad = true;
    auto ad = a.data_ptr(), bd = b.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, bd, od, m, k, n]() {
      if (od->grad.empty()) return;
      if (ad->requires_grad) {
        ad->ensure_grad();
        // dA += dC * B^T
        mm_nt(od->grad.data(), bd->values.data(), ad->grad.data(), m, n, k);
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        // dB += A^T * dC
        mm_tn(ad->values.data(), od->grad.data(), bd->grad.data(), m, k, n);
      }
    });
  }
  return wrap(out);
}

Tensor transpose(const Tensor& a) {
  int r = a.rows(), c = a.cols();
  auto out = make_data(c, r);
  const auto& av = a.values();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out->values[static_cast<std::size_t>(j) * r + i] =
          av[static_cast<std::size_t>(i) * c + j];
  if (want_grad(a)) {
    out->requires_grad = true;
    auto ad = a.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, od, r, c]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          ad->grad[static_cast<std::size_t>(i) * c + j] +=
              od->grad[static_cast<std::size_t>(j) * r + i];
    });
  }
  return wrap(out);
}

// ---- reductions / shape ----

Tensor sum_all(const Tensor& a) {
  auto out = make_data(1, 1);
  double s = 0.0;
  for (double v : a.values()) s += v;
  out->values[0] = s;
  check_finite(*out, "sum_all");
  if (want_grad(a)) {
    out->requires_grad = true;
    auto ad = a.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, od]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      double g = od->grad[0];
      for (auto& gv : ad->grad) gv += g;
    });
  }
  return wrap(out);
}

Tensor mean_all(const Tensor& a) {
  auto out = make_data(1, 1);
  double s = 0.0;
  for (double v : a.values()) s += v;
  double inv = 1.0 / static_cast<double>(a.size());
  out->values[0] = s * inv;
  check_finite(*out, "mean_all");
  if (want_grad(a)) {
    out->requires_grad = true;
    auto ad = a.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, od, inv]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      double g = od->grad[0] * inv;
      for (auto& gv : ad->grad) gv += g;
    });
  }
  return wrap(out);
}

Tensor sum_cols(const Tensor& a) {
  int r = a.rows(), c = a.cols();
  auto out = make_data(r, 1);
  const auto& av = a.values();
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += av[static_cast<std::size_t>(i) * c + j];
    out->values[i] = s;
  }
  check_finite(*out, "sum_cols");
  if (want_grad(a)) {
    out->requires_grad = true;
    auto ad = a.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, od, r, c]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      for (int i = 0; i < r; ++i) {
        double g = od->grad[i];
        for (int j = 0; j < c; ++j) ad->grad[static_cast<std::size_t>(i) * c + j] += g;
      }
    });
  }
  return wrap(out);
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  if (c0 < 0 || c1 > a.cols() || c0 >= c1) throw ShapeError("slice_cols: bad range");
  int r = a.rows(), c = a.cols(), w = c1 - c0;
  auto out = make_data(r, w);
  const auto& av = a.values();
  for (int i = 0; i < r; ++i)
    std::memcpy(&out->values[static_cast<std::size_t>(i) * w],
                &av[static_cast<std::size_t>(i) * c + c0], sizeof(double) * w);
  if (want_grad(a)) {
    out->requires_grad = true;
    auto ad = a.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, od, r, c, c0, w]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j)
          ad->grad[static_cast<std::size_t>(i) * c + c0 + j] +=
              od->grad[static_cast<std::size_t>(i) * w + j];
    });
  }
  return wrap(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  int r = parts[0].rows();
  int total = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw ShapeError("concat_cols: row mismatch");
    total += p.cols();
  }
  auto out = make_data(r, total);
  int off = 0;
  for (const auto& p : parts) {
    int c = p.cols();
    for (int i = 0; i < r; ++i)
      std::memcpy(&out->values[static_cast<std::size_t>(i) * total + off],
                  &p.values()[static_cast<std::size_t>(i) * c], sizeof(double) * c);
    off += c;
  }
  bool rg = false;
  for (const auto& p : parts) rg = rg || want_grad(p);
  if (rg) {
    out->requires_grad = true;
    std::vector<std::shared_ptr<TensorData>> pds;
    pds.reserve(parts.size());
    for (const auto& p : parts) pds.push_back(p.data_ptr());
    auto od = out;
    g_active_tape->record(out, [pds, od, r, total]() {
      if (od->grad.empty()) return;
      int off2 = 0;
      for (auto& pd : pds) {
        int c = pd->cols;
        if (pd->requires_grad) {
          pd->ensure_grad();
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
              pd->grad[static_cast<std::size_t>(i) * c + j] +=
                  od->grad[static_cast<std::size_t>(i) * total + off2 + j];
        }
        off2 += c;
      }
    });
  }
  return wrap(out);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  int c = parts[0].cols();
  int total = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw ShapeError("concat_rows: column mismatch");
    total += p.rows();
  }
  auto out = make_data(total, c);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::memcpy(&out->values[off], p.values().data(), sizeof(double) * p.size());
    off += p.size();
  }
  bool rg = false;
  for (const auto& p : parts) rg = rg || want_grad(p);
  if (rg) {
    out->requires_grad = true;
    std::vector<std::shared_ptr<TensorData>> pds;
    pds.reserve(parts.size());
    for (const auto& p : parts) pds.push_back(p.data_ptr());
    auto od = out;
    g_active_tape->record(out, [pds, od]() {
      if (od->grad.empty()) return;
      std::size_t off2 = 0;
      for (auto& pd : pds) {
        std::size_t n = pd->values.size();
        if (pd->requires_grad) {
          pd->ensure_grad();
          for (std::size_t i = 0; i < n; ++i) pd->grad[i] += od->grad[off2 + i];
        }
        off2 += n;
      }
    });
  }
  return wrap(out);
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& indices) {
  int c = a.cols();
  auto out = make_data(static_cast<int>(indices.size()), c);
  const auto& av = a.values();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    int idx = indices[i];
    if (idx < 0 || idx >= a.rows()) throw ShapeError("gather_rows: index out of range");
    std::memcpy(&out->values[i * c], &av[static_cast<std::size_t>(idx) * c],
                sizeof(double) * c);
  }
  if (want_grad(a)) {
    out->requires_grad = true;
    auto ad = a.data_ptr();
    auto od = out;
    auto idxs = indices;
    g_active_tape->record(out, [ad, od, idxs, c]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      for (std::size_t i = 0; i < idxs.size(); ++i)
        for (int j = 0; j < c; ++j)
          ad->grad[static_cast<std::size_t>(idxs[i]) * c + j] += od->grad[i * c + j];
    });
  }
  return wrap(out);
}

Tensor select_cols_per_row(const Tensor& a, const std::vector<int>& col_index) {
  int r = a.rows(), c = a.cols();
  if (static_cast<int>(col_index.size()) != r)
    throw ShapeError("select_cols_per_row: index length must equal rows");
  auto out = make_data(r, 1);
  const auto& av = a.values();
  for (int i = 0; i < r; ++i) {
    int j = col_index[i];
    if (j < 0 || j >= c) throw ShapeError("select_cols_per_row: index out of range");
    out->values[i] = av[static_cast<std::size_t>(i) * c + j];
  }
  if (want_grad(a)) {
    out->requires_grad = true;
    auto ad = a.data_ptr();
    auto od = out;
    auto idxs = col_index;
    g_active_tape->record(out, [ad, od, idxs, c]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      for (std::size_t i = 0; i < idxs.size(); ++i)
        ad->grad[i * c + idxs[i]] += od->grad[i];
    });
  }
  return wrap(out);
}

Tensor reshape(const Tensor& a, int rows, int cols) {
  if (static_cast<std::size_t>(rows) * cols != a.size())
    throw ShapeError("reshape: element count mismatch");
  auto out = make_data(rows, cols);
  out->values = a.values();
  if (want_grad(a)) {
    out->requires_grad = true;
    auto ad = a.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, od]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      for (std::size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i];
    });
  }
  return wrap(out);
}

// ---- softmax family ----

namespace {

// Softmax of one row restricted to legal columns; illegal outputs are 0.
void row_masked_softmax(const double* x, const std::uint8_t* legal, double* out, int c) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < c; ++j)
    if (legal[j] && x[j] > mx) mx = x[j];
  double z = 0.0;
  for (int j = 0; j < c; ++j) {
    if (legal[j]) {
      out[j] = std::exp(x[j] - mx);
      z += out[j];
    } else {
      out[j] = 0.0;
    }
  }
  for (int j = 0; j < c; ++j)
    if (legal[j]) out[j] /= z;
}

void record_softmax_backward(const Tensor& logits, std::shared_ptr<TensorData> out,
                             std::vector<std::uint8_t> legal_rows) {
  // legal_rows is an [r x c] mask (flattened)
  auto ad = logits.data_ptr();
  auto od = out;
  active_tape()->record(out, [ad, od, legal = std::move(legal_rows)]() {
    if (od->grad.empty()) return;
    ad->ensure_grad();
    int r = od->rows, c = od->cols;
    for (int i = 0; i < r; ++i) {
      const double* p = &od->values[static_cast<std::size_t>(i) * c];
      const double* g = &od->grad[static_cast<std::size_t>(i) * c];
      const std::uint8_t* lm = &legal[static_cast<std::size_t>(i) * c];
      double dot = 0.0;
      for (int j = 0; j < c; ++j)
        if (lm[j]) dot += p[j] * g[j];
      double* da = &ad->grad[static_cast<std::size_t>(i) * c];
      for (int j = 0; j < c; ++j)
        if (lm[j]) da[j] += p[j] * (g[j] - dot);
    }
  });
}

}  // namespace

Tensor masked_softmax(const Tensor& logits, const std::vector<std::uint8_t>& mask) {
  int r = logits.rows(), c = logits.cols();
  if (static_cast<int>(mask.size()) != c)
    throw ShapeError("masked_softmax: mask length must equal columns");
  bool any = false;
  for (auto m : mask) any = any || (m != 0);
  if (!any) throw NumericError("masked_softmax: degenerate row (all positions masked)");
  auto out = make_data(r, c);
  const auto& av = logits.values();
  for (int i = 0; i < r; ++i)
    row_masked_softmax(&av[static_cast<std::size_t>(i) * c], mask.data(),
                       &out->values[static_cast<std::size_t>(i) * c], c);
  check_finite(*out, "masked_softmax");
  if (want_grad(logits)) {
    out->requires_grad = true;
    std::vector<std::uint8_t> full(static_cast<std::size_t>(r) * c);
    for (int i = 0; i < r; ++i)
      std::memcpy(&full[static_cast<std::size_t>(i) * c], mask.data(), c);
    record_softmax_backward(logits, out, std::move(full));
  }
  return wrap(out);
}

Tensor masked_softmax_rows(const Tensor& logits, const std::vector<std::uint8_t>& masks) {
  int r = logits.rows(), c = logits.cols();
  if (masks.size() != static_cast<std::size_t>(r) * c)
    throw ShapeError("masked_softmax_rows: mask size must equal logits size");
  auto out = make_data(r, c);
  const auto& av = logits.values();
  for (int i = 0; i < r; ++i) {
    const std::uint8_t* lm = &masks[static_cast<std::size_t>(i) * c];
    bool any = false;
    for (int j = 0; j < c; ++j) any = any || (lm[j] != 0);
    if (!any)
      throw NumericError("masked_softmax_rows: degenerate row (all positions masked)");
    row_masked_softmax(&av[static_cast<std::size_t>(i) * c], lm,
                       &out->values[static_cast<std::size_t>(i) * c], c);
  }
  check_finite(*out, "masked_softmax_rows");
  if (want_grad(logits)) {
    out->requires_grad = true;
    record_softmax_backward(logits, out, masks);
  }
  return wrap(out);
}

Tensor masked_log_softmax_rows(const Tensor& logits, const std::vector<std::uint8_t>& masks) {
  int r = logits.rows(), c = logits.cols();
  if (masks.size() != static_cast<std::size_t>(r) * c)
    throw ShapeError("masked_log_softmax_rows: mask size must equal logits size");
  auto out = make_data(r, c);
  const auto& av = logits.values();
  for (int i = 0; i < r; ++i) {
    const std::uint8_t* lm = &masks[static_cast<std::size_t>(i) * c];
    const double* x = &av[static_cast<std::size_t>(i) * c];
    double* o = &out->values[static_cast<std::size_t>(i) * c];
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j)
      if (lm[j] && x[j] > mx) mx = x[j];
    if (mx == -std::numeric_limits<double>::infinity())
      throw NumericError("masked_log_softmax_rows: degenerate row");
    double z = 0.0;
    for (int j = 0; j < c; ++j)
      if (lm[j]) z += std::exp(x[j] - mx);
    double lz = std::log(z) + mx;
    for (int j = 0; j < c; ++j) o[j] = lm[j] ? x[j] - lz : 0.0;
  }
  check_finite(*out, "masked_log_softmax_rows");
  if (want_grad(logits)) {
    out->requires_grad = true;
    auto ad = logits.data_ptr();
    auto od = out;
    auto lm_copy = masks;
    g_active_tape->record(out, [ad, od, lm = std::move(lm_copy)]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      int r2 = od->rows, c2 = od->cols;
      for (int i = 0; i < r2; ++i) {
        const double* o = &od->values[static_cast<std::size_t>(i) * c2];
        const double* g = &od->grad[static_cast<std::size_t>(i) * c2];
        const std::uint8_t* m = &lm[static_cast<std::size_t>(i) * c2];
        double gsum = 0.0;
        for (int j = 0; j < c2; ++j)
          if (m[j]) gsum += g[j];
        double* da = &ad->grad[static_cast<std::size_t>(i) * c2];
        for (int j = 0; j < c2; ++j)
          if (m[j]) da[j] += g[j] - std::exp(o[j]) * gsum;
      }
    });
  }
  return wrap(out);
}

// ---- fused primitives ----

Tensor layernorm_rows(const Tensor& x, double eps) {
  int r = x.rows(), c = x.cols();
  auto out = make_data(r, c);
  auto inv_std = std::make_shared<std::vector<double>>(r);
  const auto& xv = x.values();
  for (int i = 0; i < r; ++i) {
    const double* row = &xv[static_cast<std::size_t>(i) * c];
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += row[j];
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= c;
    double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = inv;
    double* o = &out->values[static_cast<std::size_t>(i) * c];
    for (int j = 0; j < c; ++j) o[j] = (row[j] - mu) * inv;
  }
  check_finite(*out, "layernorm_rows");
  if (want_grad(x)) {
    out->requires_grad = true;
    auto ad = x.data_ptr();
    auto od = out;
    g_active_tape->record(out, [ad, od, inv_std]() {
      if (od->grad.empty()) return;
      ad->ensure_grad();
      int r2 = od->rows, c2 = od->cols;
      for (int i = 0; i < r2; ++i) {
        const double* y = &od->values[static_cast<std::size_t>(i) * c2];
        const double* g = &od->grad[static_cast<std::size_t>(i) * c2];
        double inv = (*inv_std)[i];
        double gmean = 0.0, gymean = 0.0;
        for (int j = 0; j < c2; ++j) {
          gmean += g[j];
          gymean += g[j] * y[j];
        }
        gmean /= c2;
        gymean /= c2;
        double* da = &ad->grad[static_cast<std::size_t>(i) * c2];
        for (int j = 0; j < c2; ++j) da[j] += inv * (g[j] - gmean - y[j] * gymean);
      }
    });
  }
  return wrap(out);
}

Tensor masked_mha(const Tensor& q, const Tensor& k, const Tensor& v,
                  const std::vector<std::uint8_t>& legal, int batch, int seq_len,
                  int n_heads) {
  int rows = batch * seq_len;
  int d = q.cols();
  if (q.rows() != rows || k.rows() != rows || v.rows() != rows || k.cols() != d ||
      v.cols() != d)
    throw ShapeError("masked_mha: inputs must all be [batch*seq_len x d]");
  if (static_cast<int>(legal.size()) != rows)
    throw ShapeError("masked_mha: legal mask must have batch*seq_len entries");
  if (d % n_heads != 0) throw ShapeError("masked_mha: d must be divisible by n_heads");
  int dh = d / n_heads;
  double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  for (int b = 0; b < batch; ++b) {
    bool any = false;
    for (int t = 0; t < seq_len; ++t) any = any || (legal[b * seq_len + t] != 0);
    if (!any) throw NumericError("masked_mha: sequence with no legal keys");
  }

  auto out = make_data(rows, d);
  // softmax weights kept for the backward pass: [batch x heads x T x T]
  auto probs = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(batch) * n_heads * seq_len * seq_len, 0.0);

  const auto& qv = q.values();
  const auto& kv = k.values();
  const auto& vv = v.values();
  std::vector<double> srow(seq_len);
  for (int b = 0; b < batch; ++b) {
    int base = b * seq_len;
    const std::uint8_t* lm = &legal[base];
    for (int h = 0; h < n_heads; ++h) {
      int hoff = h * dh;
      double* P = &(*probs)[((static_cast<std::size_t>(b) * n_heads + h) * seq_len) *
                            seq_len];
      for (int i = 0; i < seq_len; ++i) {
        const double* qi = &qv[static_cast<std::size_t>(base + i) * d + hoff];
        for (int j = 0; j < seq_len; ++j) {
          if (!lm[j]) {
            srow[j] = 0.0;
            continue;
          }
          const double* kj = &kv[static_cast<std::size_t>(base + j) * d + hoff];
          double s = 0.0;
          for (int e = 0; e < dh; ++e) s += qi[e] * kj[e];
          srow[j] = s * inv_scale;
        }
        row_masked_softmax(srow.data(), lm, &P[static_cast<std::size_t>(i) * seq_len],
                           seq_len);
        // attention-weighted sum of values
        double* oi = &out->values[static_cast<std::size_t>(base + i) * d + hoff];
        for (int j = 0; j < seq_len; ++j) {
          double p = P[static_cast<std::size_t>(i) * seq_len + j];
          if (p == 0.0) continue;
          const double* vj = &vv[static_cast<std::size_t>(base + j) * d + hoff];
          for (int e = 0; e < dh; ++e) oi[e] += p * vj[e];
        }
      }
    }
  }
  check_finite(*out, "masked_mha");

  if (want_grad(q) || want_grad(k) || want_grad(v)) {
    out->requires_grad = true;
    auto qd = q.data_ptr(), kd = k.data_ptr(), vd = v.data_ptr();
    auto od = out;
    auto legal_copy = legal;
    g_active_tape->record(out, [qd, kd, vd, od, probs, legal_copy, batch, seq_len,
                                n_heads, d, dh, inv_scale]() {
      if (od->grad.empty()) return;
      if (qd->requires_grad) qd->ensure_grad();
      if (kd->requires_grad) kd->ensure_grad();
      if (vd->requires_grad) vd->ensure_grad();
      std::vector<double> dP(static_cast<std::size_t>(seq_len) * seq_len);
      std::vector<double> dS(static_cast<std::size_t>(seq_len) * seq_len);
      for (int b = 0; b < batch; ++b) {
        int base = b * seq_len;
        const std::uint8_t* lm = &legal_copy[base];
        for (int h = 0; h < n_heads; ++h) {
          int hoff = h * dh;
          const double* P = &(*probs)[((static_cast<std::size_t>(b) * n_heads + h) *
                                       seq_len) *
                                      seq_len];
          // dP = dO * V^T (restricted to legal keys)
          for (int i = 0; i < seq_len; ++i) {
            const double* go = &od->grad[static_cast<std::size_t>(base + i) * d + hoff];
            for (int j = 0; j < seq_len; ++j) {
              if (!lm[j]) {
                dP[static_cast<std::size_t>(i) * seq_len + j] = 0.0;
                continue;
              }
              const double* vj = &vd->values[static_cast<std::size_t>(base + j) * d + hoff];
              double s = 0.0;
              for (int e = 0; e < dh; ++e) s += go[e] * vj[e];
              dP[static_cast<std::size_t>(i) * seq_len + j] = s;
            }
          }
          // dS via softmax jacobian
          for (int i = 0; i < seq_len; ++i) {
            double dot = 0.0;
            for (int j = 0; j < seq_len; ++j)
              dot += P[static_cast<std::size_t>(i) * seq_len + j] *
                     dP[static_cast<std::size_t>(i) * seq_len + j];
            for (int j = 0; j < seq_len; ++j) {
              double p = P[static_cast<std::size_t>(i) * seq_len + j];
              dS[static_cast<std::size_t>(i) * seq_len + j] =
                  p * (dP[static_cast<std::size_t>(i) * seq_len + j] - dot);
            }
          }
          // dV += P^T * dO ; dQ += dS * K * inv_scale ; dK += dS^T * Q * inv_scale
          if (vd->requires_grad) {
            for (int j = 0; j < seq_len; ++j) {
              if (!lm[j]) continue;
              double* dvj = &vd->grad[static_cast<std::size_t>(base + j) * d + hoff];
              for (int i = 0; i < seq_len; ++i) {
                double p = P[static_cast<std::size_t>(i) * seq_len + j];
                if (p == 0.0) continue;
                const double* go =
                    &od->grad[static_cast<std::size_t>(base + i) * d + hoff];
                for (int e = 0; e < dh; ++e) dvj[e] += p * go[e];
              }
            }
          }
          if (qd->requires_grad) {
            for (int i = 0; i < seq_len; ++i) {
              double* dqi = &qd->grad[static_cast<std::size_t>(base + i) * d + hoff];
              for (int j = 0; j < seq_len; ++j) {
                double s = dS[static_cast<std::size_t>(i) * seq_len + j] * inv_scale;
                if (s == 0.0) continue;
                const double* kj =
                    &kd->values[static_cast<std::size_t>(base + j) * d + hoff];
                for (int e = 0; e < dh; ++e) dqi[e] += s * kj[e];
              }
            }
          }
          if (kd->requires_grad) {
            for (int j = 0; j < seq_len; ++j) {
              double* dkj = &kd->grad[static_cast<std::size_t>(base + j) * d + hoff];
              for (int i = 0; i < seq_len; ++i) {
                double s = dS[static_cast<std::size_t>(i) * seq_len + j] * inv_scale;
                if (s == 0.0) continue;
                const double* qi =
                    &qd->values[static_cast<std::size_t>(base + i) * d + hoff];
                for (int e = 0; e < dh; ++e) dkj[e] += s * qi[e];
              }
            }
          }
        }
      }
    });
  }
  return wrap(out);
}

// ---- optimizer ----

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].size(), 0.0);
    v_[i].assign(params_[i].size(), 0.0);
  }
}

void Adam::step() {
  ++step_count_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    auto d = params_[p].data_ptr();
    if (d->grad.empty()) continue;
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < d->values.size(); ++i) {
      double g = d->grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      d->values[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::clip_grad_norm(double max_norm) {
  double total = 0.0;
  for (auto& p : params_) {
    auto d = p.data_ptr();
    for (double g : d->grad) total += g * g;
  }
  total = std::sqrt(total);
  if (total <= max_norm || total == 0.0) return;
  double s = max_norm / total;
  for (auto& p : params_) {
    auto d = p.data_ptr();
    for (auto& g : d->grad) g *= s;
  }
}

}  // namespace pacq::num
