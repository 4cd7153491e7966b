// SPDX-License-Identifier: Apache-2.0
#include "varleak/core/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "varleak/core/kernels.hpp"
#include "varleak/error.hpp"

namespace varleak::core {

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw UsageError("value() on an unbound Var");
  return tape_->value(id_);
}

void Tape::check_owned(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) throw UsageError("Var does not belong to this tape");
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr});
  return {this, nodes_.size() - 1};
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, recording_, {}, nullptr});
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& p) {
  const bool grad = recording_ && p.trainable;
  nodes_.push_back(Node{p.value, {}, grad, {}, grad ? &p : nullptr});
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, bool requires_grad, BackwardFn fn) {
  const bool grad = recording_ && requires_grad;
  nodes_.push_back(Node{std::move(value), {}, grad, grad ? std::move(fn) : BackwardFn{}, nullptr});
  return {this, nodes_.size() - 1};
}

bool Tape::requires_grad(Var v) const {
  check_owned(v);
  return nodes_[v.id()].requires_grad;
}

const Tensor& Tape::grad(Var v) const {
  check_owned(v);
  if (!swept_) throw UsageError("grad() before backward()");
  return nodes_[v.id()].grad;
}

Tensor& Tape::grad_buffer(Var v) {
  check_owned(v);
  Node& n = nodes_[v.id()];
  if (n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
  return n.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  check_owned(v);
  if (!nodes_[v.id()].requires_grad) return;
  Tensor& buf = grad_buffer(v);
  kernels::active().axpy(1.0, g.data(), buf.data(), buf.size());
}

void Tape::backward(Var loss) {
  if (loss.tape() != this || loss.id() >= nodes_.size()) {
    throw UsageError("backward() called without a recorded forward pass for this loss");
  }
  if (!recording_) throw UsageError("backward() on a tape that was not recording");
  if (swept_) throw UsageError("backward() called twice on one tape");
  if (nodes_[loss.id()].value.size() != 1) throw UsageError("backward() needs a scalar loss");
  swept_ = true;
  for (auto& n : nodes_) {
    if (n.requires_grad) n.grad = Tensor::zeros_like(n.value);
  }
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad.fill(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad) continue;
    if (n.backward) n.backward(*this, n.value, n.grad);
    if (n.param != nullptr) {
      kernels::active().axpy(1.0, n.grad.data(), n.param->grad.data(), n.grad.size());
    }
  }
}

namespace {

Tape& common_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw UsageError("operands live on different tapes");
  return *a.tape();
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                      shape_string(b.shape()));
  }
}

template <class Forward, class Derivative>
Var unary(Var a, Forward f, Derivative dydx) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return t.record(std::move(y), t.requires_grad(a), [a, dydx](Tape& tape, const Tensor& out, const Tensor& g) {
    const Tensor& xv = a.value();
    Tensor& ga = tape.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dydx(xv[i], out[i]);
  });
}

}  // namespace

Var matmul(Var a, Var w) {
  Tape& t = common_tape(a, w);
  const Tensor& av = a.value();
  const Tensor& wv = w.value();
  if (wv.rank() != 2) throw ConfigError("matmul: weight must be rank 2, got " + shape_string(wv.shape()));
  const std::size_t m = av.rows();
  const std::size_t k = av.cols();
  const std::size_t n = wv.dim(1);
  if (wv.dim(0) != k) {
    throw ConfigError("matmul: input has " + std::to_string(k) + " features, weight expects " +
                      std::to_string(wv.dim(0)));
  }
  Tensor out({m, n});
  kernels::active().gemm(m, n, k, av.data(), wv.data(), out.data(), false);
  const bool grad = t.requires_grad(a) || t.requires_grad(w);
  return t.record(std::move(out), grad, [a, w, m, n, k](Tape& tape, const Tensor&, const Tensor& g) {
    const auto& kern = kernels::active();
    if (tape.requires_grad(a)) {
      std::vector<double> wt(k * n);
      kernels::transpose(w.value().data(), k, n, wt.data());
      kern.gemm(m, k, n, g.data(), wt.data(), tape.grad_buffer(a).data(), true);
    }
    if (tape.requires_grad(w)) {
      std::vector<double> at(k * m);
      kernels::transpose(a.value().data(), m, k, at.data());
      kern.gemm(k, n, m, at.data(), g.data(), tape.grad_buffer(w).data(), true);
    }
  });
}

Var add_bias(Var x, Var bias) {
  Tape& t = common_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  const std::size_t m = xv.rows();
  const std::size_t n = xv.cols();
  if (bv.size() != n) throw ConfigError("add_bias: bias length does not match feature count");
  Tensor out = xv;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  }
  const bool grad = t.requires_grad(x) || t.requires_grad(bias);
  return t.record(std::move(out), grad, [x, bias, m, n](Tape& tape, const Tensor&, const Tensor& g) {
    tape.accumulate(x, g);
    if (tape.requires_grad(bias)) kernels::active().column_sums(g.data(), m, n, tape.grad_buffer(bias).data());
  });
}

Var add(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  kernels::active().axpy(1.0, b.value().data(), out.data(), out.size());
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [a, b](Tape& tape, const Tensor&, const Tensor& g) {
                    tape.accumulate(a, g);
                    tape.accumulate(b, g);
                  });
}

Var sub(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  kernels::active().axpy(-1.0, b.value().data(), out.data(), out.size());
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [a, b](Tape& tape, const Tensor&, const Tensor& g) {
                    tape.accumulate(a, g);
                    if (tape.requires_grad(b)) kernels::active().axpy(-1.0, g.data(), tape.grad_buffer(b).data(), g.size());
                  });
}

Var mul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [a, b](Tape& tape, const Tensor&, const Tensor& g) {
                    if (tape.requires_grad(a)) {
                      Tensor& ga = tape.grad_buffer(a);
                      const Tensor& bv2 = b.value();
                      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
                    }
                    if (tape.requires_grad(b)) {
                      Tensor& gb = tape.grad_buffer(b);
                      const Tensor& av2 = a.value();
                      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
                    }
                  });
}

Var scale(Var a, double factor) {
  return unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var log_floor(Var a, double floor) {
  return unary(
      a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var log_sigmoid(Var a) {
  return unary(
      a, [](double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return x >= 0 ? std::exp(-x) / (1.0 + std::exp(-x)) : 1.0 / (1.0 + std::exp(x)); });
}

Var leaky_relu(Var a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Var elu(Var a, double alpha) {
  return unary(
      a, [alpha](double x) { return x > 0 ? x : alpha * std::expm1(x); },
      [alpha](double x, double y) { return x > 0 ? 1.0 : y + alpha; });
}

Var softmax(Var a) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = x.data() + i * n;
    double* yr = y.data() + i * n;
    const double mx = *std::max_element(xr, xr + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < n; ++j) yr[j] /= s;
  }
  return t.record(std::move(y), t.requires_grad(a), [a, m, n](Tape& tape, const Tensor& out, const Tensor& g) {
    Tensor& ga = tape.grad_buffer(a);
    for (std::size_t i = 0; i < m; ++i) {
      const double* yr = out.data() + i * n;
      const double* gr = g.data() + i * n;
      double dotp = 0.0;
      for (std::size_t j = 0; j < n; ++j) dotp += gr[j] * yr[j];
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += yr[j] * (gr[j] - dotp);
    }
  });
}

Var log_softmax(Var a) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = x.data() + i * n;
    const double mx = *std::max_element(xr, xr + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(xr[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = xr[j] - lse;
  }
  return t.record(std::move(y), t.requires_grad(a), [a, m, n](Tape& tape, const Tensor& out, const Tensor& g) {
    Tensor& ga = tape.grad_buffer(a);
    for (std::size_t i = 0; i < m; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += g[i * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] - std::exp(out[i * n + j]) * gsum;
    }
  });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return t.record(Tensor::scalar(s), t.requires_grad(a), [a](Tape& tape, const Tensor&, const Tensor& g) {
    Tensor& ga = tape.grad_buffer(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var row_sum(Var a) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  Tensor out({m, 1});
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += x[i * n + j];
    out[i] = s;
  }
  return t.record(std::move(out), t.requires_grad(a), [a, m, n](Tape& tape, const Tensor&, const Tensor& g) {
    Tensor& ga = tape.grad_buffer(a);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i];
    }
  });
}

Var log_mean_exp(Var a) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  const double mx = *std::max_element(x.values().begin(), x.values().end());
  double s = 0.0;
  for (double v : x.values()) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  const double value = lse - std::log(static_cast<double>(x.size()));
  return t.record(Tensor::scalar(value), t.requires_grad(a), [a, lse](Tape& tape, const Tensor&, const Tensor& g) {
    const Tensor& xv = a.value();
    Tensor& ga = tape.grad_buffer(a);
    for (std::size_t i = 0; i < xv.size(); ++i) ga[i] += g[0] * std::exp(xv[i] - lse);
  });
}

Var pick(Var a, std::span<const std::size_t> labels) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  if (labels.size() != m) throw ConfigError("pick: one label per row required");
  std::vector<std::size_t> idx(labels.begin(), labels.end());
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    if (idx[i] >= n) throw ConfigError("pick: label " + std::to_string(idx[i]) + " out of range");
    out[i] = x[i * n + idx[i]];
  }
  return t.record(std::move(out), t.requires_grad(a),
                  [a, n, idx = std::move(idx)](Tape& tape, const Tensor&, const Tensor& g) {
                    Tensor& ga = tape.grad_buffer(a);
                    for (std::size_t i = 0; i < idx.size(); ++i) ga[i * n + idx[i]] += g[i];
                  });
}

Var concat_cols(Var a, Var b) {
  Tape& t = common_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows();
  if (bv.rows() != m) throw ConfigError("concat_cols: row counts differ");
  const std::size_t na = av.cols();
  const std::size_t nb = bv.cols();
  Tensor out({m, na + nb});
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(av.data() + i * na, na, out.data() + i * (na + nb));
    std::copy_n(bv.data() + i * nb, nb, out.data() + i * (na + nb) + na);
  }
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [a, b, m, na, nb](Tape& tape, const Tensor&, const Tensor& g) {
                    if (tape.requires_grad(a)) {
                      Tensor& ga = tape.grad_buffer(a);
                      for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t j = 0; j < na; ++j) ga[i * na + j] += g[i * (na + nb) + j];
                      }
                    }
                    if (tape.requires_grad(b)) {
                      Tensor& gb = tape.grad_buffer(b);
                      for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t j = 0; j < nb; ++j) gb[i * nb + j] += g[i * (na + nb) + na + j];
                      }
                    }
                  });
}

Var concat_rows(Var a, Var b) {
  Tape& t = common_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) throw ConfigError("concat_rows: column counts differ");
  Shape shape = av.shape();
  shape[0] = av.rows() + bv.rows();
  std::vector<double> values(av.values().begin(), av.values().end());
  values.insert(values.end(), bv.values().begin(), bv.values().end());
  const std::size_t split = av.size();
  return t.record(Tensor(std::move(shape), std::move(values)), t.requires_grad(a) || t.requires_grad(b),
                  [a, b, split](Tape& tape, const Tensor&, const Tensor& g) {
                    if (tape.requires_grad(a)) {
                      Tensor& ga = tape.grad_buffer(a);
                      for (std::size_t i = 0; i < split; ++i) ga[i] += g[i];
                    }
                    if (tape.requires_grad(b)) {
                      Tensor& gb = tape.grad_buffer(b);
                      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[split + i];
                    }
                  });
}

Var reshape(Var a, Shape shape) {
  Tape& t = *a.tape();
  return t.record(a.value().reshaped(std::move(shape)), t.requires_grad(a),
                  [a](Tape& tape, const Tensor&, const Tensor& g) {
                    Tensor& ga = tape.grad_buffer(a);
                    kernels::active().axpy(1.0, g.data(), ga.data(), ga.size());
                  });
}

Var conv2d(Var x, Var weight, Var bias, std::size_t kernel, std::size_t stride) {
  Tape& t = common_tape(x, weight);
  const Tensor& xv = x.value();
  if (xv.rank() != 4) throw ConfigError("conv2d: input must be (B,C,H,W), got " + shape_string(xv.shape()));
  const std::size_t batch = xv.dim(0);
  const std::size_t channels = xv.dim(1);
  const std::size_t height = xv.dim(2);
  const std::size_t width = xv.dim(3);
  const std::size_t pad = (kernel - 1) / 2;
  const std::size_t patch = channels * kernel * kernel;
  const Tensor& wv = weight.value();
  if (wv.rank() != 2 || wv.dim(0) != patch) {
    throw ConfigError("conv2d: weight " + shape_string(wv.shape()) + " does not match " + std::to_string(channels) +
                      " input channels");
  }
  const std::size_t out_ch = wv.dim(1);
  if (height + 2 * pad < kernel || width + 2 * pad < kernel) throw ConfigError("conv2d: input smaller than kernel");
  const std::size_t oh = (height + 2 * pad - kernel) / stride + 1;
  const std::size_t ow = (width + 2 * pad - kernel) / stride + 1;
  const std::size_t rows = batch * oh * ow;

  auto cols = std::make_shared<std::vector<double>>(rows * patch, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        double* dst = cols->data() + ((b * oh + y) * ow + xo) * patch;
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t ky = 0; ky < kernel; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(y * stride + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
            for (std::size_t kx = 0; kx < kernel; ++kx) {
              const auto ix = static_cast<std::ptrdiff_t>(xo * stride + kx) - static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
              dst[(c * kernel + ky) * kernel + kx] = xv[((b * channels + c) * height + iy) * width + ix];
            }
          }
        }
      }
    }
  }
  std::vector<double> flat(rows * out_ch);
  kernels::active().gemm(rows, out_ch, patch, cols->data(), wv.data(), flat.data(), false);
  const Tensor& bv = bias.value();
  Tensor out({batch, out_ch, oh, ow});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < oh * ow; ++p) {
      for (std::size_t o = 0; o < out_ch; ++o) out[(b * out_ch + o) * oh * ow + p] = flat[(b * oh * ow + p) * out_ch + o] + bv[o];
    }
  }
  const bool grad = t.requires_grad(x) || t.requires_grad(weight) || t.requires_grad(bias);
  return t.record(
      std::move(out), grad,
      [=](Tape& tape, const Tensor&, const Tensor& g) {
        const auto& kern = kernels::active();
        std::vector<double> gflat(rows * out_ch);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t p = 0; p < oh * ow; ++p) {
            for (std::size_t o = 0; o < out_ch; ++o) gflat[(b * oh * ow + p) * out_ch + o] = g[(b * out_ch + o) * oh * ow + p];
          }
        }
        if (tape.requires_grad(bias)) kern.column_sums(gflat.data(), rows, out_ch, tape.grad_buffer(bias).data());
        if (tape.requires_grad(weight)) {
          std::vector<double> colt(patch * rows);
          kernels::transpose(cols->data(), rows, patch, colt.data());
          kern.gemm(patch, out_ch, rows, colt.data(), gflat.data(), tape.grad_buffer(weight).data(), true);
        }
        if (tape.requires_grad(x)) {
          std::vector<double> wt(out_ch * patch);
          kernels::transpose(weight.value().data(), patch, out_ch, wt.data());
          std::vector<double> gcols(rows * patch);
          kern.gemm(rows, patch, out_ch, gflat.data(), wt.data(), gcols.data(), false);
          Tensor& gx = tape.grad_buffer(x);
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t y = 0; y < oh; ++y) {
              for (std::size_t xo = 0; xo < ow; ++xo) {
                const double* src = gcols.data() + ((b * oh + y) * ow + xo) * patch;
                for (std::size_t c = 0; c < channels; ++c) {
                  for (std::size_t ky = 0; ky < kernel; ++ky) {
                    const auto iy = static_cast<std::ptrdiff_t>(y * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
                    for (std::size_t kx = 0; kx < kernel; ++kx) {
                      const auto ix = static_cast<std::ptrdiff_t>(xo * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
                      gx[((b * channels + c) * height + iy) * width + ix] += src[(c * kernel + ky) * kernel + kx];
                    }
                  }
                }
              }
            }
          }
        }
      });
}

Var batch_norm(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var, NormMode mode,
               double momentum, double eps) {
  Tape& t = common_tape(x, gamma);
  const Tensor& xv = x.value();
  std::size_t outer = 0;
  std::size_t channels = 0;
  std::size_t inner = 0;
  if (xv.rank() == 4) {
    outer = xv.dim(0);
    channels = xv.dim(1);
    inner = xv.dim(2) * xv.dim(3);
  } else {
    outer = xv.rows();
    channels = xv.cols();
    inner = 1;
  }
  if (gamma.value().size() != channels || running_mean.size() != channels) {
    throw ConfigError("batch_norm: statistics sized for " + std::to_string(running_mean.size()) +
                      " features, input has " + std::to_string(channels));
  }
  const double count = static_cast<double>(outer * inner);
  auto index = [=](std::size_t o, std::size_t c, std::size_t i) { return (o * channels + c) * inner + i; };

  std::vector<double> mu(channels, 0.0);
  std::vector<double> inv_std(channels, 0.0);
  if (mode == NormMode::kRunningStats) {
    for (std::size_t c = 0; c < channels; ++c) {
      mu[c] = running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(running_var[c] + eps);
    }
  } else {
    if (outer * inner < 2) throw ConfigError("batch_norm: batch statistics need at least two values per feature");
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) s += xv[index(o, c, i)];
      }
      mu[c] = s / count;
      double v = 0.0;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          const double d = xv[index(o, c, i)] - mu[c];
          v += d * d;
        }
      }
      v /= count;
      inv_std[c] = 1.0 / std::sqrt(v + eps);
      if (mode == NormMode::kBatchStats) {
        running_mean[c] = momentum * running_mean[c] + (1.0 - momentum) * mu[c];
        running_var[c] = momentum * running_var[c] + (1.0 - momentum) * v;
      }
    }
  }
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  auto xhat = std::make_shared<Tensor>(xv.shape());
  Tensor out(xv.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t i = 0; i < inner; ++i) {
        const auto k = index(o, c, i);
        (*xhat)[k] = (xv[k] - mu[c]) * inv_std[c];
        out[k] = gv[c] * (*xhat)[k] + bv[c];
      }
    }
  }
  const bool grad = t.requires_grad(x) || t.requires_grad(gamma) || t.requires_grad(beta);
  const bool batch_stats = mode != NormMode::kRunningStats;
  return t.record(std::move(out), grad, [=](Tape& tape, const Tensor&, const Tensor& g) {
    std::vector<double> gsum(channels, 0.0);
    std::vector<double> gxhat_sum(channels, 0.0);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < inner; ++i) {
          const auto k = index(o, c, i);
          gsum[c] += g[k];
          gxhat_sum[c] += g[k] * (*xhat)[k];
        }
      }
    }
    if (tape.requires_grad(gamma)) {
      Tensor& gg = tape.grad_buffer(gamma);
      for (std::size_t c = 0; c < channels; ++c) gg[c] += gxhat_sum[c];
    }
    if (tape.requires_grad(beta)) {
      Tensor& gb = tape.grad_buffer(beta);
      for (std::size_t c = 0; c < channels; ++c) gb[c] += gsum[c];
    }
    if (tape.requires_grad(x)) {
      const Tensor& gam = gamma.value();
      Tensor& gx = tape.grad_buffer(x);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t i = 0; i < inner; ++i) {
            const auto k = index(o, c, i);
            if (batch_stats) {
              gx[k] += gam[c] * inv_std[c] / count *
                       (count * g[k] - gsum[c] - (*xhat)[k] * gxhat_sum[c]);
            } else {
              gx[k] += gam[c] * inv_std[c] * g[k];
            }
          }
        }
      }
    }
  });
}

}  // namespace varleak::core
