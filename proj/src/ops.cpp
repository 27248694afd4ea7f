#include "gsfuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "gsfuse/errors.hpp"

namespace gsfuse::ops {
namespace {

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

Shape matrix_shape(std::size_t rows, std::size_t cols, bool as_vector) {
  return as_vector ? Shape{cols} : Shape{rows, cols};
}

double gelu_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

template <typename Fwd, typename Deriv>
Var unary(Var x, Fwd fwd, Deriv deriv) {
  Tensor out(x.shape());
  const auto in = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = fwd(in[i]);
  const auto xi = x.id();
  return x.tape().record(std::move(out), {x}, [xi, deriv](Tape& t, std::size_t self) {
    auto gx = t.grad_buffer(xi);
    if (gx.empty()) return;
    const auto g = t.grad_view(self);
    const auto in = t.value(xi).data();
    const auto out = t.value(self).data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(in[i], out[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  const auto av = a.value().data(), bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {a, b}, [ai, bi](Tape& t, std::size_t self) {
    const auto g = t.grad_view(self);
    for (auto id : {ai, bi}) {
      auto gb = t.grad_buffer(id);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  const auto av = a.value().data(), bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] - bv[i];
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {a, b}, [ai, bi](Tape& t, std::size_t self) {
    const auto g = t.grad_view(self);
    auto ga = t.grad_buffer(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    auto gb = t.grad_buffer(bi);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out(a.shape());
  const auto av = a.value().data(), bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {a, b}, [ai, bi](Tape& t, std::size_t self) {
    const auto g = t.grad_view(self);
    const auto av = t.value(ai).data(), bv = t.value(bi).data();
    auto ga = t.grad_buffer(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
    auto gb = t.grad_buffer(bi);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
  });
}

Var scale(Var a, double factor) {
  return unary(a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary(a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var add_row(Var a, Var row) {
  if (row.size() != a.cols()) {
    throw DimensionError("add_row: row of shape " + shape_string(row.shape()) + " vs matrix " +
                         shape_string(a.shape()));
  }
  Tensor out = a.value();
  const std::size_t n = a.rows(), d = a.cols();
  const auto rv = row.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) o[i * d + j] += rv[j];
  const auto ai = a.id(), ri = row.id();
  return a.tape().record(std::move(out), {a, row}, [ai, ri, n, d](Tape& t, std::size_t self) {
    const auto g = t.grad_view(self);
    auto ga = t.grad_buffer(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    auto gr = t.grad_buffer(ri);
    if (gr.empty()) return;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) gr[j] += g[i * d + j];
  });
}

Var mul_row(Var a, Var row) {
  if (row.size() != a.cols()) {
    throw DimensionError("mul_row: row of shape " + shape_string(row.shape()) + " vs matrix " +
                         shape_string(a.shape()));
  }
  Tensor out = a.value();
  const std::size_t n = a.rows(), d = a.cols();
  const auto rv = row.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) o[i * d + j] *= rv[j];
  const auto ai = a.id(), ri = row.id();
  return a.tape().record(std::move(out), {a, row}, [ai, ri, n, d](Tape& t, std::size_t self) {
    const auto g = t.grad_view(self);
    const auto av = t.value(ai).data(), rv = t.value(ri).data();
    auto ga = t.grad_buffer(ai);
    if (!ga.empty()) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += g[i * d + j] * rv[j];
    }
    auto gr = t.grad_buffer(ri);
    if (!gr.empty()) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gr[j] += g[i * d + j] * av[i * d + j];
    }
  });
}

Var matmul(Var a, Var b) {
  if (b.shape().size() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: inner extents differ for " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(matrix_shape(m, n, a.shape().size() == 1));
  gemm_nn(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n);
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {a, b}, [ai, bi, m, k, n](Tape& t, std::size_t self) {
    const double* g = t.grad_view(self).data();
    auto ga = t.grad_buffer(ai);
    if (!ga.empty()) gemm_nt(g, t.value(bi).data().data(), ga.data(), m, n, k);
    auto gb = t.grad_buffer(bi);
    if (!gb.empty()) gemm_tn(t.value(ai).data().data(), g, gb.data(), m, k, n);
  });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: trailing extents differ for " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out({m, n});
  gemm_nt(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n);
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {a, b}, [ai, bi, m, k, n](Tape& t, std::size_t self) {
    const double* g = t.grad_view(self).data();
    auto ga = t.grad_buffer(ai);
    if (!ga.empty()) gemm_nn(g, t.value(bi).data().data(), ga.data(), m, n, k);
    auto gb = t.grad_buffer(bi);
    if (!gb.empty()) gemm_tn(g, t.value(ai).data().data(), gb.data(), m, n, k);
  });
}

Var linear(Var x, Var weight, Var bias) {
  if (weight.shape().size() != 2 || weight.cols() != x.cols()) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " does not match weight " +
                         shape_string(weight.shape()));
  }
  const std::size_t m = x.rows(), in = x.cols(), out_dim = weight.rows();
  if (bias.valid() && bias.size() != out_dim) {
    throw DimensionError("linear: bias " + shape_string(bias.shape()) + " does not match weight " +
                         shape_string(weight.shape()));
  }
  Tensor out(matrix_shape(m, out_dim, x.shape().size() == 1));
  auto o = out.data();
  if (bias.valid()) {
    const auto bv = bias.value().data();
    for (std::size_t i = 0; i < m; ++i) std::copy(bv.begin(), bv.end(), o.begin() + i * out_dim);
  }
  gemm_nt(x.value().data().data(), weight.value().data().data(), o.data(), m, in, out_dim);
  const auto xi = x.id(), wi = weight.id();
  const bool has_bias = bias.valid();
  const auto bi = has_bias ? bias.id() : 0;
  auto fn = [xi, wi, bi, has_bias, m, in, out_dim](Tape& t, std::size_t self) {
    const double* g = t.grad_view(self).data();
    auto gx = t.grad_buffer(xi);
    if (!gx.empty()) gemm_nn(g, t.value(wi).data().data(), gx.data(), m, out_dim, in);
    auto gw = t.grad_buffer(wi);
    if (!gw.empty()) gemm_tn(g, t.value(xi).data().data(), gw.data(), m, out_dim, in);
    if (has_bias) {
      auto gb = t.grad_buffer(bi);
      for (std::size_t i = 0; i < m && !gb.empty(); ++i)
        for (std::size_t j = 0; j < out_dim; ++j) gb[j] += g[i * out_dim + j];
    }
  };
  if (has_bias) return x.tape().record(std::move(out), {x, weight, bias}, fn);
  return x.tape().record(std::move(out), {x, weight}, fn);
}

Var transpose(Var a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out({n, m});
  const auto av = a.value().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = av[i * n + j];
  const auto ai = a.id();
  return a.tape().record(std::move(out), {a}, [ai, m, n](Tape& t, std::size_t self) {
    auto ga = t.grad_buffer(ai);
    const auto g = t.grad_view(self);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

Var softmax(Var x, std::size_t axis) {
  if (x.shape().size() == 1) axis = 1;  // a rank-1 tensor is one row
  if (axis > 1) throw DimensionError("softmax: axis must be 0 or 1");
  const std::size_t n = x.rows(), d = x.cols();
  // Groups of `len` elements spaced `stride` apart.
  const std::size_t groups = axis == 1 ? n : d;
  const std::size_t len = axis == 1 ? d : n;
  const std::size_t stride = axis == 1 ? 1 : d;
  const std::size_t step = axis == 1 ? d : 1;
  Tensor out(x.shape());
  const auto xv = x.value().data();
  auto o = out.data();
  for (std::size_t gidx = 0; gidx < groups; ++gidx) {
    const std::size_t base = gidx * step;
    double mx = xv[base];
    for (std::size_t e = 1; e < len; ++e) mx = std::max(mx, xv[base + e * stride]);
    double total = 0.0;
    for (std::size_t e = 0; e < len; ++e) {
      const double v = std::exp(xv[base + e * stride] - mx);
      o[base + e * stride] = v;
      total += v;
    }
    for (std::size_t e = 0; e < len; ++e) o[base + e * stride] /= total;
  }
  const auto xi = x.id();
  return x.tape().record(std::move(out), {x},
                         [xi, groups, len, stride, step](Tape& t, std::size_t self) {
                           auto gx = t.grad_buffer(xi);
                           const auto g = t.grad_view(self);
                           const auto p = t.value(self).data();
                           for (std::size_t gidx = 0; gidx < groups; ++gidx) {
                             const std::size_t base = gidx * step;
                             double dot = 0.0;
                             for (std::size_t e = 0; e < len; ++e) dot += g[base + e * stride] * p[base + e * stride];
                             for (std::size_t e = 0; e < len; ++e) {
                               const auto i = base + e * stride;
                               gx[i] += p[i] * (g[i] - dot);
                             }
                           }
                         });
}

Var log_softmax_rows(Var x) {
  const std::size_t n = x.rows(), d = x.cols();
  Tensor out(x.shape());
  const auto xv = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = xv.data() + i * d;
    const double mx = *std::max_element(xr, xr + d);
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) total += std::exp(xr[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < d; ++j) o[i * d + j] = xr[j] - lse;
  }
  const auto xi = x.id();
  return x.tape().record(std::move(out), {x}, [xi, n, d](Tape& t, std::size_t self) {
    auto gx = t.grad_buffer(xi);
    const auto g = t.grad_view(self);
    const auto y = t.value(self).data();
    for (std::size_t i = 0; i < n; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < d; ++j) gsum += g[i * d + j];
      for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[i * d + j] - std::exp(y[i * d + j]) * gsum;
    }
  });
}

Var sigmoid(Var x) {
  return unary(
      x,
      [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var gelu(Var x) {
  return unary(
      x, [](double v) { return v * gelu_cdf(v); },
      [](double v, double) {
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
        return gelu_cdf(v) + v * pdf;
      });
}

Var layernorm(Var x, Var gain, Var bias, double eps) {
  const std::size_t n = x.rows(), d = x.cols();
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layernorm: gain/bias length must equal " + std::to_string(d));
  }
  Tensor out(x.shape());
  std::vector<double> xhat(n * d), inv_std(n);
  const auto xv = x.value().data();
  const auto gv = gain.value().data(), bv = bias.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = xv.data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (xr[j] - mu) * inv_std[i];
      o[i * d + j] = xhat[i * d + j] * gv[j] + bv[j];
    }
  }
  const auto xi = x.id(), gi = gain.id(), bi = bias.id();
  return x.tape().record(
      std::move(out), {x, gain, bias},
      [xi, gi, bi, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
        const auto g = t.grad_view(self);
        const auto gv = t.value(gi).data();
        auto gg = t.grad_buffer(gi);
        auto gb = t.grad_buffer(bi);
        auto gx = t.grad_buffer(xi);
        for (std::size_t i = 0; i < n; ++i) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const auto k = i * d + j;
            if (!gg.empty()) gg[j] += g[k] * xhat[k];
            if (!gb.empty()) gb[j] += g[k];
            const double dxhat = g[k] * gv[j];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat[k];
          }
          if (gx.empty()) continue;
          mean_dxhat /= static_cast<double>(d);
          mean_dxhat_xhat /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const auto k = i * d + j;
            gx[k] += inv_std[i] * (g[k] * gv[j] - mean_dxhat - xhat[k] * mean_dxhat_xhat);
          }
        }
      });
}

Var clip(Var x, double lo, double hi) {
  if (!(lo <= hi)) throw ConfigError("clip: lower bound exceeds upper bound");
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var mse(Var a, Var b) {
  require_same_shape("mse", a, b);
  const auto av = a.value().data(), bv = b.value().data();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += (av[i] - bv[i]) * (av[i] - bv[i]);
  const double n = static_cast<double>(av.size());
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(Tensor::scalar(acc / n), {a, b}, [ai, bi, n](Tape& t, std::size_t self) {
    const double g = t.grad_view(self)[0];
    const auto av = t.value(ai).data(), bv = t.value(bi).data();
    auto ga = t.grad_buffer(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * 2.0 * (av[i] - bv[i]) / n;
    auto gb = t.grad_buffer(bi);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g * 2.0 * (av[i] - bv[i]) / n;
  });
}

Var mae(Var a, Var b) {
  require_same_shape("mae", a, b);
  const auto av = a.value().data(), bv = b.value().data();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += std::abs(av[i] - bv[i]);
  const double n = static_cast<double>(av.size());
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(Tensor::scalar(acc / n), {a, b}, [ai, bi, n](Tape& t, std::size_t self) {
    const double g = t.grad_view(self)[0];
    const auto av = t.value(ai).data(), bv = t.value(bi).data();
    auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
    auto ga = t.grad_buffer(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * sign(av[i] - bv[i]) / n;
    auto gb = t.grad_buffer(bi);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g * sign(av[i] - bv[i]) / n;
  });
}

Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  const auto xi = x.id();
  return x.tape().record(Tensor::scalar(acc), {x}, [xi](Tape& t, std::size_t self) {
    const double g = t.grad_view(self)[0];
    for (auto& v : t.grad_buffer(xi)) v += g;
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Var mean_rows(Var x) {
  const std::size_t n = x.rows(), d = x.cols();
  Tensor out({d});
  const auto xv = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) o[j] += xv[i * d + j];
  for (auto& v : o) v /= static_cast<double>(n);
  const auto xi = x.id();
  return x.tape().record(std::move(out), {x}, [xi, n, d](Tape& t, std::size_t self) {
    auto gx = t.grad_buffer(xi);
    const auto g = t.grad_view(self);
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[j] * inv;
  });
}

Var sum_rows(Var x) {
  const std::size_t n = x.rows(), d = x.cols();
  Tensor out({n, 1});
  const auto xv = x.value().data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i] += xv[i * d + j];
  const auto xi = x.id();
  return x.tape().record(std::move(out), {x}, [xi, n, d](Tape& t, std::size_t self) {
    auto gx = t.grad_buffer(xi);
    const auto g = t.grad_view(self);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[i];
  });
}

Var rowdot(Var a, Var b) { return sum_rows(mul(a, b)); }

Var l2_normalize_rows(Var x) {
  const std::size_t n = x.rows(), d = x.cols();
  Tensor out(x.shape());
  std::vector<double> norms(n);
  const auto xv = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += xv[i * d + j] * xv[i * d + j];
    norms[i] = std::sqrt(ss);
    if (!(norms[i] > 0.0)) throw NumericalError("l2 normalization of a zero-norm row " + std::to_string(i));
    for (std::size_t j = 0; j < d; ++j) o[i * d + j] = xv[i * d + j] / norms[i];
  }
  const auto xi = x.id();
  return x.tape().record(std::move(out), {x}, [xi, n, d, norms = std::move(norms)](Tape& t, std::size_t self) {
    auto gx = t.grad_buffer(xi);
    const auto g = t.grad_view(self);
    const auto y = t.value(self).data();
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += y[i * d + j] * g[i * d + j];
      for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += (g[i * d + j] - y[i * d + j] * dot) / norms[i];
    }
  });
}

Var gather_rows(Var x, std::span<const std::size_t> rows) {
  const std::size_t n = x.rows(), d = x.cols();
  if (rows.empty()) throw DimensionError("gather_rows: empty index list");
  Tensor out({rows.size(), d});
  const auto xv = x.value().data();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(xv.begin() + rows[r] * d, d, out.data().begin() + r * d);
  }
  const auto xi = x.id();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return x.tape().record(std::move(out), {x}, [xi, d, idx = std::move(idx)](Tape& t, std::size_t self) {
    auto gx = t.grad_buffer(xi);
    const auto g = t.grad_view(self);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) gx[idx[r] * d + j] += g[r * d + j];
  });
}

Var vconcat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("vconcat: no inputs");
  const std::size_t d = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != d) throw DimensionError("vconcat: column counts differ");
    total += p.rows();
  }
  Tensor out({total, d});
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + off);
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.size();
  }
  return parts.front().tape().record(std::move(out), parts,
                                     [ids = std::move(ids), offsets = std::move(offsets)](Tape& t, std::size_t self) {
                                       const auto g = t.grad_view(self);
                                       for (std::size_t p = 0; p < ids.size(); ++p) {
                                         auto gp = t.grad_buffer(ids[p]);
                                         for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offsets[p] + i];
                                       }
                                     });
}

Var hconcat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("hconcat: no inputs");
  const std::size_t n = parts.front().rows();
  const bool as_vector = parts.front().shape().size() == 1;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw DimensionError("hconcat: row counts differ");
    total += p.cols();
  }
  Tensor out(matrix_shape(n, total, as_vector));
  std::vector<std::size_t> ids, col_offsets, widths;
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    const auto pv = p.value().data();
    for (std::size_t i = 0; i < n; ++i) std::copy_n(pv.begin() + i * w, w, out.data().begin() + i * total + c0);
    ids.push_back(p.id());
    col_offsets.push_back(c0);
    widths.push_back(w);
    c0 += w;
  }
  return parts.front().tape().record(
      std::move(out), parts,
      [ids = std::move(ids), col_offsets = std::move(col_offsets), widths = std::move(widths), n, total](
          Tape& t, std::size_t self) {
        const auto g = t.grad_view(self);
        for (std::size_t p = 0; p < ids.size(); ++p) {
          auto gp = t.grad_buffer(ids[p]);
          if (gp.empty()) continue;
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < widths[p]; ++j) gp[i * widths[p] + j] += g[i * total + col_offsets[p] + j];
        }
      });
}

Var element(Var x, std::size_t index) { return slice(x, index, 1); }

Var slice(Var x, std::size_t begin, std::size_t length) {
  if (length == 0 || begin + length > x.size()) throw DimensionError("slice: range outside tensor");
  const auto xv = x.value().data();
  Tensor out({length}, std::vector<double>(xv.begin() + begin, xv.begin() + begin + length));
  const auto xi = x.id();
  return x.tape().record(std::move(out), {x}, [xi, begin](Tape& t, std::size_t self) {
    auto gx = t.grad_buffer(xi);
    const auto g = t.grad_view(self);
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin + i] += g[i];
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const auto xi = x.id();
  return x.tape().record(std::move(out), {x}, [xi](Tape& t, std::size_t self) {
    auto gx = t.grad_buffer(xi);
    const auto g = t.grad_view(self);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var detach(Var x) { return x.tape().constant(x.tape().stop(x.value())); }

Var attention(Var q, Var k, Var v, std::size_t n_head, std::vector<double>* weights) {
  const std::size_t nq = q.rows(), nk = k.rows(), d = q.cols();
  if (k.cols() != d || v.cols() != d) {
    throw DimensionError("attention: feature dims differ: q " + shape_string(q.shape()) + ", k " +
                         shape_string(k.shape()) + ", v " + shape_string(v.shape()));
  }
  if (v.rows() != nk) throw DimensionError("attention: key and value lengths differ");
  if (n_head == 0 || d % n_head != 0) {
    throw DimensionError("attention: dim " + std::to_string(d) + " not divisible by " + std::to_string(n_head) +
                         " heads");
  }
  const std::size_t dh = d / n_head;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto qv = q.value().data(), kv = k.value().data(), vv = v.value().data();
  std::vector<double> probs(n_head * nq * nk);
  Tensor out(matrix_shape(nq, d, q.shape().size() == 1));
  auto o = out.data();
  for (std::size_t h = 0; h < n_head; ++h) {
    const std::size_t c0 = h * dh;
    double* p = probs.data() + h * nq * nk;
    for (std::size_t i = 0; i < nq; ++i) {
      double* pi = p + i * nk;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < nk; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += qv[i * d + c0 + c] * kv[j * d + c0 + c];
        pi[j] = s * scale;
        mx = std::max(mx, pi[j]);
      }
      double total = 0.0;
      for (std::size_t j = 0; j < nk; ++j) {
        pi[j] = std::exp(pi[j] - mx);
        total += pi[j];
      }
      for (std::size_t j = 0; j < nk; ++j) {
        pi[j] /= total;
        const double w = pi[j];
        for (std::size_t c = 0; c < dh; ++c) o[i * d + c0 + c] += w * vv[j * d + c0 + c];
      }
    }
  }
  if (weights) *weights = probs;
  const auto qi = q.id(), ki = k.id(), vi = v.id();
  return q.tape().record(
      std::move(out), {q, k, v},
      [qi, ki, vi, nq, nk, d, dh, n_head, scale, probs = std::move(probs)](Tape& t, std::size_t self) {
        const auto g = t.grad_view(self);
        const auto qv = t.value(qi).data(), kv = t.value(ki).data(), vv = t.value(vi).data();
        auto gq = t.grad_buffer(qi);
        auto gk = t.grad_buffer(ki);
        auto gv = t.grad_buffer(vi);
        std::vector<double> dp(nk);
        for (std::size_t h = 0; h < n_head; ++h) {
          const std::size_t c0 = h * dh;
          const double* p = probs.data() + h * nq * nk;
          for (std::size_t i = 0; i < nq; ++i) {
            const double* pi = p + i * nk;
            double dot = 0.0;
            for (std::size_t j = 0; j < nk; ++j) {
              double s = 0.0;
              for (std::size_t c = 0; c < dh; ++c) s += g[i * d + c0 + c] * vv[j * d + c0 + c];
              dp[j] = s;
              dot += s * pi[j];
              if (!gv.empty()) {
                for (std::size_t c = 0; c < dh; ++c) gv[j * d + c0 + c] += pi[j] * g[i * d + c0 + c];
              }
            }
            for (std::size_t j = 0; j < nk; ++j) {
              const double ds = pi[j] * (dp[j] - dot) * scale;
              if (ds == 0.0) continue;
              if (!gq.empty()) {
                for (std::size_t c = 0; c < dh; ++c) gq[i * d + c0 + c] += ds * kv[j * d + c0 + c];
              }
              if (!gk.empty()) {
                for (std::size_t c = 0; c < dh; ++c) gk[j * d + c0 + c] += ds * qv[i * d + c0 + c];
              }
            }
          }
        }
      });
}

}  // namespace gsfuse::ops
