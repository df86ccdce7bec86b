#include "tokencast/core/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

namespace tokencast::core {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

using detail::Node;

double* grad_of(Node& n) { return n.requires_grad ? n.grad_buffer().data() : nullptr; }

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                              " vs " + shape_str(b.shape()));
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch(op, a, b);
}

ConstMatMap as_matrix(const Tensor& t) { return ConstMatMap(t.data().data(), t.rows(), t.cols()); }

ConstMatMap as_matrix(const Node& n, std::size_t rows, std::size_t cols) {
  return ConstMatMap(n.value.data(), rows, cols);
}

Shape with_last(const Shape& s, std::size_t last) {
  Shape out = s;
  if (out.empty()) out.push_back(last);
  else out.back() = last;
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (b.rank() != 2 || a.cols() != b.dim(0)) mismatch("matmul", a, b);
  const std::size_t n = a.rows(), k = a.cols(), m = b.dim(1);
  Buffer out(n * m);
  MatMap(out.data(), n, m).noalias() = as_matrix(a) * as_matrix(b);
  return Tensor::make_result(with_last(a.shape(), m), std::move(out), {a, b},
                             [n, k, m](Node& self) {
                               Node& pa = *self.parents[0];
                               Node& pb = *self.parents[1];
                               ConstMatMap g(self.grad.data(), n, m);
                               if (double* ga = grad_of(pa)) {
                                 MatMap(ga, n, k).noalias() += g * as_matrix(pb, k, m).transpose();
                               }
                               if (double* gb = grad_of(pb)) {
                                 MatMap(gb, k, m).noalias() += as_matrix(pa, n, k).transpose() * g;
                               }
                             });
}

Tensor matmul_transposed(const Tensor& a, const Tensor& b) {
  if (b.rank() != 2 || a.cols() != b.dim(1)) mismatch("matmul_transposed", a, b);
  const std::size_t n = a.rows(), k = a.cols(), m = b.dim(0);
  Buffer out(n * m);
  MatMap(out.data(), n, m).noalias() = as_matrix(a) * as_matrix(b).transpose();
  return Tensor::make_result(with_last(a.shape(), m), std::move(out), {a, b},
                             [n, k, m](Node& self) {
                               Node& pa = *self.parents[0];
                               Node& pb = *self.parents[1];
                               ConstMatMap g(self.grad.data(), n, m);
                               if (double* ga = grad_of(pa)) {
                                 MatMap(ga, n, k).noalias() += g * as_matrix(pb, m, k);
                               }
                               if (double* gb = grad_of(pb)) {
                                 MatMap(gb, m, k).noalias() += g.transpose() * as_matrix(pa, n, k);
                               }
                             });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  Buffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (int p = 0; p < 2; ++p) {
      if (double* g = grad_of(*self.parents[p])) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  Buffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (double* g = grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = grad_of(*self.parents[1])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  Buffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (double* g = grad_of(pa)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (double* g = grad_of(pb)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  Buffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * factor;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
    if (double* g = grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
    }
  });
}

Tensor add_scalar(const Tensor& a, double value) {
  Buffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + value;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    if (double* g = grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.size() != x.cols()) mismatch("add_bias", x, bias);
  const std::size_t n = x.rows(), m = x.cols();
  Buffer out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] += bias.at(c);
  return Tensor::make_result(x.shape(), std::move(out), {x, bias}, [n, m](Node& self) {
    if (double* g = grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = grad_of(*self.parents[1])) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) g[c] += self.grad[r * m + c];
    }
  });
}

Tensor add_periodic_rows(const Tensor& x, const Tensor& table, std::size_t period) {
  if (table.cols() != x.cols() || table.rows() < period || period == 0 ||
      x.rows() % period != 0) {
    mismatch("add_periodic_rows", x, table);
  }
  const std::size_t n = x.rows(), m = x.cols();
  Buffer out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] += table.at((r % period) * m + c);
  return Tensor::make_result(x.shape(), std::move(out), {x, table}, [n, m, period](Node& self) {
    if (double* g = grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = grad_of(*self.parents[1])) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) g[(r % period) * m + c] += self.grad[r * m + c];
    }
  });
}

Tensor square(const Tensor& a) {
  Buffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * a.at(i);
  return Tensor::make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (double* g = grad_of(p)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += 2.0 * p.value[i] * self.grad[i];
    }
  });
}

Tensor gelu(const Tensor& a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  Buffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.at(i);
    out[i] = 0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x)));
  }
  return Tensor::make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (double* g = grad_of(p)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double x = p.value[i];
        const double u = kC * (x + kA * x * x * x);
        const double t = std::tanh(u);
        const double du = kC * (1.0 + 3.0 * kA * x * x);
        g[i] += self.grad[i] * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
      }
    }
  });
}

Tensor exp(const Tensor& a) {
  Buffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.at(i));
  return Tensor::make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    if (double* g = grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * self.value[i];
    }
  });
}

Tensor log(const Tensor& a) {
  Buffer out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.at(i));
  return Tensor::make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (double* g = grad_of(p)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] / p.value[i];
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::make_result({1}, {s}, {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (double* g = grad_of(p)) {
      for (std::size_t i = 0; i < p.value.size(); ++i) g[i] += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw std::invalid_argument("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor mean_rows(const Tensor& a) {
  const std::size_t n = a.rows(), m = a.cols();
  if (n == 0) throw std::invalid_argument("mean_rows of empty tensor");
  Buffer out(m, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[c] += a.at(r * m + c);
  for (auto& v : out) v /= static_cast<double>(n);
  return Tensor::make_result({m}, std::move(out), {a}, [n, m](Node& self) {
    if (double* g = grad_of(*self.parents[0])) {
      const double inv = 1.0 / static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) g[r * m + c] += self.grad[c] * inv;
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                shape_str(shape));
  }
  Buffer out(a.data().begin(), a.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
    if (double* g = grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor stop_gradient(const Tensor& a) { return a.detach(); }

Tensor straight_through(const Tensor& continuous, const Tensor& quantized) {
  require_same("straight_through", continuous, quantized);
  Buffer out(quantized.data().begin(), quantized.data().end());
  return Tensor::make_result(quantized.shape(), std::move(out), {continuous}, [](Node& self) {
    if (double* g = grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t n = x.rows(), m = x.cols();
  if (gamma.size() != m) mismatch("layer_norm", x, gamma);
  if (beta.size() != m) mismatch("layer_norm", x, beta);
  Buffer out(n * m);
  auto xhat = std::make_shared<Buffer>(n * m);
  auto inv_std = std::make_shared<Buffer>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.data().data() + r * m;
    double mu = 0.0;
    for (std::size_t c = 0; c < m; ++c) mu += row[c];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t c = 0; c < m; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(m);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < m; ++c) {
      const double h = (row[c] - mu) * is;
      (*xhat)[r * m + c] = h;
      out[r * m + c] = gamma.at(c) * h + beta.at(c);
    }
  }
  return Tensor::make_result(x.shape(), std::move(out), {x, gamma, beta},
                             [n, m, xhat, inv_std](Node& self) {
                               Node& px = *self.parents[0];
                               Node& pg = *self.parents[1];
                               double* gx = grad_of(px);
                               double* gg = grad_of(pg);
                               double* gb = grad_of(*self.parents[2]);
                               Buffer dh(m);
                               for (std::size_t r = 0; r < n; ++r) {
                                 const double* dy = self.grad.data() + r * m;
                                 const double* h = xhat->data() + r * m;
                                 double mean_dh = 0.0, mean_dh_h = 0.0;
                                 for (std::size_t c = 0; c < m; ++c) {
                                   dh[c] = dy[c] * pg.value[c];
                                   mean_dh += dh[c];
                                   mean_dh_h += dh[c] * h[c];
                                   if (gg) gg[c] += dy[c] * h[c];
                                   if (gb) gb[c] += dy[c];
                                 }
                                 if (!gx) continue;
                                 mean_dh /= static_cast<double>(m);
                                 mean_dh_h /= static_cast<double>(m);
                                 for (std::size_t c = 0; c < m; ++c) {
                                   gx[r * m + c] +=
                                       (*inv_std)[r] * (dh[c] - mean_dh - h[c] * mean_dh_h);
                                 }
                               }
                             });
}

Tensor softmax(const Tensor& x) {
  const std::size_t n = x.rows(), m = x.cols();
  Buffer out(n * m);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.data().data() + r * m;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      out[r * m + c] = std::exp(row[c] - mx);
      z += out[r * m + c];
    }
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] /= z;
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [n, m](Node& self) {
    if (double* g = grad_of(*self.parents[0])) {
      for (std::size_t r = 0; r < n; ++r) {
        const double* y = self.value.data() + r * m;
        const double* dy = self.grad.data() + r * m;
        double dot = 0.0;
        for (std::size_t c = 0; c < m; ++c) dot += dy[c] * y[c];
        for (std::size_t c = 0; c < m; ++c) g[r * m + c] += y[c] * (dy[c] - dot);
      }
    }
  });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) throw std::invalid_argument("embedding: table must be 2-D");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  Buffer out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw std::invalid_argument("embedding: id " + std::to_string(ids[i]) +
                                  " outside table of " + std::to_string(vocab) + " rows");
    }
    std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * d, d,
                out.data() + i * d);
  }
  auto idx = std::make_shared<std::vector<int>>(ids.begin(), ids.end());
  return Tensor::make_result({ids.size(), d}, std::move(out), {table}, [idx, d](Node& self) {
    if (double* g = grad_of(*self.parents[0])) {
      for (std::size_t i = 0; i < idx->size(); ++i) {
        const double* src = self.grad.data() + i * d;
        double* dst = g + static_cast<std::size_t>((*idx)[i]) * d;
        for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
      }
    }
  });
}

Tensor causal_conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                     std::size_t seq_len, std::size_t dilation) {
  if (weight.rank() != 3 || weight.dim(1) != x.cols()) mismatch("causal_conv1d", x, weight);
  const std::size_t kernel = weight.dim(0), cin = weight.dim(1), cout = weight.dim(2);
  if (bias.size() != cout) mismatch("causal_conv1d", weight, bias);
  if (seq_len == 0 || x.rows() % seq_len != 0) {
    throw std::invalid_argument("causal_conv1d: " + std::to_string(x.rows()) +
                                " rows is not a multiple of sequence length " +
                                std::to_string(seq_len));
  }
  if (dilation == 0) throw std::invalid_argument("causal_conv1d: dilation must be >= 1");
  const std::size_t batch = x.rows() / seq_len;
  Buffer out(x.rows() * cout);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < cout; ++c) out[r * cout + c] = bias.at(c);
  MatMap y(out.data(), x.rows(), cout);
  auto xm = as_matrix(x);
  for (std::size_t j = 0; j < kernel; ++j) {
    const std::size_t shift = j * dilation;
    if (shift >= seq_len) break;
    const std::size_t len = seq_len - shift;
    ConstMatMap w(weight.data().data() + j * cin * cout, cin, cout);
    for (std::size_t b = 0; b < batch; ++b) {
      y.middleRows(b * seq_len + shift, len).noalias() += xm.middleRows(b * seq_len, len) * w;
    }
  }
  const std::size_t rows = x.rows();
  return Tensor::make_result(
      {rows, cout}, std::move(out), {x, weight, bias},
      [=](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        double* gx = grad_of(px);
        double* gw = grad_of(pw);
        double* gb = grad_of(*self.parents[2]);
        ConstMatMap g(self.grad.data(), rows, cout);
        ConstMatMap xv(px.value.data(), rows, cin);
        for (std::size_t j = 0; j < kernel; ++j) {
          const std::size_t shift = j * dilation;
          if (shift >= seq_len) break;
          const std::size_t len = seq_len - shift;
          ConstMatMap w(pw.value.data() + j * cin * cout, cin, cout);
          for (std::size_t b = 0; b < batch; ++b) {
            auto gy = g.middleRows(b * seq_len + shift, len);
            if (gx) {
              MatMap(gx, rows, cin).middleRows(b * seq_len, len).noalias() += gy * w.transpose();
            }
            if (gw) {
              MatMap(gw + j * cin * cout, cin, cout).noalias() +=
                  xv.middleRows(b * seq_len, len).transpose() * gy;
            }
          }
        }
        if (gb) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cout; ++c) gb[c] += self.grad[r * cout + c];
        }
      });
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t seq_len,
                        std::size_t heads) {
  require_same("causal_attention", q, k);
  require_same("causal_attention", q, v);
  const std::size_t rows = q.rows(), d = q.cols();
  if (heads == 0 || d % heads != 0) {
    throw std::invalid_argument("causal_attention: width " + std::to_string(d) +
                                " not divisible by " + std::to_string(heads) + " heads");
  }
  if (seq_len == 0 || rows % seq_len != 0) {
    throw std::invalid_argument("causal_attention: " + std::to_string(rows) +
                                " rows is not a multiple of sequence length " +
                                std::to_string(seq_len));
  }
  const std::size_t batch = rows / seq_len, dh = d / heads, t = seq_len;
  const double scl = 1.0 / std::sqrt(static_cast<double>(dh));
  auto probs = std::make_shared<Buffer>(batch * heads * t * t, 0.0);
  Buffer out(rows * d, 0.0);
  RowMat scores(t, t);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = b * t * d + h * dh;
      ConstStridedMap qh(q.data().data() + off, t, dh, Eigen::OuterStride<>(d));
      ConstStridedMap kh(k.data().data() + off, t, dh, Eigen::OuterStride<>(d));
      ConstStridedMap vh(v.data().data() + off, t, dh, Eigen::OuterStride<>(d));
      scores.noalias() = qh * kh.transpose();
      MatMap p(probs->data() + (b * heads + h) * t * t, t, t);
      for (std::size_t i = 0; i < t; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= i; ++j) mx = std::max(mx, scores(i, j) * scl);
        double z = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          p(i, j) = std::exp(scores(i, j) * scl - mx);
          z += p(i, j);
        }
        for (std::size_t j = 0; j <= i; ++j) p(i, j) /= z;
      }
      StridedMap oh(out.data() + off, t, dh, Eigen::OuterStride<>(d));
      oh.noalias() = p * vh;
    }
  }
  return Tensor::make_result(
      q.shape(), std::move(out), {q, k, v},
      [=](Node& self) {
        Node& pq = *self.parents[0];
        Node& pk = *self.parents[1];
        Node& pv = *self.parents[2];
        double* gq = grad_of(pq);
        double* gk = grad_of(pk);
        double* gv = grad_of(pv);
        RowMat dp(t, t), ds(t, t);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = b * t * d + h * dh;
            ConstStridedMap go(self.grad.data() + off, t, dh, Eigen::OuterStride<>(d));
            ConstStridedMap qh(pq.value.data() + off, t, dh, Eigen::OuterStride<>(d));
            ConstStridedMap kh(pk.value.data() + off, t, dh, Eigen::OuterStride<>(d));
            ConstStridedMap vh(pv.value.data() + off, t, dh, Eigen::OuterStride<>(d));
            ConstMatMap p(probs->data() + (b * heads + h) * t * t, t, t);
            if (gv) {
              StridedMap(gv + off, t, dh, Eigen::OuterStride<>(d)).noalias() += p.transpose() * go;
            }
            if (!gq && !gk) continue;
            dp.noalias() = go * vh.transpose();
            for (std::size_t i = 0; i < t; ++i) {
              double dot = 0.0;
              for (std::size_t j = 0; j <= i; ++j) dot += dp(i, j) * p(i, j);
              for (std::size_t j = 0; j < t; ++j) {
                ds(i, j) = j <= i ? p(i, j) * (dp(i, j) - dot) * scl : 0.0;
              }
            }
            if (gq) StridedMap(gq + off, t, dh, Eigen::OuterStride<>(d)).noalias() += ds * kh;
            if (gk) {
              StridedMap(gk + off, t, dh, Eigen::OuterStride<>(d)).noalias() += ds.transpose() * qh;
            }
          }
        }
      });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     std::span<const double> weights) {
  const std::size_t n = logits.rows(), vocab = logits.cols();
  if (targets.size() != n) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) +
                                " targets for logits " + shape_str(logits.shape()));
  }
  if (!weights.empty() && weights.size() != n) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(weights.size()) +
                                " weights for logits " + shape_str(logits.shape()));
  }
  auto w = std::make_shared<Buffer>(n, 0.0);
  double total_w = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (targets[r] < 0) continue;
    if (static_cast<std::size_t>(targets[r]) >= vocab) {
      throw std::invalid_argument("cross_entropy: target " + std::to_string(targets[r]) +
                                  " outside " + std::to_string(vocab) + " classes");
    }
    (*w)[r] = weights.empty() ? 1.0 : weights[r];
    total_w += (*w)[r];
  }
  auto tg = std::make_shared<std::vector<int>>(targets.begin(), targets.end());
  auto probs = std::make_shared<Buffer>(n * vocab, 0.0);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if ((*w)[r] == 0.0) continue;
    const double* row = logits.data().data() + r * vocab;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < vocab; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < vocab; ++c) {
      (*probs)[r * vocab + c] = std::exp(row[c] - mx);
      z += (*probs)[r * vocab + c];
    }
    for (std::size_t c = 0; c < vocab; ++c) (*probs)[r * vocab + c] /= z;
    const double lse = mx + std::log(z);
    loss += (*w)[r] * (lse - row[(*tg)[r]]);
  }
  const double denom = total_w > 0.0 ? total_w : 1.0;
  return Tensor::make_result({1}, {loss / denom}, {logits}, [=](Node& self) {
    if (double* g = grad_of(*self.parents[0])) {
      const double up = self.grad[0] / denom;
      for (std::size_t r = 0; r < n; ++r) {
        if ((*w)[r] == 0.0) continue;
        const double f = up * (*w)[r];
        for (std::size_t c = 0; c < vocab; ++c) g[r * vocab + c] += f * (*probs)[r * vocab + c];
        g[r * vocab + static_cast<std::size_t>((*tg)[r])] -= f;
      }
    }
  });
}

Tensor squared_distances(const Tensor& z, const Tensor& codes) {
  if (codes.rank() != 2 || codes.cols() != z.cols()) mismatch("squared_distances", z, codes);
  const std::size_t n = z.rows(), kk = codes.rows(), d = z.cols();
  Buffer out(n * kk);
  for (std::size_t i = 0; i < n; ++i) {
    const double* zi = z.data().data() + i * d;
    for (std::size_t k = 0; k < kk; ++k) {
      const double* ek = codes.data().data() + k * d;
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += (zi[c] - ek[c]) * (zi[c] - ek[c]);
      out[i * kk + k] = s;
    }
  }
  return Tensor::make_result({n, kk}, std::move(out), {z, codes}, [n, kk, d](Node& self) {
    Node& pz = *self.parents[0];
    Node& pe = *self.parents[1];
    double* gz = grad_of(pz);
    double* ge = grad_of(pe);
    ConstMatMap g(self.grad.data(), n, kk);
    ConstMatMap zm(pz.value.data(), n, d);
    ConstMatMap em(pe.value.data(), kk, d);
    if (gz) {
      MatMap gzm(gz, n, d);
      gzm.noalias() += 2.0 * (g.rowwise().sum().asDiagonal() * zm);
      gzm.noalias() -= 2.0 * (g * em);
    }
    if (ge) {
      MatMap gem(ge, kk, d);
      gem.noalias() += 2.0 * (g.colwise().sum().transpose().asDiagonal() * em);
      gem.noalias() -= 2.0 * (g.transpose() * zm);
    }
  });
}

Tensor entropy(const Tensor& p) {
  double h = 0.0;
  for (double v : p.data()) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return Tensor::make_result({1}, {h}, {p}, [](Node& self) {
    Node& pp = *self.parents[0];
    if (double* g = grad_of(pp)) {
      for (std::size_t i = 0; i < pp.value.size(); ++i) {
        const double v = std::max(pp.value[i], std::numeric_limits<double>::min());
        g[i] += -self.grad[0] * (std::log(v) + 1.0);
      }
    }
  });
}

Tensor mse(const Tensor& a, const Tensor& b, std::span<const double> row_weights) {
  require_same("mse", a, b);
  const std::size_t n = a.rows(), m = a.cols();
  if (!row_weights.empty() && row_weights.size() != n) {
    throw std::invalid_argument("mse: " + std::to_string(row_weights.size()) +
                                " row weights for " + shape_str(a.shape()));
  }
  auto w = std::make_shared<Buffer>(n, 1.0);
  if (!row_weights.empty()) std::copy(row_weights.begin(), row_weights.end(), w->begin());
  const double count = static_cast<double>(a.size());
  double s = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double rs = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const double diff = a.at(r * m + c) - b.at(r * m + c);
      rs += diff * diff;
    }
    s += (*w)[r] * rs;
  }
  return Tensor::make_result({1}, {s / count}, {a, b}, [=](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    double* ga = grad_of(pa);
    double* gb = grad_of(pb);
    const double up = 2.0 * self.grad[0] / count;
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < m; ++c) {
        const std::size_t i = r * m + c;
        const double gd = up * (*w)[r] * (pa.value[i] - pb.value[i]);
        if (ga) ga[i] += gd;
        if (gb) gb[i] -= gd;
      }
    }
  });
}

}  // namespace tokencast::core
