#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tokencast/core/tensor.hpp"

// Differentiable operations. Every tensor is viewed as a matrix whose column
// count is its last dimension. Shape errors throw std::invalid_argument with
// both shapes in the message.
namespace tokencast::core {

// [N x K] * [K x M]
Tensor matmul(const Tensor& a, const Tensor& b);
// [N x K] * [M x K]^T
Tensor matmul_transposed(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
// Adds a length-cols vector to every row.
Tensor add_bias(const Tensor& x, const Tensor& bias);
// Row r of x receives row (r % period) of table; table must have >= period rows.
Tensor add_periodic_rows(const Tensor& x, const Tensor& table, std::size_t period);

Tensor square(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Column means over all rows: [N x M] -> [M].
Tensor mean_rows(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// Identity forward, no gradient to the input.
Tensor stop_gradient(const Tensor& a);
// Forward value equals quantized exactly; the incoming gradient is passed to
// continuous unchanged and nothing flows to quantized.
Tensor straight_through(const Tensor& continuous, const Tensor& quantized);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor softmax(const Tensor& x);

// Gathers rows of table [V x D] by id.
Tensor embedding(const Tensor& table, std::span<const int> ids);

// x: [B*T x Cin], weight: {kernel, Cin, Cout}, bias: [Cout]. Zero left
// padding only, so output row t sees input rows t, t-d, t-2d, ... within its
// own sequence.
Tensor causal_conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                     std::size_t seq_len, std::size_t dilation);

// Multi-head scaled dot-product attention with a causal mask (position t
// attends to positions <= t). q, k, v: [B*T x D], D divisible by heads.
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t seq_len,
                        std::size_t heads);

// Mean negative log-likelihood over rows with target >= 0, weighted by
// weights (all ones when empty).
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     std::span<const double> weights = {});

// Squared Euclidean distances between rows of z [N x d] and codes [K x d].
Tensor squared_distances(const Tensor& z, const Tensor& codes);

// -sum p log p with 0 log 0 = 0.
Tensor entropy(const Tensor& p);

// Mean of w_r * (a - b)^2 over all elements; row weights optional.
Tensor mse(const Tensor& a, const Tensor& b, std::span<const double> row_weights = {});

}  // namespace tokencast::core
