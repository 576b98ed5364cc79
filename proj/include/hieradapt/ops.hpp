#pragma once

#include <span>

#include "hieradapt/tensor.hpp"

namespace hieradapt::numcore {

// Default epsilon for layer normalization.
inline constexpr double kLayerNormEps = 1e-5;

// All operations validate shapes, refuse to store non-finite results, and
// record their backward closure on the active tape (if any input requires
// grad). No broadcasting beyond the bias-over-last-dimension case.

Tensor add(const Tensor& a, const Tensor& b);          // same shape
Tensor add_bias(const Tensor& x, const Tensor& bias);  // bias over last dim
Tensor mul(const Tensor& a, const Tensor& b);          // elementwise
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sum(const Tensor& a);  // full reduction to scalar

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]·[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]·[n,k]^T

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor gather_rows(const Tensor& table, std::span<const int> ids);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);

Tensor softmax(const Tensor& x);  // over the last dimension

// Fused multi-head causal self-attention on [t,m] inputs.
Tensor causal_self_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                             std::size_t n_heads);

// Mean negative log-likelihood of targets under row-wise softmax(logits).
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> targets);

}  // namespace hieradapt::numcore
