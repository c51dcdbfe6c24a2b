#pragma once

#include "r2r/nn/tensor.hpp"

#include <span>
#include <vector>

namespace r2r::nn {

// Elementwise and linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[N x in] * w[in x out] + b[1 x out]; `b` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// Adds a [1 x C] row to every row of x.
Tensor add_row(const Tensor& x, const Tensor& row);
/// Adds p[T x C] to each consecutive T-row segment of x.
Tensor add_tiled(const Tensor& x, const Tensor& p);

Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Multi-head scaled dot-product attention on pre-projected q/k/v, each
/// [B*T x M]. Heads split the columns evenly. With `causal` set, query t sees
/// keys <= t only; masked weights are exactly zero.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int seq_len, int heads, bool causal);

/// Temporal convolution over x[B*T x Cin]; w is [kernel*Cin x Cout] with tap-major
/// rows. Output is [B*T_out x Cout], T_out = floor((T + 2*pad - dil*(k-1) - 1)/stride) + 1.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int seq_len, int kernel, int stride, int pad,
              int dilation = 1);
int conv1d_out_len(int seq_len, int kernel, int stride, int pad, int dilation = 1);

/// Nearest-neighbour temporal upsampling: every row is repeated `factor` times.
Tensor upsample_rows(const Tensor& x, int factor);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor gather_rows(const Tensor& a, std::span<const int> rows);
/// Row-major reinterpretation (no data movement in the logical order).
Tensor reshape(const Tensor& a, Eigen::Index rows, Eigen::Index cols);

/// Interleaves several per-sample token groups: part k is [N*counts[k] x C]
/// and the result is [N*sum(counts) x C] with each sample's groups adjacent.
Tensor concat_segments(const std::vector<Tensor>& parts, std::span<const int> counts);
/// Inverse view of concat_segments: picks `count` rows starting at `start`
/// from every `segment`-row block.
Tensor slice_segments(const Tensor& x, int segment, int start, int count);

// Reductions and losses (all return 1x1).
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// mean((a - target)^2) over all entries.
Tensor mse(const Tensor& a, const Matrix& target);
/// Mean over rows of the (unsquared) L2 norm of each row.
Tensor row_norm_mean(const Tensor& a);
/// Mean cross-entropy of row-wise logits against integer targets.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);
/// Mean over rows of KL(N(mu, exp(logvar)) || N(0, I)).
Tensor kl_normal(const Tensor& mu, const Tensor& logvar);

/// Value of `quantized`, gradient passed straight through to `z`.
Tensor straight_through(const Tensor& z, const Matrix& quantized);
Tensor stop_gradient(const Tensor& a);

}  // namespace r2r::nn
