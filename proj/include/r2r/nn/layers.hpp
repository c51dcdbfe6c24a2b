#pragma once

#include "r2r/nn/ops.hpp"

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace r2r::nn {

using Rng = std::mt19937_64;

/// Named handles onto trainable leaves; handles share storage with the module.
using NamedParams = std::vector<std::pair<std::string, Tensor>>;

/// Uniform(-bound, bound) initialised parameter.
Tensor uniform_param(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);
Tensor zeros_param(Eigen::Index rows, Eigen::Index cols);

class Linear {
public:
    Linear() = default;
    Linear(int in, int out, Rng& rng, bool bias = true);

    Tensor forward(const Tensor& x) const { return linear(x, weight_, bias_); }
    void collect(NamedParams& out, const std::string& prefix) const;

    int in_features() const { return static_cast<int>(weight_.rows()); }
    int out_features() const { return static_cast<int>(weight_.cols()); }
    const Tensor& weight() const { return weight_; }
    const Tensor& bias() const { return bias_; }

private:
    Tensor weight_;
    Tensor bias_;
};

class LayerNorm {
public:
    LayerNorm() = default;
    explicit LayerNorm(int dim);

    Tensor forward(const Tensor& x) const { return layer_norm(x, gamma_, beta_); }
    void collect(NamedParams& out, const std::string& prefix) const;
    const Tensor& gamma() const { return gamma_; }
    const Tensor& beta() const { return beta_; }

private:
    Tensor gamma_;
    Tensor beta_;
};

class Conv1d {
public:
    Conv1d() = default;
    Conv1d(int in, int out, int kernel, int stride, int pad, Rng& rng, int dilation = 1);

    Tensor forward(const Tensor& x, int seq_len) const;
    int out_len(int seq_len) const { return conv1d_out_len(seq_len, kernel_, stride_, pad_, dilation_); }
    void collect(NamedParams& out, const std::string& prefix) const;

private:
    Tensor weight_;
    Tensor bias_;
    int kernel_ = 1;
    int stride_ = 1;
    int pad_ = 0;
    int dilation_ = 1;
};

/// Pre-activation residual block: x + conv1x1(relu(conv3(relu(x)))).
class ResBlock1d {
public:
    ResBlock1d() = default;
    ResBlock1d(int channels, int dilation, Rng& rng);

    Tensor forward(const Tensor& x, int seq_len) const;
    void collect(NamedParams& out, const std::string& prefix) const;

private:
    Conv1d conv1_;
    Conv1d conv2_;
};

/// Pre-LN transformer block with fused multi-head attention and a GELU MLP.
class TransformerBlock {
public:
    TransformerBlock() = default;
    TransformerBlock(int dim, int heads, int mlp_ratio, Rng& rng);

    Tensor forward(const Tensor& x, int seq_len, bool causal) const;
    void collect(NamedParams& out, const std::string& prefix) const;

    int heads() const { return heads_; }
    const LayerNorm& ln1() const { return ln1_; }
    const LayerNorm& ln2() const { return ln2_; }
    const Linear& qkv() const { return qkv_; }
    const Linear& proj() const { return proj_; }
    const Linear& fc1() const { return fc1_; }
    const Linear& fc2() const { return fc2_; }

private:
    LayerNorm ln1_;
    LayerNorm ln2_;
    Linear qkv_;
    Linear proj_;
    Linear fc1_;
    Linear fc2_;
    int heads_ = 1;
};

class Transformer {
public:
    Transformer() = default;
    Transformer(int dim, int heads, int layers, int mlp_ratio, Rng& rng);

    /// Blocks followed by a final LayerNorm.
    Tensor forward(const Tensor& x, int seq_len, bool causal) const;
    void collect(NamedParams& out, const std::string& prefix) const;

    const std::vector<TransformerBlock>& blocks() const { return blocks_; }
    const LayerNorm& final_norm() const { return norm_; }

private:
    std::vector<TransformerBlock> blocks_;
    LayerNorm norm_;
};

/// Decoupled-weight-decay Adam.
struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double clip_norm = 1.0;  // <= 0 disables global-norm clipping
};

class AdamW {
public:
    AdamW(NamedParams params, AdamWConfig config);

    void zero_grad();
    /// Applies one update; returns the pre-clip global gradient norm.
    double step();
    void set_lr(double lr) { config_.lr = lr; }
    const AdamWConfig& config() const { return config_; }

private:
    NamedParams params_;
    AdamWConfig config_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    long t_ = 0;
};

std::size_t parameter_count(const NamedParams& params);

}  // namespace r2r::nn
