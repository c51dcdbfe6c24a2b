#include "r2r/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace r2r::nn {

Tensor uniform_param(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return Tensor::parameter(std::move(m));
}

Tensor zeros_param(Eigen::Index rows, Eigen::Index cols) { return Tensor::parameter(Matrix::Zero(rows, cols)); }

Linear::Linear(int in, int out, Rng& rng, bool bias) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight_ = uniform_param(in, out, bound, rng);
    if (bias) bias_ = uniform_param(1, out, bound, rng);
}

void Linear::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight_);
    if (bias_.defined()) out.emplace_back(prefix + ".bias", bias_);
}

LayerNorm::LayerNorm(int dim)
    : gamma_(Tensor::parameter(Matrix::Ones(1, dim))), beta_(Tensor::parameter(Matrix::Zero(1, dim))) {}

void LayerNorm::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".gamma", gamma_);
    out.emplace_back(prefix + ".beta", beta_);
}

Conv1d::Conv1d(int in, int out, int kernel, int stride, int pad, Rng& rng, int dilation)
    : kernel_(kernel), stride_(stride), pad_(pad), dilation_(dilation) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel));
    weight_ = uniform_param(static_cast<Eigen::Index>(in) * kernel, out, bound, rng);
    bias_ = uniform_param(1, out, bound, rng);
}

Tensor Conv1d::forward(const Tensor& x, int seq_len) const {
    return conv1d(x, weight_, bias_, seq_len, kernel_, stride_, pad_, dilation_);
}

void Conv1d::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight_);
    out.emplace_back(prefix + ".bias", bias_);
}

ResBlock1d::ResBlock1d(int channels, int dilation, Rng& rng)
    : conv1_(channels, channels, 3, 1, dilation, rng, dilation), conv2_(channels, channels, 1, 1, 0, rng) {}

Tensor ResBlock1d::forward(const Tensor& x, int seq_len) const {
    Tensor h = conv1_.forward(relu(x), seq_len);
    h = conv2_.forward(relu(h), seq_len);
    return add(x, h);
}

void ResBlock1d::collect(NamedParams& out, const std::string& prefix) const {
    conv1_.collect(out, prefix + ".conv1");
    conv2_.collect(out, prefix + ".conv2");
}

TransformerBlock::TransformerBlock(int dim, int heads, int mlp_ratio, Rng& rng)
    : ln1_(dim),
      ln2_(dim),
      qkv_(dim, 3 * dim, rng),
      proj_(dim, dim, rng),
      fc1_(dim, mlp_ratio * dim, rng),
      fc2_(mlp_ratio * dim, dim, rng),
      heads_(heads) {
    if (dim % heads != 0) throw std::invalid_argument("transformer dim must be divisible by heads");
}

Tensor TransformerBlock::forward(const Tensor& x, int seq_len, bool causal) const {
    const Eigen::Index dim = x.cols();
    Tensor qkv = qkv_.forward(ln1_.forward(x));
    Tensor att = attention(slice_cols(qkv, 0, dim), slice_cols(qkv, dim, dim), slice_cols(qkv, 2 * dim, dim), seq_len,
                           heads_, causal);
    Tensor h = add(x, proj_.forward(att));
    return add(h, fc2_.forward(gelu(fc1_.forward(ln2_.forward(h)))));
}

void TransformerBlock::collect(NamedParams& out, const std::string& prefix) const {
    ln1_.collect(out, prefix + ".ln1");
    ln2_.collect(out, prefix + ".ln2");
    qkv_.collect(out, prefix + ".qkv");
    proj_.collect(out, prefix + ".proj");
    fc1_.collect(out, prefix + ".fc1");
    fc2_.collect(out, prefix + ".fc2");
}

Transformer::Transformer(int dim, int heads, int layers, int mlp_ratio, Rng& rng) : norm_(dim) {
    blocks_.reserve(layers);
    for (int i = 0; i < layers; ++i) blocks_.emplace_back(dim, heads, mlp_ratio, rng);
}

Tensor Transformer::forward(const Tensor& x, int seq_len, bool causal) const {
    Tensor h = x;
    for (const auto& b : blocks_) h = b.forward(h, seq_len, causal);
    return norm_.forward(h);
}

void Transformer::collect(NamedParams& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(out, prefix + ".block" + std::to_string(i));
    norm_.collect(out, prefix + ".norm");
}

AdamW::AdamW(NamedParams params, AdamWConfig config) : params_(std::move(params)), config_(config) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto& [name, p] : params_) {
        m_.push_back(Matrix::Zero(p.rows(), p.cols()));
        v_.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
}

void AdamW::zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
}

double AdamW::step() {
    double sq = 0.0;
    for (auto& [name, p] : params_)
        if (p.grad().size() != 0) sq += p.grad().squaredNorm();
    const double norm = std::sqrt(sq);
    const double clip = (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;

    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i].second;
        if (p.grad().size() == 0) continue;
        const Matrix g = p.grad() * clip;
        m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
        v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
        Matrix& w = p.mutable_value();
        if (w.rows() > 1) w *= (1.0 - config_.lr * config_.weight_decay);  // no decay on biases/norms
        w.array() -= config_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + config_.eps);
    }
    return norm;
}

std::size_t parameter_count(const NamedParams& params) {
    std::size_t n = 0;
    for (const auto& [name, p] : params) n += static_cast<std::size_t>(p.value().size());
    return n;
}

}  // namespace r2r::nn
