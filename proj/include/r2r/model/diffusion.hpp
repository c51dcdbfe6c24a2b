#pragma once

// x0-parameterised latent diffusion: cosine noise schedule, deterministic DDIM
// sampling and the small MLP denoising head conditioned on a condition vector.

#include "r2r/nn/layers.hpp"

#include <json.hpp>

#include <functional>
#include <random>
#include <vector>

namespace r2r::model {

using nn::Matrix;

struct DiffusionConfig {
    int steps = 1000;
    int ddim_steps = 50;
    std::string schedule = "cosine";
    double cosine_offset = 0.008;

    nlohmann::json to_json() const;
    static DiffusionConfig from_json(const nlohmann::json& j);
    void validate() const;
};

class NoiseSchedule {
public:
    explicit NoiseSchedule(const DiffusionConfig& config);

    int steps() const { return static_cast<int>(alpha_bar_.size()) - 1; }
    /// Cumulative signal fraction at step t in [0, T]; alpha_bar(0) = 1.
    double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }

    /// Descending DDIM timesteps: t_k = (k+1)*T/S for k = S-1 .. 0.
    std::vector<int> ddim_timesteps(int sample_steps) const;

private:
    std::vector<double> alpha_bar_;
};

/// Predicts x0 for rows of x_t at integer step t, conditioned on rows of cond.
using Denoiser = std::function<Matrix(const Matrix& x_t, int t, const Matrix& cond)>;

/// Deterministic (eta = 0) DDIM from x_T ~ N(0, I). Throws NumericError carrying
/// the step index if the trajectory becomes non-finite.
Matrix ddim_sample(const NoiseSchedule& schedule, int sample_steps, const Denoiser& denoiser, const Matrix& cond,
                   int latent_dim, std::mt19937_64& rng);
/// Same, starting from a given x_T.
Matrix ddim_sample_from(const NoiseSchedule& schedule, int sample_steps, const Denoiser& denoiser, const Matrix& cond,
                        Matrix x_t);

/// Fixed sinusoidal embedding of integer steps.
Matrix timestep_embedding(const std::vector<int>& steps, int dim);

/// Single-hidden-layer MLP head G(x_t, t, c) -> x0.
class DiffusionHead {
public:
    DiffusionHead() = default;
    DiffusionHead(int latent_dim, int cond_dim, int hidden, int time_dim, nn::Rng& rng);

    nn::Tensor forward(const nn::Tensor& x_t, const std::vector<int>& steps, const nn::Tensor& cond) const;
    Matrix predict(const Matrix& x_t, int t, const Matrix& cond) const;

    /// Unsquared L2 between x0 and the prediction, averaged over rows. Each
    /// condition row is used `repeat` times with independent (t, noise).
    nn::Tensor loss(const nn::Tensor& cond, const Matrix& x0, const NoiseSchedule& schedule, int repeat,
                    std::mt19937_64& rng) const;

    Denoiser denoiser() const;
    void collect(nn::NamedParams& out, const std::string& prefix) const;
    int latent_dim() const { return latent_dim_; }

private:
    nn::Linear hidden_;
    nn::Linear out_;
    int latent_dim_ = 0;
    int time_dim_ = 0;
};

}  // namespace r2r::model
