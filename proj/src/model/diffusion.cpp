#include "r2r/model/diffusion.hpp"

#include "r2r/common/error.hpp"

#include <cmath>
#include <numbers>

namespace r2r::model {

using nn::Tensor;

nlohmann::json DiffusionConfig::to_json() const {
    return {{"steps", steps}, {"ddim_steps", ddim_steps}, {"schedule", schedule}, {"cosine_offset", cosine_offset}};
}

DiffusionConfig DiffusionConfig::from_json(const nlohmann::json& j) {
    DiffusionConfig c;
    c.steps = j.value("steps", c.steps);
    c.ddim_steps = j.value("ddim_steps", c.ddim_steps);
    c.schedule = j.value("schedule", c.schedule);
    c.cosine_offset = j.value("cosine_offset", c.cosine_offset);
    return c;
}

void DiffusionConfig::validate() const {
    if (steps < 1) throw ConfigError("diffusion steps must be positive");
    if (ddim_steps < 1 || ddim_steps > steps) throw ConfigError("ddim_steps must be in [1, steps]");
    if (schedule != "cosine" && schedule != "linear") throw ConfigError("unknown noise schedule '" + schedule + "'");
}

NoiseSchedule::NoiseSchedule(const DiffusionConfig& config) {
    config.validate();
    const int T = config.steps;
    alpha_bar_.assign(static_cast<std::size_t>(T) + 1, 1.0);
    if (config.schedule == "cosine") {
        const double s = config.cosine_offset;
        auto f = [&](int t) {
            const double u = (static_cast<double>(t) / T + s) / (1.0 + s) * std::numbers::pi / 2.0;
            return std::cos(u) * std::cos(u);
        };
        double prod = 1.0;
        for (int t = 1; t <= T; ++t) {
            const double beta = std::min(1.0 - f(t) / f(t - 1), 0.999);
            prod *= 1.0 - beta;
            alpha_bar_[static_cast<std::size_t>(t)] = prod;
        }
    } else {
        double prod = 1.0;
        for (int t = 1; t <= T; ++t) {
            const double beta = 1e-4 + (0.02 - 1e-4) * (t - 1) / std::max(1, T - 1);
            prod *= 1.0 - beta;
            alpha_bar_[static_cast<std::size_t>(t)] = prod;
        }
    }
}

std::vector<int> NoiseSchedule::ddim_timesteps(int sample_steps) const {
    const int T = steps();
    if (sample_steps < 1 || sample_steps > T) throw ConfigError("ddim_steps must be in [1, steps]");
    std::vector<int> ts;
    for (int k = sample_steps - 1; k >= 0; --k)
        ts.push_back(static_cast<int>((static_cast<long long>(k) + 1) * T / sample_steps));
    return ts;
}

Matrix ddim_sample_from(const NoiseSchedule& schedule, int sample_steps, const Denoiser& denoiser, const Matrix& cond,
                        Matrix x) {
    const std::vector<int> ts = schedule.ddim_timesteps(sample_steps);
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const int t = ts[k];
        const int prev = k + 1 < ts.size() ? ts[k + 1] : 0;
        const double ab = schedule.alpha_bar(t);
        const double ab_prev = schedule.alpha_bar(prev);
        const Matrix x0 = denoiser(x, t, cond);
        if (!x0.allFinite()) throw NumericError("denoiser produced a non-finite value", t);
        const Matrix eps = (x - std::sqrt(ab) * x0) / std::sqrt(1.0 - ab);
        x = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps;
        if (!x.allFinite()) throw NumericError("DDIM trajectory became non-finite", t);
    }
    return x;
}

Matrix ddim_sample(const NoiseSchedule& schedule, int sample_steps, const Denoiser& denoiser, const Matrix& cond,
                   int latent_dim, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss;
    Matrix x(cond.rows(), latent_dim);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
    return ddim_sample_from(schedule, sample_steps, denoiser, cond, std::move(x));
}

Matrix timestep_embedding(const std::vector<int>& steps, int dim) {
    Matrix e(static_cast<Eigen::Index>(steps.size()), dim);
    const int half = dim / 2;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        for (int k = 0; k < half; ++k) {
            const double freq = std::exp(-std::log(10000.0) * k / std::max(1, half));
            const double a = steps[i] * freq;
            e(static_cast<Eigen::Index>(i), k) = std::sin(a);
            e(static_cast<Eigen::Index>(i), half + k) = std::cos(a);
        }
        if (dim % 2) e(static_cast<Eigen::Index>(i), dim - 1) = 0.0;
    }
    return e;
}

DiffusionHead::DiffusionHead(int latent_dim, int cond_dim, int hidden, int time_dim, nn::Rng& rng)
    : hidden_(latent_dim + time_dim + cond_dim, hidden, rng), out_(hidden, latent_dim, rng),
      latent_dim_(latent_dim), time_dim_(time_dim) {}

Tensor DiffusionHead::forward(const Tensor& x_t, const std::vector<int>& steps, const Tensor& cond) const {
    const Tensor temb = Tensor::constant(timestep_embedding(steps, time_dim_));
    return out_.forward(nn::silu(hidden_.forward(nn::concat_cols({x_t, temb, cond}))));
}

Matrix DiffusionHead::predict(const Matrix& x_t, int t, const Matrix& cond) const {
    nn::NoGradGuard guard;
    const std::vector<int> steps(static_cast<std::size_t>(x_t.rows()), t);
    return forward(Tensor::constant(x_t), steps, Tensor::constant(cond)).value();
}

Tensor DiffusionHead::loss(const Tensor& cond, const Matrix& x0, const NoiseSchedule& schedule, int repeat,
                           std::mt19937_64& rng) const {
    const Eigen::Index n = cond.rows();
    std::vector<int> rows;
    rows.reserve(static_cast<std::size_t>(n * repeat));
    for (int r = 0; r < repeat; ++r)
        for (Eigen::Index i = 0; i < n; ++i) rows.push_back(static_cast<int>(i));
    std::uniform_int_distribution<int> pick_t(1, schedule.steps());
    std::normal_distribution<double> gauss;
    std::vector<int> steps(rows.size());
    Matrix target(static_cast<Eigen::Index>(rows.size()), x0.cols());
    Matrix noisy(target.rows(), x0.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const int t = pick_t(rng);
        steps[k] = t;
        const double ab = schedule.alpha_bar(t);
        const auto r = static_cast<Eigen::Index>(k);
        target.row(r) = x0.row(rows[k]);
        for (Eigen::Index c = 0; c < x0.cols(); ++c)
            noisy(r, c) = std::sqrt(ab) * x0(rows[k], c) + std::sqrt(1.0 - ab) * gauss(rng);
    }
    const Tensor c = repeat == 1 ? cond : nn::gather_rows(cond, rows);
    const Tensor pred = forward(Tensor::constant(noisy), steps, c);
    return nn::row_norm_mean(nn::sub(pred, Tensor::constant(target)));
}

Denoiser DiffusionHead::denoiser() const {
    return [this](const Matrix& x, int t, const Matrix& c) { return predict(x, t, c); };
}

void DiffusionHead::collect(nn::NamedParams& out, const std::string& prefix) const {
    hidden_.collect(out, prefix + ".hidden");
    out_.collect(out, prefix + ".out");
}

}  // namespace r2r::model
