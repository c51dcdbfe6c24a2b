#pragma once

#include "r2r/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace r2r::testing {

/// Largest relative error between analytic and central-difference gradients
/// of `loss` with respect to every entry of every parameter.
inline double gradcheck(const std::vector<nn::Tensor>& params, const std::function<nn::Tensor()>& loss,
                        double eps = 1e-6) {
    for (auto p : params) p.zero_grad();
    loss().backward();
    std::vector<nn::Matrix> analytic;
    for (const auto& p : params)
        analytic.push_back(p.grad().size() ? p.grad() : nn::Matrix::Zero(p.rows(), p.cols()));
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        nn::Tensor p = params[k];
        for (Eigen::Index i = 0; i < p.value().size(); ++i) {
            double& v = p.mutable_value().data()[i];
            const double orig = v;
            v = orig + eps;
            const double up = loss().item();
            v = orig - eps;
            const double down = loss().item();
            v = orig;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[k].data()[i];
            const double err = std::abs(a - numeric) / std::max(1e-4, std::abs(a) + std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace r2r::testing
