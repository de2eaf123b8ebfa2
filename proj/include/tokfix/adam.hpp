#pragma once

#include <Eigen/Dense>

#include <cmath>

namespace tokfix {

/// One Adam accumulator per parameter tensor.
struct AdamSlot {
    Eigen::MatrixXd m, v;
};

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

template <typename Param, typename Grad>
void adam_step(Param& param, const Grad& grad, AdamSlot& slot, int t, double lr) {
    if (slot.m.size() == 0) {
        slot.m = Eigen::MatrixXd::Zero(param.rows(), param.cols());
        slot.v = Eigen::MatrixXd::Zero(param.rows(), param.cols());
    }
    slot.m = kAdamBeta1 * slot.m + (1.0 - kAdamBeta1) * grad;
    slot.v = kAdamBeta2 * slot.v + (1.0 - kAdamBeta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(kAdamBeta1, t);
    const double c2 = 1.0 - std::pow(kAdamBeta2, t);
    param.array() -= lr * (slot.m.array() / c1) / ((slot.v.array() / c2).sqrt() + kAdamEps);
}

}  // namespace tokfix
