#pragma once

#include "tokfix/localizer.hpp"
#include "tokfix/util.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>

namespace tokfix::testing {

/// Largest relative error between analytic and central-difference gradients
/// over every parameter block of one random localizer instance. The error of
/// a block is ||analytic - numeric|| / max(||analytic||, ||numeric||).
inline double localizer_gradient_error(std::uint64_t seed, int d = 8, int d_a = 4, int n = 12, int m = 3) {
    std::mt19937_64 rng(mix64(seed));
    auto randn = [&](Eigen::Index r, Eigen::Index c) {
        Eigen::MatrixXd x(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) x(i, j) = standard_normal(rng) * 0.5;
        return x;
    };
    EmbeddingConfig emb;
    emb.dim = d;
    auto p = LocalizerParams::initial(emb, d_a, seed);
    p.wq_pre = randn(d_a, d);
    p.wk_pre = randn(d_a, d);
    p.wq_suf = randn(d_a, d);
    p.wk_suf = randn(d_a, d);
    Eigen::MatrixXd rows = randn(n + m, d);
    Eigen::VectorXd cls = randn(d, 1).col(0);
    const auto start = static_cast<std::size_t>(uniform_below(rng, static_cast<std::uint64_t>(n)));
    const auto end = static_cast<std::ptrdiff_t>(start + uniform_below(rng, static_cast<std::uint64_t>(n) - start));

    LocalizerGrads g;
    localizer_loss(p, rows, static_cast<std::size_t>(n), cls, start, end, nullptr, &g);

    const double h = 1e-5;
    double worst = 0.0;
    auto check = [&](auto& param, const auto& analytic) {
        Eigen::MatrixXd numeric(param.rows(), param.cols());
        for (Eigen::Index i = 0; i < param.rows(); ++i) {
            for (Eigen::Index j = 0; j < param.cols(); ++j) {
                const double keep = param(i, j);
                param(i, j) = keep + h;
                const double up = localizer_loss(p, rows, static_cast<std::size_t>(n), cls, start, end, nullptr, nullptr);
                param(i, j) = keep - h;
                const double down = localizer_loss(p, rows, static_cast<std::size_t>(n), cls, start, end, nullptr, nullptr);
                param(i, j) = keep;
                numeric(i, j) = (up - down) / (2 * h);
            }
        }
        const Eigen::MatrixXd a = analytic;
        const double scale = std::max({a.norm(), numeric.norm(), 1e-12});
        worst = std::max(worst, (a - numeric).norm() / scale);
    };
    check(p.wq_pre, g.wq_pre);
    check(p.wk_pre, g.wk_pre);
    check(p.wq_suf, g.wq_suf);
    check(p.wk_suf, g.wk_suf);
    check(cls, g.cls);
    check(rows, g.rows);
    return worst;
}

}  // namespace tokfix::testing
