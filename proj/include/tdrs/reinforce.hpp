// Copyright 2026 The tdrs Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "tdrs/core.hpp"
#include "tdrs/distance.hpp"
#include "tdrs/matrix.hpp"

namespace tdrs {

class CalibrationError : public std::runtime_error {
public:
    CalibrationError(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

struct ReCalibration {
    double sigma_re = 0.0;
    double alpha_ref = 0.0;
    int iterations = 0;
};

/// Per-pair exponent of the reinforcement kernel:
/// alpha = -log(w_min_re) / log(1 + d_max^2 / (2 (sigma_re * scale)^2)).
inline double re_alpha(long d_max, double w_min_re, double sigma_re, double scale) {
    if (d_max < 1) throw std::invalid_argument("re_alpha: d_max must be >= 1");
    if (!(w_min_re > 0.0 && w_min_re < 1.0))
        throw std::invalid_argument("re_alpha: w_min_re must lie strictly in (0,1)");
    if (sigma_re <= 0.0 || scale <= 0.0)
        throw std::invalid_argument("re_alpha: sigma_re and scale must be positive");
    const double s = sigma_re * scale;
    const double dd = static_cast<double>(d_max);
    return -std::log(w_min_re) / std::log1p(dd * dd / (2.0 * s * s));
}

/// Heavy-tailed reinforcement weight (1 + d^2 / (2 (sigma_re * scale)^2))^(-alpha).
inline double re_weight(long d, double scale, double sigma_re, double alpha) {
    if (d < 0) throw std::invalid_argument("re_weight: distance must be >= 0");
    if (sigma_re <= 0.0 || scale <= 0.0 || alpha <= 0.0)
        throw std::invalid_argument("re_weight: parameters must be positive");
    const double s = sigma_re * scale;
    const double dd = static_cast<double>(d);
    return std::exp(-alpha * std::log1p(dd * dd / (2.0 * s * s)));
}

namespace detail {

// One alternation at scale = 1: alpha from the current sigma, then the
// closed-form sigma from that alpha.
inline std::pair<double, double> re_fixed_point_step(double sigma, long d_max, double w_min_re) {
    const double alpha = re_alpha(d_max, w_min_re, sigma, 1.0);
    const double dd = static_cast<double>(d_max);
    const double next_sigma =
        dd / std::sqrt(2.0 * alpha * (std::pow(w_min_re, -1.0 / alpha) - 1.0));
    return {alpha, next_sigma};
}

}  // namespace detail

/// Resolves the mutually referential (alpha, sigma_re) pair at scale = 1 by
/// fixed-point iteration seeded at the Gaussian scale sigma0(d_max, w_min_re),
/// with Aitken delta-squared acceleration on the sigma map. Each map
/// evaluation counts as one iteration. On return the boundary constraint
/// r_re(d_max, scale=1) = w_min_re holds within 1e-6.
inline ReCalibration calibrate_re(long d_max, double w_min_re, double tol = 1e-9,
                                  int max_iters = 100) {
    if (d_max < 1) throw std::invalid_argument("calibrate_re: d_max must be >= 1");
    if (!(w_min_re > 0.0 && w_min_re < 1.0))
        throw std::invalid_argument("calibrate_re: w_min_re must lie strictly in (0,1)");
    if (tol <= 0.0) throw std::invalid_argument("calibrate_re: tol must be positive");
    if (max_iters < 1) throw std::invalid_argument("calibrate_re: max_iters must be >= 1");

    double sigma = calibrate_sigma0(d_max, w_min_re);
    int iters = 0;
    bool converged = false;
    double alpha = 0.0;

    while (iters < max_iters) {
        auto [a1, s1] = detail::re_fixed_point_step(sigma, d_max, w_min_re);
        ++iters;
        if (std::abs(s1 - sigma) < tol) {
            sigma = s1;
            alpha = a1;
            converged = true;
            break;
        }
        if (iters >= max_iters) {
            sigma = s1;
            alpha = a1;
            break;
        }
        auto [a2, s2] = detail::re_fixed_point_step(s1, d_max, w_min_re);
        ++iters;
        if (std::abs(s2 - s1) < tol) {
            sigma = s2;
            alpha = a2;
            converged = true;
            break;
        }
        const double denom = s2 - 2.0 * s1 + sigma;
        double accelerated =
            denom != 0.0 ? sigma - (s1 - sigma) * (s1 - sigma) / denom : s2;
        if (!(accelerated > 0.0) || !std::isfinite(accelerated)) accelerated = s2;
        sigma = accelerated;
        alpha = a2;
    }

    // alpha recomputed from the final sigma makes the boundary constraint
    // exact up to rounding.
    alpha = re_alpha(d_max, w_min_re, sigma, 1.0);
    const double residual = std::abs(re_weight(d_max, 1.0, sigma, alpha) - w_min_re);
    if (!converged || residual >= 1e-6) {
        throw CalibrationError(
            "calibrate_re: fixed point did not converge within " + std::to_string(max_iters) +
                " iterations (residual " + std::to_string(residual) + ")",
            residual);
    }
    return {sigma, alpha, iters};
}

/// A^re = lambda_re * A * r_re, entrywise.
inline LogitsMatrix re_logits(const LogitsMatrix& base, const Matrix& r_re, double lambda_re) {
    if (!base.values.same_shape(r_re))
        throw std::invalid_argument("re_logits: shape mismatch");
    LogitsMatrix out;
    out.stage = Stage::re;
    out.values = Matrix(base.values.rows(), base.values.cols());
    for (std::size_t i = 0; i < base.values.rows(); ++i)
        for (std::size_t j = 0; j < base.values.cols(); ++j)
            out.values(i, j) = lambda_re * base.values(i, j) * r_re(i, j);
    return out;
}

}  // namespace tdrs
