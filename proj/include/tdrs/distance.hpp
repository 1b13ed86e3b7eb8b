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

#include "tdrs/core.hpp"
#include "tdrs/matrix.hpp"

namespace tdrs {

/// Decay scale chosen so the Gaussian weight at the maximal distance equals
/// exactly w_min_dc: sigma0 = d_max / sqrt(-2 ln w_min_dc).
inline double calibrate_sigma0(long d_max, double w_min_dc) {
    if (d_max < 1) throw std::invalid_argument("calibrate_sigma0: d_max must be >= 1");
    if (!(w_min_dc > 0.0 && w_min_dc < 1.0))
        throw std::invalid_argument("calibrate_sigma0: w_min_dc must lie strictly in (0,1)");
    return static_cast<double>(d_max) / std::sqrt(-2.0 * std::log(w_min_dc));
}

/// Semantic-scaled distance d / scale. Callers must pass an eps-clamped
/// scale; clamping is scale_map's job.
inline double effective_distance(long d, double scale) {
    if (d < 0) throw std::invalid_argument("effective_distance: distance must be >= 0");
    if (scale <= 0.0)
        throw std::invalid_argument("effective_distance: scale must be positive (clamp upstream)");
    return static_cast<double>(d) / scale;
}

/// Gaussian modulation weight exp(-1/2 (d_hat / sigma0)^2) in (0, 1].
inline double dc_weight(long d, double scale, double sigma0) {
    if (sigma0 <= 0.0) throw std::invalid_argument("dc_weight: sigma0 must be positive");
    const double d_hat = effective_distance(d, scale);
    const double z = d_hat / sigma0;
    return std::exp(-0.5 * z * z);
}

/// A^dc = lambda_dc * A * r_dc, entrywise.
inline LogitsMatrix dc_logits(const LogitsMatrix& base, const Matrix& r_dc, double lambda_dc) {
    if (!base.values.same_shape(r_dc))
        throw std::invalid_argument("dc_logits: shape mismatch");
    LogitsMatrix out;
    out.stage = Stage::dc;
    out.values = Matrix(base.values.rows(), base.values.cols());
    for (std::size_t i = 0; i < base.values.rows(); ++i)
        for (std::size_t j = 0; j < base.values.cols(); ++j)
            out.values(i, j) = lambda_dc * base.values(i, j) * r_dc(i, j);
    return out;
}

}  // namespace tdrs
