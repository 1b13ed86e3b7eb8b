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
#include <vector>

#include "tdrs/core.hpp"
#include "tdrs/matrix.hpp"

namespace tdrs {

/// Full block-diagonal rotation matrix for position m. This is the slow
/// reference path; apply_rotation is tested against it.
inline Matrix rotation_matrix(const RotarySchedule& schedule, long m) {
    if (m < 0) throw std::invalid_argument("rotation_matrix: position must be >= 0");
    Matrix r(schedule.d, schedule.d);
    for (std::size_t i = 0; i < schedule.d / 2; ++i) {
        const double angle = static_cast<double>(m) * schedule.thetas[i];
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        r(2 * i, 2 * i) = c;
        r(2 * i, 2 * i + 1) = -s;
        r(2 * i + 1, 2 * i) = s;
        r(2 * i + 1, 2 * i + 1) = c;
    }
    return r;
}

/// Rotates x in place-free form using the per-pair (cos, sin) formula on
/// adjacent dimension pairs (2k, 2k+1). Never materializes the d x d matrix.
inline std::vector<double> apply_rotation(const RotarySchedule& schedule,
                                          const std::vector<double>& x, long m) {
    if (x.size() != schedule.d)
        throw std::invalid_argument("apply_rotation: vector length does not match schedule");
    if (m < 0) throw std::invalid_argument("apply_rotation: position must be >= 0");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < schedule.d / 2; ++i) {
        const double angle = static_cast<double>(m) * schedule.thetas[i];
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        out[2 * i] = c * x[2 * i] - s * x[2 * i + 1];
        out[2 * i + 1] = s * x[2 * i] + c * x[2 * i + 1];
    }
    return out;
}

/// Pre-softmax attention logits: values[i][j] = (R_i Q_i) . (R_j K_j) / sqrt(d).
/// By orthogonality this equals Q_i^T R_{j-i} K_j / sqrt(d), so the result
/// depends only on position gaps; `position_shift` adds a uniform offset s
/// to every position (used to verify exactly that).
inline LogitsMatrix base_logits(const TokenSequence& q_tokens, const TokenSequence& k_tokens,
                                const RotarySchedule& schedule, long position_shift = 0) {
    const std::size_t d = schedule.d;
    if (q_tokens.dim() != d || k_tokens.dim() != d)
        throw std::invalid_argument("base_logits: embedding dimension does not match schedule");
    if (position_shift < 0)
        throw std::invalid_argument("base_logits: position shift must be >= 0");

    const std::size_t n_q = q_tokens.length();
    const std::size_t n_k = k_tokens.length();
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    // Rotate every row once up front.
    Matrix rot_q(n_q, d), rot_k(n_k, d);
    std::vector<double> row(d);
    for (std::size_t i = 0; i < n_q; ++i) {
        for (std::size_t j = 0; j < d; ++j) row[j] = q_tokens.embeddings(i, j);
        auto r = apply_rotation(schedule, row, q_tokens.positions[i] + position_shift);
        for (std::size_t j = 0; j < d; ++j) rot_q(i, j) = r[j];
    }
    for (std::size_t i = 0; i < n_k; ++i) {
        for (std::size_t j = 0; j < d; ++j) row[j] = k_tokens.embeddings(i, j);
        auto r = apply_rotation(schedule, row, k_tokens.positions[i] + position_shift);
        for (std::size_t j = 0; j < d; ++j) rot_k(i, j) = r[j];
    }

    LogitsMatrix out;
    out.stage = Stage::base;
    out.values = Matrix(n_q, n_k);
    for (std::size_t i = 0; i < n_q; ++i) {
        for (std::size_t j = 0; j < n_k; ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) acc += rot_q(i, c) * rot_k(j, c);
            out.values(i, j) = acc * inv_sqrt_d;
        }
    }
    return out;
}

}  // namespace tdrs
