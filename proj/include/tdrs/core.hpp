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
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdrs/matrix.hpp"

namespace tdrs {

enum class Segment : std::uint8_t { vision, instruction };

enum class Stage : std::uint8_t { base, sd, dc, re, combined, post_softmax };

inline std::string stage_name(Stage s) {
    switch (s) {
        case Stage::base: return "base";
        case Stage::sd: return "sd";
        case Stage::dc: return "dc";
        case Stage::re: return "re";
        case Stage::combined: return "combined";
        case Stage::post_softmax: return "post_softmax";
    }
    throw std::invalid_argument("unknown stage");
}

/// Concatenated vision+instruction token sequence. Positions are always the
/// contiguous range 0..n-1, with every vision token before every
/// instruction token.
struct TokenSequence {
    Matrix embeddings;               // (n x d)
    std::vector<Segment> segments;   // per token
    std::vector<long> positions;     // 0..n-1

    std::size_t length() const { return embeddings.rows(); }
    std::size_t dim() const { return embeddings.cols(); }
};

/// Rotary frequency schedule: thetas[i] = base^(-2*i/d) for i = 0..d/2-1.
struct RotarySchedule {
    std::size_t d = 0;
    double base = 10000.0;
    std::vector<double> thetas;

    static RotarySchedule make(std::size_t dim, double base = 10000.0) {
        if (dim < 2 || dim % 2 != 0)
            throw std::invalid_argument("RotarySchedule: dim must be even and >= 2");
        if (base <= 0.0)
            throw std::invalid_argument("RotarySchedule: base must be positive");
        RotarySchedule s;
        s.d = dim;
        s.base = base;
        s.thetas.resize(dim / 2);
        for (std::size_t i = 0; i < dim / 2; ++i) {
            s.thetas[i] = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
        }
        return s;
    }
};

struct LogitsMatrix {
    Matrix values;  // (n_q x n_k)
    Stage stage = Stage::base;
};

/// Tunable scalars of the three modulation stages plus the fixed-point
/// solver settings used by the reinforcement calibration.
struct DrsHyperParams {
    double w_min_dc = 0.01;
    double lambda_dc = 1.0;
    double w_min_re = 0.02;
    double lambda_re = 1.0;
    double scale_clamp_eps = 1e-3;
    double fixed_point_tol = 1e-9;
    int fixed_point_max_iters = 100;
};

inline DrsHyperParams validate_hyperparams(const DrsHyperParams& p) {
    if (!(p.w_min_dc > 0.0 && p.w_min_dc < 1.0))
        throw std::invalid_argument("w_min_dc must lie strictly in (0,1)");
    if (!(p.w_min_re > 0.0 && p.w_min_re < 1.0))
        throw std::invalid_argument("w_min_re must lie strictly in (0,1)");
    if (p.lambda_dc < 0.0) throw std::invalid_argument("lambda_dc must be >= 0");
    if (p.lambda_re < 0.0) throw std::invalid_argument("lambda_re must be >= 0");
    if (!(p.scale_clamp_eps > 0.0 && p.scale_clamp_eps < 0.5))
        throw std::invalid_argument("scale_clamp_eps must lie in (0, 0.5)");
    if (p.fixed_point_tol <= 0.0) throw std::invalid_argument("fixed_point_tol must be > 0");
    if (p.fixed_point_max_iters < 1)
        throw std::invalid_argument("fixed_point_max_iters must be >= 1");
    return p;
}

/// Per-pair modulation state shared by the three stages.
struct ModulationMaps {
    Matrix sem_sim;   // [-1, 1]
    Matrix sem_pos;   // [0, 1]
    Matrix scale;     // [eps, 1]
    Matrix r_dc;      // (0, 1]
    Matrix r_re;      // (0, 1]
    double sigma0 = 0.0;
    double sigma_re = 0.0;
    Matrix alpha;     // per-pair exponent of the reinforcement kernel
    long d_max = 0;
};

/// Synthetic stand-in for encoder outputs: i.i.d. standard-normal token
/// embeddings, vision segment first, deterministic in the seed.
inline TokenSequence build_sequence(std::size_t vision_count, std::size_t instr_count,
                                    std::size_t dim, std::uint64_t seed) {
    if (dim < 2 || dim % 2 != 0)
        throw std::invalid_argument("build_sequence: dim must be even and >= 2");
    const std::size_t n = vision_count + instr_count;
    if (n == 0) throw std::invalid_argument("build_sequence: sequence must be non-empty");

    TokenSequence seq;
    seq.embeddings = Matrix(n, dim);
    seq.segments.reserve(n);
    seq.positions.reserve(n);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < dim; ++j) seq.embeddings(i, j) = normal(rng);
        seq.segments.push_back(i < vision_count ? Segment::vision : Segment::instruction);
        seq.positions.push_back(static_cast<long>(i));
    }
    return seq;
}

}  // namespace tdrs
