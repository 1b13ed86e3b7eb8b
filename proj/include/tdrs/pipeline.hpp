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
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>

#include "tdrs/core.hpp"
#include "tdrs/distance.hpp"
#include "tdrs/matrix.hpp"
#include "tdrs/reinforce.hpp"
#include "tdrs/rope.hpp"
#include "tdrs/semantic.hpp"

namespace tdrs {

enum class Variant : std::uint8_t { baseline, sd_only, no_rerd, full };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::baseline: return "baseline";
        case Variant::sd_only: return "sd";
        case Variant::no_rerd: return "no_rerd";
        case Variant::full: return "full";
    }
    throw std::invalid_argument("unknown variant");
}

struct PipelineConfig {
    Variant variant = Variant::full;
    DrsHyperParams hyper;
    bool auto_calibrate = false;
    double w_dc_multiplier = 3.0;
    double w_re_multiplier = 2.0;
    bool causal_mask = false;
};

struct CalibrationReport {
    double abs_min = 0.0;
    double w_min_dc = 0.0;
    double w_min_re = 0.0;
    double lambda_dc = 0.0;
    double lambda_re = 0.0;
    bool auto_calibrated = false;
    std::optional<double> sigma0;
    std::optional<double> sigma_re;
    std::optional<double> alpha_ref;
    std::optional<int> fixed_point_iterations;
};

struct AttentionResult {
    std::map<Stage, LogitsMatrix> logits_by_stage;
    LogitsMatrix weights;  // stage == post_softmax
    Matrix output;         // (n_q x d_v)
    ModulationMaps maps;
    CalibrationReport calibration_report;
    // Labels for export.
    std::vector<long> row_positions, col_positions;
    std::vector<Segment> row_segments, col_segments;
};

/// Minimum magnitude over the pre-softmax map, the |A|_min quantity that
/// drives hyperparameter auto-calibration.
inline double abs_min(const LogitsMatrix& base) {
    if (base.values.empty()) throw std::invalid_argument("abs_min: empty matrix");
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < base.values.rows(); ++i)
        for (std::size_t j = 0; j < base.values.cols(); ++j)
            m = std::min(m, std::abs(base.values(i, j)));
    return m;
}

namespace detail {
inline double clamp_w_min(double x) {
    return std::min(std::max(x, 1e-6), 1.0 - 1e-6);
}
}  // namespace detail

/// Derives the floor weights from |A|_min: w_min_dc = 3|A|_min,
/// w_min_re = 2|A|_min (multipliers configurable), lambda_dc = 1.
inline DrsHyperParams auto_hyperparams(const LogitsMatrix& base, const PipelineConfig& cfg) {
    const double a = abs_min(base);
    DrsHyperParams p = cfg.hyper;
    p.w_min_dc = detail::clamp_w_min(cfg.w_dc_multiplier * a);
    p.w_min_re = detail::clamp_w_min(cfg.w_re_multiplier * a);
    p.lambda_dc = 1.0;
    return p;
}

/// Numerically stable row softmax. -inf entries are masked cells and come
/// out exactly 0; a row with no unmasked entries is an error.
inline LogitsMatrix softmax_rows(const LogitsMatrix& logits) {
    const Matrix& v = logits.values;
    LogitsMatrix out;
    out.stage = Stage::post_softmax;
    out.values = Matrix(v.rows(), v.cols());
    for (std::size_t i = 0; i < v.rows(); ++i) {
        double row_max = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < v.cols(); ++j) row_max = std::max(row_max, v(i, j));
        if (!std::isfinite(row_max))
            throw std::runtime_error("softmax_rows: row has no unmasked entries");
        double sum = 0.0;
        for (std::size_t j = 0; j < v.cols(); ++j) {
            const double e = std::isinf(v(i, j)) ? 0.0 : std::exp(v(i, j) - row_max);
            out.values(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < v.cols(); ++j) out.values(i, j) /= sum;
    }
    return out;
}

/// Full T-DRS pass. Stage matrices are combined residually per variant:
///   baseline: A
///   sd:       A + A_sd
///   no_rerd:  A + A_sd + A_dc
///   full:     A + A_sd + A_dc + A_re
/// (A_sd itself already contains A, so A enters the sum twice; the
/// calibration report exposes |A|_min and the derived floors so the
/// effective decomposition is visible.)
inline AttentionResult run(const TokenSequence& q, const TokenSequence& k,
                           const TokenSequence& v, const RotarySchedule& schedule,
                           const PipelineConfig& cfg) {
    if (q.dim() != schedule.d || k.dim() != schedule.d)
        throw std::invalid_argument("run: embedding dimension does not match schedule");
    if (k.length() != v.length())
        throw std::invalid_argument("run: key and value sequences must be aligned");

    AttentionResult res;
    res.row_positions = q.positions;
    res.col_positions = k.positions;
    res.row_segments = q.segments;
    res.col_segments = k.segments;

    const LogitsMatrix base = base_logits(q, k, schedule);
    res.logits_by_stage[Stage::base] = base;

    const DrsHyperParams hyper = cfg.auto_calibrate
                                     ? validate_hyperparams(auto_hyperparams(base, cfg))
                                     : validate_hyperparams(cfg.hyper);
    res.calibration_report.abs_min = abs_min(base);
    res.calibration_report.w_min_dc = hyper.w_min_dc;
    res.calibration_report.w_min_re = hyper.w_min_re;
    res.calibration_report.lambda_dc = hyper.lambda_dc;
    res.calibration_report.lambda_re = hyper.lambda_re;
    res.calibration_report.auto_calibrated = cfg.auto_calibrate;

    const std::size_t n_q = q.length();
    const std::size_t n_k = k.length();

    // Maximum realizable |i - j| in this map; kernels only see d = 0 when
    // the map is a single position, so the d_max >= 1 floor is inert there.
    long d_max = 0;
    for (std::size_t i = 0; i < n_q; ++i)
        for (std::size_t j = 0; j < n_k; ++j)
            d_max = std::max(d_max, std::labs(q.positions[i] - k.positions[j]));
    res.maps.d_max = d_max;
    const long d_max_calib = std::max<long>(1, d_max);

    Matrix combined = base.values;
    auto add_into = [&combined](const Matrix& m) {
        for (std::size_t i = 0; i < combined.rows(); ++i)
            for (std::size_t j = 0; j < combined.cols(); ++j) combined(i, j) += m(i, j);
    };

    if (cfg.variant != Variant::baseline) {
        res.maps.sem_sim = semantic_similarity(q, k);
        res.maps.sem_pos = positive_affinity(res.maps.sem_sim);
        const LogitsMatrix a_sd = sd_logits(base, res.maps.sem_pos);
        res.logits_by_stage[Stage::sd] = a_sd;
        add_into(a_sd.values);

        if (cfg.variant == Variant::no_rerd || cfg.variant == Variant::full) {
            res.maps.scale = scale_map(res.maps.sem_pos, hyper.scale_clamp_eps);
            const double sigma0 = calibrate_sigma0(d_max_calib, hyper.w_min_dc);
            res.maps.sigma0 = sigma0;
            res.calibration_report.sigma0 = sigma0;

            res.maps.r_dc = Matrix(n_q, n_k);
            for (std::size_t i = 0; i < n_q; ++i)
                for (std::size_t j = 0; j < n_k; ++j)
                    res.maps.r_dc(i, j) = dc_weight(std::labs(q.positions[i] - k.positions[j]),
                                                    res.maps.scale(i, j), sigma0);
            const LogitsMatrix a_dc = dc_logits(base, res.maps.r_dc, hyper.lambda_dc);
            res.logits_by_stage[Stage::dc] = a_dc;
            add_into(a_dc.values);
        }

        if (cfg.variant == Variant::full) {
            const ReCalibration cal = calibrate_re(d_max_calib, hyper.w_min_re,
                                                   hyper.fixed_point_tol,
                                                   hyper.fixed_point_max_iters);
            res.maps.sigma_re = cal.sigma_re;
            res.calibration_report.sigma_re = cal.sigma_re;
            res.calibration_report.alpha_ref = cal.alpha_ref;
            res.calibration_report.fixed_point_iterations = cal.iterations;

            res.maps.alpha = Matrix(n_q, n_k);
            res.maps.r_re = Matrix(n_q, n_k);
            for (std::size_t i = 0; i < n_q; ++i) {
                for (std::size_t j = 0; j < n_k; ++j) {
                    const double a = re_alpha(d_max_calib, hyper.w_min_re, cal.sigma_re,
                                              res.maps.scale(i, j));
                    res.maps.alpha(i, j) = a;
                    res.maps.r_re(i, j) =
                        re_weight(std::labs(q.positions[i] - k.positions[j]),
                                  res.maps.scale(i, j), cal.sigma_re, a);
                }
            }
            const LogitsMatrix a_re = re_logits(base, res.maps.r_re, hyper.lambda_re);
            res.logits_by_stage[Stage::re] = a_re;
            add_into(a_re.values);
        }
    }

    LogitsMatrix final_logits;
    final_logits.stage = Stage::combined;
    final_logits.values = combined;
    res.logits_by_stage[Stage::combined] = final_logits;

    // Mask after modulation so masked pairs can never be resurrected.
    LogitsMatrix masked = final_logits;
    if (cfg.causal_mask) {
        for (std::size_t i = 0; i < n_q; ++i)
            for (std::size_t j = 0; j < n_k; ++j)
                if (k.positions[j] > q.positions[i])
                    masked.values(i, j) = -std::numeric_limits<double>::infinity();
    }

    res.weights = softmax_rows(masked);
    res.output = matmul(res.weights.values, v.embeddings);
    return res;
}

}  // namespace tdrs
