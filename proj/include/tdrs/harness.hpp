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

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdrs/core.hpp"
#include "tdrs/pipeline.hpp"
#include "tdrs/rope.hpp"

namespace tdrs {

struct ProbeSpec {
    enum class Kind : std::uint8_t { ones, random };
    Kind kind = Kind::ones;
    std::uint64_t seed = 0;
    int trials = 16;  // random probe only
};

/// RoPE decay envelope plus the two calibrated kernel curves at scale = 1.
struct DecayCurve {
    std::vector<long> gaps;
    std::vector<double> mean_abs_logit;
    std::vector<double> r_dc_curve;
    std::vector<double> r_re_curve;
    std::size_t dim = 0;
    DrsHyperParams hyper;
    double sigma0 = 0.0;
    double sigma_re = 0.0;
    double alpha_ref = 0.0;
    int iterations = 0;
};

struct VariantStats {
    double distant_mass = 0.0;
    std::optional<double> cross_modal_mass;  // absent for single-modality input
    double mean_entropy = 0.0;
    double argmax_agreement_vs_baseline = 1.0;
};

struct ComparisonReport {
    std::map<std::string, VariantStats> variants;
    // agreement[a][b] = fraction of query rows whose argmax key matches.
    std::map<std::string, std::map<std::string, double>> agreement;
    long distant_threshold = 0;
};

/// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("spearman: need two equal-length vectors of size >= 2");
    auto ranks = [](const std::vector<double>& v) {
        const std::size_t n = v.size();
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(n);
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) { mx += rx[i]; my += ry[i]; }
    mx /= n; my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::invalid_argument("spearman: constant input");
    return sxy / std::sqrt(sxx * syy);
}

/// Mean |pre-softmax logit| at each gap for the chosen probe, alongside
/// the Gaussian and rational-quadratic curves calibrated with
/// d_max = max_gap at scale = 1.
inline DecayCurve sweep_decay(std::size_t dim, long max_gap, const DrsHyperParams& hyper,
                              const ProbeSpec& probe) {
    if (max_gap < 1) throw std::invalid_argument("sweep_decay: max_gap must be >= 1");
    if (probe.kind == ProbeSpec::Kind::random && probe.trials < 1)
        throw std::invalid_argument("sweep_decay: random probe needs trials >= 1");
    validate_hyperparams(hyper);
    const RotarySchedule schedule = RotarySchedule::make(dim);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dim));

    std::vector<std::vector<double>> qs, ks;
    if (probe.kind == ProbeSpec::Kind::ones) {
        std::vector<double> u(dim, inv_sqrt_d);
        qs.push_back(u);
        ks.push_back(u);
    } else {
        std::mt19937_64 rng(probe.seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int t = 0; t < probe.trials; ++t) {
            std::vector<double> a(dim), b(dim);
            for (auto& v : a) v = normal(rng);
            for (auto& v : b) v = normal(rng);
            qs.push_back(std::move(a));
            ks.push_back(std::move(b));
        }
    }

    DecayCurve curve;
    curve.dim = dim;
    curve.hyper = hyper;
    curve.sigma0 = calibrate_sigma0(max_gap, hyper.w_min_dc);
    const ReCalibration cal =
        calibrate_re(max_gap, hyper.w_min_re, hyper.fixed_point_tol, hyper.fixed_point_max_iters);
    curve.sigma_re = cal.sigma_re;
    curve.alpha_ref = cal.alpha_ref;
    curve.iterations = cal.iterations;

    for (long gap = 0; gap <= max_gap; ++gap) {
        double acc = 0.0;
        for (std::size_t t = 0; t < qs.size(); ++t) {
            const auto rk = apply_rotation(schedule, ks[t], gap);
            double dot = 0.0;
            for (std::size_t c = 0; c < dim; ++c) dot += qs[t][c] * rk[c];
            acc += std::abs(dot * inv_sqrt_d);
        }
        curve.gaps.push_back(gap);
        curve.mean_abs_logit.push_back(acc / static_cast<double>(qs.size()));
        curve.r_dc_curve.push_back(dc_weight(gap, 1.0, curve.sigma0));
        curve.r_re_curve.push_back(re_weight(gap, 1.0, cal.sigma_re, cal.alpha_ref));
    }
    return curve;
}

namespace detail {

inline std::size_t row_argmax(const Matrix& m, std::size_t i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < m.cols(); ++j)
        if (m(i, j) > m(i, best)) best = j;
    return best;
}

inline VariantStats weights_stats(const AttentionResult& r, long distant_threshold,
                                  bool both_modalities) {
    const Matrix& w = r.weights.values;
    VariantStats s;
    double distant = 0.0, cross = 0.0, entropy = 0.0;
    for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) {
            const double p = w(i, j);
            if (std::labs(r.row_positions[i] - r.col_positions[j]) > distant_threshold)
                distant += p;
            if (r.row_segments[i] != r.col_segments[j]) cross += p;
            if (p > 0.0) entropy -= p * std::log(p);
        }
    }
    const double n_rows = static_cast<double>(w.rows());
    s.distant_mass = distant / n_rows;
    if (both_modalities) s.cross_modal_mass = cross / n_rows;
    s.mean_entropy = entropy / n_rows;
    return s;
}

}  // namespace detail

/// Runs all four variants on the same inputs and summarizes how the
/// attention mass moves between them.
inline ComparisonReport compare_variants(const TokenSequence& seq,
                                         const RotarySchedule& schedule,
                                         const DrsHyperParams& hyper) {
    if (seq.length() < 4)
        throw std::invalid_argument("compare_variants: sequence length must be >= 4");
    bool has_vision = false, has_instr = false;
    for (Segment s : seq.segments) {
        has_vision |= s == Segment::vision;
        has_instr |= s == Segment::instruction;
    }
    const bool both = has_vision && has_instr;

    const long d_max = static_cast<long>(seq.length()) - 1;
    ComparisonReport report;
    report.distant_threshold = d_max / 2;

    const Variant order[] = {Variant::baseline, Variant::sd_only, Variant::no_rerd, Variant::full};
    std::map<std::string, AttentionResult> results;
    for (Variant v : order) {
        PipelineConfig cfg;
        cfg.variant = v;
        cfg.hyper = hyper;
        results.emplace(variant_name(v), run(seq, seq, seq, schedule, cfg));
    }

    auto agreement = [](const AttentionResult& a, const AttentionResult& b) {
        std::size_t same = 0;
        for (std::size_t i = 0; i < a.weights.values.rows(); ++i)
            if (detail::row_argmax(a.weights.values, i) == detail::row_argmax(b.weights.values, i))
                ++same;
        return static_cast<double>(same) / static_cast<double>(a.weights.values.rows());
    };

    const AttentionResult& baseline = results.at("baseline");
    for (Variant v : order) {
        const std::string name = variant_name(v);
        VariantStats s = detail::weights_stats(results.at(name), report.distant_threshold, both);
        s.argmax_agreement_vs_baseline = agreement(results.at(name), baseline);
        report.variants[name] = s;
        for (Variant u : order)
            report.agreement[name][variant_name(u)] =
                agreement(results.at(name), results.at(variant_name(u)));
    }
    return report;
}

struct AttentionSnapshot {
    Matrix values;
    Stage stage = Stage::base;
    std::vector<long> row_positions, col_positions;
    std::vector<Segment> row_segments, col_segments;
};

/// Pulls one stage matrix out of a result with position/modality labels
/// attached, ready for serialization or external heatmap rendering.
inline AttentionSnapshot export_attention(const AttentionResult& result, Stage which) {
    AttentionSnapshot snap;
    snap.stage = which;
    if (which == Stage::post_softmax) {
        snap.values = result.weights.values;
    } else {
        auto it = result.logits_by_stage.find(which);
        if (it == result.logits_by_stage.end())
            throw std::invalid_argument("export_attention: stage '" + stage_name(which) +
                                        "' not present in result");
        snap.values = it->second.values;
    }
    snap.row_positions = result.row_positions;
    snap.col_positions = result.col_positions;
    snap.row_segments = result.row_segments;
    snap.col_segments = result.col_segments;
    return snap;
}

}  // namespace tdrs
