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

/// Cosine similarity between unrotated query and key embeddings.
/// A zero-norm row yields similarity 0 for all its pairs.
inline Matrix semantic_similarity(const TokenSequence& q_tokens, const TokenSequence& k_tokens) {
    const std::size_t d = q_tokens.dim();
    if (k_tokens.dim() != d)
        throw std::invalid_argument("semantic_similarity: dimension mismatch");
    const std::size_t n_q = q_tokens.length();
    const std::size_t n_k = k_tokens.length();

    auto row_norm = [d](const Matrix& m, std::size_t i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) acc += m(i, c) * m(i, c);
        return std::sqrt(acc);
    };

    std::vector<double> q_norms(n_q), k_norms(n_k);
    for (std::size_t i = 0; i < n_q; ++i) q_norms[i] = row_norm(q_tokens.embeddings, i);
    for (std::size_t j = 0; j < n_k; ++j) k_norms[j] = row_norm(k_tokens.embeddings, j);

    Matrix sim(n_q, n_k);
    for (std::size_t i = 0; i < n_q; ++i) {
        for (std::size_t j = 0; j < n_k; ++j) {
            if (q_norms[i] == 0.0 || k_norms[j] == 0.0) {
                sim(i, j) = 0.0;
                continue;
            }
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c)
                dot += q_tokens.embeddings(i, c) * k_tokens.embeddings(j, c);
            // Clamp rounding spill beyond [-1, 1].
            sim(i, j) = std::min(1.0, std::max(-1.0, dot / (q_norms[i] * k_norms[j])));
        }
    }
    return sim;
}

/// Maps cosine similarity in [-1, 1] onto [0, 1].
inline Matrix positive_affinity(const Matrix& sem_sim) {
    Matrix out(sem_sim.rows(), sem_sim.cols());
    for (std::size_t i = 0; i < sem_sim.rows(); ++i) {
        for (std::size_t j = 0; j < sem_sim.cols(); ++j) {
            const double v = sem_sim(i, j);
            if (v < -1.0 || v > 1.0)
                throw std::domain_error("positive_affinity: entry outside [-1, 1]");
            out(i, j) = 0.5 * (v + 1.0);
        }
    }
    return out;
}

/// Adds the semantic bias to the base logits.
inline LogitsMatrix sd_logits(const LogitsMatrix& base, const Matrix& sem_pos) {
    if (!base.values.same_shape(sem_pos))
        throw std::invalid_argument("sd_logits: shape mismatch");
    LogitsMatrix out;
    out.stage = Stage::sd;
    out.values = Matrix(base.values.rows(), base.values.cols());
    for (std::size_t i = 0; i < base.values.rows(); ++i)
        for (std::size_t j = 0; j < base.values.cols(); ++j)
            out.values(i, j) = base.values(i, j) + sem_pos(i, j);
    return out;
}

/// Min-max normalization of sem_pos over the whole matrix, clamped below at
/// eps so the effective-distance division stays finite. A constant matrix
/// maps to 0.5 everywhere.
inline Matrix scale_map(const Matrix& sem_pos, double eps) {
    if (sem_pos.empty()) throw std::invalid_argument("scale_map: empty matrix");
    const double lo = sem_pos.min_entry();
    const double hi = sem_pos.max_entry();
    if (lo < 0.0 || hi > 1.0)
        throw std::domain_error("scale_map: entries must lie in [0, 1]");
    const double range = hi - lo;
    Matrix out(sem_pos.rows(), sem_pos.cols());
    for (std::size_t i = 0; i < sem_pos.rows(); ++i) {
        for (std::size_t j = 0; j < sem_pos.cols(); ++j) {
            const double s = range == 0.0 ? 0.5 : (sem_pos(i, j) - lo) / range;
            out(i, j) = std::max(s, eps);
        }
    }
    return out;
}

}  // namespace tdrs
