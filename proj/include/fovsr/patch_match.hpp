#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fovsr/backbone.hpp"
#include "fovsr/image.hpp"
#include "fovsr/nn.hpp"

namespace fovsr {

/// One wide-grid cell paired with its best-scoring narrow-grid cell.
struct PatchMatch {
    int wide_row = 0, wide_col = 0;
    int narrow_row = 0, narrow_col = 0;
    double score = 0.0; // cosine similarity, clamped to [-1, 1]
    bool above_threshold = false;
    bool degenerate = false; // a zero embedding was involved
};

struct SimilarityResult {
    double score = 0.0;
    bool degenerate = false;
};

/// Cosine similarity with the zero-vector case pinned to 0 instead of NaN.
template <typename T>
SimilarityResult similarity(const Vec<T>& a, const Vec<T>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("similarity: length mismatch");
    if (a.size() == 0) throw std::invalid_argument("similarity: empty vectors");
    const double na = a.template cast<double>().norm();
    const double nb = b.template cast<double>().norm();
    if (na == 0.0 || nb == 0.0) return {0.0, true};
    const double raw = a.template cast<double>().dot(b.template cast<double>()) / (na * nb);
    return {std::clamp(raw, -1.0, 1.0), false};
}

/// Exhaustive argmax over the full grid x grid similarity matrix: one match
/// per wide patch, narrow patches freely reused. Ties resolve to the lowest
/// narrow index, which keeps the result order-deterministic.
template <typename T>
std::vector<PatchMatch> match_patches(const Backbone<T>& backbone, const std::vector<Patch<T>>& wide,
                                      const std::vector<Patch<T>>& narrow, double tau) {
    if (wide.size() != narrow.size() || wide.empty())
        throw std::invalid_argument("match_patches: grids must be equal-sized and non-empty");
    if (tau < -1.0 || tau > 1.0) throw std::invalid_argument("match_patches: tau outside [-1, 1]");

    std::vector<Vec<T>> wide_emb(wide.size()), narrow_emb(narrow.size());
    for (size_t i = 0; i < wide.size(); ++i) wide_emb[i] = backbone.embed(wide[i].pixels);
    for (size_t j = 0; j < narrow.size(); ++j) narrow_emb[j] = backbone.embed(narrow[j].pixels);

    std::vector<PatchMatch> matches;
    matches.reserve(wide.size());
    for (size_t i = 0; i < wide.size(); ++i) {
        PatchMatch best;
        best.wide_row = wide[i].row;
        best.wide_col = wide[i].col;
        double best_score = -std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < narrow.size(); ++j) {
            const SimilarityResult s = similarity(wide_emb[i], narrow_emb[j]);
            if (s.score > best_score) {
                best_score = s.score;
                best.narrow_row = narrow[j].row;
                best.narrow_col = narrow[j].col;
                best.score = s.score;
                best.degenerate = s.degenerate;
            }
        }
        best.above_threshold = best.score >= tau;
        matches.push_back(best);
    }
    return matches;
}

} // namespace fovsr
