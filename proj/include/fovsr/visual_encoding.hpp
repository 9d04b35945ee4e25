#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "fovsr/errors.hpp"
#include "fovsr/image.hpp"
#include "fovsr/nn.hpp"

namespace fovsr {

/// Channel co-occurrence statistics of a feature map, normalized so the
/// values stay comparable across patch sizes.
template <typename T>
struct GramMatrix {
    Mat<T> values; // C x C, symmetric PSD
    int channels() const { return static_cast<int>(values.rows()); }
};

/// Scalar appearance summary of a patch: per-channel means plus
/// luminance statistics. Luminance is Rec. 601.
template <typename T>
struct VisualCues {
    std::array<T, 3> color_mean{T(0), T(0), T(0)};
    T brightness = T(0); // mean(Y)
    T contrast = T(0);   // population std(Y)
    T sharpness = T(0);  // mean |4-neighbor Laplacian(Y)|, replicate borders
};

/// E_n: the Gram token set with one extra cue token appended. Rows 0..C-1
/// are the Gram rows; row C packs the 6 cue scalars, zero-padded to width C.
template <typename T>
struct AugmentedGram {
    GramMatrix<T> gram;
    VisualCues<T> cues;
    Mat<T> token_view; // (C+1) x C
    int channels() const { return gram.channels(); }
};

/// G[i][j] = sum_p F[i][p] * F[j][p] / (C * H' * W')
template <typename T>
GramMatrix<T> gram(const Tensor3<T>& f) {
    if (f.channels() < 1 || f.pixels() < 1) throw std::invalid_argument("gram: empty feature map");
    if (!f.data.allFinite()) throw std::invalid_argument("gram: non-finite feature map");
    GramMatrix<T> g;
    const T norm = T(1) / (T(f.channels()) * T(f.pixels()));
    g.values.noalias() = f.data * f.data.transpose() * norm;
    return g;
}

template <typename T>
VisualCues<T> visual_cues(const Image<T>& p) {
    VisualCues<T> c;
    for (int ch = 0; ch < 3; ++ch) c.color_mean[ch] = p.chan[ch].mean();

    const Plane<T> y = luminance(p);
    c.brightness = y.mean();
    c.contrast = std::sqrt((y - c.brightness).square().mean());

    // |x[up] + x[down] + x[left] + x[right] - 4x|, borders replicated
    const int h = p.height(), w = p.width();
    T acc = T(0);
    for (int r = 0; r < h; ++r)
        for (int col = 0; col < w; ++col) {
            const T up = y(r > 0 ? r - 1 : 0, col);
            const T down = y(r < h - 1 ? r + 1 : h - 1, col);
            const T left = y(r, col > 0 ? col - 1 : 0);
            const T right = y(r, col < w - 1 ? col + 1 : w - 1);
            acc += std::abs(up + down + left + right - T(4) * y(r, col));
        }
    c.sharpness = acc / (T(h) * T(w));
    return c;
}

template <typename T>
inline std::array<T, 6> cue_vector(const VisualCues<T>& c) {
    return {c.color_mean[0], c.color_mean[1], c.color_mean[2], c.brightness, c.contrast, c.sharpness};
}

template <typename T>
AugmentedGram<T> augment_gram(const GramMatrix<T>& g, const VisualCues<T>& c) {
    const int C = g.channels();
    if (C < 6) throw ConfigError("augment_gram: need at least 6 channels to hold the cue row");
    AugmentedGram<T> a;
    a.gram = g;
    a.cues = c;
    a.token_view = Mat<T>::Zero(C + 1, C);
    a.token_view.topRows(C) = g.values;
    const auto cues = cue_vector(c);
    for (int i = 0; i < 6; ++i) a.token_view(C, i) = cues[i];
    return a;
}

} // namespace fovsr
