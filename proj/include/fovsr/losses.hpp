#pragma once

#include <array>
#include <cmath>

#include "fovsr/backbone.hpp"
#include "fovsr/errors.hpp"
#include "fovsr/image.hpp"
#include "fovsr/nn.hpp"
#include "fovsr/visual_encoding.hpp"

namespace fovsr {

/// Per-tap-layer weights plus the seam band width.
struct LossWeights {
    std::array<double, 3> w{1.0 / 3, 1.0 / 3, 1.0 / 3};
    int seam_band = 4;

    void validate() const {
        double sum = 0;
        for (double x : w) {
            if (x < 0) throw ConfigError("loss weights must be >= 0");
            sum += x;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("loss weights must sum to 1");
        if (seam_band < 1) throw ConfigError("seam band must be >= 1");
    }
};

// ---------------------------------------------------------------------------
// Content loss: mean squared difference of structural-encoder latents.
// The `orig` branch is the target and receives no gradient.
// ---------------------------------------------------------------------------

template <typename T>
T content_loss(const Tensor3<T>& orig, const Tensor3<T>& gen, Tensor3<T>* dgen = nullptr) {
    if (orig.channels() != gen.channels() || orig.h != gen.h || orig.w != gen.w)
        throw std::invalid_argument("content_loss: latent shape mismatch");
    const T n = T(gen.data.size());
    Mat<T> diff = gen.data - orig.data;
    if (dgen) {
        *dgen = gen;
        dgen->data = diff * (T(2) / n);
    }
    return diff.array().square().sum() / n;
}

// ---------------------------------------------------------------------------
// Visual quality loss: weighted Frobenius distances between Gram matrices of
// backbone tap activations. The narrow branch is the target.
// ---------------------------------------------------------------------------

template <typename T>
T visual_loss_t(const Tensor3<T>& gen, const Tensor3<T>& narrow, const Backbone<T>& bb,
                const LossWeights& lw, Tensor3<T>* dgen = nullptr) {
    typename Backbone<T>::Trace trace;
    const auto gen_taps = bb.forward(gen, dgen ? &trace : nullptr);
    const auto nar_taps = bb.forward(narrow);

    T total = T(0);
    std::vector<Tensor3<T>> tap_grads;
    if (dgen) tap_grads.resize(gen_taps.size());

    for (size_t l = 0; l < gen_taps.size(); ++l) {
        const GramMatrix<T> gg = gram(gen_taps[l]);
        const GramMatrix<T> gn = gram(nar_taps[l]);
        const Mat<T> diff = gg.values - gn.values;
        total += T(lw.w[l]) * diff.array().square().sum();
        if (dgen) {
            // d||G_g - G_n||^2 / dF through G = F F^T / (C*P)
            const T scale = T(1) / (T(gen_taps[l].channels()) * T(gen_taps[l].pixels()));
            Tensor3<T> g = gen_taps[l];
            g.data.noalias() = (diff + diff.transpose()) * gen_taps[l].data * (T(2) * T(lw.w[l]) * scale);
            tap_grads[l] = std::move(g);
        }
    }
    if (dgen) *dgen = bb.backward(trace, tap_grads);
    return total;
}

template <typename T>
T visual_loss(const Image<T>& gen, const Image<T>& narrow, const Backbone<T>& bb,
              const LossWeights& lw) {
    return visual_loss_t(Tensor3<T>::from_image(gen), Tensor3<T>::from_image(narrow), bb, lw);
}

/// Eq-style total: unit-weighted sum of the two generator terms.
template <typename T>
T generator_loss(T content, T visual) {
    if (content < T(0) || visual < T(0)) throw std::invalid_argument("generator_loss: negative term");
    return content + visual;
}

// ---------------------------------------------------------------------------
// Seam consistency loss over the 8x8 grid of an assembled image.
//
// The embedding phi is pluggable: anything with
//   Tensor3<T> forward(const Tensor3<T>&) const
//   Tensor3<T> vjp(const Tensor3<T>& x, const Tensor3<T>& dout) const
// works. TapEmbedder adapts one backbone tap layer.
// ---------------------------------------------------------------------------

template <typename T>
struct TapEmbedder {
    const Backbone<T>* bb;
    int tap = 0;

    Tensor3<T> forward(const Tensor3<T>& x) const { return bb->forward(x)[tap]; }

    Tensor3<T> vjp(const Tensor3<T>& x, const Tensor3<T>& dout) const {
        typename Backbone<T>::Trace trace;
        const auto taps = bb->forward(x, &trace);
        std::vector<Tensor3<T>> tap_grads;
        for (size_t l = 0; l < taps.size(); ++l) {
            if (static_cast<int>(l) == tap) {
                tap_grads.push_back(dout);
            } else {
                tap_grads.emplace_back(taps[l].channels(), taps[l].h, taps[l].w); // zeros
            }
        }
        return bb->backward(trace, tap_grads);
    }
};

/// Identity embedding (1x1 receptive field), used to pin down band locality.
template <typename T>
struct IdentityEmbedder {
    Tensor3<T> forward(const Tensor3<T>& x) const { return x; }
    Tensor3<T> vjp(const Tensor3<T>&, const Tensor3<T>& dout) const { return dout; }
};

namespace detail {

template <typename T>
Tensor3<T> slice_rows(const Tensor3<T>& img, int row0, int nrows) {
    Tensor3<T> out(img.channels(), nrows, img.w);
    out.data = img.data.middleCols(static_cast<Eigen::Index>(row0) * img.w,
                                   static_cast<Eigen::Index>(nrows) * img.w);
    return out;
}

template <typename T>
void scatter_rows(Tensor3<T>& dimg, const Tensor3<T>& dband, int row0) {
    dimg.data.middleCols(static_cast<Eigen::Index>(row0) * dimg.w, dband.data.cols()) += dband.data;
}

template <typename T>
Tensor3<T> slice_cols(const Tensor3<T>& img, int col0, int ncols) {
    Tensor3<T> out(img.channels(), img.h, ncols);
    for (int y = 0; y < img.h; ++y)
        out.data.middleCols(static_cast<Eigen::Index>(y) * ncols, ncols) =
            img.data.middleCols(static_cast<Eigen::Index>(y) * img.w + col0, ncols);
    return out;
}

template <typename T>
void scatter_cols(Tensor3<T>& dimg, const Tensor3<T>& dband, int col0) {
    for (int y = 0; y < dimg.h; ++y)
        dimg.data.middleCols(static_cast<Eigen::Index>(y) * dimg.w + col0, dband.w) +=
            dband.data.middleCols(static_cast<Eigen::Index>(y) * dband.w, dband.w);
}

} // namespace detail

template <typename T, typename Embed>
T seam_loss_t(const Tensor3<T>& img, const PatchGrid& grid, int b, const Embed& phi,
              Tensor3<T>* dimg = nullptr) {
    if (b < 1) throw std::invalid_argument("seam_loss: band must be >= 1 px");
    if (b >= grid.patch_h || b >= grid.patch_w)
        throw std::invalid_argument("seam_loss: band must be narrower than a patch");
    if (img.h != grid.rows * grid.patch_h || img.w != grid.cols * grid.patch_w)
        throw std::invalid_argument("seam_loss: image does not match the grid");

    if (dimg) *dimg = Tensor3<T>(img.channels(), img.h, img.w);
    T total = T(0);

    auto accumulate = [&](const Tensor3<T>& lo, const Tensor3<T>& hi, auto&& scatter_lo,
                          auto&& scatter_hi) {
        const Tensor3<T> flo = phi.forward(lo);
        const Tensor3<T> fhi = phi.forward(hi);
        Mat<T> diff = fhi.data - flo.data;
        total += diff.array().square().sum();
        if (dimg) {
            Tensor3<T> dd = fhi;
            dd.data = diff * T(2);
            scatter_hi(phi.vjp(hi, dd));
            dd.data = -dd.data;
            scatter_lo(phi.vjp(lo, dd));
        }
    };

    // horizontal seams: bands above/below each interior grid row boundary
    for (int r = 1; r < grid.rows; ++r) {
        const int seam = r * grid.patch_h;
        const Tensor3<T> above = detail::slice_rows(img, seam - b, b);
        const Tensor3<T> below = detail::slice_rows(img, seam, b);
        accumulate(above, below,
                   [&](const Tensor3<T>& d) { detail::scatter_rows(*dimg, d, seam - b); },
                   [&](const Tensor3<T>& d) { detail::scatter_rows(*dimg, d, seam); });
    }
    // vertical seams
    for (int c = 1; c < grid.cols; ++c) {
        const int seam = c * grid.patch_w;
        const Tensor3<T> left = detail::slice_cols(img, seam - b, b);
        const Tensor3<T> right = detail::slice_cols(img, seam, b);
        accumulate(left, right,
                   [&](const Tensor3<T>& d) { detail::scatter_cols(*dimg, d, seam - b); },
                   [&](const Tensor3<T>& d) { detail::scatter_cols(*dimg, d, seam); });
    }

    total /= T(b);
    if (dimg) dimg->data /= T(b);
    return total;
}

template <typename T>
T seam_loss(const Image<T>& img, const PatchGrid& grid, int b, const Backbone<T>& bb, int tap = 0) {
    TapEmbedder<T> phi{&bb, tap};
    return seam_loss_t(Tensor3<T>::from_image(img), grid, b, phi);
}

// ---------------------------------------------------------------------------
// Perceptual loss vs ground truth: weighted per-layer activation MSE.
// ---------------------------------------------------------------------------

template <typename T>
T perceptual_loss_t(const Tensor3<T>& gen, const Tensor3<T>& gt, const Backbone<T>& bb,
                    const LossWeights& lw, Tensor3<T>* dgen = nullptr) {
    if (gen.channels() != gt.channels() || gen.h != gt.h || gen.w != gt.w)
        throw std::invalid_argument("perceptual_loss: dimension mismatch");
    typename Backbone<T>::Trace trace;
    const auto gen_taps = bb.forward(gen, dgen ? &trace : nullptr);
    const auto gt_taps = bb.forward(gt);

    T total = T(0);
    std::vector<Tensor3<T>> tap_grads;
    if (dgen) tap_grads.resize(gen_taps.size());
    for (size_t l = 0; l < gen_taps.size(); ++l) {
        const T n = T(gen_taps[l].data.size());
        Mat<T> diff = gen_taps[l].data - gt_taps[l].data;
        total += T(lw.w[l]) * diff.array().square().sum() / n;
        if (dgen) {
            Tensor3<T> g = gen_taps[l];
            g.data = diff * (T(2) * T(lw.w[l]) / n);
            tap_grads[l] = std::move(g);
        }
    }
    if (dgen) *dgen = bb.backward(trace, tap_grads);
    return total;
}

template <typename T>
T perceptual_loss(const Image<T>& gen, const Image<T>& gt, const Backbone<T>& bb,
                  const LossWeights& lw) {
    return perceptual_loss_t(Tensor3<T>::from_image(gen), Tensor3<T>::from_image(gt), bb, lw);
}

template <typename T>
T discriminator_loss(T seam, T perceptual) {
    if (seam < T(0) || perceptual < T(0)) throw std::invalid_argument("discriminator_loss: negative term");
    return seam + perceptual;
}

} // namespace fovsr
