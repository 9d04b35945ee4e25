#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "fovsr/errors.hpp"

namespace fovsr {

// One channel plane, H x W, row-major so image rows are contiguous.
template <typename T>
using Plane = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// RGB raster with values normalized to [0,1].
template <typename T>
struct Image {
    std::array<Plane<T>, 3> chan; // R, G, B

    Image() = default;
    Image(int height, int width) {
        for (auto& c : chan) c = Plane<T>::Zero(height, width);
    }

    int height() const { return static_cast<int>(chan[0].rows()); }
    int width() const { return static_cast<int>(chan[0].cols()); }

    static Image constant(int height, int width, T r, T g, T b) {
        Image img;
        img.chan[0] = Plane<T>::Constant(height, width, r);
        img.chan[1] = Plane<T>::Constant(height, width, g);
        img.chan[2] = Plane<T>::Constant(height, width, b);
        return img;
    }

    template <typename U>
    Image<U> cast() const {
        Image<U> out;
        for (int c = 0; c < 3; ++c) out.chan[c] = chan[c].template cast<U>();
        return out;
    }

    Image clamped() const {
        Image out = *this;
        for (auto& c : out.chan) c = c.max(T(0)).min(T(1));
        return out;
    }

    bool same_dims(const Image& other) const {
        return height() == other.height() && width() == other.width();
    }
};

/// Fixed 8x8 partitioning of an image.
struct PatchGrid {
    int rows = 8;
    int cols = 8;
    int patch_h = 0;
    int patch_w = 0;

    static PatchGrid for_image(int height, int width) {
        PatchGrid g;
        if (height % g.rows != 0 || width % g.cols != 0)
            throw std::invalid_argument("PatchGrid: image dims " + std::to_string(height) + "x" +
                                        std::to_string(width) + " are not divisible by 8");
        g.patch_h = height / g.rows;
        g.patch_w = width / g.cols;
        return g;
    }
};

/// One tile of the 8x8 grid, with its grid coordinates.
template <typename T>
struct Patch {
    Image<T> pixels;
    int row = 0;
    int col = 0;
};

namespace detail {

// Keys cubic convolution kernel, a = -0.5 (the common "bicubic").
template <typename T>
T cubic_weight(T x) {
    const T a = T(-0.5);
    x = std::abs(x);
    if (x <= T(1)) return (a + T(2)) * x * x * x - (a + T(3)) * x * x + T(1);
    if (x < T(2)) return a * x * x * x - T(5) * a * x * x + T(8) * a * x - T(4) * a;
    return T(0);
}

// Per output index: 4 clamped source taps and their weights.
template <typename T>
struct CubicTaps {
    std::array<int, 4> idx;
    std::array<T, 4> w;
};

template <typename T>
std::vector<CubicTaps<T>> cubic_taps(int src, int dst) {
    std::vector<CubicTaps<T>> taps(dst);
    const T scale = T(src) / T(dst);
    for (int o = 0; o < dst; ++o) {
        T sx = (T(o) + T(0.5)) * scale - T(0.5);
        int base = static_cast<int>(std::floor(sx));
        T frac = sx - T(base);
        T wsum = T(0);
        for (int k = 0; k < 4; ++k) {
            int i = base - 1 + k;
            T w = cubic_weight(T(k - 1) - frac);
            taps[o].idx[k] = std::clamp(i, 0, src - 1);
            taps[o].w[k] = w;
            wsum += w;
        }
        for (auto& w : taps[o].w) w /= wsum;
    }
    return taps;
}

} // namespace detail

/// Bicubic resampling to an arbitrary size. Output clamped to [0,1].
template <typename T>
Image<T> resize_bicubic(const Image<T>& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bicubic: output dims must be positive");
    const int h = img.height(), w = img.width();
    if (out_h == h && out_w == w) return img;

    const auto tx = detail::cubic_taps<T>(w, out_w);
    const auto ty = detail::cubic_taps<T>(h, out_h);

    Image<T> out(out_h, out_w);
    for (int c = 0; c < 3; ++c) {
        // Horizontal pass, then vertical.
        Plane<T> mid(h, out_w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < out_w; ++x) {
                const auto& t = tx[x];
                mid(y, x) = t.w[0] * img.chan[c](y, t.idx[0]) + t.w[1] * img.chan[c](y, t.idx[1]) +
                            t.w[2] * img.chan[c](y, t.idx[2]) + t.w[3] * img.chan[c](y, t.idx[3]);
            }
        for (int y = 0; y < out_h; ++y) {
            const auto& t = ty[y];
            for (int x = 0; x < out_w; ++x)
                out.chan[c](y, x) = t.w[0] * mid(t.idx[0], x) + t.w[1] * mid(t.idx[1], x) +
                                    t.w[2] * mid(t.idx[2], x) + t.w[3] * mid(t.idx[3], x);
        }
        out.chan[c] = out.chan[c].max(T(0)).min(T(1));
    }
    return out;
}

/// Grow the image (bicubic) to the smallest multiples of m covering it.
/// Returns the input untouched when dims are already multiples.
template <typename T>
Image<T> resize_to_multiple(const Image<T>& img, int m) {
    if (m <= 0) throw std::invalid_argument("resize_to_multiple: m must be >= 1");
    const int h = img.height(), w = img.width();
    const int oh = ((h + m - 1) / m) * m;
    const int ow = ((w + m - 1) / m) * m;
    if (oh == h && ow == w) return img;
    return resize_bicubic(img, oh, ow);
}

/// Split into the 64 grid patches, row-major.
template <typename T>
std::vector<Patch<T>> partition(const Image<T>& img) {
    const PatchGrid g = PatchGrid::for_image(img.height(), img.width());
    std::vector<Patch<T>> patches;
    patches.reserve(g.rows * g.cols);
    for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c) {
            Patch<T> p;
            p.row = r;
            p.col = c;
            p.pixels = Image<T>(g.patch_h, g.patch_w);
            for (int ch = 0; ch < 3; ++ch)
                p.pixels.chan[ch] = img.chan[ch].block(r * g.patch_h, c * g.patch_w, g.patch_h, g.patch_w);
            patches.push_back(std::move(p));
        }
    return patches;
}

namespace detail {

// Separable feather weight of a patch spanning [lo, lo+len) along one axis.
// Ramps linearly over the 2b-pixel band straddling each interior seam;
// weights of the two patches meeting at a seam sum to exactly 1.
template <typename T>
T feather_weight(int pos, int lo, int len, int b, bool has_prev, bool has_next) {
    T w = T(1);
    if (has_prev) {
        // rises 0 -> 1 over [lo - b, lo + b)
        T t = (T(pos - (lo - b)) + T(0.5)) / T(2 * b);
        w = std::min(w, std::clamp(t, T(0), T(1)));
    } else if (pos < lo) {
        return T(0);
    }
    if (has_next) {
        T t = (T(pos - (lo + len - b)) + T(0.5)) / T(2 * b);
        w = std::min(w, T(1) - std::clamp(t, T(0), T(1)));
    } else if (pos >= lo + len) {
        return T(0);
    }
    return w;
}

} // namespace detail

/// Reassemble 64 patches into one image, linearly feathering a 2b-pixel band
/// across every interior seam. b = 0 reproduces the tiling bit-exactly.
template <typename T>
Image<T> assemble(const std::vector<Patch<T>>& patches, int blend_px) {
    if (patches.size() != 64) throw std::invalid_argument("assemble: expected 64 patches");
    const int ph = patches[0].pixels.height();
    const int pw = patches[0].pixels.width();
    std::array<bool, 64> seen{};
    for (const auto& p : patches) {
        if (p.pixels.height() != ph || p.pixels.width() != pw)
            throw std::invalid_argument("assemble: inconsistent patch sizes");
        if (p.row < 0 || p.row >= 8 || p.col < 0 || p.col >= 8)
            throw std::invalid_argument("assemble: grid position out of range");
        bool& s = seen[p.row * 8 + p.col];
        if (s) throw std::invalid_argument("assemble: duplicate grid position");
        s = true;
    }
    if (blend_px < 0) throw std::invalid_argument("assemble: blend width must be >= 0");
    if (blend_px > 0 && 2 * blend_px > std::min(ph, pw))
        throw std::invalid_argument("assemble: blend band wider than a patch");

    const int h = 8 * ph, w = 8 * pw;
    Image<T> out(h, w);

    if (blend_px == 0) {
        for (const auto& p : patches)
            for (int c = 0; c < 3; ++c)
                out.chan[c].block(p.row * ph, p.col * pw, ph, pw) = p.pixels.chan[c];
        return out;
    }

    const int b = blend_px;
    for (const auto& p : patches) {
        const int y0 = p.row * ph, x0 = p.col * pw;
        const int ylo = std::max(0, y0 - b), yhi = std::min(h, y0 + ph + b);
        const int xlo = std::max(0, x0 - b), xhi = std::min(w, x0 + pw + b);
        for (int y = ylo; y < yhi; ++y) {
            const T wy = detail::feather_weight<T>(y, y0, ph, b, p.row > 0, p.row < 7);
            if (wy == T(0)) continue;
            const int sy = std::clamp(y - y0, 0, ph - 1);
            for (int x = xlo; x < xhi; ++x) {
                const T wx = detail::feather_weight<T>(x, x0, pw, b, p.col > 0, p.col < 7);
                if (wx == T(0)) continue;
                const int sx = std::clamp(x - x0, 0, pw - 1);
                const T ww = wy * wx;
                for (int c = 0; c < 3; ++c) out.chan[c](y, x) += ww * p.pixels.chan[c](sy, sx);
            }
        }
    }
    return out;
}

/// Rec. 601 luma, per pixel, stays within [0,1].
template <typename T>
Plane<T> luminance(const Image<T>& img) {
    return T(0.299) * img.chan[0] + T(0.587) * img.chan[1] + T(0.114) * img.chan[2];
}

} // namespace fovsr
