#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fovsr/errors.hpp"
#include "fovsr/image.hpp"

namespace fovsr {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Feature map stored channel-major: C x (H*W), pixel column p = y*W + x.
/// Token view (positions as rows) is the transpose.
template <typename T>
struct Tensor3 {
    Mat<T> data;
    int h = 0;
    int w = 0;

    Tensor3() = default;
    Tensor3(int channels, int height, int width)
        : data(Mat<T>::Zero(channels, static_cast<Eigen::Index>(height) * width)), h(height), w(width) {}

    int channels() const { return static_cast<int>(data.rows()); }
    int pixels() const { return h * w; }

    static Tensor3 from_image(const Image<T>& img) {
        Tensor3 t(3, img.height(), img.width());
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < t.h; ++y)
                for (int x = 0; x < t.w; ++x) t.data(c, y * t.w + x) = img.chan[c](y, x);
        return t;
    }

    Image<T> to_image() const {
        if (channels() != 3) throw std::invalid_argument("to_image: need 3 channels");
        Image<T> img(h, w);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) img.chan[c](y, x) = data(c, y * w + x);
        return img;
    }
};

/// Deterministic RNG. mt19937 output is fixed by the standard, and the
/// uniform/normal transforms are spelled out here so streams are bit-stable
/// across library implementations.
class Rng {
public:
    explicit Rng(std::uint32_t seed) : gen_(seed) {}

    double uniform() { return (static_cast<double>(gen_() >> 5) + 0.5) / 134217728.0; } // (0,1), 27 bits

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    std::uint32_t next_u32() { return gen_(); }

    std::string state() const {
        std::ostringstream os;
        os << gen_;
        return os.str();
    }
    void restore(const std::string& s) {
        std::istringstream is(s);
        is >> gen_;
    }

private:
    std::mt19937 gen_;
};

template <typename T>
void kaiming_uniform(Mat<T>& m, int fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<T>(rng.uniform(-bound, bound));
}

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM)
// ---------------------------------------------------------------------------

template <typename T>
struct ConvParams {
    Mat<T> w; // out_ch x (in_ch * k * k)
    Vec<T> b; // out_ch
    int in_ch = 0, out_ch = 0, k = 3, stride = 1, pad = 1;

    static ConvParams make(int in_ch, int out_ch, int k, int stride, int pad, Rng& rng, bool zero_init = false) {
        ConvParams p;
        p.in_ch = in_ch;
        p.out_ch = out_ch;
        p.k = k;
        p.stride = stride;
        p.pad = pad;
        p.w = Mat<T>::Zero(out_ch, static_cast<Eigen::Index>(in_ch) * k * k);
        p.b = Vec<T>::Zero(out_ch);
        if (!zero_init) kaiming_uniform(p.w, in_ch * k * k, rng);
        return p;
    }

    static ConvParams zeros_like(const ConvParams& other) {
        ConvParams p = other;
        p.w.setZero();
        p.b.setZero();
        return p;
    }

    int out_dim(int in) const { return (in + 2 * pad - k) / stride + 1; }
};

template <typename T>
Mat<T> im2col(const ConvParams<T>& p, const Tensor3<T>& x) {
    const int oh = p.out_dim(x.h), ow = p.out_dim(x.w);
    Mat<T> cols = Mat<T>::Zero(static_cast<Eigen::Index>(p.in_ch) * p.k * p.k,
                               static_cast<Eigen::Index>(oh) * ow);
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
            const Eigen::Index col = static_cast<Eigen::Index>(oy) * ow + ox;
            for (int ky = 0; ky < p.k; ++ky) {
                const int sy = oy * p.stride - p.pad + ky;
                if (sy < 0 || sy >= x.h) continue;
                for (int kx = 0; kx < p.k; ++kx) {
                    const int sx = ox * p.stride - p.pad + kx;
                    if (sx < 0 || sx >= x.w) continue;
                    cols.block(static_cast<Eigen::Index>(ky * p.k + kx) * p.in_ch, col, p.in_ch, 1) =
                        x.data.col(static_cast<Eigen::Index>(sy) * x.w + sx);
                }
            }
        }
    return cols;
}

template <typename T>
Tensor3<T> conv2d(const ConvParams<T>& p, const Tensor3<T>& x) {
    if (x.channels() != p.in_ch) throw std::invalid_argument("conv2d: channel mismatch");
    Tensor3<T> y(p.out_ch, p.out_dim(x.h), p.out_dim(x.w));
    const Mat<T> cols = im2col(p, x);
    y.data.noalias() = p.w * cols;
    y.data.colwise() += p.b;
    return y;
}

/// dY -> dX, accumulating parameter gradients into `grad`.
template <typename T>
Tensor3<T> conv2d_backward(const ConvParams<T>& p, const Tensor3<T>& x, const Tensor3<T>& dy,
                           ConvParams<T>& grad) {
    const Mat<T> cols = im2col(p, x);
    grad.w.noalias() += dy.data * cols.transpose();
    grad.b.noalias() += dy.data.rowwise().sum();

    Mat<T> dcols = p.w.transpose() * dy.data; // (in_ch*k*k) x (oh*ow)
    Tensor3<T> dx(p.in_ch, x.h, x.w);
    const int oh = dy.h, ow = dy.w;
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
            const Eigen::Index col = static_cast<Eigen::Index>(oy) * ow + ox;
            for (int ky = 0; ky < p.k; ++ky) {
                const int sy = oy * p.stride - p.pad + ky;
                if (sy < 0 || sy >= x.h) continue;
                for (int kx = 0; kx < p.k; ++kx) {
                    const int sx = ox * p.stride - p.pad + kx;
                    if (sx < 0 || sx >= x.w) continue;
                    dx.data.col(static_cast<Eigen::Index>(sy) * x.w + sx) +=
                        dcols.block(static_cast<Eigen::Index>(ky * p.k + kx) * p.in_ch, col, p.in_ch, 1);
                }
            }
        }
    return dx;
}

// ---------------------------------------------------------------------------
// Activations / pooling
// ---------------------------------------------------------------------------

template <typename T>
Tensor3<T> leaky_relu(const Tensor3<T>& x, T slope) {
    Tensor3<T> y = x;
    y.data = x.data.array().max(x.data.array() * slope).matrix();
    return y;
}

template <typename T>
Tensor3<T> leaky_relu_backward(const Tensor3<T>& x, const Tensor3<T>& dy, T slope) {
    Tensor3<T> dx = dy;
    dx.data = (x.data.array() > T(0)).select(dy.data, dy.data * slope);
    return dx;
}

struct MaxPoolCache {
    std::vector<Eigen::Index> argmax; // per (channel, out pixel): source pixel column
    int in_h = 0, in_w = 0;
};

template <typename T>
Tensor3<T> maxpool2(const Tensor3<T>& x, MaxPoolCache* cache = nullptr) {
    const int oh = x.h / 2, ow = x.w / 2, C = x.channels();
    Tensor3<T> y(C, oh, ow);
    if (cache) {
        cache->argmax.assign(static_cast<size_t>(C) * oh * ow, 0);
        cache->in_h = x.h;
        cache->in_w = x.w;
    }
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
            const Eigen::Index o = static_cast<Eigen::Index>(oy) * ow + ox;
            for (int c = 0; c < C; ++c) {
                T best = -std::numeric_limits<T>::infinity();
                Eigen::Index best_p = 0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const Eigen::Index p = static_cast<Eigen::Index>(2 * oy + dy) * x.w + (2 * ox + dx);
                        if (x.data(c, p) > best) {
                            best = x.data(c, p);
                            best_p = p;
                        }
                    }
                y.data(c, o) = best;
                if (cache) cache->argmax[static_cast<size_t>(c) * oh * ow + o] = best_p;
            }
        }
    return y;
}

template <typename T>
Tensor3<T> maxpool2_backward(const MaxPoolCache& cache, int channels, const Tensor3<T>& dy) {
    Tensor3<T> dx(channels, cache.in_h, cache.in_w);
    const Eigen::Index opx = dy.pixels();
    for (int c = 0; c < channels; ++c)
        for (Eigen::Index o = 0; o < opx; ++o)
            dx.data(c, cache.argmax[static_cast<size_t>(c) * opx + o]) += dy.data(c, o);
    return dx;
}

// ---------------------------------------------------------------------------
// Pixel shuffle: (C*r^2) x H x W -> C x rH x rW
// out[c][r*y+a][r*x+b] = in[c*r^2 + a*r + b][y][x]
// ---------------------------------------------------------------------------

template <typename T>
Tensor3<T> pixel_shuffle(const Tensor3<T>& x, int r) {
    if (r < 1) throw std::invalid_argument("pixel_shuffle: r must be >= 1");
    if (x.channels() % (r * r) != 0)
        throw std::invalid_argument("pixel_shuffle: channels not divisible by r^2");
    if (r == 1) return x;
    const int C = x.channels() / (r * r);
    Tensor3<T> y(C, x.h * r, x.w * r);
    for (int c = 0; c < C; ++c)
        for (int a = 0; a < r; ++a)
            for (int b = 0; b < r; ++b) {
                const int src = c * r * r + a * r + b;
                for (int yy = 0; yy < x.h; ++yy)
                    for (int xx = 0; xx < x.w; ++xx)
                        y.data(c, static_cast<Eigen::Index>(r * yy + a) * y.w + (r * xx + b)) =
                            x.data(src, static_cast<Eigen::Index>(yy) * x.w + xx);
            }
    return y;
}

template <typename T>
Tensor3<T> pixel_shuffle_backward(const Tensor3<T>& dy, int r, int in_channels, int in_h, int in_w) {
    if (r == 1) return dy;
    Tensor3<T> dx(in_channels, in_h, in_w);
    const int C = in_channels / (r * r);
    for (int c = 0; c < C; ++c)
        for (int a = 0; a < r; ++a)
            for (int b = 0; b < r; ++b) {
                const int src = c * r * r + a * r + b;
                for (int yy = 0; yy < in_h; ++yy)
                    for (int xx = 0; xx < in_w; ++xx)
                        dx.data(src, static_cast<Eigen::Index>(yy) * in_w + xx) =
                            dy.data(c, static_cast<Eigen::Index>(r * yy + a) * dy.w + (r * xx + b));
            }
    return dx;
}

// ---------------------------------------------------------------------------
// Token-space linear map and scaled dot-product attention
// ---------------------------------------------------------------------------

template <typename T>
Mat<T> rowwise_softmax(const Mat<T>& z) {
    Mat<T> a(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const T m = z.row(i).maxCoeff();
        Vec<T> e = (z.row(i).array() - m).exp().matrix().transpose();
        a.row(i) = e.transpose() / e.sum();
    }
    return a;
}

template <typename T>
struct AttentionCache {
    Mat<T> attn; // T x S rowwise-softmax weights
};

/// softmax(Q K^T / sqrt(dn)) V with Q: TxDa, K: SxDa, V: SxDv.
template <typename T>
Mat<T> scaled_dot_attention(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int dn,
                            AttentionCache<T>* cache = nullptr) {
    if (q.cols() != k.cols()) throw std::invalid_argument("attention: query/key width mismatch");
    if (k.rows() != v.rows()) throw std::invalid_argument("attention: key/value token count mismatch");
    if (dn < 1) throw std::invalid_argument("attention: dn must be >= 1");
    const T scale = T(1) / std::sqrt(T(dn));
    Mat<T> attn = rowwise_softmax<T>(q * k.transpose() * scale);
    if (cache) cache->attn = attn;
    return attn * v;
}

template <typename T>
void scaled_dot_attention_backward(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int dn,
                                   const AttentionCache<T>& cache, const Mat<T>& dout, Mat<T>& dq,
                                   Mat<T>& dk, Mat<T>& dv) {
    const T scale = T(1) / std::sqrt(T(dn));
    const Mat<T>& a = cache.attn;
    dv.noalias() = a.transpose() * dout;
    Mat<T> da = dout * v.transpose();
    // softmax backward, row by row: dz = a .* (da - sum(da .* a))
    Mat<T> dz(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const T dot = a.row(i).dot(da.row(i));
        dz.row(i) = (a.row(i).array() * (da.row(i).array() - dot)).matrix();
    }
    dq.noalias() = dz * k * scale;
    dk.noalias() = dz.transpose() * q * scale;
}

/// Cross-view attention exactly as the fusion equation states it: the wide
/// tokens query the narrow tokens, which provide both keys and values.
/// Widths must already agree; dn is the token width of `en`.
template <typename T>
Mat<T> cross_attention(const Mat<T>& ew, const Mat<T>& en) {
    if (ew.cols() != en.cols()) throw std::invalid_argument("cross_attention: token width mismatch");
    if (en.rows() < 1) throw std::invalid_argument("cross_attention: empty key/value set");
    return scaled_dot_attention<T>(ew, en, en, static_cast<int>(en.cols()));
}

/// Residual fusion: E = E_w + attention output, elementwise.
template <typename T>
Mat<T> residual_fuse(const Mat<T>& ew, const Mat<T>& attn_out) {
    if (ew.rows() != attn_out.rows() || ew.cols() != attn_out.cols())
        throw std::invalid_argument("residual_fuse: shape mismatch");
    return ew + attn_out;
}

} // namespace fovsr
