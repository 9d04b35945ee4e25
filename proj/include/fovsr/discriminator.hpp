#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fovsr/errors.hpp"
#include "fovsr/generator.hpp"
#include "fovsr/nn.hpp"

namespace fovsr {

/// Patch critic: 4 stride-2 convolutions, global-average head, one scalar.
/// Only consulted when the optional real/fake term is enabled; the default
/// adversarial objective never reads it.
template <typename T>
struct DiscriminatorParams {
    ConvParams<T> c1, c2, c3, c4;
    Vec<T> head_w;
    T head_b = T(0);
    bool initialized = false;

    static DiscriminatorParams make(Rng& rng) {
        DiscriminatorParams p;
        p.c1 = ConvParams<T>::make(3, 32, 3, 2, 1, rng);
        p.c2 = ConvParams<T>::make(32, 64, 3, 2, 1, rng);
        p.c3 = ConvParams<T>::make(64, 128, 3, 2, 1, rng);
        p.c4 = ConvParams<T>::make(128, 256, 3, 2, 1, rng);
        p.head_w = Vec<T>::Zero(256);
        Mat<T> hw = Mat<T>::Zero(256, 1);
        kaiming_uniform(hw, 256, rng);
        p.head_w = hw.col(0);
        p.initialized = true;
        return p;
    }

    static DiscriminatorParams zeros_like(const DiscriminatorParams& o) {
        DiscriminatorParams p = o;
        p.c1 = ConvParams<T>::zeros_like(o.c1);
        p.c2 = ConvParams<T>::zeros_like(o.c2);
        p.c3 = ConvParams<T>::zeros_like(o.c3);
        p.c4 = ConvParams<T>::zeros_like(o.c4);
        p.head_w.setZero();
        p.head_b = T(0);
        return p;
    }
};

template <typename T>
std::vector<TensorRef<T>> tensor_refs(DiscriminatorParams<T>& p) {
    std::vector<TensorRef<T>> refs;
    auto add_conv = [&](const std::string& name, ConvParams<T>& c) {
        refs.push_back({name + ".w", c.w.data(), c.w.rows(), c.w.cols()});
        refs.push_back({name + ".b", c.b.data(), c.b.size(), 1});
    };
    add_conv("critic1", p.c1);
    add_conv("critic2", p.c2);
    add_conv("critic3", p.c3);
    add_conv("critic4", p.c4);
    refs.push_back({"critic.head_w", p.head_w.data(), p.head_w.size(), 1});
    refs.push_back({"critic.head_b", &p.head_b, 1, 1});
    return refs;
}

template <typename T>
struct CriticTrace {
    Tensor3<T> x0, a1_pre, a1, a2_pre, a2, a3_pre, a3, a4_pre, a4;
};

template <typename T>
T critic_score_t(const DiscriminatorParams<T>& p, const Tensor3<T>& x, CriticTrace<T>* tr = nullptr) {
    if (!p.initialized) throw StateError("critic_score: params not initialized");
    if (x.h < 16 || x.w < 16) throw std::invalid_argument("critic_score: image too small");
    const T slope = T(kLReluSlope);
    Tensor3<T> a1_pre = conv2d(p.c1, x);
    Tensor3<T> a1 = leaky_relu(a1_pre, slope);
    Tensor3<T> a2_pre = conv2d(p.c2, a1);
    Tensor3<T> a2 = leaky_relu(a2_pre, slope);
    Tensor3<T> a3_pre = conv2d(p.c3, a2);
    Tensor3<T> a3 = leaky_relu(a3_pre, slope);
    Tensor3<T> a4_pre = conv2d(p.c4, a3);
    Tensor3<T> a4 = leaky_relu(a4_pre, slope);
    const Vec<T> pooled = a4.data.rowwise().mean();
    const T score = p.head_w.dot(pooled) + p.head_b;
    if (tr) {
        tr->x0 = x;
        tr->a1_pre = std::move(a1_pre);
        tr->a1 = std::move(a1);
        tr->a2_pre = std::move(a2_pre);
        tr->a2 = std::move(a2);
        tr->a3_pre = std::move(a3_pre);
        tr->a3 = std::move(a3);
        tr->a4_pre = std::move(a4_pre);
        tr->a4 = std::move(a4);
    }
    return score;
}

template <typename T>
T critic_score(const DiscriminatorParams<T>& p, const Image<T>& img) {
    return critic_score_t(p, Tensor3<T>::from_image(img));
}

/// dScore -> input gradient; parameter gradients accumulate into `g`.
template <typename T>
Tensor3<T> critic_backward(const DiscriminatorParams<T>& p, const CriticTrace<T>& tr, T dscore,
                           DiscriminatorParams<T>& g) {
    const T slope = T(kLReluSlope);
    const Vec<T> pooled = tr.a4.data.rowwise().mean();
    g.head_w += pooled * dscore;
    g.head_b += dscore;

    Tensor3<T> d4 = tr.a4;
    const T inv_px = T(1) / T(tr.a4.pixels());
    d4.data = (p.head_w * dscore * inv_px).replicate(1, tr.a4.pixels());

    Tensor3<T> d = leaky_relu_backward(tr.a4_pre, d4, slope);
    d = conv2d_backward(p.c4, tr.a3, d, g.c4);
    d = leaky_relu_backward(tr.a3_pre, d, slope);
    d = conv2d_backward(p.c3, tr.a2, d, g.c3);
    d = leaky_relu_backward(tr.a2_pre, d, slope);
    d = conv2d_backward(p.c2, tr.a1, d, g.c2);
    d = leaky_relu_backward(tr.a1_pre, d, slope);
    return conv2d_backward(p.c1, tr.x0, d, g.c1);
}

/// Numerically stable binary cross-entropy with logits.
/// loss = max(s,0) - s*t + log(1 + exp(-|s|)); dloss/ds = sigmoid(s) - t
template <typename T>
T bce_logits(T score, T target, T* dscore = nullptr) {
    const T s = score;
    const T loss = std::max(s, T(0)) - s * target + std::log1p(std::exp(-std::abs(s)));
    if (dscore) *dscore = T(1) / (T(1) + std::exp(-s)) - target;
    return loss;
}

} // namespace fovsr
