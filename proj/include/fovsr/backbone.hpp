#pragma once

#include <map>
#include <string>
#include <vector>

#include "fovsr/image.hpp"
#include "fovsr/nn.hpp"

namespace fovsr {

/// Frozen convolutional feature extractor with three named tap layers.
///
/// Two presets exist: a VGG19-shaped stack whose pretrained weights can be
/// loaded from a tensor file, and a compact seeded-random stack that is fully
/// offline-deterministic. Both expose taps at increasing depth/stride; the
/// active preset is recorded in `tag` and surfaces in report metadata.
template <typename T>
class Backbone {
public:
    enum class OpKind { Conv, ReLU, MaxPool2 };
    struct Op {
        OpKind kind;
        int conv = -1; // index into convs_ when kind == Conv
    };

    struct Trace {
        std::vector<Tensor3<T>> inputs;  // input to each op
        std::vector<MaxPoolCache> pools; // one per MaxPool2 op, in op order
    };

    int num_taps() const { return static_cast<int>(tap_after_op_.size()); }
    const std::vector<std::string>& tap_names() const { return tap_names_; }
    const std::string& tag() const { return tag_; }
    int tap_stride(int tap) const { return tap_strides_[tap]; }
    int tap_channels(int tap) const { return tap_channels_[tap]; }

    /// Activation maps at the three tap layers.
    std::vector<Tensor3<T>> forward(const Tensor3<T>& input, Trace* trace = nullptr) const {
        if (input.h < 1 || input.w < 1) throw std::invalid_argument("backbone: empty input");
        std::vector<Tensor3<T>> taps;
        taps.reserve(num_taps());
        Tensor3<T> x = input;
        int pool_idx = 0;
        for (size_t i = 0; i < ops_.size(); ++i) {
            if (trace) trace->inputs.push_back(x);
            switch (ops_[i].kind) {
            case OpKind::Conv:
                x = conv2d(convs_[ops_[i].conv], x);
                break;
            case OpKind::ReLU:
                x = leaky_relu(x, T(0));
                break;
            case OpKind::MaxPool2:
                if (trace) {
                    trace->pools.emplace_back();
                    x = maxpool2(x, &trace->pools[pool_idx]);
                } else {
                    x = maxpool2<T>(x);
                }
                ++pool_idx;
                break;
            }
            if (tap_index_of_op_.count(static_cast<int>(i))) taps.push_back(x);
            if (taps.size() == tap_after_op_.size() && i + 1 < ops_.size()) break; // nothing past last tap
        }
        return taps;
    }

    /// Vector-Jacobian product: gradients at the taps back to the input.
    /// The backbone is frozen, so no parameter gradients are produced.
    Tensor3<T> backward(const Trace& trace, const std::vector<Tensor3<T>>& tap_grads) const {
        const size_t n_ops = trace.inputs.size();
        Tensor3<T> dx; // running gradient w.r.t. the output of op i
        bool live = false;
        int pool_idx = static_cast<int>(trace.pools.size());
        for (size_t ii = n_ops; ii-- > 0;) {
            const int i = static_cast<int>(ii);
            auto it = tap_index_of_op_.find(i);
            if (it != tap_index_of_op_.end()) {
                const Tensor3<T>& g = tap_grads[it->second];
                if (!live) {
                    dx = g;
                    live = true;
                } else {
                    dx.data += g.data;
                }
            }
            if (!live) continue;
            const Tensor3<T>& x = trace.inputs[ii];
            switch (ops_[ii].kind) {
            case OpKind::Conv: {
                ConvParams<T> scratch = ConvParams<T>::zeros_like(convs_[ops_[ii].conv]);
                dx = conv2d_backward(convs_[ops_[ii].conv], x, dx, scratch);
                break;
            }
            case OpKind::ReLU:
                dx = leaky_relu_backward(x, dx, T(0));
                break;
            case OpKind::MaxPool2:
                --pool_idx;
                dx = maxpool2_backward(trace.pools[pool_idx], x.channels(), dx);
                break;
            }
        }
        return dx;
    }

    /// Patch embedding: taps are spatially average-pooled and concatenated.
    /// Patches smaller than 32 px on a side are bicubically enlarged first.
    Vec<T> embed(const Image<T>& patch) const {
        if (patch.height() < 1 || patch.width() < 1)
            throw std::invalid_argument("embed: degenerate patch");
        Image<T> p = patch;
        const int m = std::min(p.height(), p.width());
        if (m < 32) {
            const double s = 32.0 / m;
            p = resize_bicubic(p, std::max(32, static_cast<int>(std::lround(p.height() * s))),
                               std::max(32, static_cast<int>(std::lround(p.width() * s))));
        }
        const auto taps = forward(Tensor3<T>::from_image(p));
        Eigen::Index dim = 0;
        for (const auto& t : taps) dim += t.channels();
        Vec<T> out(dim);
        Eigen::Index at = 0;
        for (const auto& t : taps) {
            out.segment(at, t.channels()) = t.data.rowwise().mean();
            at += t.channels();
        }
        return out;
    }

    int embedding_dim() const {
        int d = 0;
        for (int c : tap_channels_) d += c;
        return d;
    }

    /// Compact 4-conv stack, strides 1/2/2/2, taps after the last three
    /// activations. Deterministic for a fixed seed; suitable offline.
    static Backbone fixed_random(std::uint32_t seed = 1337) {
        Backbone bb;
        bb.tag_ = "fixed-random-v1";
        Rng rng(seed);
        bb.push_conv(3, 16, 1, rng);
        bb.push_relu();
        bb.push_conv(16, 24, 2, rng);
        bb.push_relu();
        bb.mark_tap("feat1", 24, 2);
        bb.push_conv(24, 32, 2, rng);
        bb.push_relu();
        bb.mark_tap("feat2", 32, 4);
        bb.push_conv(32, 48, 2, rng);
        bb.push_relu();
        bb.mark_tap("feat3", 48, 8);
        // sub-unit gain: at unit gain the random taps put Gram distances far
        // above pixel-MSE scale, drowning the content term during training
        for (auto& c : bb.convs_) c.w *= T(0.7);
        return bb;
    }

    /// VGG19 layer schedule up to conv4_2, tapped at conv2_2 / conv3_2 /
    /// conv4_2. Weights default to seeded random; pretrained tensors can be
    /// installed afterwards via `set_conv_weights`.
    static Backbone vgg19(std::uint32_t seed = 1337) {
        Backbone bb;
        bb.tag_ = "vgg19";
        Rng rng(seed);
        bb.push_conv(3, 64, 1, rng);    // conv1_1
        bb.push_relu();
        bb.push_conv(64, 64, 1, rng);   // conv1_2
        bb.push_relu();
        bb.push_pool();
        bb.push_conv(64, 128, 1, rng);  // conv2_1
        bb.push_relu();
        bb.push_conv(128, 128, 1, rng); // conv2_2
        bb.push_relu();
        bb.mark_tap("conv2_2", 128, 2);
        bb.push_pool();
        bb.push_conv(128, 256, 1, rng); // conv3_1
        bb.push_relu();
        bb.push_conv(256, 256, 1, rng); // conv3_2
        bb.push_relu();
        bb.mark_tap("conv3_2", 256, 4);
        bb.push_pool();
        bb.push_conv(256, 512, 1, rng); // conv4_1
        bb.push_relu();
        bb.push_conv(512, 512, 1, rng); // conv4_2
        bb.push_relu();
        bb.mark_tap("conv4_2", 512, 8);
        return bb;
    }

    int num_convs() const { return static_cast<int>(convs_.size()); }
    const ConvParams<T>& conv(int i) const { return convs_[i]; }
    void set_conv_weights(int i, const Mat<T>& w, const Vec<T>& b) {
        if (w.rows() != convs_[i].w.rows() || w.cols() != convs_[i].w.cols() || b.size() != convs_[i].b.size())
            throw std::invalid_argument("backbone: weight shape mismatch for conv " + std::to_string(i));
        convs_[i].w = w;
        convs_[i].b = b;
    }

private:
    void push_conv(int cin, int cout, int stride, Rng& rng) {
        convs_.push_back(ConvParams<T>::make(cin, cout, 3, stride, 1, rng));
        ops_.push_back({OpKind::Conv, static_cast<int>(convs_.size()) - 1});
    }
    void push_relu() { ops_.push_back({OpKind::ReLU, -1}); }
    void push_pool() { ops_.push_back({OpKind::MaxPool2, -1}); }
    void mark_tap(const std::string& name, int channels, int stride) {
        tap_after_op_.push_back(static_cast<int>(ops_.size()) - 1);
        tap_index_of_op_[static_cast<int>(ops_.size()) - 1] = static_cast<int>(tap_after_op_.size()) - 1;
        tap_names_.push_back(name);
        tap_channels_.push_back(channels);
        tap_strides_.push_back(stride);
    }

    std::vector<ConvParams<T>> convs_;
    std::vector<Op> ops_;
    std::vector<int> tap_after_op_;
    std::map<int, int> tap_index_of_op_;
    std::vector<std::string> tap_names_;
    std::vector<int> tap_channels_;
    std::vector<int> tap_strides_;
    std::string tag_;
};

} // namespace fovsr
