#pragma once

#include <string>
#include <vector>

#include "fovsr/errors.hpp"
#include "fovsr/image.hpp"
#include "fovsr/nn.hpp"
#include "fovsr/visual_encoding.hpp"

namespace fovsr {

/// Architecture knobs. `d_attn` is the projected query/key width (the d_n of
/// the attention scale factor); 0 means "same as d".
struct GeneratorConfig {
    int d = 64;              // model width
    int n_blocks = 4;        // cross-attention blocks
    int r = 2;               // output upscale factor
    int d_attn = 0;          // query/key projection width, 0 -> d
    int narrow_channels = 64; // narrow-encoder output channels (gram size)

    int attn_dim() const { return d_attn > 0 ? d_attn : d; }

    void validate() const {
        if (d < 1) throw ConfigError("generator: d must be >= 1");
        if (n_blocks < 1) throw ConfigError("generator: n_blocks must be >= 1");
        if (r != 1 && r != 2) throw ConfigError("generator: upscale factor must be 1 or 2");
        if (d_attn < 0) throw ConfigError("generator: d_attn must be >= 0");
        if (narrow_channels < 6) throw ConfigError("generator: narrow_channels must be >= 6");
    }

    /// Everything that determines tensor shapes, canonically serialized.
    std::string signature() const {
        return "d=" + std::to_string(d) + ";n_blocks=" + std::to_string(n_blocks) +
               ";r=" + std::to_string(r) + ";d_attn=" + std::to_string(attn_dim()) +
               ";narrow_channels=" + std::to_string(narrow_channels);
    }

    // The wide encoder halves resolution twice; the upsampler must take the
    // map from 1/4 scale to r x full scale in x2 hops.
    int encoder_stride() const { return 4; }
    int upsample_stages() const { return r == 2 ? 3 : 2; }
};

/// E_w as the outside world sees it: flattened spatial tokens.
template <typename T>
struct FeatureMap {
    Mat<T> tokens; // (H'*W') x d, position-major
    int h = 0, w = 0;
};

template <typename T>
struct GeneratorParams {
    GeneratorConfig cfg;

    // wide structural encoder: two stride-2 stages + one residual stage
    ConvParams<T> enc1, enc2, res1, res2;
    // narrow encoder feeding the gram tokens
    ConvParams<T> nenc1, nenc2;

    struct Block {
        Mat<T> wq; // d x d_attn
        Mat<T> wk; // narrow_channels x d_attn
        Mat<T> wv; // narrow_channels x d
        ConvParams<T> ref1, ref2; // post-fusion refinement, ref2 zero-init
    };
    std::vector<Block> blocks;

    std::vector<ConvParams<T>> up; // each d -> 4d, followed by x2 shuffle
    ConvParams<T> out_conv;        // d -> 3

    bool initialized = false;

    static GeneratorParams make(const GeneratorConfig& cfg, Rng& rng) {
        cfg.validate();
        GeneratorParams p;
        p.cfg = cfg;
        const int d = cfg.d, cn = cfg.narrow_channels, da = cfg.attn_dim();

        p.enc1 = ConvParams<T>::make(3, d, 3, 2, 1, rng);
        p.enc2 = ConvParams<T>::make(d, d, 3, 2, 1, rng);
        p.res1 = ConvParams<T>::make(d, d, 3, 1, 1, rng);
        p.res2 = ConvParams<T>::make(d, d, 3, 1, 1, rng);

        p.nenc1 = ConvParams<T>::make(3, cn, 3, 2, 1, rng);
        p.nenc2 = ConvParams<T>::make(cn, cn, 3, 2, 1, rng);

        for (int b = 0; b < cfg.n_blocks; ++b) {
            Block blk;
            blk.wq = Mat<T>::Zero(d, da);
            kaiming_uniform(blk.wq, d, rng);
            blk.wk = Mat<T>::Zero(cn, da);
            kaiming_uniform(blk.wk, cn, rng);
            // zero value projection: attention contributes nothing at step 0,
            // so every block starts as the identity and switches on smoothly
            blk.wv = Mat<T>::Zero(cn, d);
            blk.ref1 = ConvParams<T>::make(d, d, 3, 1, 1, rng);
            blk.ref2 = ConvParams<T>::make(d, d, 3, 1, 1, rng, /*zero_init=*/true);
            p.blocks.push_back(std::move(blk));
        }

        for (int s = 0; s < cfg.upsample_stages(); ++s)
            p.up.push_back(ConvParams<T>::make(d, 4 * d, 3, 1, 1, rng));
        // zero-init head: with the bicubic skip below, the untrained generator
        // is exactly a bicubic upscaler and training learns the correction
        p.out_conv = ConvParams<T>::make(d, 3, 3, 1, 1, rng, /*zero_init=*/true);

        p.initialized = true;
        return p;
    }

    static GeneratorParams zeros_like(const GeneratorParams& o) {
        GeneratorParams p = o;
        p.enc1 = ConvParams<T>::zeros_like(o.enc1);
        p.enc2 = ConvParams<T>::zeros_like(o.enc2);
        p.res1 = ConvParams<T>::zeros_like(o.res1);
        p.res2 = ConvParams<T>::zeros_like(o.res2);
        p.nenc1 = ConvParams<T>::zeros_like(o.nenc1);
        p.nenc2 = ConvParams<T>::zeros_like(o.nenc2);
        for (size_t b = 0; b < p.blocks.size(); ++b) {
            p.blocks[b].wq.setZero();
            p.blocks[b].wk.setZero();
            p.blocks[b].wv.setZero();
            p.blocks[b].ref1 = ConvParams<T>::zeros_like(o.blocks[b].ref1);
            p.blocks[b].ref2 = ConvParams<T>::zeros_like(o.blocks[b].ref2);
        }
        for (size_t s = 0; s < p.up.size(); ++s) p.up[s] = ConvParams<T>::zeros_like(o.up[s]);
        p.out_conv = ConvParams<T>::zeros_like(o.out_conv);
        return p;
    }
};

/// Flat, named view over every learnable tensor; ordering is the checkpoint
/// and optimizer contract, so extend only by appending.
template <typename T>
struct TensorRef {
    std::string name;
    T* data;
    Eigen::Index rows, cols;
    Eigen::Index size() const { return rows * cols; }
};

template <typename T>
std::vector<TensorRef<T>> tensor_refs(GeneratorParams<T>& p) {
    std::vector<TensorRef<T>> refs;
    auto add_mat = [&](const std::string& name, Mat<T>& m) {
        refs.push_back({name, m.data(), m.rows(), m.cols()});
    };
    auto add_vec = [&](const std::string& name, Vec<T>& v) {
        refs.push_back({name, v.data(), v.size(), 1});
    };
    auto add_conv = [&](const std::string& name, ConvParams<T>& c) {
        add_mat(name + ".w", c.w);
        add_vec(name + ".b", c.b);
    };
    add_conv("enc1", p.enc1);
    add_conv("enc2", p.enc2);
    add_conv("res1", p.res1);
    add_conv("res2", p.res2);
    add_conv("nenc1", p.nenc1);
    add_conv("nenc2", p.nenc2);
    for (size_t b = 0; b < p.blocks.size(); ++b) {
        const std::string pre = "block" + std::to_string(b);
        add_mat(pre + ".wq", p.blocks[b].wq);
        add_mat(pre + ".wk", p.blocks[b].wk);
        add_mat(pre + ".wv", p.blocks[b].wv);
        add_conv(pre + ".ref1", p.blocks[b].ref1);
        add_conv(pre + ".ref2", p.blocks[b].ref2);
    }
    for (size_t s = 0; s < p.up.size(); ++s) add_conv("up" + std::to_string(s), p.up[s]);
    add_conv("out", p.out_conv);
    return refs;
}

// ---------------------------------------------------------------------------
// Wide structural encoder
// ---------------------------------------------------------------------------

template <typename T>
struct EncoderTrace {
    Tensor3<T> x0, e1_pre, e1_act, e2_pre, e2_act, r1_pre, r1_act;
};

constexpr double kLReluSlope = 0.2;

template <typename T>
Tensor3<T> encode_fwd(const GeneratorParams<T>& p, const Tensor3<T>& x0, EncoderTrace<T>* tr = nullptr) {
    if (x0.h % 4 != 0 || x0.w % 4 != 0)
        throw std::invalid_argument("encode_structure: patch side must be divisible by 4");
    const T slope = T(kLReluSlope);
    Tensor3<T> e1_pre = conv2d(p.enc1, x0);
    Tensor3<T> e1_act = leaky_relu(e1_pre, slope);
    Tensor3<T> e2_pre = conv2d(p.enc2, e1_act);
    Tensor3<T> e2_act = leaky_relu(e2_pre, slope);
    Tensor3<T> r1_pre = conv2d(p.res1, e2_act);
    Tensor3<T> r1_act = leaky_relu(r1_pre, slope);
    Tensor3<T> r2_pre = conv2d(p.res2, r1_act);
    Tensor3<T> out = e2_act;
    out.data += r2_pre.data;
    if (tr) {
        tr->x0 = x0;
        tr->e1_pre = std::move(e1_pre);
        tr->e1_act = std::move(e1_act);
        tr->e2_pre = std::move(e2_pre);
        tr->e2_act = std::move(e2_act);
        tr->r1_pre = std::move(r1_pre);
        tr->r1_act = std::move(r1_act);
    }
    return out;
}

template <typename T>
Tensor3<T> encode_bwd(const GeneratorParams<T>& p, const EncoderTrace<T>& tr, const Tensor3<T>& dout,
                      GeneratorParams<T>& g) {
    const T slope = T(kLReluSlope);
    Tensor3<T> d_e2_act = dout; // identity branch
    Tensor3<T> d_r1_act = conv2d_backward(p.res2, tr.r1_act, dout, g.res2);
    Tensor3<T> d_r1_pre = leaky_relu_backward(tr.r1_pre, d_r1_act, slope);
    d_e2_act.data += conv2d_backward(p.res1, tr.e2_act, d_r1_pre, g.res1).data;
    Tensor3<T> d_e2_pre = leaky_relu_backward(tr.e2_pre, d_e2_act, slope);
    Tensor3<T> d_e1_act = conv2d_backward(p.enc2, tr.e1_act, d_e2_pre, g.enc2);
    Tensor3<T> d_e1_pre = leaky_relu_backward(tr.e1_pre, d_e1_act, slope);
    return conv2d_backward(p.enc1, tr.x0, d_e1_pre, g.enc1);
}

/// Public view of the structural encoder: flattened tokens.
template <typename T>
FeatureMap<T> encode_structure(const GeneratorParams<T>& p, const Image<T>& patch) {
    if (!p.initialized) throw StateError("encode_structure: params not initialized");
    const Tensor3<T> out = encode_fwd(p, Tensor3<T>::from_image(patch));
    FeatureMap<T> fm;
    fm.tokens = out.data.transpose();
    fm.h = out.h;
    fm.w = out.w;
    return fm;
}

// ---------------------------------------------------------------------------
// Narrow branch: encoder -> gram -> augmented token matrix
// ---------------------------------------------------------------------------

template <typename T>
struct NarrowTrace {
    Tensor3<T> n0, n1_pre, n1_act, n2_pre, feat;
    Mat<T> token_view;
};

/// Narrow-encoder feature map (narrow_channels x H/4 x W/4).
template <typename T>
Tensor3<T> encode_narrow(const GeneratorParams<T>& p, const Tensor3<T>& n0, NarrowTrace<T>* tr = nullptr) {
    if (n0.h % 4 != 0 || n0.w % 4 != 0)
        throw std::invalid_argument("encode_narrow: patch side must be divisible by 4");
    const T slope = T(kLReluSlope);
    Tensor3<T> n1_pre = conv2d(p.nenc1, n0);
    Tensor3<T> n1_act = leaky_relu(n1_pre, slope);
    Tensor3<T> n2_pre = conv2d(p.nenc2, n1_act);
    Tensor3<T> feat = leaky_relu(n2_pre, slope);
    if (tr) {
        tr->n0 = n0;
        tr->n1_pre = std::move(n1_pre);
        tr->n1_act = std::move(n1_act);
        tr->n2_pre = std::move(n2_pre);
        tr->feat = feat;
    }
    return feat;
}

/// Full narrow-branch encoding to E_n.
template <typename T>
AugmentedGram<T> narrow_tokens(const GeneratorParams<T>& p, const Image<T>& narrow_patch,
                               NarrowTrace<T>* tr = nullptr) {
    if (!p.initialized) throw StateError("narrow_tokens: params not initialized");
    const Tensor3<T> feat = encode_narrow(p, Tensor3<T>::from_image(narrow_patch), tr);
    AugmentedGram<T> en = augment_gram(gram(feat), visual_cues(narrow_patch));
    if (tr) tr->token_view = en.token_view;
    return en;
}

/// dL/d(token_view) -> narrow-encoder parameter gradients. The cue row is a
/// function of raw pixels, not of params, so its gradient is dropped.
template <typename T>
void narrow_tokens_backward(const GeneratorParams<T>& p, const NarrowTrace<T>& tr, const Mat<T>& dtok,
                            GeneratorParams<T>& g) {
    const int cn = p.cfg.narrow_channels;
    const T slope = T(kLReluSlope);
    const T scale = T(1) / (T(cn) * T(tr.feat.pixels()));
    Mat<T> dgram = dtok.topRows(cn);
    Tensor3<T> dfeat = tr.feat;
    dfeat.data.noalias() = (dgram + dgram.transpose()) * tr.feat.data * scale;
    Tensor3<T> d_n2_pre = leaky_relu_backward(tr.n2_pre, dfeat, slope);
    Tensor3<T> d_n1_act = conv2d_backward(p.nenc2, tr.n1_act, d_n2_pre, g.nenc2);
    Tensor3<T> d_n1_pre = leaky_relu_backward(tr.n1_pre, d_n1_act, slope);
    conv2d_backward(p.nenc1, tr.n0, d_n1_pre, g.nenc1); // input grad discarded
}

// ---------------------------------------------------------------------------
// Full generator
// ---------------------------------------------------------------------------

template <typename T>
struct BlockTrace {
    Tensor3<T> in_spatial;
    Mat<T> q, k, v;
    AttentionCache<T> attn;
    Tensor3<T> fused_spatial, ref1_pre, ref1_act;
};

template <typename T>
struct UpsampleTrace {
    Tensor3<T> input, pre, shuf;
};

template <typename T>
struct GeneratorTrace {
    EncoderTrace<T> enc;
    Mat<T> token_view;
    std::vector<BlockTrace<T>> blocks;
    std::vector<UpsampleTrace<T>> ups;
    Tensor3<T> head_in;
};

/// Forward pass on tensors; output is 3 x rH x rW, NOT clamped (the loss path
/// wants raw values — clamping happens at patch emission only). The head sits
/// on a global bicubic-upscale skip, so the network learns a residual
/// correction; the skip has no parameters and needs no backward handling.
template <typename T>
Tensor3<T> generate_fwd(const GeneratorParams<T>& p, const Tensor3<T>& wide, const Mat<T>& token_view,
                        GeneratorTrace<T>* tr = nullptr) {
    if (!p.initialized) throw StateError("generate: params not initialized");
    const int cn = p.cfg.narrow_channels;
    if (token_view.cols() != cn || token_view.rows() != cn + 1)
        throw std::invalid_argument("generate: token matrix shape does not match narrow_channels");
    const T slope = T(kLReluSlope);
    const int da = p.cfg.attn_dim();

    Tensor3<T> cur = encode_fwd(p, wide, tr ? &tr->enc : nullptr);
    if (tr) tr->token_view = token_view;

    for (const auto& blk : p.blocks) {
        BlockTrace<T> bt;
        if (tr) bt.in_spatial = cur;
        Mat<T> x = cur.data.transpose(); // tokens: P x d
        Mat<T> q = x * blk.wq;
        Mat<T> k = token_view * blk.wk;
        Mat<T> v = token_view * blk.wv;
        Mat<T> attn_out = scaled_dot_attention(q, k, v, da, tr ? &bt.attn : nullptr);
        Mat<T> fused = residual_fuse(x, attn_out);

        Tensor3<T> fused_spatial(p.cfg.d, cur.h, cur.w);
        fused_spatial.data = fused.transpose();
        Tensor3<T> ref1_pre = conv2d(blk.ref1, fused_spatial);
        Tensor3<T> ref1_act = leaky_relu(ref1_pre, slope);
        Tensor3<T> ref2_out = conv2d(blk.ref2, ref1_act);
        Tensor3<T> out = fused_spatial;
        out.data += ref2_out.data;

        if (tr) {
            bt.q = std::move(q);
            bt.k = std::move(k);
            bt.v = std::move(v);
            bt.fused_spatial = std::move(fused_spatial);
            bt.ref1_pre = std::move(ref1_pre);
            bt.ref1_act = std::move(ref1_act);
            tr->blocks.push_back(std::move(bt));
        }
        cur = std::move(out);
    }

    for (const auto& stage : p.up) {
        UpsampleTrace<T> ut;
        if (tr) ut.input = cur;
        Tensor3<T> pre = conv2d(stage, cur);
        Tensor3<T> shuf = pixel_shuffle(pre, 2);
        cur = leaky_relu(shuf, slope);
        if (tr) {
            ut.pre = std::move(pre);
            ut.shuf = std::move(shuf);
            tr->ups.push_back(std::move(ut));
        }
    }

    if (tr) tr->head_in = cur;
    Tensor3<T> out = conv2d(p.out_conv, cur);
    out.data += Tensor3<T>::from_image(resize_bicubic(wide.to_image(), out.h, out.w)).data;
    return out;
}

/// VJP through the whole generator. Returns the gradient w.r.t. the shared
/// token matrix so the caller can continue into the narrow branch; parameter
/// gradients accumulate into `g`.
template <typename T>
Mat<T> generate_bwd(const GeneratorParams<T>& p, const GeneratorTrace<T>& tr, const Tensor3<T>& dout,
                    GeneratorParams<T>& g) {
    const T slope = T(kLReluSlope);
    const int da = p.cfg.attn_dim();

    Tensor3<T> d = conv2d_backward(p.out_conv, tr.head_in, dout, g.out_conv);

    for (size_t s = p.up.size(); s-- > 0;) {
        const UpsampleTrace<T>& ut = tr.ups[s];
        d = leaky_relu_backward(ut.shuf, d, slope);
        d = pixel_shuffle_backward(d, 2, ut.pre.channels(), ut.pre.h, ut.pre.w);
        d = conv2d_backward(p.up[s], ut.input, d, g.up[s]);
    }

    Mat<T> dtok = Mat<T>::Zero(tr.token_view.rows(), tr.token_view.cols());
    for (size_t b = p.blocks.size(); b-- > 0;) {
        const auto& blk = p.blocks[b];
        const BlockTrace<T>& bt = tr.blocks[b];

        Tensor3<T> d_fused_spatial = d; // identity branch
        Tensor3<T> d_ref1_act = conv2d_backward(blk.ref2, bt.ref1_act, d, g.blocks[b].ref2);
        Tensor3<T> d_ref1_pre = leaky_relu_backward(bt.ref1_pre, d_ref1_act, slope);
        d_fused_spatial.data += conv2d_backward(blk.ref1, bt.fused_spatial, d_ref1_pre, g.blocks[b].ref1).data;

        Mat<T> dfused = d_fused_spatial.data.transpose(); // P x d
        Mat<T> dq, dk, dv;
        scaled_dot_attention_backward(bt.q, bt.k, bt.v, da, bt.attn, dfused, dq, dk, dv);

        Mat<T> x = bt.in_spatial.data.transpose();
        g.blocks[b].wq.noalias() += x.transpose() * dq;
        g.blocks[b].wk.noalias() += tr.token_view.transpose() * dk;
        g.blocks[b].wv.noalias() += tr.token_view.transpose() * dv;

        Mat<T> dx = dfused; // residual path
        dx.noalias() += dq * blk.wq.transpose();
        dtok.noalias() += dk * blk.wk.transpose();
        dtok.noalias() += dv * blk.wv.transpose();

        Tensor3<T> dcur(p.cfg.d, bt.in_spatial.h, bt.in_spatial.w);
        dcur.data = dx.transpose();
        d = std::move(dcur);
    }

    encode_bwd(p, tr.enc, d, g);
    return dtok;
}

/// The public op: enhanced patch at r x the input side, clamped to [0,1].
template <typename T>
Patch<T> generate(const GeneratorParams<T>& p, const Patch<T>& wide, const AugmentedGram<T>& en) {
    if (!p.initialized) throw StateError("generate: params not initialized");
    const Tensor3<T> out = generate_fwd(p, Tensor3<T>::from_image(wide.pixels), en.token_view);
    Patch<T> result;
    result.pixels = out.to_image().clamped();
    result.row = wide.row;
    result.col = wide.col;
    return result;
}

} // namespace fovsr
