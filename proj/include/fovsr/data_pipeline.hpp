#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fovsr/errors.hpp"
#include "fovsr/image.hpp"
#include "fovsr/nn.hpp"

namespace fovsr {

/// One synthesized training sample: the simulated captures plus their source.
template <typename T>
struct FoVPair {
    Image<T> narrow, wide, gt;
    std::string source_id;
    double variance = 0.0; // population variance of gt luminance
};

/// Wide-view degradation recipe. The canonical corpus draws parameters from
/// the conventional ranges (blur sigma 0.2-3.0, noise sigma up to 25/255);
/// direct construction accepts milder (even identity) settings for testing.
struct DegradationSpec {
    double blur_sigma = 1.0;
    double noise_sigma = 10.0 / 255.0;
    int down_size = 512;

    void validate() const {
        if (blur_sigma < 0) throw ConfigError("degradation: blur_sigma must be >= 0");
        if (noise_sigma < 0 || noise_sigma > 1) throw ConfigError("degradation: noise_sigma outside [0,1]");
        if (down_size < 1) throw ConfigError("degradation: down_size must be >= 1");
    }

    static DegradationSpec sample(Rng& rng, int original_size) {
        DegradationSpec s;
        s.blur_sigma = rng.uniform(0.2, 3.0);
        s.noise_sigma = rng.uniform(0.0, 25.0 / 255.0);
        // somewhere between quarter and full resolution, never above original
        s.down_size = std::max(1, static_cast<int>(rng.uniform(0.25, 1.0) * original_size));
        s.down_size = std::min(s.down_size, original_size - 1);
        return s;
    }
};

// ---------------------------------------------------------------------------
// Narrow view: central crop on a blank canvas
// ---------------------------------------------------------------------------

inline int crop_side(int side, double zoom) {
    int c = static_cast<int>(std::floor(side / zoom));
    if (c % 2 != 0) --c; // even-floor so the crop centers cleanly
    return c;
}

template <typename T>
Image<T> simulate_narrow(const Image<T>& gt, double zoom) {
    if (zoom <= 1.0) throw std::invalid_argument("simulate_narrow: zoom must be > 1");
    const int h = gt.height(), w = gt.width();
    const int ch = crop_side(h, zoom), cw = crop_side(w, zoom);
    const int top = (h - ch) / 2, left = (w - cw) / 2;
    Image<T> out(h, w);
    for (int c = 0; c < 3; ++c) {
        out.chan[c].setZero();
        out.chan[c].block(top, left, ch, cw) = gt.chan[c].block(top, left, ch, cw);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Wide view: blur -> noise -> bicubic down/up round trip
// ---------------------------------------------------------------------------

template <typename T>
Image<T> gaussian_blur(const Image<T>& img, double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    if (sigma <= 0 || radius < 1) return img;
    std::vector<T> k(2 * radius + 1);
    T sum = T(0);
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = static_cast<T>(std::exp(-0.5 * (i * i) / (sigma * sigma)));
        sum += k[i + radius];
    }
    for (T& v : k) v /= sum;

    const int h = img.height(), w = img.width();
    Image<T> out(h, w);
    for (int c = 0; c < 3; ++c) {
        Plane<T> tmp(h, w);
        for (int y = 0; y < h; ++y) // horizontal pass, replicate borders
            for (int x = 0; x < w; ++x) {
                T acc = T(0);
                for (int i = -radius; i <= radius; ++i)
                    acc += k[i + radius] * img.chan[c](y, std::clamp(x + i, 0, w - 1));
                tmp(y, x) = acc;
            }
        for (int y = 0; y < h; ++y) // vertical pass
            for (int x = 0; x < w; ++x) {
                T acc = T(0);
                for (int i = -radius; i <= radius; ++i)
                    acc += k[i + radius] * tmp(std::clamp(y + i, 0, h - 1), x);
                out.chan[c](y, x) = acc;
            }
    }
    return out;
}

template <typename T>
Image<T> add_gaussian_noise(const Image<T>& img, double sigma, Rng& rng) {
    if (sigma <= 0) return img;
    Image<T> out = img;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x)
                out.chan[c](y, x) += static_cast<T>(sigma * rng.normal());
    return out;
}

template <typename T>
Image<T> simulate_wide(const Image<T>& gt, const DegradationSpec& spec, std::uint32_t seed) {
    spec.validate();
    Rng rng(seed);
    Image<T> x = gaussian_blur(gt, spec.blur_sigma);
    x = add_gaussian_noise(x, spec.noise_sigma, rng);
    x = resize_bicubic(x, spec.down_size, spec.down_size);
    x = resize_bicubic(x, gt.height(), gt.width());
    return x.clamped();
}

/// Full sample synthesis from one HQ image.
template <typename T>
FoVPair<T> synthesize_pair(const Image<T>& gt, double zoom, const DegradationSpec& spec,
                           std::uint32_t seed, const std::string& source_id) {
    FoVPair<T> pair;
    pair.gt = gt;
    pair.narrow = simulate_narrow(gt, zoom);
    pair.wide = simulate_wide(gt, spec, seed);
    pair.source_id = source_id;
    const Plane<T> y = luminance(gt);
    const T mean = y.mean();
    pair.variance = static_cast<double>((y - mean).square().mean());
    return pair;
}

// ---------------------------------------------------------------------------
// Curriculum: easy (low-variance) images first
// ---------------------------------------------------------------------------

template <typename T>
std::vector<FoVPair<T>> curriculum_order(std::vector<FoVPair<T>> pairs) {
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const FoVPair<T>& a, const FoVPair<T>& b) { return a.variance < b.variance; });
    return pairs;
}

// ---------------------------------------------------------------------------
// Manifest: one record per line, `source_id<TAB>path[<TAB>split]`
// ---------------------------------------------------------------------------

struct SourceRecord {
    std::string source_id;
    std::string path;
    std::string split; // empty when the manifest omits it
};

inline std::vector<SourceRecord> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("manifest not found: " + path);
    std::vector<SourceRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        if (t1 == std::string::npos)
            throw LoadError("manifest line " + std::to_string(line_no) + ": expected tab-separated fields");
        SourceRecord rec;
        rec.source_id = line.substr(0, t1);
        const auto t2 = line.find('\t', t1 + 1);
        if (t2 == std::string::npos) {
            rec.path = line.substr(t1 + 1);
        } else {
            rec.path = line.substr(t1 + 1, t2 - t1 - 1);
            rec.split = line.substr(t2 + 1);
        }
        if (!std::filesystem::exists(rec.path))
            throw LoadError("manifest line " + std::to_string(line_no) + " (" + rec.source_id +
                            "): file not found: " + rec.path);
        records.push_back(std::move(rec));
    }
    return records;
}

} // namespace fovsr
