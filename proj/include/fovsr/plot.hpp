#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "fovsr/image.hpp"
#include "fovsr/training.hpp"

namespace fovsr {

/// Trailing moving average; the first window-1 points average what exists.
inline std::vector<double> moving_average(const std::vector<double>& xs, int window) {
    if (window < 1) throw std::invalid_argument("moving_average: window must be >= 1");
    std::vector<double> out(xs.size());
    double acc = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        acc += xs[i];
        if (i >= static_cast<std::size_t>(window)) acc -= xs[i - window];
        out[i] = acc / static_cast<double>(std::min<std::size_t>(i + 1, window));
    }
    return out;
}

namespace detail {

struct RGB {
    float r, g, b;
};

inline void put_px(Image<float>& img, int y, int x, RGB c) {
    if (y < 0 || x < 0 || y >= img.height() || x >= img.width()) return;
    img.chan[0](y, x) = c.r;
    img.chan[1](y, x) = c.g;
    img.chan[2](y, x) = c.b;
}

inline void draw_line(Image<float>& img, double y0, double x0, double y1, double x1, RGB c) {
    const int steps = std::max(2, static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) * 2);
    for (int s = 0; s <= steps; ++s) {
        const double t = static_cast<double>(s) / steps;
        put_px(img, static_cast<int>(std::lround(y0 + t * (y1 - y0))),
               static_cast<int>(std::lround(x0 + t * (x1 - x0))), c);
    }
}

} // namespace detail

/// Renders generator and stitching-loss curves, raw (pale) plus a
/// moving-average overlay (solid). Blue = L_G, red = L_D, gray frame.
inline Image<float> render_loss_plot(const std::vector<LossRecord>& records, int window = 25,
                                     int width = 900, int height = 600) {
    if (records.empty()) throw std::invalid_argument("render_loss_plot: no records");
    Image<float> img = Image<float>::constant(height, width, 1.0f, 1.0f, 1.0f);
    const int ml = 60, mr = 20, mt = 20, mb = 40; // margins
    const int px = width - ml - mr, py = height - mt - mb;

    std::vector<double> lg, ld;
    lg.reserve(records.size());
    ld.reserve(records.size());
    for (const auto& r : records) {
        lg.push_back(r.gen_total);
        ld.push_back(r.disc_total);
    }
    const auto lg_s = moving_average(lg, window);
    const auto ld_s = moving_average(ld, window);

    double lo = 0, hi = 1e-12;
    for (const auto& v : {lg, ld, lg_s, ld_s})
        for (double x : v) hi = std::max(hi, x);
    hi *= 1.05;

    auto ypix = [&](double v) { return mt + py - (v - lo) / (hi - lo) * py; };
    auto xpix = [&](std::size_t i) {
        return records.size() == 1 ? ml + px / 2.0
                                   : ml + static_cast<double>(i) / (records.size() - 1) * px;
    };
    auto polyline = [&](const std::vector<double>& v, detail::RGB c) {
        for (std::size_t i = 1; i < v.size(); ++i)
            detail::draw_line(img, ypix(v[i - 1]), xpix(i - 1), ypix(v[i]), xpix(i), c);
    };

    const detail::RGB frame{0.35f, 0.35f, 0.35f};
    detail::draw_line(img, mt, ml, mt + py, ml, frame);
    detail::draw_line(img, mt + py, ml, mt + py, ml + px, frame);
    for (int g = 1; g <= 4; ++g) { // horizontal gridlines at quarter heights
        const double y = mt + py - g * py / 4.0;
        detail::draw_line(img, y, ml, y, ml + px, {0.9f, 0.9f, 0.9f});
    }

    polyline(lg, {0.72f, 0.80f, 0.98f});
    polyline(ld, {0.98f, 0.76f, 0.72f});
    polyline(lg_s, {0.10f, 0.25f, 0.85f});
    polyline(ld_s, {0.85f, 0.15f, 0.10f});
    return img;
}

} // namespace fovsr
