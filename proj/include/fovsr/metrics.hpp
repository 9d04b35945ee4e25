#pragma once

#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fovsr/backbone.hpp"
#include "fovsr/image.hpp"

namespace fovsr {

/// Peak signal-to-noise ratio in dB on [0,1] pixels, averaged over channels.
/// Capped at 100 dB once MSE drops below 1e-10 so identical images compare finite.
template <typename T>
double psnr(const Image<T>& a, const Image<T>& b) {
    if (!a.same_dims(b)) throw std::invalid_argument("psnr: image dimensions differ");
    if (a.height() == 0 || a.width() == 0) throw std::invalid_argument("psnr: empty image");
    double mse = 0;
    for (int c = 0; c < 3; ++c)
        mse += (a.chan[c].template cast<double>() - b.chan[c].template cast<double>()).square().mean();
    mse /= 3.0;
    if (mse < 1e-10) return 100.0;
    return 10.0 * std::log10(1.0 / mse);
}

namespace detail {

// 1-D Gaussian taps, normalized to sum 1.
inline Eigen::ArrayXd gaussian_taps(int radius, double sigma) {
    Eigen::ArrayXd k(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i) k(i + radius) = std::exp(-(i * i) / (2.0 * sigma * sigma));
    return k / k.sum();
}

// Separable weighted filtering keeping only fully-covered (valid) positions.
inline Plane<double> valid_gaussian(const Plane<double>& p, const Eigen::ArrayXd& taps) {
    const int r = static_cast<int>(taps.size() / 2);
    const int h = static_cast<int>(p.rows()), w = static_cast<int>(p.cols());
    Plane<double> horiz = Plane<double>::Zero(h, w - 2 * r);
    for (int t = 0; t < taps.size(); ++t) horiz += taps(t) * p.block(0, t, h, w - 2 * r);
    Plane<double> out = Plane<double>::Zero(h - 2 * r, w - 2 * r);
    for (int t = 0; t < taps.size(); ++t) out += taps(t) * horiz.block(t, 0, h - 2 * r, w - 2 * r);
    return out;
}

} // namespace detail

/// Single-scale SSIM on luminance: 11x11 Gaussian window (sigma 1.5),
/// K1=0.01, K2=0.03, dynamic range 1. Mean over fully-covered window positions.
template <typename T>
double ssim(const Image<T>& a, const Image<T>& b) {
    if (!a.same_dims(b)) throw std::invalid_argument("ssim: image dimensions differ");
    if (a.height() < 11 || a.width() < 11)
        throw std::invalid_argument("ssim: images must be at least 11x11");

    const Plane<double> la = luminance(a).template cast<double>();
    const Plane<double> lb = luminance(b).template cast<double>();
    const auto taps = detail::gaussian_taps(5, 1.5);

    const Plane<double> mu_a = detail::valid_gaussian(la, taps);
    const Plane<double> mu_b = detail::valid_gaussian(lb, taps);
    const Plane<double> var_a = detail::valid_gaussian(la * la, taps) - mu_a * mu_a;
    const Plane<double> var_b = detail::valid_gaussian(lb * lb, taps) - mu_b * mu_b;
    const Plane<double> cov = detail::valid_gaussian(la * lb, taps) - mu_a * mu_b;

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const Plane<double> num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
    const Plane<double> den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
    return (num / den).mean();
}

/// Layer-weighted squared distance between channel-normalized backbone tap
/// activations. Follows the learned-perceptual-metric recipe but with this
/// toolkit's fixed backbone, so reports must carry the backend tag.
template <typename T>
double perceptual_distance(const Image<T>& a, const Image<T>& b, const Backbone<T>& bb,
                           const std::array<double, 3>& weights = {1 / 3.0, 1 / 3.0, 1 / 3.0}) {
    if (!a.same_dims(b)) throw std::invalid_argument("perceptual_distance: image dimensions differ");
    const auto ta = bb.forward(Tensor3<T>::from_image(a));
    const auto tb = bb.forward(Tensor3<T>::from_image(b));
    double total = 0;
    for (std::size_t l = 0; l < ta.size(); ++l) {
        const auto fa = ta[l].data.template cast<double>().eval();
        const auto fb = tb[l].data.template cast<double>().eval();
        // unit-normalize each pixel's channel vector before differencing
        const Eigen::ArrayXd na = (fa.array().square().colwise().sum() + 1e-10).sqrt();
        const Eigen::ArrayXd nb = (fb.array().square().colwise().sum() + 1e-10).sqrt();
        double acc = 0;
        for (Eigen::Index p = 0; p < fa.cols(); ++p)
            acc += (fa.col(p).array() / na(p) - fb.col(p).array() / nb(p)).square().sum();
        const double w = l < weights.size() ? weights[l] : 0.0;
        total += w * acc / static_cast<double>(fa.size());
    }
    return total;
}

inline std::string perceptual_backend_tag() { return "lpips-proxy"; }

struct MetricRow {
    std::string id;
    double psnr_db = 0;
    double ssim = 0;
    double perceptual = 0;
};

/// Per-image rows plus aggregate means; serializable as JSON, CSV, or a table.
struct MetricReport {
    std::vector<MetricRow> rows;
    std::string backend = perceptual_backend_tag();
    std::string ssim_channel = "luminance";

    MetricRow aggregate() const {
        MetricRow agg;
        agg.id = "mean";
        if (rows.empty()) return agg;
        for (const auto& r : rows) {
            agg.psnr_db += r.psnr_db;
            agg.ssim += r.ssim;
            agg.perceptual += r.perceptual;
        }
        const auto n = static_cast<double>(rows.size());
        agg.psnr_db /= n;
        agg.ssim /= n;
        agg.perceptual /= n;
        return agg;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["backend"] = backend;
        j["ssim_channel"] = ssim_channel;
        j["images"] = nlohmann::json::array();
        for (const auto& r : rows)
            j["images"].push_back({{"id", r.id},
                                   {"psnr_db", r.psnr_db},
                                   {"ssim", r.ssim},
                                   {"perceptual_distance", r.perceptual}});
        const auto agg = aggregate();
        j["mean"] = {{"psnr_db", agg.psnr_db}, {"ssim", agg.ssim}, {"perceptual_distance", agg.perceptual}};
        return j;
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << "id,psnr_db,ssim,perceptual_distance,backend\n";
        os << std::setprecision(10);
        for (const auto& r : rows)
            os << r.id << ',' << r.psnr_db << ',' << r.ssim << ',' << r.perceptual << ',' << backend
               << '\n';
        return os.str();
    }

    std::string to_text() const {
        std::ostringstream os;
        os << std::left << std::setw(20) << "id" << std::right << std::setw(10) << "psnr_db"
           << std::setw(10) << "ssim" << std::setw(14) << "perceptual" << "\n";
        os << std::fixed << std::setprecision(4);
        auto line = [&](const MetricRow& r) {
            os << std::left << std::setw(20) << r.id << std::right << std::setw(10) << r.psnr_db
               << std::setw(10) << r.ssim << std::setw(14) << r.perceptual << "\n";
        };
        for (const auto& r : rows) line(r);
        if (rows.size() > 1) line(aggregate());
        os << "(perceptual backend: " << backend << ", ssim on " << ssim_channel << ")\n";
        return os.str();
    }
};

} // namespace fovsr
