#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "fovsr/data_pipeline.hpp"
#include "fovsr/image_io.hpp"

namespace fovsr {

/// Writes `{id}_narrow.png / {id}_wide.png / {id}_gt.png` plus `{id}.json`
/// recording how the pair was synthesized.
template <typename T>
void cache_pair(const std::string& dir, const FoVPair<T>& pair, double zoom,
                const DegradationSpec& spec, std::uint32_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::string base = (fs::path(dir) / pair.source_id).string();
    save_png(base + "_narrow.png", pair.narrow);
    save_png(base + "_wide.png", pair.wide);
    save_png(base + "_gt.png", pair.gt);

    nlohmann::json j;
    j["source_id"] = pair.source_id;
    j["zoom"] = zoom;
    j["blur_sigma"] = spec.blur_sigma;
    j["noise_sigma"] = spec.noise_sigma;
    j["down_size"] = spec.down_size;
    j["seed"] = seed;
    j["variance"] = pair.variance;
    std::ofstream out(base + ".json");
    if (!out) throw LoadError("cannot write sidecar: " + base + ".json");
    out << j.dump(2) << "\n";
}

template <typename T>
FoVPair<T> load_cached_pair(const std::string& dir, const std::string& id) {
    namespace fs = std::filesystem;
    const std::string base = (fs::path(dir) / id).string();
    std::ifstream in(base + ".json");
    if (!in) throw LoadError("sidecar not found: " + base + ".json");
    nlohmann::json j;
    in >> j;

    FoVPair<T> pair;
    pair.source_id = j.value("source_id", id);
    pair.variance = j.value("variance", 0.0);
    pair.narrow = load_image<T>(base + "_narrow.png");
    pair.wide = load_image<T>(base + "_wide.png");
    pair.gt = load_image<T>(base + "_gt.png");
    return pair;
}

} // namespace fovsr
