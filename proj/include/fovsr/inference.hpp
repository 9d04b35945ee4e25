#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fovsr/backbone.hpp"
#include "fovsr/generator.hpp"
#include "fovsr/image.hpp"
#include "fovsr/image_io.hpp"
#include "fovsr/patch_match.hpp"

namespace fovsr {

/// Ordered multi-zoom capture of one scene, narrowest (highest zoom) first.
template <typename T>
struct LensShot {
    double zoom = 1.0;
    Image<T> image;
};

template <typename T>
struct LensStack {
    std::vector<LensShot<T>> shots;

    void validate() const {
        if (shots.size() < 2) throw std::invalid_argument("lens stack: need at least 2 shots");
        for (std::size_t i = 0; i < shots.size(); ++i) {
            if (shots[i].image.height() < 1 || shots[i].image.width() < 1)
                throw std::invalid_argument("lens stack: shot " + std::to_string(i) + " is empty");
            if (i > 0 && !(shots[i].zoom < shots[i - 1].zoom))
                throw std::invalid_argument("lens stack: zoom factors must be strictly decreasing");
        }
    }
};

/// Stack description: JSON array of {"zoom": number, "path": string}.
template <typename T>
LensStack<T> load_lens_stack(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw LoadError("lens stack not found: " + json_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("lens stack " + json_path + ": " + e.what());
    }
    if (!j.is_array()) throw LoadError("lens stack " + json_path + ": expected a JSON array");
    LensStack<T> stack;
    for (const auto& entry : j) {
        LensShot<T> shot;
        try {
            shot.zoom = entry.at("zoom").get<double>();
            shot.image = load_image<T>(entry.at("path").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw LoadError("lens stack " + json_path + ": " + e.what());
        }
        stack.shots.push_back(std::move(shot));
    }
    stack.validate();
    return stack;
}

/// Full-image enhancement: both frames are snapped to the 64-multiple grid,
/// partitioned, matched at tau, generated patch-by-patch against the matched
/// narrow tokens, and feathered back together over a 2*blend_px band.
/// Output is r x the snapped wide frame. Optional match_dump receives one
/// record per wide patch (positions, score, flags, narrow cue vector).
template <typename T>
Image<T> enhance(const Image<T>& narrow, const Image<T>& wide, const GeneratorParams<T>& gen,
                 const Backbone<T>& bb, double tau = 0.7, int blend_px = 4,
                 nlohmann::json* match_dump = nullptr) {
    if (!gen.initialized) throw StateError("enhance: generator parameters not loaded");
    if (narrow.height() < 1 || narrow.width() < 1 || wide.height() < 1 || wide.width() < 1)
        throw std::invalid_argument("enhance: empty input image");

    const Image<T> w = resize_to_multiple(wide, 64);
    const Image<T> n = resize_to_multiple(narrow, 64);
    const auto wide_patches = partition(w);
    const auto narrow_patches = partition(n);
    const auto matches = match_patches(bb, wide_patches, narrow_patches, tau);

    if (match_dump) *match_dump = nlohmann::json::array();
    std::vector<Patch<T>> outs;
    outs.reserve(wide_patches.size());
    for (std::size_t i = 0; i < wide_patches.size(); ++i) {
        const PatchMatch& m = matches[i];
        const Patch<T>& nar =
            narrow_patches[static_cast<std::size_t>(m.narrow_row) * 8 + m.narrow_col];
        const AugmentedGram<T> tokens = narrow_tokens(gen, nar.pixels);
        outs.push_back(generate(gen, wide_patches[i], tokens));
        if (match_dump) {
            const auto cues = cue_vector(tokens.cues);
            match_dump->push_back(
                {{"wide", {{"row", m.wide_row}, {"col", m.wide_col}}},
                 {"narrow", {{"row", m.narrow_row}, {"col", m.narrow_col}}},
                 {"score", m.score},
                 {"above_threshold", m.above_threshold},
                 {"degenerate", m.degenerate},
                 {"narrow_cues", std::vector<double>(cues.begin(), cues.end())}});
        }
    }
    return assemble(outs, blend_px);
}

struct CascadeStage {
    double from_zoom = 0, to_zoom = 0;
    int out_h = 0, out_w = 0;
};

/// Walks the stack from narrowest to widest: each stage enhances the next
/// wider shot using the previous stage's output (resized to that shot's
/// frame) as the reference. Exactly shots-1 enhance calls.
template <typename T>
Image<T> cascade(const LensStack<T>& stack, const GeneratorParams<T>& gen, const Backbone<T>& bb,
                 double tau = 0.7, int blend_px = 4, std::vector<CascadeStage>* stages = nullptr) {
    stack.validate();
    if (stages) stages->clear();
    Image<T> reference = stack.shots.front().image;
    Image<T> out;
    for (std::size_t i = 1; i < stack.shots.size(); ++i) {
        const Image<T>& next_wide = stack.shots[i].image;
        if (i > 1) reference = resize_bicubic(out, next_wide.height(), next_wide.width());
        out = enhance(reference, next_wide, gen, bb, tau, blend_px);
        if (stages)
            stages->push_back(
                {stack.shots[i - 1].zoom, stack.shots[i].zoom, out.height(), out.width()});
    }
    return out;
}

} // namespace fovsr
