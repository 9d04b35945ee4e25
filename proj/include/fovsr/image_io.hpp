#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fovsr/image.hpp"

namespace fovsr {

// Interleaved 8-bit RGB buffer, the wire format of the codecs.
struct RawImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> rgb; // height * width * 3
};

RawImage read_raw_image(const std::string& path); // .png / .jpg / .jpeg
void write_raw_png(const std::string& path, const RawImage& raw);

template <typename T>
Image<T> from_raw(const RawImage& raw) {
    Image<T> img(raw.height, raw.width);
    for (int y = 0; y < raw.height; ++y)
        for (int x = 0; x < raw.width; ++x)
            for (int c = 0; c < 3; ++c)
                img.chan[c](y, x) = T(raw.rgb[(static_cast<size_t>(y) * raw.width + x) * 3 + c]) / T(255);
    return img;
}

// Round-half-up quantization to 8 bits after clamping to [0,1].
template <typename T>
RawImage to_raw(const Image<T>& img) {
    RawImage raw;
    raw.height = img.height();
    raw.width = img.width();
    raw.rgb.resize(static_cast<size_t>(raw.height) * raw.width * 3);
    for (int y = 0; y < raw.height; ++y)
        for (int x = 0; x < raw.width; ++x)
            for (int c = 0; c < 3; ++c) {
                T v = std::clamp(img.chan[c](y, x), T(0), T(1));
                raw.rgb[(static_cast<size_t>(y) * raw.width + x) * 3 + c] =
                    static_cast<std::uint8_t>(std::floor(v * T(255) + T(0.5)));
            }
    return raw;
}

template <typename T>
Image<T> load_image(const std::string& path) {
    return from_raw<T>(read_raw_image(path));
}

template <typename T>
void save_png(const std::string& path, const Image<T>& img) {
    write_raw_png(path, to_raw(img));
}

} // namespace fovsr
