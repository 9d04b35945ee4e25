#include "fovsr/image_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>

#include <jpeglib.h>

#include "fovsr/errors.hpp"

namespace fovsr {

namespace {

bool ends_with_ci(const std::string& s, const std::string& suffix) {
    if (s.size() < suffix.size()) return false;
    for (size_t i = 0; i < suffix.size(); ++i) {
        char a = static_cast<char>(std::tolower(s[s.size() - suffix.size() + i]));
        if (a != suffix[i]) return false;
    }
    return true;
}

RawImage read_png(const std::string& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str()))
        throw LoadError("cannot read PNG '" + path + "': " + png.message);
    png.format = PNG_FORMAT_RGB;

    RawImage raw;
    raw.height = static_cast<int>(png.height);
    raw.width = static_cast<int>(png.width);
    raw.rgb.resize(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, raw.rgb.data(), 0, nullptr)) {
        std::string msg = png.message;
        png_image_free(&png);
        throw LoadError("cannot decode PNG '" + path + "': " + msg);
    }
    return raw;
}

struct JpegErrorMgr {
    jpeg_error_mgr base;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(mgr->jump, 1);
}

RawImage read_jpeg(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw LoadError("cannot open JPEG '" + path + "'");

    jpeg_decompress_struct cinfo{};
    JpegErrorMgr err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        std::fclose(f);
        throw LoadError("cannot decode JPEG '" + path + "'");
    }

    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);

    RawImage raw;
    raw.height = static_cast<int>(cinfo.output_height);
    raw.width = static_cast<int>(cinfo.output_width);
    raw.rgb.resize(static_cast<size_t>(raw.height) * raw.width * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = raw.rgb.data() + static_cast<size_t>(cinfo.output_scanline) * raw.width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    std::fclose(f);
    return raw;
}

} // namespace

RawImage read_raw_image(const std::string& path) {
    if (ends_with_ci(path, ".png")) return read_png(path);
    if (ends_with_ci(path, ".jpg") || ends_with_ci(path, ".jpeg")) return read_jpeg(path);
    throw LoadError("unsupported image format: '" + path + "' (expected .png, .jpg or .jpeg)");
}

void write_raw_png(const std::string& path, const RawImage& raw) {
    if (!ends_with_ci(path, ".png"))
        throw LoadError("only PNG output is supported, got '" + path + "'");
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.format = PNG_FORMAT_RGB;
    png.height = static_cast<png_uint_32>(raw.height);
    png.width = static_cast<png_uint_32>(raw.width);
    if (!png_image_write_to_file(&png, path.c_str(), 0, raw.rgb.data(), 0, nullptr))
        throw LoadError("cannot write PNG '" + path + "': " + std::string(png.message));
}

} // namespace fovsr
