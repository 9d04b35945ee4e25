#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fovsr/errors.hpp"
#include "fovsr/generator.hpp"

namespace fovsr {

// On-disk tensor container. Layout (all integers little-endian):
//   magic "FOVSRCKP" | u32 version | u64 config_hash |
//   u32 meta_len | meta JSON (UTF-8) |
//   u32 tensor_count | per tensor: u32 name_len, name, u64 rows, u64 cols |
//   payload: per tensor rows*cols f32, column-major storage order.
// The config hash binds a file to the architecture that wrote it; loading
// refuses on any mismatch rather than reinterpreting bytes.

inline constexpr char kCheckpointMagic[8] = {'F', 'O', 'V', 'S', 'R', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint i/o assumes little-endian host");

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& path) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw LoadError("checkpoint truncated: " + path);
    return v;
}

inline std::string read_bytes(std::istream& is, std::size_t n, const std::string& path) {
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw LoadError("checkpoint truncated: " + path);
    return s;
}

} // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, std::uint64_t config_hash,
                     const std::vector<TensorRef<T>>& tensors, const nlohmann::json& meta) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw LoadError("cannot write checkpoint: " + path);
        os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
        detail::write_pod(os, kCheckpointVersion);
        detail::write_pod(os, config_hash);
        const std::string meta_bytes = meta.dump();
        detail::write_pod(os, static_cast<std::uint32_t>(meta_bytes.size()));
        os.write(meta_bytes.data(), static_cast<std::streamsize>(meta_bytes.size()));
        detail::write_pod(os, static_cast<std::uint32_t>(tensors.size()));
        for (const auto& t : tensors) {
            detail::write_pod(os, static_cast<std::uint32_t>(t.name.size()));
            os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
            detail::write_pod(os, static_cast<std::uint64_t>(t.rows));
            detail::write_pod(os, static_cast<std::uint64_t>(t.cols));
        }
        for (const auto& t : tensors) {
            for (Eigen::Index i = 0; i < t.size(); ++i) {
                const float v = static_cast<float>(t.data[i]);
                detail::write_pod(os, v);
            }
        }
        if (!os) throw LoadError("cannot write checkpoint: " + path);
    }
    fs::rename(tmp, target);
}

// Fills the referenced tensors in place and returns the stored meta block.
// The tensor list must match the file's table exactly (count, names, shapes).
template <typename T>
nlohmann::json load_checkpoint(const std::string& path, std::uint64_t config_hash,
                               const std::vector<TensorRef<T>>& tensors) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw LoadError("checkpoint not found: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw LoadError("not a checkpoint file: " + path);
    const auto version = detail::read_pod<std::uint32_t>(is, path);
    if (version != kCheckpointVersion)
        throw LoadError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    const auto stored_hash = detail::read_pod<std::uint64_t>(is, path);
    if (stored_hash != config_hash)
        throw LoadError("checkpoint config mismatch: " + path +
                        " was written for a different architecture");
    const auto meta_len = detail::read_pod<std::uint32_t>(is, path);
    const std::string meta_bytes = detail::read_bytes(is, meta_len, path);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_bytes);
    } catch (const nlohmann::json::exception&) {
        throw LoadError("corrupt checkpoint meta block: " + path);
    }
    const auto count = detail::read_pod<std::uint32_t>(is, path);
    if (count != tensors.size())
        throw LoadError("checkpoint tensor count mismatch: " + path + " holds " +
                        std::to_string(count) + ", expected " + std::to_string(tensors.size()));
    for (const auto& t : tensors) {
        const auto name_len = detail::read_pod<std::uint32_t>(is, path);
        const std::string name = detail::read_bytes(is, name_len, path);
        const auto rows = detail::read_pod<std::uint64_t>(is, path);
        const auto cols = detail::read_pod<std::uint64_t>(is, path);
        if (name != t.name)
            throw LoadError("checkpoint tensor mismatch: expected '" + t.name + "', found '" +
                            name + "' in " + path);
        if (rows != static_cast<std::uint64_t>(t.rows) || cols != static_cast<std::uint64_t>(t.cols))
            throw LoadError("checkpoint shape mismatch for '" + t.name + "' in " + path);
    }
    for (const auto& t : tensors) {
        for (Eigen::Index i = 0; i < t.size(); ++i)
            t.data[i] = static_cast<T>(detail::read_pod<float>(is, path));
    }
    return meta;
}

// Meta stored alongside the checkpoint's own structured fields.
inline nlohmann::json peek_checkpoint_meta(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw LoadError("checkpoint not found: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw LoadError("not a checkpoint file: " + path);
    detail::read_pod<std::uint32_t>(is, path);
    detail::read_pod<std::uint64_t>(is, path);
    const auto meta_len = detail::read_pod<std::uint32_t>(is, path);
    const std::string meta_bytes = detail::read_bytes(is, meta_len, path);
    try {
        return nlohmann::json::parse(meta_bytes);
    } catch (const nlohmann::json::exception&) {
        throw LoadError("corrupt checkpoint meta block: " + path);
    }
}

} // namespace fovsr
