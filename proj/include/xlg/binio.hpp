#pragma once

// Little-endian encoding helpers for the XLGA / XLGE containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace xlg::binio {

template <typename T>
T byteswap_if_big(T v) noexcept {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
        std::memcpy(&v, bytes, sizeof(T));
    }
    return v;
}

inline void put_u32(std::string& out, std::uint32_t v) {
    v = byteswap_if_big(v);
    out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint32_t get_u32(const unsigned char* p) noexcept {
    std::uint32_t v;
    std::memcpy(&v, p, sizeof v);
    return byteswap_if_big(v);
}

/// Appends values as little-endian bytes.
template <typename T>
void put_array(std::string& out, std::span<const T> values) {
    if constexpr (std::endian::native == std::endian::little) {
        out.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
    } else {
        for (T v : values) {
            v = byteswap_if_big(v);
            out.append(reinterpret_cast<const char*>(&v), sizeof v);
        }
    }
}

/// Decodes little-endian bytes into dst (dst.size() elements).
template <typename T>
void get_array(const unsigned char* src, std::span<T> dst) noexcept {
    std::memcpy(dst.data(), src, dst.size_bytes());
    if constexpr (std::endian::native != std::endian::little) {
        for (auto& v : dst) v = byteswap_if_big(v);
    }
}

std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace xlg::binio
