#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "psforge/core/error.hpp"

namespace psforge {

// Single-tensor binary container: magic "PSTENSR0", rank as u32 LE, dims as
// u32 LE each, then the f32 LE payload in row-major order.
inline constexpr char kTensorMagic[8] = {'P', 'S', 'T', 'E', 'N', 'S', 'R', '0'};

struct Tensor {
    std::vector<uint32_t> dims;
    std::vector<float> data;

    size_t element_count() const {
        size_t n = 1;
        for (uint32_t d : dims) n *= d;
        return n;
    }
};

namespace detail {

inline void put_u32_le(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

static_assert(std::endian::native == std::endian::little,
              "tensor payload I/O assumes a little-endian host");

}  // namespace detail

inline void write_tensor(std::ostream& os, std::span<const uint32_t> dims,
                         std::span<const float> payload) {
    size_t expected = 1;
    for (uint32_t d : dims) {
        if (d == 0) throw DataError("write_tensor: zero dimension");
        expected *= d;
    }
    if (payload.size() != expected)
        throw DataError("write_tensor: payload length does not match dims product");
    os.write(kTensorMagic, 8);
    detail::put_u32_le(os, uint32_t(dims.size()));
    for (uint32_t d : dims) detail::put_u32_le(os, d);
    os.write(reinterpret_cast<const char*>(payload.data()),
             std::streamsize(payload.size() * sizeof(float)));
    if (!os) throw DataError("write_tensor: stream write failed");
}

inline void write_tensor(const std::string& path, std::span<const uint32_t> dims,
                         std::span<const float> payload) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("write_tensor: cannot open " + path);
    write_tensor(f, dims, payload);
}

inline Tensor read_tensor(std::istream& is, const std::string& what = "<stream>") {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kTensorMagic, 8) != 0)
        throw DataError("read_tensor: bad magic in " + what);
    const uint32_t rank = detail::get_u32_le(is);
    if (!is || rank > 16) throw DataError("read_tensor: bad rank in " + what);
    Tensor t;
    t.dims.resize(rank);
    size_t n = 1;
    for (uint32_t i = 0; i < rank; ++i) {
        t.dims[i] = detail::get_u32_le(is);
        if (t.dims[i] == 0) throw DataError("read_tensor: zero dimension in " + what);
        n *= t.dims[i];
    }
    if (!is) throw DataError("read_tensor: truncated header in " + what);
    t.data.resize(n);
    is.read(reinterpret_cast<char*>(t.data.data()), std::streamsize(n * sizeof(float)));
    if (size_t(is.gcount()) != n * sizeof(float))
        throw DataError("read_tensor: truncated payload in " + what);
    return t;
}

inline Tensor read_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("read_tensor: cannot open " + path);
    return read_tensor(f, path);
}

}  // namespace psforge
