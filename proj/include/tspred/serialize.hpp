// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "tspred/errors.hpp"

namespace tspred {

// Little-endian primitives over iostreams, with offset-carrying errors.
struct LeReader {
    std::istream& in;
    std::uint64_t offset = 0;
    std::string where;

    void raw(void* dst, std::size_t n) {
        in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n)
            throw FormatError(where + ": expected " + std::to_string(n) + " bytes at offset " +
                              std::to_string(offset) + ", got " + std::to_string(in.gcount()));
        offset += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        raw(&v, 1);
        return v;
    }
    std::uint16_t u16() {
        std::uint8_t b[2];
        raw(b, 2);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }
    std::uint32_t u32() {
        std::uint8_t b[4];
        raw(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    std::string bytes(std::size_t n) {
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
};

struct LeWriter {
    std::ostream& out;
    void raw(const void* src, std::size_t n) {
        out.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
    }
    void u8(std::uint8_t v) { raw(&v, 1); }
    void u16(std::uint16_t v) {
        std::uint8_t b[2] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8)};
        raw(b, 2);
    }
    void u32(std::uint32_t v) {
        std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                             static_cast<std::uint8_t>(v >> 16),
                             static_cast<std::uint8_t>(v >> 24)};
        raw(b, 4);
    }
    void bytes(const std::string& s) { raw(s.data(), s.size()); }
};

inline std::ifstream open_input(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UsageError("cannot open " + path);
    return f;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw UsageError("cannot open " + path + " for writing");
    return f;
}

}  // namespace tspred
