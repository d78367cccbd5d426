#pragma once

// Little-endian binary readers/writers shared by every on-disk format
// (checkpoints, rasters, likelihood maps, forest models).

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "lnmdet/common.hpp"

namespace lnmdet {

class BinWriter {
public:
    explicit BinWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
        require(out_.good(), ErrorCategory::io, "cannot open for writing: " + path);
    }

    void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) { bytes(&v, 2); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void f32(float v) { bytes(&v, 4); }
    void f64(double v) { bytes(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void magic(const char m[5]) { bytes(m, 4); }

    void close() {
        out_.close();
        require(out_.good(), ErrorCategory::io, "write failed: " + path_);
    }

private:
    std::string path_;
    std::ofstream out_;
};

class BinReader {
public:
    explicit BinReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        require(in_.good(), ErrorCategory::io, "cannot open for reading: " + path);
    }

    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n)) {
            raise(ErrorCategory::parse, "truncated file at byte " + std::to_string(offset()) + ": " + path_);
        }
    }
    std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
    std::uint16_t u16() { std::uint16_t v; bytes(&v, 2); return v; }
    std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
    float f32() { float v; bytes(&v, 4); return v; }
    double f64() { double v; bytes(&v, 8); return v; }
    std::string str(std::uint32_t max_len = 1u << 20) {
        const std::uint32_t n = u32();
        require(n <= max_len, ErrorCategory::parse, "string too long in " + path_);
        std::string s(n, '\0');
        if (n) bytes(s.data(), n);
        return s;
    }
    void expect_magic(const char m[5], const std::string& what) {
        char got[4];
        bytes(got, 4);
        if (std::memcmp(got, m, 4) != 0) {
            raise(ErrorCategory::parse, "bad magic for " + what + " in " + path_);
        }
    }
    bool at_eof() {
        in_.peek();
        return in_.eof();
    }
    std::int64_t offset() { return static_cast<std::int64_t>(in_.tellg()); }

    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ifstream in_;
};

}  // namespace lnmdet
