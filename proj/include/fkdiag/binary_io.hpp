#pragma once

// Little-endian binary streams shared by all file formats.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <type_traits>

#include "fkdiag/errors.hpp"

namespace fkdiag::detail {

template <typename T>
T to_little(T value) noexcept {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::big) {
        std::array<unsigned char, sizeof(T)> bytes;
        std::memcpy(bytes.data(), &value, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
        std::memcpy(&value, bytes.data(), sizeof(T));
    }
    return value;
}

class BinaryWriter {
public:
    explicit BinaryWriter(const std::string& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw IoError("cannot open " + path + " for writing");
    }

    void magic(std::string_view tag) { raw(tag.data(), tag.size()); }
    void u32(std::uint32_t v) { scalar(v); }
    void u64(std::uint64_t v) { scalar(v); }
    void f64(double v) { scalar(v); }
    void bytes(const void* data, std::size_t n) { raw(data, n); }

    void string(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }

    void finish() {
        out_.flush();
        if (!out_) throw IoError("write failed: " + path_);
    }

private:
    template <typename T>
    void scalar(T v) {
        v = to_little(v);
        raw(&v, sizeof(T));
    }
    void raw(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        if (!out_) throw IoError("write failed: " + path_);
    }

    std::string path_;
    std::ofstream out_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open " + path + " for reading");
    }

    void expect_magic(std::string_view tag) {
        std::string got(tag.size(), '\0');
        raw(got.data(), got.size());
        if (got != tag) throw IoError(path_ + ": bad magic, expected '" + std::string(tag) + "'");
    }

    void expect_version(std::uint32_t version) {
        const auto got = u32();
        if (got != version) {
            throw IoError(path_ + ": unsupported format version " + std::to_string(got) + " (expected " +
                          std::to_string(version) + ")");
        }
    }

    std::uint32_t u32() { return scalar<std::uint32_t>(); }
    std::uint64_t u64() { return scalar<std::uint64_t>(); }
    double f64() { return scalar<double>(); }
    void bytes(void* data, std::size_t n) { raw(data, n); }

    std::string string() {
        const auto n = u64();
        if (n > (1u << 24)) throw IoError(path_ + ": string field too long");
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }

    /// Reject any trailing bytes.
    void expect_end() {
        if (in_.peek() != std::char_traits<char>::eof()) throw IoError(path_ + ": trailing data");
    }

    const std::string& path() const noexcept { return path_; }

private:
    template <typename T>
    T scalar() {
        T v;
        raw(&v, sizeof(T));
        return to_little(v);
    }
    void raw(void* data, std::size_t n) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n)) throw IoError(path_ + ": truncated file");
    }

    std::string path_;
    std::ifstream in_;
};

}  // namespace fkdiag::detail
