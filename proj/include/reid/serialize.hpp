#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "reid/error.hpp"
#include "reid/tensor.hpp"

namespace reid {

// Little-endian binary primitives. All on-disk formats in the toolkit are
// built from these records so alternate-language tools can parse them.

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os) throw IoError("write failed");
}

inline void read_bytes(std::istream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n) throw IoError("unexpected end of file");
}

template <typename T>
void write_le(std::ostream& os, T v) {
    static_assert(std::is_arithmetic_v<T>);
    std::array<unsigned char, sizeof(T)> buf;
    std::memcpy(buf.data(), &v, sizeof(T));
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
    std::reverse(buf.begin(), buf.end());
#endif
    write_bytes(os, buf.data(), buf.size());
}

template <typename T>
T read_le(std::istream& is) {
    static_assert(std::is_arithmetic_v<T>);
    std::array<unsigned char, sizeof(T)> buf;
    read_bytes(is, buf.data(), buf.size());
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
    std::reverse(buf.begin(), buf.end());
#endif
    T v;
    std::memcpy(&v, buf.data(), sizeof(T));
    return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    write_bytes(os, s.data(), s.size());
}

inline std::string read_string(std::istream& is) {
    const auto n = read_le<std::uint32_t>(is);
    if (n > (1u << 26)) throw IoError("string record too large");
    std::string s(n, '\0');
    if (n) read_bytes(is, s.data(), n);
    return s;
}

inline void write_magic(std::ostream& os, const char magic[8]) {
    write_bytes(os, magic, 8);
}

inline void expect_magic(std::istream& is, const char magic[8], const std::string& what) {
    char buf[8];
    read_bytes(is, buf, 8);
    if (std::memcmp(buf, magic, 8) != 0) throw IoError("bad magic: not a " + what + " file");
}

// Tensor record: name, dtype (0 = f32, 1 = f64), rank, dims, payload.
enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

template <typename S>
void write_tensor_record(std::ostream& os, const std::string& name, const Tensor<S>& t, Dtype dtype) {
    write_string(os, name);
    write_le<std::uint8_t>(os, static_cast<std::uint8_t>(dtype));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.dims.size()));
    for (std::int64_t d : t.dims) write_le<std::int64_t>(os, d);
    if (dtype == Dtype::f32) {
        for (S v : t.data) write_le<float>(os, static_cast<float>(v));
    } else {
        for (S v : t.data) write_le<double>(os, static_cast<double>(v));
    }
}

template <typename S>
std::pair<std::string, Tensor<S>> read_tensor_record(std::istream& is) {
    std::pair<std::string, Tensor<S>> out;
    out.first = read_string(is);
    const auto dtype = static_cast<Dtype>(read_le<std::uint8_t>(is));
    if (dtype != Dtype::f32 && dtype != Dtype::f64) throw IoError("unknown tensor dtype");
    const auto rank = read_le<std::uint32_t>(is);
    if (rank > 8) throw IoError("tensor rank out of range");
    std::vector<std::int64_t> dims(rank);
    for (auto& d : dims) {
        d = read_le<std::int64_t>(is);
        if (d < 0 || d > (1ll << 32)) throw IoError("tensor dimension out of range");
    }
    out.second = Tensor<S>::zeros(dims);
    for (auto& v : out.second.data) {
        v = dtype == Dtype::f32 ? static_cast<S>(read_le<float>(is))
                                : static_cast<S>(read_le<double>(is));
    }
    return out;
}

// FNV-1a 64-bit, used for config and data digests.
class Digest {
public:
    void update(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= b[i];
            h_ *= 0x100000001B3ull;
        }
    }
    void update(const std::string& s) { update(s.data(), s.size()); }
    template <typename T>
    void update_value(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        update(&v, sizeof(T));
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 0xCBF29CE484222325ull;
};

inline std::ofstream open_output(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    return os;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    return is;
}

} // namespace reid
