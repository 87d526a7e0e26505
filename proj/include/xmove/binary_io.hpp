#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "xmove/error.hpp"

namespace xmove::binary_io {

// Little-endian reader that tracks its byte offset for error messages.
class ByteReader {
public:
    ByteReader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

    void read(void* dst, std::size_t n) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        const auto got = static_cast<std::size_t>(in_.gcount());
        if (got != n) throw FormatError(what_ + " truncated at byte offset " + std::to_string(offset_ + got));
        offset_ += n;
    }

    template <typename T>
    T uint() {
        std::array<unsigned char, sizeof(T)> b{};
        read(b.data(), b.size());
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
        return v;
    }

    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
    std::size_t offset() const { return offset_; }

private:
    std::istream& in_;
    std::string what_;
    std::size_t offset_ = 0;
};

template <typename T>
void put_uint(std::ostream& out, T v) {
    std::array<char, sizeof(T)> b{};
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b.data(), b.size());
}

}  // namespace xmove::binary_io
