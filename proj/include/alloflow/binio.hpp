#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "alloflow/errors.hpp"

namespace alloflow {

// Little-endian primitive encoding shared by the AFDS / AFLW / AFVS formats.

using Bytes = std::vector<std::uint8_t>;

inline void put_u32(Bytes& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_u64(Bytes& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_f64(Bytes& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
}

inline void put_magic(Bytes& out, const char magic[5]) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(magic[i]));
}

// Cursor-based reader; every read checks the remaining length.
class ByteReader {
public:
    explicit ByteReader(const Bytes& data) : data_(data) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }

    double f64() {
        const std::uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }

    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    void expect_magic(const char magic[5], const char* what) {
        need(4);
        for (int i = 0; i < 4; ++i) {
            if (data_[pos_ + i] != static_cast<std::uint8_t>(magic[i]))
                throw io_error(std::string(what) + ": bad magic (expected \"" + magic + "\")");
        }
        pos_ += 4;
    }

    bool exhausted() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw io_error("truncated payload");
    }

    const Bytes& data_;
    std::size_t pos_ = 0;
};

inline void write_file(const std::string& path, const Bytes& data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!f) throw io_error("write failed: " + path);
}

inline Bytes read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw io_error("cannot open: " + path);
    const std::streamsize n = f.tellg();
    f.seekg(0);
    Bytes data(static_cast<std::size_t>(n));
    f.read(reinterpret_cast<char*>(data.data()), n);
    if (!f) throw io_error("read failed: " + path);
    return data;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open for writing: " + path);
    f << text;
    if (!f) throw io_error("write failed: " + path);
}

}  // namespace alloflow
