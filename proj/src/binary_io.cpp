#include "flowcast/binary_io.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>

#include <zlib.h>

namespace flowcast {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    std::size_t off = 0;
    while (off < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
        crc = ::crc32(crc, bytes.data() + off, chunk);
        off += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::f64s(std::span<const double> v) {
    buf_.reserve(buf_.size() + 8 * v.size());
    for (double x : v) f64(x);
}

void ByteWriter::str(const std::string& s) {
    u64(s.size());
    buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteReader::need(std::size_t n) const {
    if (remaining() < n) throw IntegrityError("truncated data: needed " + std::to_string(n) + " more bytes");
}

std::uint8_t ByteReader::u8() {
    need(1);
    return data_[pos_++];
}

std::uint32_t ByteReader::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
    return v;
}

std::uint64_t ByteReader::u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
    return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::vector<double> ByteReader::f64s(std::size_t count) {
    need(count * 8);
    std::vector<double> v(count);
    for (auto& x : v) x = f64();
    return v;
}

std::string ByteReader::str() {
    const auto n = u64();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
}

std::span<const std::uint8_t> ByteReader::raw(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_checksummed(const std::filesystem::path& path, const std::vector<std::uint8_t>& payload) {
    ByteWriter trailer;
    trailer.u32(crc32(payload));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    out.write(reinterpret_cast<const char*>(trailer.bytes().data()), 4);
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<std::uint8_t> read_checksummed(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() < 4) throw IntegrityError(path.string() + ": file too short for a checksum trailer");
    const std::size_t n = bytes.size() - 4;
    ByteReader tail(std::span<const std::uint8_t>(bytes).subspan(n));
    const std::uint32_t stored = tail.u32();
    bytes.resize(n);
    if (crc32(bytes) != stored) throw IntegrityError(path.string() + ": checksum mismatch (file is corrupt)");
    return bytes;
}

}  // namespace flowcast
