#pragma once

// Little-endian binary encoding with a CRC-32 trailer, shared by the snapshot
// cache and model checkpoints.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowcast {

class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void f64(double v);
    void f64s(std::span<const double> v);
    void raw(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }
    /// u64 length prefix followed by the bytes.
    void str(const std::string& s);

    const std::vector<std::uint8_t>& bytes() const { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : data_(bytes) {}

    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    double f64();
    std::vector<double> f64s(std::size_t count);
    std::string str();
    std::span<const std::uint8_t> raw(std::size_t n);

    std::size_t remaining() const { return data_.size() - pos_; }
    bool at_end() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const;
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

/// Writes `payload` followed by its CRC-32 (little-endian u32).
void write_checksummed(const std::filesystem::path& path, const std::vector<std::uint8_t>& payload);

/// Reads a file written by write_checksummed; throws IntegrityError when the
/// trailer does not match, std::runtime_error when the file cannot be read.
std::vector<std::uint8_t> read_checksummed(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace flowcast
