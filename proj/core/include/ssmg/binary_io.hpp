#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ssmg {

// Little-endian byte encoder, independent of host byte order.
class ByteWriter {
public:
    void bytes(std::string_view raw) { buffer_.insert(buffer_.end(), raw.begin(), raw.end()); }
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void f64(double v);
    void str(std::string_view s);  // u32 length + bytes
    void f32_array(std::span<const float> values);

    const std::string& buffer() const noexcept { return buffer_; }
    std::string take() { return std::move(buffer_); }

private:
    std::string buffer_;
};

// Decoder over an in-memory buffer. Any read past the end raises IntegrityError.
class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    std::string_view bytes(std::size_t n);
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    double f64();
    std::string str();
    void f32_array(std::span<float> out);

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    std::size_t position() const noexcept { return pos_; }
    void expect_magic(std::string_view magic, std::string_view what);

private:
    std::string_view data_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Hex form of fnv1a64 over the file contents.
std::string file_content_hash(const std::filesystem::path& path);

}  // namespace ssmg
