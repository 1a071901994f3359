#include "ssmg/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ssmg/error.hpp"
#include "ssmg/random.hpp"

namespace ssmg {

void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void ByteWriter::u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
}

void ByteWriter::f32_array(std::span<const float> values) {
    buffer_.reserve(buffer_.size() + values.size() * 4);
    for (float v : values) f32(v);
}

std::string_view ByteReader::bytes(std::size_t n) {
    if (n > remaining()) {
        throw IntegrityError("unexpected end of data: needed " + std::to_string(n) + " bytes at offset " +
                             std::to_string(pos_) + ", " + std::to_string(remaining()) + " left");
    }
    auto view = data_.substr(pos_, n);
    pos_ += n;
    return view;
}

std::uint32_t ByteReader::u32() {
    auto b = bytes(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
}

std::uint64_t ByteReader::u64() {
    auto b = bytes(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
    const auto n = u32();
    return std::string(bytes(n));
}

void ByteReader::f32_array(std::span<float> out) {
    for (auto& v : out) v = f32();
}

void ByteReader::expect_magic(std::string_view magic, std::string_view what) {
    if (remaining() < magic.size() || data_.substr(pos_, magic.size()) != magic) {
        throw IntegrityError(std::string(what) + ": bad magic, expected \"" + std::string(magic) + "\"");
    }
    pos_ += magic.size();
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("E_MISSING", "cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("E_IO", "cannot write " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("E_IO", "short write to " + path.string());
}

std::string file_content_hash(const std::filesystem::path& path) {
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(read_file(path));
    return hex.str();
}

}  // namespace ssmg
