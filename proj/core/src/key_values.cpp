#include "ssmg/key_values.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "ssmg/error.hpp"

namespace ssmg {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

KeyValues KeyValues::parse(std::string_view text) {
    KeyValues out;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value, got '" + std::string(line) + "'");
        }
        const std::string key(trim(line.substr(0, eq)));
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        if (out.contains(key)) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key " + key);
        out.values_[key] = std::string(trim(line.substr(eq + 1)));
    }
    return out;
}

const std::string* KeyValues::lookup(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    consumed_.insert(key);
    return &it->second;
}

std::string KeyValues::read_string(const std::string& key, const std::string& fallback) {
    const auto* v = lookup(key);
    return v ? *v : fallback;
}

std::uint64_t KeyValues::read_u64(const std::string& key, std::uint64_t fallback) {
    const auto* v = lookup(key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    auto [end, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || end != v->data() + v->size()) {
        throw ConfigError("key " + key + ": expected a non-negative integer, got '" + *v + "'");
    }
    return out;
}

std::size_t KeyValues::read_size(const std::string& key, std::size_t fallback) {
    return static_cast<std::size_t>(read_u64(key, fallback));
}

double KeyValues::read_double(const std::string& key, double fallback) {
    const auto* v = lookup(key);
    if (!v) return fallback;
    std::istringstream in(*v);
    double out = 0;
    in >> out;
    if (in.fail() || !in.eof() || !std::isfinite(out)) {
        throw ConfigError("key " + key + ": expected a finite number, got '" + *v + "'");
    }
    return out;
}

void KeyValues::finish() const {
    std::string unknown;
    for (const auto& [key, value] : values_) {
        if (!consumed_.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
    }
    if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);
}

std::string KeyValues::to_text() const {
    std::string out;
    for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
    return out;
}

std::string format_double(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, end);
}

}  // namespace ssmg
