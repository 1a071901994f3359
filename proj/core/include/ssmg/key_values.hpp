#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>

namespace ssmg {

// Flat `key = value` text. '#' starts a comment; blank lines are ignored.
// Readers consume keys; finish() rejects whatever was never consumed.
class KeyValues {
public:
    static KeyValues parse(std::string_view text);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool contains(const std::string& key) const { return values_.count(key) != 0; }

    std::string read_string(const std::string& key, const std::string& fallback);
    std::size_t read_size(const std::string& key, std::size_t fallback);
    std::uint64_t read_u64(const std::string& key, std::uint64_t fallback);
    double read_double(const std::string& key, double fallback);

    // Throws ConfigError naming every key no reader consumed.
    void finish() const;

    // Sorted `key = value` lines.
    std::string to_text() const;

private:
    const std::string* lookup(const std::string& key);

    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace ssmg
