#include "genrec/common.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace genrec {

std::uint64_t fnv1a(std::span<const unsigned char> bytes) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001B3ull;
    }
    return h;
}

std::string fnv1a_hex(std::string_view text) {
    const auto* p = reinterpret_cast<const unsigned char*>(text.data());
    const std::uint64_t h = fnv1a({p, text.size()});
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string fnv1a_hex_of_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file for digest: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a_hex(ss.str());
}

std::int64_t parse_count(const std::string& text) {
    if (text.empty()) throw ConfigError("empty count");
    std::string t = lowercase(text);
    double scale = 1.0;
    if (t.back() == 'k') { scale = 1e3; t.pop_back(); }
    else if (t.back() == 'm') { scale = 1e6; t.pop_back(); }
    else if (t.back() == 'b') { scale = 1e9; t.pop_back(); }
    try {
        size_t used = 0;
        const double v = std::stod(t, &used);
        if (used != t.size()) throw ConfigError("bad count: " + text);
        const double scaled = v * scale;
        if (!(scaled >= 0) || scaled > 9.2e18) throw ConfigError("count out of range: " + text);
        return static_cast<std::int64_t>(std::llround(scaled));
    } catch (const std::invalid_argument&) {
        throw ConfigError("bad count: " + text);
    } catch (const std::out_of_range&) {
        throw ConfigError("count out of range: " + text);
    }
}

std::int64_t parse_duration_seconds(const std::string& text) {
    if (text.empty()) throw ConfigError("empty duration");
    std::string t = lowercase(text);
    std::int64_t scale = 1;
    switch (t.back()) {
        case 's': scale = 1; t.pop_back(); break;
        case 'm': scale = 60; t.pop_back(); break;
        case 'h': scale = 3600; t.pop_back(); break;
        case 'd': scale = 86400; t.pop_back(); break;
        default: break;
    }
    if (t.empty()) throw ConfigError("bad duration: " + text);
    try {
        size_t used = 0;
        const double v = std::stod(t, &used);
        if (used != t.size()) throw ConfigError("bad duration: " + text);
        const double seconds = v * static_cast<double>(scale);
        if (seconds < 0 || seconds > 9.2e18) throw ConfigError("duration out of range: " + text);
        return static_cast<std::int64_t>(std::llround(seconds));
    } catch (const std::invalid_argument&) {
        throw ConfigError("bad duration: " + text);
    } catch (const std::out_of_range&) {
        throw ConfigError("duration out of range: " + text);
    }
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string lowercase(std::string s) {
    for (char& c : s)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return s;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace genrec
