#include "masklab/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "masklab/error.hpp"
#include "masklab/hash.hpp"

namespace masklab {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
    while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
    return s.substr(a, b - a);
}

std::string fmt_num(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

Config Config::parse(const std::string& text) {
    Config cfg;
    std::istringstream is(text);
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']' || t.size() < 3) {
                throw FormatError("config: malformed section header at line " +
                                  std::to_string(line_no));
            }
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw FormatError("config: expected key=value at line " + std::to_string(line_no));
        }
        cfg.sections_[section][trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return cfg;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("config: cannot open: " + path.string());
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse(buf.str());
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
    sections_[section][key] = value;
}

void Config::set_num(const std::string& section, const std::string& key, double value) {
    set(section, key, fmt_num(value));
}

void Config::set_int(const std::string& section, const std::string& key, std::int64_t value) {
    set(section, key, std::to_string(value));
}

bool Config::has(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::optional<std::string> Config::get(const std::string& section,
                                       const std::string& key) const {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return std::nullopt;
    const auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    return k->second;
}

std::string Config::get_or(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
    auto v = get(section, key);
    return v ? *v : fallback;
}

double Config::num_or(const std::string& section, const std::string& key,
                      double fallback) const {
    auto v = get(section, key);
    if (!v) return fallback;
    double out = 0.0;
    const auto res = std::from_chars(v->data(), v->data() + v->size(), out);
    if (res.ec != std::errc{} || res.ptr != v->data() + v->size()) {
        throw FormatError("config: [" + section + "] " + key + " is not a number: " + *v);
    }
    return out;
}

std::int64_t Config::int_or(const std::string& section, const std::string& key,
                            std::int64_t fallback) const {
    auto v = get(section, key);
    if (!v) return fallback;
    std::int64_t out = 0;
    const auto res = std::from_chars(v->data(), v->data() + v->size(), out);
    if (res.ec != std::errc{} || res.ptr != v->data() + v->size()) {
        throw FormatError("config: [" + section + "] " + key + " is not an integer: " + *v);
    }
    return out;
}

bool Config::bool_or(const std::string& section, const std::string& key, bool fallback) const {
    auto v = get(section, key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw FormatError("config: [" + section + "] " + key + " is not a boolean: " + *v);
}

void Config::overlay(const Config& other) {
    for (const auto& [section, keys] : other.sections_) {
        for (const auto& [key, value] : keys) sections_[section][key] = value;
    }
}

std::string Config::serialize() const {
    std::ostringstream os;
    for (const auto& [section, keys] : sections_) {
        if (!section.empty()) os << "[" << section << "]\n";
        for (const auto& [key, value] : keys) os << key << "=" << value << "\n";
    }
    return os.str();
}

std::uint64_t Config::hash() const { return fnv1a64(serialize()); }

std::string Config::hash_hex() const { return to_hex(hash()); }

void Config::save(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("config: cannot open for writing: " + path.string());
    os << serialize();
    if (!os) throw IoError("config: write failed: " + path.string());
}

}  // namespace masklab
