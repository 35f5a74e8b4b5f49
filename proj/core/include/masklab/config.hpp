#ifndef MASKLAB_CONFIG_HPP
#define MASKLAB_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace masklab {

// Flat key=value configuration with [section] headers. Serialization is
// canonical (sections and keys sorted), so equal configs hash equally no
// matter how they were assembled.
class Config {
public:
    static Config parse(const std::string& text);
    static Config load(const std::filesystem::path& path);

    void set(const std::string& section, const std::string& key, const std::string& value);
    void set_num(const std::string& section, const std::string& key, double value);
    void set_int(const std::string& section, const std::string& key, std::int64_t value);

    bool has(const std::string& section, const std::string& key) const;
    std::optional<std::string> get(const std::string& section, const std::string& key) const;

    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const;
    double num_or(const std::string& section, const std::string& key, double fallback) const;
    std::int64_t int_or(const std::string& section, const std::string& key,
                        std::int64_t fallback) const;
    bool bool_or(const std::string& section, const std::string& key, bool fallback) const;

    // Merge other into this; other's values win on conflict.
    void overlay(const Config& other);

    std::string serialize() const;
    std::uint64_t hash() const;
    std::string hash_hex() const;

    void save(const std::filesystem::path& path) const;

    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return sections_;
    }

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace masklab

#endif  // MASKLAB_CONFIG_HPP
