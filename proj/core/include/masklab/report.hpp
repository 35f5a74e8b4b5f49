#ifndef MASKLAB_REPORT_HPP
#define MASKLAB_REPORT_HPP

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace masklab {

// REPORT format: UTF-8 TSV preceded by a comment block of `# key: value`
// metadata lines (config hash, command, timestamps). Writers are canonical
// and cells are plain strings, so parse/serialize round-trips byte-exactly.
struct Report {
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add_meta(std::string key, std::string value) {
        meta.emplace_back(std::move(key), std::move(value));
    }
};

// Shortest round-trip decimal form of a double, the canonical numeric cell.
std::string report_num(double v);

std::string report_to_string(const Report& report);
Report report_from_string(const std::string& text);

void write_report(const std::filesystem::path& path, const Report& report);
Report read_report(const std::filesystem::path& path);

}  // namespace masklab

#endif  // MASKLAB_REPORT_HPP
