#include "masklab/report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "masklab/error.hpp"

namespace masklab {

namespace {

void check_cell(const std::string& cell) {
    if (cell.find('\t') != std::string::npos || cell.find('\n') != std::string::npos) {
        throw DomainError("report: cell contains a tab or newline: " + cell);
    }
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t tab = line.find('\t', start);
        out.push_back(line.substr(start, tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return out;
}

}  // namespace

std::string report_num(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string report_to_string(const Report& report) {
    std::ostringstream os;
    for (const auto& [key, value] : report.meta) {
        os << "# " << key << ": " << value << "\n";
    }
    for (std::size_t c = 0; c < report.columns.size(); ++c) {
        check_cell(report.columns[c]);
        os << (c ? "\t" : "") << report.columns[c];
    }
    os << "\n";
    for (const auto& row : report.rows) {
        if (row.size() != report.columns.size()) {
            throw DomainError("report: row width does not match column count");
        }
        for (std::size_t c = 0; c < row.size(); ++c) {
            check_cell(row[c]);
            os << (c ? "\t" : "") << row[c];
        }
        os << "\n";
    }
    return os.str();
}

Report report_from_string(const std::string& text) {
    Report report;
    std::istringstream is(text);
    std::string line;
    bool have_header = false;
    while (std::getline(is, line)) {
        if (!have_header && line.size() >= 2 && line[0] == '#' && line[1] == ' ') {
            const std::string body = line.substr(2);
            const auto colon = body.find(": ");
            if (colon == std::string::npos) {
                throw FormatError("report: malformed metadata line: " + line);
            }
            report.meta.emplace_back(body.substr(0, colon), body.substr(colon + 2));
            continue;
        }
        if (!have_header) {
            report.columns = split_tabs(line);
            have_header = true;
            continue;
        }
        auto cells = split_tabs(line);
        if (cells.size() != report.columns.size()) {
            throw FormatError("report: row width does not match header");
        }
        report.rows.push_back(std::move(cells));
    }
    if (!have_header) throw FormatError("report: missing header row");
    return report;
}

void write_report(const std::filesystem::path& path, const Report& report) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("report: cannot open for writing: " + path.string());
    os << report_to_string(report);
    if (!os) throw IoError("report: write failed: " + path.string());
}

Report read_report(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("report: cannot open: " + path.string());
    std::ostringstream buf;
    buf << is.rdbuf();
    return report_from_string(buf.str());
}

}  // namespace masklab
