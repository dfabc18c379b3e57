#pragma once

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "error.hpp"

namespace incsim::csv {

struct Row {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

struct Table {
    std::string source;
    std::vector<std::string> header;
    std::vector<Row> rows;

    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) {
                return i;
            }
        }
        throw InputError(source + ": missing column '" + std::string(name) + "'");
    }

    std::string where(const Row &row) const { return source + ":" + std::to_string(row.line); }
};

inline std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        auto field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                         : comma - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) {
            field.remove_prefix(1);
        }
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
            field.remove_suffix(1);
        }
        out.emplace_back(field);
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

/// Reads a header-first CSV. Blank lines and lines starting with '#' are skipped.
inline Table read(std::istream &in, std::string source) {
    Table table;
    table.source = std::move(source);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r" || line.front() == '#') {
            continue;
        }
        auto fields = split_line(line);
        if (table.header.empty()) {
            table.header = std::move(fields);
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw InputError(table.source + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(table.header.size()) + " fields, found " +
                             std::to_string(fields.size()));
        }
        table.rows.push_back({line_no, std::move(fields)});
    }
    if (table.header.empty()) {
        throw InputError(table.source + ": empty file");
    }
    return table;
}

inline Table read_file(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open " + path.string());
    }
    return read(in, path.string());
}

template <typename T>
T parse(const std::string &text, const std::string &where) {
    T value{};
    if constexpr (std::is_floating_point_v<T>) {
        if (text == "inf" || text == "-inf" || text == "nan") {
            return text == "nan"  ? std::numeric_limits<T>::quiet_NaN()
                   : text == "inf" ? std::numeric_limits<T>::infinity()
                                   : -std::numeric_limits<T>::infinity();
        }
    }
    const auto *first = text.data();
    const auto *last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw InputError(where + ": cannot parse '" + text + "' as a number");
    }
    return value;
}

/// Shortest representation that round-trips exactly.
inline std::string format(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

inline std::string format(long long value) { return std::to_string(value); }
inline std::string format(int value) { return std::to_string(value); }
inline std::string format(std::size_t value) { return std::to_string(value); }
inline std::string format(const std::string &value) { return value; }
inline std::string format(const char *value) { return value; }

template <typename... Fields>
void write_row(std::ostream &out, const Fields &...fields) {
    bool first = true;
    ((out << (first ? "" : ",") << format(fields), first = false), ...);
    out << '\n';
}

} // namespace incsim::csv
