#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "omoq/errors.hpp"

namespace omoq::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    size_t column(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        fail("csv: missing column '" + name + "'");
    }
    bool has_column(const std::string& name) const {
        for (const auto& h : header)
            if (h == name) return true;
        return false;
    }
};

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline Table read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("csv: cannot open " + path);
    Table t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto fields = split_line(line);
        if (first) {
            t.header = std::move(fields);
            first = false;
        } else {
            t.rows.push_back(std::move(fields));
        }
    }
    if (first) fail("csv: empty file " + path);
    return t;
}

// Shortest representation that round-trips a double exactly.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s, const std::string& what) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) fail("csv: trailing characters in " + what + ": '" + s + "'");
        return v;
    } catch (const std::invalid_argument&) {
        fail("csv: cannot parse " + what + ": '" + s + "'");
    } catch (const std::out_of_range&) {
        fail("csv: out-of-range " + what + ": '" + s + "'");
    }
}

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) fail("csv: cannot write " + path);
    }
    void row(const std::vector<std::string>& fields) {
        for (size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << fields[i];
        }
        out_ << '\n';
    }
    void flush() { out_.flush(); }

private:
    std::ofstream out_;
};

} // namespace omoq::csv
