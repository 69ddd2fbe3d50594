#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fieldkf {

/// Formats a double with 10 significant digits, locale-independent.
inline std::string csv_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

inline std::string csv_num(std::int64_t v) { return std::to_string(v); }
inline std::string csv_num(int v) { return std::to_string(v); }

/// Minimal RFC 4180 writer: mandatory header row, CRLF records, fields
/// quoted only when they need it.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header)
        : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
        row(header);
    }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << escaped(fields[i]);
        }
        out_ << "\r\n";
    }

private:
    static std::string escaped(const std::string& s) {
        if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += '"';
            q += c;
        }
        q += '"';
        return q;
    }

    std::ofstream out_;
};

} // namespace fieldkf
