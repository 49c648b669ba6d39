#pragma once

#include "nliv/kde.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nliv {

/// CSV writer with a versioned schema comment line, comma separators,
/// '.' decimal point and LF line endings.
class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::string& schema,
              const std::vector<std::string>& columns)
        : out_(path, std::ios::binary), ncols_(columns.size()) {
        if (!out_) throw std::runtime_error("cannot open output file: " + path);
        out_ << "# schema: " << schema << "\n";
        for (std::size_t i = 0; i < columns.size(); ++i)
            out_ << columns[i] << (i + 1 < columns.size() ? "," : "");
        out_ << "\n";
    }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != ncols_)
            throw std::invalid_argument("CsvWriter: row width mismatch");
        for (std::size_t i = 0; i < cells.size(); ++i)
            out_ << cells[i] << (i + 1 < cells.size() ? "," : "");
        out_ << "\n";
    }

  private:
    std::ofstream out_;
    std::size_t ncols_;
};

inline std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

/// Read an observation file with header y,x,z; throws naming the first
/// malformed line.
inline Sample read_sample_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open data file: " + path);
    std::string line;
    int lineno = 0;
    Sample s;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        if (!header_seen) {
            if (line != "y,x,z")
                throw std::runtime_error("data file line " + std::to_string(lineno) +
                                         ": expected header 'y,x,z'");
            header_seen = true;
            continue;
        }
        std::istringstream row(line);
        double vals[3];
        std::string cell;
        for (int c = 0; c < 3; ++c) {
            if (!std::getline(row, cell, ','))
                throw std::runtime_error("data file line " + std::to_string(lineno) +
                                         ": expected 3 comma-separated values");
            try {
                std::size_t pos = 0;
                vals[c] = std::stod(cell, &pos);
                if (pos != cell.size()) throw std::invalid_argument("");
            } catch (...) {
                throw std::runtime_error("data file line " + std::to_string(lineno) +
                                         ": malformed number '" + cell + "'");
            }
        }
        if (std::getline(row, cell, ','))
            throw std::runtime_error("data file line " + std::to_string(lineno) +
                                     ": expected 3 comma-separated values");
        s.records.push_back({vals[0], vals[1], vals[2]});
    }
    if (!header_seen || s.records.empty())
        throw std::runtime_error("data file " + path + ": no observations");
    return s;
}

inline void write_sample_csv(const std::string& path, const Sample& s) {
    CsvWriter w(path, "observations v1", {"y", "x", "z"});
    for (const auto& r : s.records) w.row({csv_num(r.y), csv_num(r.x), csv_num(r.z)});
}

}  // namespace nliv
