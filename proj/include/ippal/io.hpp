#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ippal/core.hpp"

namespace ippal {

// Fixed-format double for reproducible text output (shortest round-trippable
// form would vary in width; %.10g keeps files stable and readable).
inline std::string fmt_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", x);
    return buf;
}

// Round-trippable formatting for serialized values.
inline std::string fmt_double_exact(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error("write failed: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open for reading: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---- PGM rasters -----------------------------------------------------------

// Binary PGM (P5), one byte per cell, maxval 255.
inline void write_pgm8(const std::filesystem::path& path, const Grid<uint8_t>& g) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << "P5\n" << g.cols() << " " << g.rows() << "\n255\n";
    out.write(reinterpret_cast<const char*>(g.data().data()),
              static_cast<std::streamsize>(g.size()));
    if (!out) throw Error("write failed: " + path.string());
}

inline Grid<uint8_t> read_pgm8(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open for reading: " + path.string());
    std::string magic;
    int cols = 0, rows = 0, maxval = 0;
    in >> magic >> cols >> rows >> maxval;
    if (magic != "P5" || maxval != 255 || cols <= 0 || rows <= 0)
        throw Error("unsupported PGM header in " + path.string());
    in.get();  // single whitespace after maxval
    Grid<uint8_t> g(rows, cols);
    in.read(reinterpret_cast<char*>(g.data().data()), static_cast<std::streamsize>(g.size()));
    if (!in) throw Error("truncated PGM payload in " + path.string());
    return g;
}

// Binary PGM (P5) with maxval 65535, big-endian samples per the PGM spec.
// Values are affinely quantized: value ~= offset + q * scale.
struct PgmQuant {
    double scale = 1.0;
    double offset = 0.0;
};

inline PgmQuant write_pgm16(const std::filesystem::path& path, const Grid<double>& g) {
    double lo = 0.0, hi = 0.0;
    if (!g.data().empty()) {
        lo = hi = g.data()[0];
        for (double v : g.data()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    PgmQuant q;
    q.offset = lo;
    q.scale = (hi > lo) ? (hi - lo) / 65535.0 : 1.0;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << "P5\n" << g.cols() << " " << g.rows() << "\n65535\n";
    std::vector<uint8_t> buf(g.size() * 2);
    for (size_t i = 0; i < g.size(); ++i) {
        const double t = (g.data()[i] - q.offset) / q.scale;
        const long code = std::lround(std::min(std::max(t, 0.0), 65535.0));
        buf[2 * i] = static_cast<uint8_t>((code >> 8) & 0xff);
        buf[2 * i + 1] = static_cast<uint8_t>(code & 0xff);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error("write failed: " + path.string());
    return q;
}

inline Grid<double> read_pgm16(const std::filesystem::path& path, const PgmQuant& q) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open for reading: " + path.string());
    std::string magic;
    int cols = 0, rows = 0, maxval = 0;
    in >> magic >> cols >> rows >> maxval;
    if (magic != "P5" || maxval != 65535 || cols <= 0 || rows <= 0)
        throw Error("unsupported PGM header in " + path.string());
    in.get();
    Grid<double> g(rows, cols);
    std::vector<uint8_t> buf(g.size() * 2);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw Error("truncated PGM payload in " + path.string());
    for (size_t i = 0; i < g.size(); ++i) {
        const unsigned code = (static_cast<unsigned>(buf[2 * i]) << 8) | buf[2 * i + 1];
        g.data()[i] = q.offset + code * q.scale;
    }
    return g;
}

// ---- CSV (RFC 4180, LF line endings, UTF-8) --------------------------------

inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out += "\"\"";
        out += ch;
    }
    out += "\"";
    return out;
}

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) {
        append_row(header);
    }

    void append_row(const std::vector<std::string>& fields) {
        for (size_t i = 0; i < fields.size(); ++i) {
            if (i) buf_ += ',';
            buf_ += csv_escape(fields[i]);
        }
        buf_ += '\n';
    }

    const std::string& str() const { return buf_; }

    void save(const std::filesystem::path& path) const { write_text_file(path, buf_); }

private:
    std::string buf_;
};

// ---- little-endian binary payloads ----------------------------------------

inline void put_f64(std::string& buf, double v) {
    static_assert(sizeof(double) == 8);
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) buf += static_cast<char>((bits >> (8 * i)) & 0xff);
}

inline double get_f64(const std::string& buf, size_t& pos) {
    if (pos + 8 > buf.size()) throw Error("truncated binary payload");
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
        bits |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
    pos += 8;
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace ippal
