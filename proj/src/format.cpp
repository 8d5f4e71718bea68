#include "tsink/format.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace tsink {

std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s == "nan") return std::nan("");
    double v = 0.0;
    const char* first = s.data();
    if (!s.empty() && s.front() == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        throw std::invalid_argument("not a number: '" + std::string(s) + "'");
    }
    return v;
}

long long parse_int(std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        throw std::invalid_argument("not an integer: '" + std::string(s) + "'");
    }
    return v;
}

void write_csv_row(std::ostream& os, const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
        if (k > 0) os << ',';
        const std::string& c = cells[k];
        if (c.find_first_of(",\"\n\r") == std::string::npos) {
            os << c;
        } else {
            os << '"';
            for (char ch : c) {
                if (ch == '"') os << '"';
                os << ch;
            }
            os << '"';
        }
    }
    os << '\n';
}

std::vector<std::string> split_csv_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char ch = line[k];
        if (quoted) {
            if (ch == '"') {
                if (k + 1 < line.size() && line[k + 1] == '"') {
                    cur += '"';
                    ++k;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    cells.push_back(std::move(cur));
    return cells;
}

void write_matrix_csv(std::ostream& os, const Matrix& m) {
    std::vector<std::string> cells(m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) cells[c] = fmt_double(m(r, c));
        write_csv_row(os, cells);
    }
}

Matrix read_matrix_csv(std::istream& is) {
    std::vector<double> values;
    std::size_t cols = 0, rows = 0;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        ++rows;
        const auto cells = split_csv_line(line);
        if (rows == 1) cols = cells.size();
        if (cells.size() != cols) throw ParseError("ragged matrix row", rows);
        for (const auto& c : cells) {
            try {
                values.push_back(parse_double(c));
            } catch (const std::invalid_argument& e) {
                throw ParseError(e.what(), rows);
            }
        }
    }
    return Matrix::from_rows(rows, cols, std::move(values));
}

void write_pgm(std::ostream& os, const Matrix& alpha) {
    const double mx = max_abs(alpha);
    os << "P2\n" << alpha.cols() << ' ' << alpha.rows() << "\n255\n";
    for (std::size_t r = 0; r < alpha.rows(); ++r) {
        for (std::size_t c = 0; c < alpha.cols(); ++c) {
            const double a = std::max(0.0, alpha(r, c));
            const long px = mx > 0.0 ? std::lround(255.0 * (1.0 - a / mx)) : 255;
            if (c > 0) os << ' ';
            os << px;
        }
        os << '\n';
    }
}

Matrix read_pgm(std::istream& is) {
    std::string magic;
    std::size_t w = 0, h = 0;
    int maxval = 0;
    if (!(is >> magic >> w >> h >> maxval) || magic != "P2") throw ParseError("not a P2 PGM header", 1);
    Matrix m(h, w);
    for (double& v : m.data()) {
        int px = 0;
        if (!(is >> px)) throw ParseError("truncated PGM body", 4);
        v = px;
    }
    return m;
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& body) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        body(os);
        os.flush();
        if (!os) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace tsink
