// Text formats shared by the exporters. CSV cells use RFC 4180 quoting and
// 17 significant digits; attention heatmaps are P2 PGM.

#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tsink/linalg.hpp"

namespace tsink {

/// Parse failure carrying the 1-based line number it occurred on.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// "%.17g"; round-trips every finite double. NaN prints as "nan".
std::string fmt_double(double v);

/// Strict full-string parse; throws std::invalid_argument on trailing junk.
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

void write_csv_row(std::ostream& os, const std::vector<std::string>& cells);
std::vector<std::string> split_csv_line(std::string_view line);

void write_matrix_csv(std::ostream& os, const Matrix& m);
Matrix read_matrix_csv(std::istream& is);

/// P2 text PGM, row r = query step, column c = key step. Intensity is
/// round(255 · (1 − a / max a)), so zero weight is white and the maximum is
/// black. An all-zero matrix renders white.
void write_pgm(std::ostream& os, const Matrix& alpha);
Matrix read_pgm(std::istream& is);

/// Writes via `<path>.tmp` and renames over `path`.
void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& body);

}  // namespace tsink
