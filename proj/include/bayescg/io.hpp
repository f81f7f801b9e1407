#pragma once

// Matrix Market coordinate files and plain vector files.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "bayescg/errors.hpp"
#include "bayescg/linalg.hpp"

namespace bayescg {

/// Shortest round-tripping decimal form of a double ("%.17g").
inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

struct MatrixMarketOptions {
    /// Reject files whose header does not declare `symmetric`.
    bool require_symmetric = true;
};

namespace detail {

inline std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace detail

/// Reads a real coordinate Matrix Market stream. Symmetric files store one triangle;
/// both triangles are filled on return.
inline SparseMatrix read_matrix_market(std::istream& in, const MatrixMarketOptions& opts = {}) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("empty Matrix Market stream", 1);
    ++line_no;

    std::istringstream header(line);
    std::string banner, object, format, field, symmetry;
    header >> banner >> object >> format >> field >> symmetry;
    if (banner != "%%MatrixMarket") throw ParseError("missing %%MatrixMarket banner", line_no);
    object = detail::lowercase(object);
    format = detail::lowercase(format);
    field = detail::lowercase(field);
    symmetry = detail::lowercase(symmetry);
    if (object != "matrix") throw ParseError("unsupported Matrix Market object '" + object + "'", line_no);
    if (format != "coordinate") throw ParseError("only coordinate format is supported", line_no);
    const bool pattern = field == "pattern";
    if (field != "real" && field != "integer" && !pattern)
        throw ParseError("unsupported Matrix Market field '" + field + "'", line_no);
    const bool symmetric = symmetry == "symmetric";
    if (!symmetric && symmetry != "general")
        throw ParseError("unsupported Matrix Market symmetry '" + symmetry + "'", line_no);
    if (opts.require_symmetric && !symmetric) throw ParseError("expected a symmetric Matrix Market file", line_no);

    long long rows = -1, cols = -1, entries = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '%') continue;
        std::istringstream size_line(line);
        if (!(size_line >> rows >> cols >> entries) || rows <= 0 || cols <= 0 || entries < 0)
            throw ParseError("malformed size line", line_no);
        break;
    }
    if (rows < 0) throw ParseError("missing size line", line_no);
    if (symmetric && rows != cols) throw ParseError("symmetric matrix must be square", line_no);

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(symmetric ? 2 * entries : entries));
    long long read = 0;
    while (read < entries && std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '%') continue;
        std::istringstream entry(line);
        long long i = 0, j = 0;
        double value = 1.0;
        if (!(entry >> i >> j) || (!pattern && !(entry >> value)))
            throw ParseError("malformed entry", line_no);
        if (i < 1 || i > rows || j < 1 || j > cols) throw ParseError("entry index out of range", line_no);
        if (symmetric && j > i) throw ParseError("symmetric file has an entry above the diagonal", line_no);
        triplets.emplace_back(static_cast<Index>(i - 1), static_cast<Index>(j - 1), value);
        if (symmetric && i != j) triplets.emplace_back(static_cast<Index>(j - 1), static_cast<Index>(i - 1), value);
        ++read;
    }
    if (read != entries)
        throw ParseError("expected " + std::to_string(entries) + " entries, found " + std::to_string(read), line_no);

    SparseMatrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    m.setFromTriplets(triplets.begin(), triplets.end());
    m.makeCompressed();
    return m;
}

inline SparseMatrix load_matrix_market(const std::string& path, const MatrixMarketOptions& opts = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open Matrix Market file '" + path + "'");
    return read_matrix_market(in, opts);
}

/// Writes the lower triangle of a symmetric matrix as a symmetric coordinate file.
/// Explicit zeros are skipped.
inline void write_matrix_market(std::ostream& out, const SparseMatrix& m) {
    require_dims(m.rows() == m.cols(), "write_matrix_market: matrix must be square");
    std::vector<std::tuple<Index, Index, double>> lower;
    for (Index i = 0; i < m.outerSize(); ++i)
        for (SparseMatrix::InnerIterator it(m, i); it; ++it)
            if (it.col() <= it.row() && it.value() != 0.0) lower.emplace_back(it.col(), it.row(), it.value());
    // Column-major order, as produced by most Matrix Market writers.
    std::sort(lower.begin(), lower.end());
    out << "%%MatrixMarket matrix coordinate real symmetric\n";
    out << m.rows() << ' ' << m.cols() << ' ' << lower.size() << '\n';
    for (const auto& [j, i, v] : lower) out << i + 1 << ' ' << j + 1 << ' ' << format_double(v) << '\n';
}

inline void write_matrix_market(std::ostream& out, const Matrix& m) {
    write_matrix_market(out, SparseMatrix(m.sparseView()));
}

/// One value per line; blank lines and lines starting with '#' are ignored.
inline Vector read_vector(std::istream& in) {
    std::vector<double> values;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        double v = 0.0;
        if (!(ss >> v)) throw ParseError("malformed vector entry", line_no);
        values.push_back(v);
    }
    return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

inline Vector load_vector(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open vector file '" + path + "'");
    return read_vector(in);
}

inline void write_vector(std::ostream& out, const Vector& v) {
    for (Index i = 0; i < v.size(); ++i) out << format_double(v[i]) << '\n';
}

}  // namespace bayescg
