#pragma once

// Matrix Market (.mtx) reading into dense matrices, and dense writing in
// coordinate format.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>

#include "kaczmarz/error.hpp"
#include "kaczmarz/linalg.hpp"

namespace kaczmarz {

namespace detail {

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline ParseError mm_error(long line, const std::string& what) {
    return ParseError("matrix market line " + std::to_string(line) + ": " + what);
}

}  // namespace detail

inline Mat read_matrix_market(std::istream& in) {
    std::string line;
    long lineno = 0;
    if (!std::getline(in, line)) {
        throw detail::mm_error(1, "empty input");
    }
    ++lineno;
    std::istringstream header(line);
    std::string banner, object, format, field, symmetry;
    header >> banner >> object >> format >> field >> symmetry;
    if (banner != "%%MatrixMarket" || detail::lower(object) != "matrix") {
        throw detail::mm_error(lineno, "missing %%MatrixMarket matrix banner");
    }
    format = detail::lower(format);
    field = detail::lower(field);
    symmetry = detail::lower(symmetry);
    if (field == "pattern" || field == "complex") {
        throw UnsupportedFormat("matrix market field '" + field + "' is not supported");
    }
    if (field != "real" && field != "integer" && field != "double") {
        throw detail::mm_error(lineno, "unknown field '" + field + "'");
    }
    if (format != "coordinate" && format != "array") {
        throw detail::mm_error(lineno, "unknown format '" + format + "'");
    }
    if (symmetry == "hermitian") {
        throw UnsupportedFormat("hermitian matrices are not supported");
    }
    const bool symmetric = symmetry == "symmetric";
    const bool skew = symmetry == "skew-symmetric";
    if (!symmetric && !skew && symmetry != "general") {
        throw detail::mm_error(lineno, "unknown symmetry '" + symmetry + "'");
    }

    auto next_data_line = [&](std::string& out) {
        while (std::getline(in, out)) {
            ++lineno;
            const auto first = out.find_first_not_of(" \t\r");
            if (first == std::string::npos || out[first] == '%') continue;
            return true;
        }
        return false;
    };

    if (!next_data_line(line)) {
        throw detail::mm_error(lineno, "missing size line");
    }
    std::istringstream size_line(line);
    long rows = 0, cols = 0, nnz = 0;
    size_line >> rows >> cols;
    if (format == "coordinate") size_line >> nnz;
    if (!size_line || rows < 1 || cols < 1 || nnz < 0) {
        throw detail::mm_error(lineno, "malformed size line");
    }
    if ((symmetric || skew) && rows != cols) {
        throw detail::mm_error(lineno, "symmetric matrix must be square");
    }
    Mat a = Mat::Zero(rows, cols);

    if (format == "coordinate") {
        for (long k = 0; k < nnz; ++k) {
            if (!next_data_line(line)) {
                throw detail::mm_error(lineno, "expected " + std::to_string(nnz) + " entries, got " + std::to_string(k));
            }
            std::istringstream entry(line);
            long i = 0, j = 0;
            double v = 0.0;
            entry >> i >> j >> v;
            if (!entry) throw detail::mm_error(lineno, "malformed entry");
            if (i < 1 || i > rows || j < 1 || j > cols) throw detail::mm_error(lineno, "index out of range");
            a(i - 1, j - 1) += v;
            if ((symmetric || skew) && i != j) {
                a(j - 1, i - 1) += skew ? -v : v;
            }
        }
    } else {
        // column-major; symmetric variants store the lower triangle only
        for (long j = 0; j < cols; ++j) {
            const long start = (symmetric || skew) ? (skew ? j + 1 : j) : 0;
            for (long i = start; i < rows; ++i) {
                if (!next_data_line(line)) throw detail::mm_error(lineno, "too few array entries");
                std::istringstream entry(line);
                double v = 0.0;
                entry >> v;
                if (!entry) throw detail::mm_error(lineno, "malformed entry");
                a(i, j) = v;
                if (i != j && (symmetric || skew)) a(j, i) = skew ? -v : v;
            }
        }
    }
    require_finite(a, "matrix market data");
    return a;
}

inline Mat read_matrix_market(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    return read_matrix_market(in);
}

/// Writes all nonzero entries in coordinate real general format with 17
/// significant digits, so reading back reproduces every entry exactly.
inline void write_matrix_market(std::ostream& out, const Mat& a) {
    long nnz = 0;
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            if (a(i, j) != 0.0) ++nnz;
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << a.rows() << ' ' << a.cols() << ' ' << nnz << '\n';
    char buf[64];
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            if (a(i, j) == 0.0) continue;
            std::snprintf(buf, sizeof buf, "%.17g", a(i, j));
            out << (i + 1) << ' ' << (j + 1) << ' ' << buf << '\n';
        }
    }
}

inline void write_matrix_market(const std::string& path, const Mat& a) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    write_matrix_market(out, a);
    if (!out) {
        throw IoError("write to '" + path + "' failed");
    }
}

}  // namespace kaczmarz
