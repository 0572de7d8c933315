// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#include "ckpd/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "ckpd/errors.hpp"

namespace ckpd {

namespace {

constexpr const char* kMatMagic = "CKPD-MAT";
constexpr const char* kMatVersion = "v1";

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", op, a.shape_string(),
                                     b.shape_string()));
    }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError(fmt::format("matrix {}x{} needs {} values, got {}", rows_, cols_,
                                     rows_ * cols_, data_.size()));
    }
    if (!all_finite()) {
        throw NumericalFailure(fmt::format("matrix {}x{} has non-finite entries", rows_, cols_));
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
    Matrix m(values.size(), values.size());
    for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
    return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.front().size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("from_rows: ragged rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Matrix Matrix::from_columns(const std::vector<Vector>& columns) {
    const std::size_t c = columns.size();
    const std::size_t r = c == 0 ? 0 : columns.front().size();
    Matrix m(r, c);
    for (std::size_t j = 0; j < c; ++j) {
        if (columns[j].size() != r) throw ShapeError("from_columns: ragged columns");
        for (std::size_t i = 0; i < r; ++i) m(i, j) = columns[j][i];
    }
    if (!m.all_finite()) throw NumericalFailure("from_columns: non-finite entries");
    return m;
}

Vector Matrix::column(std::size_t c) const {
    Vector v(rows_);
    for (std::size_t i = 0; i < rows_; ++i) v[i] = (*this)(i, c);
    return v;
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const { return fmt::format("{}x{}", rows_, cols_); }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError(
            fmt::format("matmul: {} times {}", a.shape_string(), b.shape_string()));
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out_row = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const auto b_row = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
        }
    }
    return out;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) {
        throw ShapeError(fmt::format("matvec: {} times vector of {}", a.shape_string(), x.size()));
    }
    Vector out(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), x);
    return out;
}

Vector matvec_transposed(const Matrix& a, std::span<const double> x) {
    if (a.rows() != x.size()) {
        throw ShapeError(
            fmt::format("matvec_transposed: {}ᵀ times vector of {}", a.shape_string(), x.size()));
    }
    Vector out(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double xi = x[i];
        const auto r = a.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) out[j] += r[j] * xi;
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out = a;
    auto o = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
    return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "subtract");
    Matrix out = a;
    auto o = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
    return out;
}

Matrix scaled(const Matrix& m, double factor) {
    Matrix out = m;
    for (double& v : out.data()) v *= factor;
    return out;
}

Matrix add_scaled_identity(const Matrix& m, double alpha) {
    if (m.rows() != m.cols()) {
        throw ShapeError(fmt::format("add_scaled_identity: {} is not square", m.shape_string()));
    }
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows(); ++i) out(i, i) += alpha;
    return out;
}

double frobenius_norm(const Matrix& m) { return norm2(m.data()); }

double max_abs_difference(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_difference");
    double worst = 0.0;
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < ad.size(); ++i) worst = std::max(worst, std::abs(ad[i] - bd[i]));
    return worst;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError(fmt::format("dot: lengths {} and {}", a.size(), b.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm2(std::span<const double> v) {
    // Scaled accumulation so huge or tiny entries do not over/underflow.
    double scale = 0.0;
    for (double x : v) scale = std::max(scale, std::abs(x));
    if (scale == 0.0 || !std::isfinite(scale)) return scale;
    double acc = 0.0;
    for (double x : v) {
        const double y = x / scale;
        acc += y * y;
    }
    return scale * std::sqrt(acc);
}

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

void write_matrix(std::ostream& out, const Matrix& m) {
    out << kMatMagic << ' ' << kMatVersion << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto r = m.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (j != 0) out << ' ';
            out << format_double(r[j]);
        }
        out << '\n';
    }
}

Matrix read_matrix(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw FormatError("CKPD-MAT: missing header");
    std::istringstream hs(header);
    std::string magic, version, extra;
    long long rows = -1, cols = -1;
    hs >> magic >> version >> rows >> cols;
    if (magic != kMatMagic || version != kMatVersion) {
        throw FormatError(fmt::format("CKPD-MAT: bad magic '{}'", header));
    }
    if (hs.fail() || rows < 0 || cols < 0 || (hs >> extra)) {
        throw FormatError(fmt::format("CKPD-MAT: bad shape in header '{}'", header));
    }
    const auto r = static_cast<std::size_t>(rows);
    const auto c = static_cast<std::size_t>(cols);
    std::vector<double> data;
    data.reserve(r * c);
    std::string line;
    for (std::size_t i = 0; i < r; ++i) {
        if (!std::getline(in, line)) {
            throw FormatError(fmt::format("CKPD-MAT: expected {} rows, found {}", r, i));
        }
        std::istringstream ls(line);
        std::size_t count = 0;
        std::string token;
        while (ls >> token) {
            try {
                std::size_t used = 0;
                data.push_back(std::stod(token, &used));
                if (used != token.size()) throw std::invalid_argument(token);
            } catch (const std::exception&) {
                throw FormatError(fmt::format("CKPD-MAT: bad number '{}' in row {}", token, i));
            }
            ++count;
        }
        if (count != c) {
            throw FormatError(fmt::format("CKPD-MAT: row {} has {} values, expected {}", i, count, c));
        }
    }
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") != std::string::npos) {
            throw FormatError("CKPD-MAT: trailing data after last row");
        }
    }
    try {
        return Matrix(r, c, std::move(data));
    } catch (const NumericalFailure& e) {
        throw FormatError(e.what());
    }
}

void save_matrix(const std::string& path, const Matrix& m) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for writing: " + path);
    write_matrix(out, m);
    if (!out) throw FormatError("write failed: " + path);
}

Matrix load_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open: " + path);
    return read_matrix(in);
}

}  // namespace ckpd
