#include "macroptim/matrix.hpp"

#include <cmath>

namespace macroptim {

namespace {

void check_dims(int rows, int cols) {
    if (rows < 1 || cols < 1) {
        throw std::invalid_argument("matrix dimensions must be positive, got " +
                                    std::to_string(rows) + "x" + std::to_string(cols));
    }
}

} // namespace

Matrix::Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
    check_dims(rows, cols);
    data_.assign(static_cast<std::size_t>(rows) * cols, 0.0);
}

Matrix::Matrix(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    check_dims(rows, cols);
    if (data_.size() != static_cast<std::size_t>(rows) * cols) {
        throw std::invalid_argument("matrix data length " + std::to_string(data_.size()) +
                                    " does not match " + std::to_string(rows) + "x" +
                                    std::to_string(cols));
    }
    if (!all_finite()) {
        throw std::invalid_argument("matrix construction rejects non-finite entries");
    }
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Matrix &Matrix::operator+=(const Matrix &other) {
    if (!same_shape(other)) throw std::invalid_argument("shape mismatch in matrix addition");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix &Matrix::operator-=(const Matrix &other) {
    if (!same_shape(other)) throw std::invalid_argument("shape mismatch in matrix subtraction");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Matrix &Matrix::operator*=(double s) {
    for (double &v : data_) v *= s;
    return *this;
}

Matrix operator+(Matrix a, const Matrix &b) { return a += b; }
Matrix operator-(Matrix a, const Matrix &b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix transpose(const Matrix &a) {
    Matrix t(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    }
    return t;
}

Matrix matmul(const Matrix &a, const Matrix &b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("shape mismatch in matmul: " + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " * " + std::to_string(b.rows()) +
                                    "x" + std::to_string(b.cols()));
    }
    Matrix c(a.rows(), b.cols());
    // i-k-j order keeps the inner loop contiguous in both b and c.
    for (int i = 0; i < a.rows(); ++i) {
        double *ci = c.row_ptr(i);
        for (int k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double *bk = b.row_ptr(k);
            for (int j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

double dot(const Matrix &a, const Matrix &b) {
    if (!a.same_shape(b)) throw std::invalid_argument("shape mismatch in dot");
    double s = 0.0;
    auto da = a.data();
    auto db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) s += da[i] * db[i];
    return s;
}

double frobenius_norm(const Matrix &a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

Matrix hadamard(const Matrix &a, const Matrix &b) {
    if (!a.same_shape(b)) throw std::invalid_argument("shape mismatch in hadamard");
    Matrix c = a;
    auto dc = c.data();
    auto db = b.data();
    for (std::size_t i = 0; i < dc.size(); ++i) dc[i] *= db[i];
    return c;
}

double max_abs(const Matrix &a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

} // namespace macroptim
