#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace macroptim {

// Thrown when an algorithm fails numerically (non-convergence, undefined
// input such as msign of the zero matrix). Distinct from std::invalid_argument,
// which signals caller errors (bad shapes, non-finite input).
class NumericalError : public std::runtime_error {
  public:
    explicit NumericalError(const std::string &what) : std::runtime_error(what) {}
};

// Dense row-major real matrix. Entries are validated finite on construction
// from external data; intermediate arithmetic may overflow and is checked by
// the callers that care (the harness divergence monitor).
class Matrix {
  public:
    Matrix() = default;
    Matrix(int rows, int cols);
    Matrix(int rows, int cols, std::vector<double> data);

    static Matrix zeros(int rows, int cols) { return Matrix(rows, cols); }
    static Matrix identity(int n);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double &operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    double *row_ptr(int i) { return data_.data() + static_cast<std::size_t>(i) * cols_; }
    const double *row_ptr(int i) const { return data_.data() + static_cast<std::size_t>(i) * cols_; }

    bool all_finite() const;
    bool same_shape(const Matrix &other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    Matrix &operator+=(const Matrix &other);
    Matrix &operator-=(const Matrix &other);
    Matrix &operator*=(double s);

  private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix &b);
Matrix operator-(Matrix a, const Matrix &b);
Matrix operator*(double s, Matrix a);

Matrix transpose(const Matrix &a);
Matrix matmul(const Matrix &a, const Matrix &b);

// Frobenius inner product <a, b> = sum_ij a_ij b_ij.
double dot(const Matrix &a, const Matrix &b);
double frobenius_norm(const Matrix &a);

Matrix hadamard(const Matrix &a, const Matrix &b);

double max_abs(const Matrix &a);

} // namespace macroptim
