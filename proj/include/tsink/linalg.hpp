// Small dense linear algebra on row-major matrices.
//
// Everything here is 64-bit floating point. Matrices are value types; none of
// the free functions keep state, so they are safe to call concurrently.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsink {

/// Raised when operand shapes do not line up.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a softmax row has no finite support (every entry masked).
class EmptySupportError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Stand-in for -inf in score matrices. exp(kNegLarge - max) underflows to
/// exactly 0 for any finite max, so masked entries get zero weight.
inline constexpr double kNegLarge = -1e30;

using Vector = std::vector<double>;

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::initializer_list<std::initializer_list<double>> init);

    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    Matrix transposed() const;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s);

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

/// A·B. Large products are split over OpenMP threads by output row; each
/// output entry is accumulated in the same order either way.
Matrix matmul(const Matrix& a, const Matrix& b);

namespace serial {
/// Single-threaded reference for tsink::matmul; bit-identical.
Matrix matmul(const Matrix& a, const Matrix& b);
}  // namespace serial

/// A·Bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// Aᵀ·B without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Vector matvec(const Matrix& a, std::span<const double> x);
/// Aᵀ·x
Vector matvec_t(const Matrix& a, std::span<const double> x);

/// Numerically stable softmax. Entries equal to kNegLarge receive weight 0.
Vector softmax_row(std::span<const double> s);
/// Row-wise softmax of every row of `m`.
Matrix softmax_rows(const Matrix& m);

Matrix outer(std::span<const double> a, std::span<const double> b);

double vec_norm2(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);
double frobenius_norm(const Matrix& m);

/// Largest singular value by power iteration on MᵀM.
///
/// Starts from the normalized all-ones vector and, independently, from a
/// fixed alternating-sign vector; the larger converged estimate wins. Both
/// estimates are lower bounds on the true value, so taking the max never
/// overshoots. Returns 0 for the zero matrix.
double spectral_norm(const Matrix& m);

enum class NormKind { Spectral, Frobenius };

double matrix_norm(const Matrix& m, NormKind kind);
/// Norm of the n×n identity under `kind`: 1 for spectral, √n for Frobenius.
double identity_norm(std::size_t n, NormKind kind);

double max_abs(const Matrix& m);
bool all_finite(const Matrix& m);

std::string shape_str(const Matrix& m);

/// True inside an active OpenMP parallel region (always false without OpenMP).
bool in_parallel_region();

}  // namespace tsink
