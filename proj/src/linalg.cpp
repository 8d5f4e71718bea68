#include "tsink/linalg.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tsink {

namespace {

// Products smaller than this many multiply-adds stay on the calling thread.
constexpr std::size_t kParallelWork = 1u << 15;

void require(bool ok, const char* what, const Matrix& a, const Matrix& b) {
    if (!ok) {
        throw ShapeError(std::string(what) + ": " + shape_str(a) + " vs " + shape_str(b));
    }
}

}  // namespace

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ == 0 ? 0 : init.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : init) {
        if (r.size() != cols_) throw ShapeError("ragged initializer list");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(std::size_t rows, std::size_t cols, std::vector<double> data) {
    if (data.size() != rows * cols) {
        throw ShapeError("from_rows: " + std::to_string(data.size()) + " values for " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
    Matrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.data_ = std::move(data);
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix& Matrix::operator+=(const Matrix& other) {
    require(rows_ == other.rows_ && cols_ == other.cols_, "operator+=", *this, other);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    require(rows_ == other.rows_ && cols_ == other.cols_, "operator-=", *this, other);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= other.data_[k];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

namespace {

Matrix matmul_impl(const Matrix& a, const Matrix& b, bool allow_parallel) {
    require(a.cols() == b.rows(), "matmul", a, b);
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Matrix c(n, m);
    const bool par = allow_parallel && n * k * m >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
    for (std::size_t i = 0; i < n; ++i) {
        double* out = c.row(i).data();
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a(i, p);
            const double* brow = b.row(p).data();
            for (std::size_t j = 0; j < m; ++j) out[j] += aip * brow[j];
        }
    }
    return c;
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) { return matmul_impl(a, b, true); }

Matrix serial::matmul(const Matrix& a, const Matrix& b) { return matmul_impl(a, b, false); }

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.cols(), "matmul_nt", a, b);
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = dot(a.row(i), b.row(j));
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows(), "matmul_tn", a, b);
    Matrix c(a.cols(), b.cols());
    for (std::size_t p = 0; p < a.rows(); ++p) {
        const double* brow = b.row(p).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double api = a(p, i);
            if (api == 0.0) continue;
            double* out = c.row(i).data();
            for (std::size_t j = 0; j < b.cols(); ++j) out[j] += api * brow[j];
        }
    }
    return c;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) {
        throw ShapeError("matvec: " + shape_str(a) + " vs vector of " + std::to_string(x.size()));
    }
    Vector y(a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) y[r] = dot(a.row(r), x);
    return y;
}

Vector matvec_t(const Matrix& a, std::span<const double> x) {
    if (a.rows() != x.size()) {
        throw ShapeError("matvec_t: " + shape_str(a) + " vs vector of " + std::to_string(x.size()));
    }
    Vector y(a.cols(), 0.0);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double xr = x[r];
        for (std::size_t c = 0; c < a.cols(); ++c) y[c] += a(r, c) * xr;
    }
    return y;
}

Vector softmax_row(std::span<const double> s) {
    if (s.empty()) throw EmptySupportError("softmax_row: empty input");
    double mx = kNegLarge;
    for (double v : s)
        if (v > kNegLarge && v > mx) mx = v;
    bool any = false;
    for (double v : s) any = any || v > kNegLarge;
    if (!any) throw EmptySupportError("softmax_row: every entry is masked");

    Vector out(s.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        out[k] = s[k] <= kNegLarge ? 0.0 : std::exp(s[k] - mx);
        sum += out[k];
    }
    for (double& v : out) v /= sum;
    return out;
}

Matrix softmax_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const Vector row = softmax_row(m.row(r));
        std::copy(row.begin(), row.end(), out.row(r).begin());
    }
    return out;
}

Matrix outer(std::span<const double> a, std::span<const double> b) {
    Matrix m(a.size(), b.size());
    for (std::size_t r = 0; r < a.size(); ++r)
        for (std::size_t c = 0; c < b.size(); ++c) m(r, c) = a[r] * b[c];
    return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double vec_norm2(std::span<const double> v) {
    // Sum of squares after dividing by the largest magnitude.
    double scale = 0.0;
    for (double x : v) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) return 0.0;
    double s = 0.0;
    for (double x : v) {
        const double y = x / scale;
        s += y * y;
    }
    return scale * std::sqrt(s);
}

double frobenius_norm(const Matrix& m) { return vec_norm2(m.data()); }

namespace {

double power_iterate(const Matrix& m, Vector v) {
    constexpr int kMaxIter = 20000;
    constexpr double kRelTol = 1e-14;

    const double n0 = vec_norm2(v);
    for (double& x : v) x /= n0;

    double lambda = 0.0;  // Rayleigh quotient of MᵀM
    for (int it = 0; it < kMaxIter; ++it) {
        const Vector mv = matvec(m, v);
        Vector w = matvec_t(m, mv);
        const double next = dot(v, w);
        const double wn = vec_norm2(w);
        if (wn == 0.0) return 0.0;
        for (double& x : w) x /= wn;
        v = std::move(w);
        const bool done = std::abs(next - lambda) <= kRelTol * std::abs(next);
        lambda = next;
        if (done) break;
    }
    // One last Rayleigh quotient on the converged direction.
    const Vector mv = matvec(m, v);
    return vec_norm2(mv);
}

}  // namespace

double spectral_norm(const Matrix& m) {
    if (m.empty() || max_abs(m) == 0.0) return 0.0;
    Vector ones(m.cols(), 1.0);
    Vector alt(m.cols());
    for (std::size_t k = 0; k < alt.size(); ++k) alt[k] = (k % 2 == 0 ? 1.0 : -1.0) * (1.0 + 0.5 * k);
    return std::max(power_iterate(m, std::move(ones)), power_iterate(m, std::move(alt)));
}

double matrix_norm(const Matrix& m, NormKind kind) {
    return kind == NormKind::Spectral ? spectral_norm(m) : frobenius_norm(m);
}

double identity_norm(std::size_t n, NormKind kind) {
    return kind == NormKind::Spectral ? 1.0 : std::sqrt(static_cast<double>(n));
}

double max_abs(const Matrix& m) {
    double mx = 0.0;
    for (double v : m.data()) mx = std::max(mx, std::abs(v));
    return mx;
}

bool all_finite(const Matrix& m) {
    return std::all_of(m.data().begin(), m.data().end(), [](double v) { return std::isfinite(v); });
}

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

bool in_parallel_region() {
#ifdef _OPENMP
    return omp_in_parallel() != 0;
#else
    return false;
#endif
}

}  // namespace tsink
