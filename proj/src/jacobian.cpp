#include "tsink/jacobian.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tsink {

namespace {

void check_indices(const AttnTrace& trace, std::size_t i, std::size_t j) {
    const std::size_t t = trace.steps();
    if (i >= t || j >= t) {
        throw std::out_of_range("jacobian index (" + std::to_string(i) + ", " + std::to_string(j) +
                                ") outside T = " + std::to_string(t));
    }
}

void check_no_dropout(const AttnTrace& trace) {
    for (double m : trace.diag_keep) {
        if (m != 1.0) throw std::invalid_argument("analytic Jacobians are undefined for dropout traces");
    }
}

double inv_sqrt_dk(const AttnWeights& w) { return 1.0 / std::sqrt(static_cast<double>(w.d_k())); }

}  // namespace

Vector mean_key(const AttnTrace& trace, std::size_t i) {
    Vector kbar(trace.k.cols(), 0.0);
    for (std::size_t m = 0; m < trace.steps(); ++m) {
        const double a = trace.softmax(i, m);
        for (std::size_t c = 0; c < kbar.size(); ++c) kbar[c] += a * trace.k(m, c);
    }
    return kbar;
}

Matrix jac_value(const AttnTrace& trace, const AttnWeights& w, std::size_t i, std::size_t j) {
    check_indices(trace, i, j);
    check_no_dropout(trace);
    return trace.softmax(i, j) * w.wv;
}

Matrix jac_key(const AttnTrace& trace, const AttnWeights& w, std::size_t i, std::size_t j) {
    check_indices(trace, i, j);
    check_no_dropout(trace);
    const std::size_t dv = trace.v.cols();
    Vector left(dv);
    for (std::size_t c = 0; c < dv; ++c) left[c] = trace.v(j, c) - trace.h(i, c);
    const Vector right = matvec_t(w.wk, trace.q.row(i));
    Matrix out = outer(left, right);
    out *= trace.softmax(i, j) * inv_sqrt_dk(w);
    return out;
}

Matrix jac_query(const AttnTrace& trace, const AttnWeights& w, std::size_t i, std::size_t j) {
    check_indices(trace, i, j);
    check_no_dropout(trace);
    Matrix out(trace.v.cols(), w.d_model());
    if (i != j) return out;

    const Vector kbar = mean_key(trace, i);
    Vector centered(kbar.size());
    for (std::size_t m = 0; m < trace.steps(); ++m) {
        const double a = trace.softmax(i, m);
        if (a == 0.0) continue;
        for (std::size_t c = 0; c < kbar.size(); ++c) centered[c] = trace.k(m, c) - kbar[c];
        const Vector right = matvec_t(w.wq, centered);
        const auto vm = trace.v.row(m);
        for (std::size_t r = 0; r < out.rows(); ++r)
            for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += a * vm[r] * right[c];
    }
    out *= inv_sqrt_dk(w);
    return out;
}

JacobianParts jac_total(const AttnTrace& trace, const AttnWeights& w, std::size_t i, std::size_t j,
                        bool residual) {
    if (residual && w.d_v() != w.d_model()) {
        throw ShapeError("jac_total: residual needs d_v = d_model");
    }
    JacobianParts p;
    p.i = i;
    p.j = j;
    p.value = jac_value(trace, w, i, j);
    p.key = jac_key(trace, w, i, j);
    p.query = jac_query(trace, w, i, j);
    p.total_no_res = p.value + p.key + p.query;
    if (w.d_v() == w.d_model()) {
        p.total_with_res = p.total_no_res;
        if (i == j)
            for (std::size_t d = 0; d < w.d_model(); ++d) p.total_with_res(d, d) += 1.0;
    }
    return p;
}

Matrix softmax_jacobian_row(std::span<const double> alpha_row) {
    const std::size_t t = alpha_row.size();
    Matrix j(t, t);
    for (std::size_t m = 0; m < t; ++m)
        for (std::size_t k = 0; k < t; ++k) j(m, k) = alpha_row[m] * ((m == k ? 1.0 : 0.0) - alpha_row[k]);
    return j;
}

std::vector<Matrix> finite_diff_jacobian_column(const Matrix& x, const AttnWeights& w,
                                                const Regularizer& reg, bool residual,
                                                std::size_t j, double step) {
    if (!reg.deterministic()) {
        throw std::invalid_argument("finite differences need a deterministic regularizer (not dropout)");
    }
    if (!(step > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
    if (j >= x.rows()) throw std::out_of_range("finite_diff_jacobian: j outside sequence");

    const std::size_t t = x.rows();
    const std::size_t d_out = w.d_v();
    std::vector<Matrix> cols(t, Matrix(d_out, x.cols()));
    Matrix xp = x;
    for (std::size_t c = 0; c < x.cols(); ++c) {
        const double orig = x(j, c);
        xp(j, c) = orig + step;
        const Matrix up = attn_forward(xp, w, reg, residual, false).out;
        xp(j, c) = orig - step;
        const Matrix down = attn_forward(xp, w, reg, residual, false).out;
        xp(j, c) = orig;
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t r = 0; r < d_out; ++r) cols[i](r, c) = (up(i, r) - down(i, r)) / (2.0 * step);
    }
    return cols;
}

Matrix finite_diff_jacobian(const Matrix& x, const AttnWeights& w, const Regularizer& reg,
                            bool residual, std::size_t i, std::size_t j, double step) {
    if (i >= x.rows()) throw std::out_of_range("finite_diff_jacobian: i outside sequence");
    return finite_diff_jacobian_column(x, w, reg, residual, j, step)[i];
}

AttnGrads attn_backward(const AttnTrace& trace, const AttnWeights& w, const Matrix& d_out) {
    const std::size_t t = trace.steps();
    if (d_out.rows() != t || d_out.cols() != trace.v.cols()) {
        throw ShapeError("attn_backward: upstream gradient " + shape_str(d_out) + " vs output " +
                         shape_str(trace.out));
    }
    const double scale = inv_sqrt_dk(w);

    const Matrix d_alpha = matmul_nt(d_out, trace.v);  // T × T
    const Matrix d_v = matmul_tn(trace.alpha, d_out);  // T × d_v

    // Through the dropout multipliers, then the row softmax.
    Matrix d_e(t, t);
    for (std::size_t i = 0; i < t; ++i) {
        double inner = 0.0;
        for (std::size_t k = 0; k < t; ++k) {
            const double dp = k == i ? d_alpha(i, k) * trace.diag_keep[i] : d_alpha(i, k);
            inner += trace.softmax(i, k) * dp;
        }
        for (std::size_t k = 0; k < t; ++k) {
            const double dp = k == i ? d_alpha(i, k) * trace.diag_keep[i] : d_alpha(i, k);
            d_e(i, k) = trace.softmax(i, k) * (dp - inner);
        }
    }
    d_e *= scale;

    const Matrix d_q = matmul(d_e, trace.k);     // T × d_k
    const Matrix d_k = matmul_tn(d_e, trace.q);  // T × d_k

    AttnGrads g;
    g.dwq = matmul_tn(d_q, trace.x);
    g.dwk = matmul_tn(d_k, trace.x);
    g.dwv = matmul_tn(d_v, trace.x);
    g.dx = matmul(d_q, w.wq);
    g.dx += matmul(d_k, w.wk);
    g.dx += matmul(d_v, w.wv);
    if (trace.residual) g.dx += d_out;
    return g;
}

}  // namespace tsink
