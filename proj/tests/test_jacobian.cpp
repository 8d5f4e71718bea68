#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tsink/jacobian.hpp"

using namespace tsink;

namespace {

struct Instance {
    Matrix x;
    AttnWeights w;
    Regularizer reg;
};

Instance random_instance(std::mt19937_64& gen, std::size_t t, std::size_t d, std::size_t dk, std::size_t dv, Regularizer reg) {
    return {oracle::random_matrix(t, d, gen), init_attn_weights(d, dk, dv, gen()), reg};
}

// ∂h_i/∂x_j by central differences, computed here from the forward pass only.
Matrix fd_block(const Instance& in, std::size_t i, std::size_t j, bool residual) {
    const double step = 1e-6;
    Matrix out(in.w.d_v(), in.x.cols());
    for (std::size_t c = 0; c < in.x.cols(); ++c) {
        Matrix up = in.x, down = in.x;
        up(j, c) += step;
        down(j, c) -= step;
        const Matrix a = attn_forward(up, in.w, in.reg, residual, false).out;
        const Matrix b = attn_forward(down, in.w, in.reg, residual, false).out;
        for (std::size_t r = 0; r < in.w.d_v(); ++r) out(r, c) = (a(i, r) - b(i, r)) / (2 * step);
    }
    return out;
}

double rel_err(const Matrix& a, const Matrix& f) { return oracle::max_abs_diff(a, f) / std::max(max_abs(f), 1e-8); }

}  // namespace

TEST_CASE("closed-form Jacobian matches central differences") {
    std::mt19937_64 gen(21);
    const Regularizer regs[] = {Regularizer::none(), Regularizer::penalty(-0.1), Regularizer::mask(), Regularizer::penalty(0.7)};
    for (int trial = 0; trial < 24; ++trial) {
        const std::size_t t = 2 + trial % 5, d = 2 + trial % 4, dk = 2 + trial % 3;
        const Instance in = random_instance(gen, t, d, dk, d, regs[trial % 4]);
        const AttnTrace tr = attn_forward(in.x, in.w, in.reg, false, false);
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < t; ++j) {
                const JacobianParts p = jac_total(tr, in.w, i, j, true);
                CHECK(rel_err(p.total_no_res, fd_block(in, i, j, false)) < 1e-6);
                CHECK(rel_err(p.total_with_res, fd_block(in, i, j, true)) < 1e-6);
            }
    }
}

TEST_CASE("library finite differences agree with the local ones") {
    std::mt19937_64 gen(22);
    const Instance in = random_instance(gen, 4, 3, 2, 3, Regularizer::none());
    const auto column = finite_diff_jacobian_column(in.x, in.w, in.reg, false, 2, 1e-6);
    for (std::size_t i = 0; i < 4; ++i) CHECK(oracle::max_abs_diff(column[i], fd_block(in, i, 2, false)) < 1e-12);
    CHECK_THROWS(finite_diff_jacobian(in.x, in.w, Regularizer::dropout(0.2, 1), false, 0, 0, 1e-6));
    CHECK_THROWS(finite_diff_jacobian(in.x, in.w, in.reg, false, 0, 0, 0.0));
}

TEST_CASE("path structure") {
    std::mt19937_64 gen(23);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t t = 2 + trial % 6;
        const Instance in = random_instance(gen, t, 5, 3, 4, Regularizer::none());
        const AttnTrace tr = attn_forward(in.x, in.w, in.reg, false, false);
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < t; ++j) {
                const Matrix q = jac_query(tr, in.w, i, j);
                if (i != j) CHECK(max_abs(q) == 0.0);
                const auto sv = oracle::singular_values(jac_key(tr, in.w, i, j));
                CHECK((sv[1] / sv[0] < 1e-10 || sv[0] < 1e-12));
                const Matrix v = jac_value(tr, in.w, i, j);
                CHECK(oracle::max_abs_diff(v, tr.alpha(i, j) * in.w.wv) == 0.0);
            }
    }
}

TEST_CASE("mean key and softmax row Jacobian") {
    std::mt19937_64 gen(24);
    const Instance in = random_instance(gen, 5, 4, 3, 4, Regularizer::none());
    const AttnTrace tr = attn_forward(in.x, in.w, in.reg, false, false);
    const Vector kbar = mean_key(tr, 1);
    for (std::size_t c = 0; c < 3; ++c) {
        double s = 0.0;
        for (std::size_t k = 0; k < 5; ++k) s += tr.alpha(1, k) * tr.k(k, c);
        CHECK(kbar[c] == doctest::Approx(s));
    }
    const Matrix j = softmax_jacobian_row(tr.alpha.row(2));
    for (std::size_t m = 0; m < 5; ++m) {
        double s = 0.0;
        for (std::size_t k = 0; k < 5; ++k) s += j(m, k);
        CHECK(std::abs(s) < 1e-15);
        CHECK(j(m, m) == doctest::Approx(tr.alpha(2, m) * (1 - tr.alpha(2, m))));
    }
}

TEST_CASE("residual form needs d_v = d_model; dropout traces are rejected") {
    std::mt19937_64 gen(25);
    const Instance in = random_instance(gen, 3, 4, 2, 3, Regularizer::none());
    const AttnTrace tr = attn_forward(in.x, in.w, in.reg, false, false);
    CHECK(jac_total(tr, in.w, 0, 1, false).total_with_res.empty());
    CHECK_THROWS(jac_total(tr, in.w, 0, 1, true));
    const AttnTrace dropped = attn_forward(in.x, in.w, Regularizer::dropout(0.5, 3), false, true);
    CHECK_THROWS(jac_total(dropped, in.w, 0, 0, false));
}

TEST_CASE("reverse mode equals the transposed Jacobian") {
    // For d_out = e_(i, r), dL/dx_j is row r of ∂out_i/∂x_j.
    std::mt19937_64 gen(26);
    for (const Regularizer& reg : {Regularizer::none(), Regularizer::mask(), Regularizer::penalty(-0.1)}) {
        for (bool residual : {false, true}) {
            const Instance in = random_instance(gen, 5, 4, 3, 4, reg);
            const AttnTrace tr = attn_forward(in.x, in.w, reg, residual, false);
            for (std::size_t i = 0; i < 5; ++i)
                for (std::size_t r = 0; r < 4; ++r) {
                    Matrix seed(5, 4);
                    seed(i, r) = 1.0;
                    const AttnGrads g = attn_backward(tr, in.w, seed);
                    for (std::size_t j = 0; j < 5; ++j) {
                        const JacobianParts p = jac_total(tr, in.w, i, j, residual);
                        const Matrix& jac = residual ? p.total_with_res : p.total_no_res;
                        for (std::size_t c = 0; c < 4; ++c) CHECK(g.dx(j, c) == doctest::Approx(jac(r, c)).epsilon(1e-12));
                    }
                }
        }
    }
}

TEST_CASE("weight gradients match finite differences") {
    std::mt19937_64 gen(27);
    const Instance in = random_instance(gen, 4, 3, 2, 3, Regularizer::penalty(-0.1));
    const Matrix upstream = oracle::random_matrix(4, 3, gen);
    auto loss = [&](const AttnWeights& w) {
        const Matrix out = attn_forward(in.x, w, in.reg, true, false).out;
        double s = 0.0;
        for (std::size_t k = 0; k < out.size(); ++k) s += out.data()[k] * upstream.data()[k];
        return s;
    };
    const AttnGrads g = attn_backward(attn_forward(in.x, in.w, in.reg, true, false), in.w, upstream);
    for (auto [mat, grad] : {std::pair{&AttnWeights::wq, &g.dwq}, {&AttnWeights::wk, &g.dwk}, {&AttnWeights::wv, &g.dwv}}) {
        for (std::size_t k = 0; k < (in.w.*mat).size(); ++k) {
            AttnWeights up = in.w, down = in.w;
            (up.*mat).data()[k] += 1e-6;
            (down.*mat).data()[k] -= 1e-6;
            const double fd = (loss(up) - loss(down)) / 2e-6;
            CHECK(grad->data()[k] == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("dropout backward treats the multipliers as constants") {
    std::mt19937_64 gen(28);
    const Instance in = random_instance(gen, 6, 3, 3, 3, Regularizer::dropout(0.5, 11));
    const AttnTrace tr = attn_forward(in.x, in.w, in.reg, false, true);
    const Matrix upstream = oracle::random_matrix(6, 3, gen);
    const AttnGrads g = attn_backward(tr, in.w, upstream);
    // A fixed seed reproduces the same multipliers.
    auto loss = [&](const Matrix& x) {
        const Matrix out = attn_forward(x, in.w, in.reg, false, true).out;
        double s = 0.0;
        for (std::size_t k = 0; k < out.size(); ++k) s += out.data()[k] * upstream.data()[k];
        return s;
    };
    for (std::size_t k = 0; k < in.x.size(); ++k) {
        Matrix up = in.x, down = in.x;
        up.data()[k] += 1e-6;
        down.data()[k] -= 1e-6;
        CHECK(g.dx.data()[k] == doctest::Approx((loss(up) - loss(down)) / 2e-6).epsilon(1e-6));
    }
}
