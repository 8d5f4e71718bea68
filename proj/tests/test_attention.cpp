#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tsink/attention.hpp"

using namespace tsink;

namespace {

// Attention written out entry by entry.
Matrix naive_attention(const Matrix& x, const AttnWeights& w, double diag_shift, bool mask) {
    const std::size_t t = x.rows(), dk = w.wq.rows(), dv = w.wv.rows();
    const Matrix q = oracle::triple_loop(x, oracle::transpose(w.wq));
    const Matrix k = oracle::triple_loop(x, oracle::transpose(w.wk));
    const Matrix v = oracle::triple_loop(x, oracle::transpose(w.wv));
    Matrix h(t, dv);
    for (std::size_t i = 0; i < t; ++i) {
        std::vector<double> s, idx;
        for (std::size_t j = 0; j < t; ++j) {
            if (mask && i == j) continue;
            double e = 0.0;
            for (std::size_t c = 0; c < dk; ++c) e += q(i, c) * k(j, c);
            e /= std::sqrt(static_cast<double>(dk));
            if (i == j) e += diag_shift;
            s.push_back(e);
            idx.push_back(static_cast<double>(j));
        }
        const auto a = oracle::softmax(s);
        for (std::size_t m = 0; m < a.size(); ++m)
            for (std::size_t c = 0; c < dv; ++c) h(i, c) += a[m] * v(static_cast<std::size_t>(idx[m]), c);
    }
    return h;
}

}  // namespace

TEST_CASE("forward pass matches the entry-wise definition") {
    std::mt19937_64 gen(1);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t t = 2 + trial % 7, d = 2 + trial % 5, dk = 1 + trial % 4;
        const Matrix x = oracle::random_matrix(t, d, gen);
        const AttnWeights w = init_attn_weights(d, dk, d, 100 + trial);
        CHECK(oracle::max_abs_diff(attn_forward(x, w, Regularizer::none(), false, false).h,
                                   naive_attention(x, w, 0.0, false)) < 1e-13);
        CHECK(oracle::max_abs_diff(attn_forward(x, w, Regularizer::penalty(-0.1), false, false).h,
                                   naive_attention(x, w, -0.1, false)) < 1e-13);
        CHECK(oracle::max_abs_diff(attn_forward(x, w, Regularizer::mask(), false, false).h,
                                   naive_attention(x, w, 0.0, true)) < 1e-13);
        const AttnTrace res = attn_forward(x, w, Regularizer::none(), true, false);
        CHECK(oracle::max_abs_diff(res.out, res.h + x) == 0.0);
    }
}

TEST_CASE("attention rows are distributions") {
    std::mt19937_64 gen(2);
    const Matrix x = oracle::random_matrix(6, 4, gen);
    const AttnTrace tr = attn_forward(x, init_attn_weights(4, 3, 2, 9), Regularizer::none(), false, false);
    for (std::size_t i = 0; i < 6; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
            CHECK(tr.alpha(i, j) > 0.0);
            s += tr.alpha(i, j);
        }
        CHECK(std::abs(s - 1.0) < 1e-14);
    }
}

TEST_CASE("T = 1 without a regularizer is the identity mixing") {
    const Matrix x = Matrix::from_rows(1, 2, {0.3, -0.7});
    const AttnWeights w = init_attn_weights(2, 2, 2, 4);
    const AttnTrace tr = attn_forward(x, w, Regularizer::none(), false, false);
    CHECK(tr.alpha(0, 0) == 1.0);
    CHECK(oracle::max_abs_diff(tr.h, tr.v) == 0.0);
}

TEST_CASE("diagonal mask zeroes the diagonal exactly") {
    std::mt19937_64 gen(4);
    const Matrix x = oracle::random_matrix(5, 3, gen);
    const AttnTrace tr = attn_forward(x, init_attn_weights(3, 3, 3, 2), Regularizer::mask(), false, false);
    for (std::size_t i = 0; i < 5; ++i) CHECK(tr.alpha(i, i) == 0.0);
    CHECK_THROWS_AS(attn_forward(Matrix(1, 3), init_attn_weights(3, 3, 3, 2), Regularizer::mask(), false, false),
                    EmptySupportError);
}

TEST_CASE("a negative penalty lowers every diagonal weight") {
    std::mt19937_64 gen(6);
    for (int trial = 0; trial < 30; ++trial) {
        const Matrix x = oracle::random_matrix(2 + trial % 6, 4, gen);
        const AttnWeights w = init_attn_weights(4, 2, 4, trial);
        const AttnTrace a = attn_forward(x, w, Regularizer::none(), false, false);
        const AttnTrace b = attn_forward(x, w, Regularizer::penalty(-0.1), false, false);
        for (std::size_t i = 0; i < x.rows(); ++i) CHECK(b.alpha(i, i) < a.alpha(i, i));
    }
    // Zero penalty leaves everything unchanged.
    const Matrix x = oracle::random_matrix(4, 4, gen);
    const AttnWeights w = init_attn_weights(4, 2, 4, 1);
    CHECK(attn_forward(x, w, Regularizer::penalty(0.0), false, false).alpha ==
          attn_forward(x, w, Regularizer::none(), false, false).alpha);
}

TEST_CASE("diagonal dropout") {
    const Vector all = diag_dropout_multipliers(8, 1.0, 3);
    for (double m : all) CHECK(m == 0.0);
    const Vector none = diag_dropout_multipliers(8, 0.0, 3);
    for (double m : none) CHECK(m == 1.0);
    const Vector some = diag_dropout_multipliers(1000, 0.2, 5);
    for (double m : some) CHECK((m == 0.0 || m == doctest::Approx(1.25)));
    CHECK(diag_dropout_multipliers(16, 0.2, 5) == diag_dropout_multipliers(16, 0.2, 5));

    std::mt19937_64 gen(8);
    const Matrix x = oracle::random_matrix(6, 4, gen);
    const AttnWeights w = init_attn_weights(4, 4, 4, 1);
    const Regularizer reg = Regularizer::dropout(0.5, 77);
    const AttnTrace eval = attn_forward(x, w, reg, false, false);
    CHECK(eval.alpha == eval.softmax);
    const AttnTrace train = attn_forward(x, w, reg, false, true);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(train.alpha(i, i) == doctest::Approx(train.softmax(i, i) * train.diag_keep[i]));
        for (std::size_t j = 0; j < 6; ++j)
            if (j != i) CHECK(train.alpha(i, j) == train.softmax(i, j));
    }
    CHECK_THROWS_AS(Regularizer::dropout(1.5, 0).validate(), std::invalid_argument);
}

TEST_CASE("sinusoidal table") {
    const Matrix pe = sinusoidal_table(4, 6);
    CHECK(pe(0, 0) == 0.0);
    CHECK(pe(0, 1) == 1.0);
    CHECK(pe(1, 0) == doctest::Approx(std::sin(1.0)));
    CHECK(pe(3, 2) == doctest::Approx(std::sin(3.0 / std::pow(10000.0, 2.0 / 6.0))));
    CHECK(pe(3, 5) == doctest::Approx(std::cos(3.0 / std::pow(10000.0, 4.0 / 6.0))));
    CHECK_THROWS(sinusoidal_table(3, 5));
    const Matrix x(4, 6);
    CHECK(positional_encode(x, PeScheme::AbsoluteSinusoidal) == pe);
    CHECK(positional_encode(x, PeScheme::None) == x);
}

TEST_CASE("names round-trip") {
    for (RegKind k : {RegKind::None, RegKind::DiagMask, RegKind::DiagDropout, RegKind::DiagPenalty})
        CHECK(parse_reg_kind(to_string(k)) == k);
    CHECK(parse_pe_scheme("sinusoidal") == PeScheme::AbsoluteSinusoidal);
    CHECK_THROWS(parse_reg_kind("diagonal"));
}

TEST_CASE("shape errors") {
    const AttnWeights w = init_attn_weights(4, 2, 3, 0);
    CHECK_THROWS_AS(attn_forward(Matrix(3, 5), w, Regularizer::none(), false, false), ShapeError);
    CHECK_THROWS_AS(attn_forward(Matrix(3, 4), w, Regularizer::none(), true, false), ShapeError);
}

TEST_CASE("multi-head output is the projected concatenation") {
    std::mt19937_64 gen(10);
    const Matrix x = oracle::random_matrix(5, 4, gen);
    std::vector<AttnWeights> heads{init_attn_weights(4, 2, 2, 1), init_attn_weights(4, 2, 2, 2)};
    const Matrix wo = oracle::random_matrix(4, 4, gen);
    const MultiHeadResult r = multihead_forward(x, heads, wo, Regularizer::none(), true, false);
    CHECK(r.concat.cols() == 4);
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t c = 0; c < 2; ++c) {
            CHECK(r.concat(t, c) == r.traces[0].h(t, c));
            CHECK(r.concat(t, 2 + c) == r.traces[1].h(t, c));
        }
    const Matrix expect = oracle::triple_loop(r.concat, oracle::transpose(wo)) + x;
    CHECK(oracle::max_abs_diff(r.out, expect) < 1e-14);
}
