#include "tsink/attention.hpp"

#include <cmath>

#include "tsink/rng.hpp"

namespace tsink {

void AttnWeights::validate() const {
    if (wk.rows() != wq.rows() || wk.cols() != wq.cols() || wv.cols() != wq.cols()) {
        throw ShapeError("AttnWeights: wq " + shape_str(wq) + ", wk " + shape_str(wk) + ", wv " +
                         shape_str(wv));
    }
    if (wq.empty() || wv.empty()) throw ShapeError("AttnWeights: empty projection");
}

AttnWeights init_attn_weights(std::size_t d_model, std::size_t d_k, std::size_t d_v,
                              std::uint64_t seed) {
    SplitMix64 rng(seed);
    const double a = 1.0 / std::sqrt(static_cast<double>(d_model));
    auto fill = [&](std::size_t r, std::size_t c) {
        Matrix m(r, c);
        for (double& v : m.data()) v = rng.uniform(-a, a);
        return m;
    };
    AttnWeights w;
    w.wq = fill(d_k, d_model);
    w.wk = fill(d_k, d_model);
    w.wv = fill(d_v, d_model);
    return w;
}

void Regularizer::validate() const {
    if (kind == RegKind::DiagDropout && !(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument("dropout probability must lie in [0, 1], got " + std::to_string(p));
    }
    if (kind == RegKind::DiagPenalty && !std::isfinite(lambda)) {
        throw std::invalid_argument("diagonal penalty must be finite");
    }
}

std::string to_string(RegKind kind) {
    switch (kind) {
        case RegKind::None: return "none";
        case RegKind::DiagMask: return "mask";
        case RegKind::DiagDropout: return "dropout";
        case RegKind::DiagPenalty: return "penalty";
    }
    return "none";
}

RegKind parse_reg_kind(const std::string& s) {
    if (s == "none") return RegKind::None;
    if (s == "mask") return RegKind::DiagMask;
    if (s == "dropout") return RegKind::DiagDropout;
    if (s == "penalty") return RegKind::DiagPenalty;
    throw std::invalid_argument("unknown regularizer '" + s + "'");
}

Matrix apply_diag_penalty(Matrix e, double lambda) {
    if (e.rows() != e.cols()) throw ShapeError("apply_diag_penalty: non-square " + shape_str(e));
    for (std::size_t i = 0; i < e.rows(); ++i) e(i, i) += lambda;
    return e;
}

Matrix apply_diag_mask(Matrix e) {
    if (e.rows() != e.cols()) throw ShapeError("apply_diag_mask: non-square " + shape_str(e));
    if (e.rows() < 2) throw EmptySupportError("apply_diag_mask: T = 1 leaves no unmasked key");
    for (std::size_t i = 0; i < e.rows(); ++i) e(i, i) = kNegLarge;
    return e;
}

Vector diag_dropout_multipliers(std::size_t steps, double p, std::uint64_t seed) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("dropout probability outside [0, 1]");
    SplitMix64 rng(seed);
    const double keep_scale = p < 1.0 ? 1.0 / (1.0 - p) : 0.0;
    Vector mult(steps);
    for (double& m : mult) m = rng.uniform01() < p ? 0.0 : keep_scale;
    return mult;
}

Matrix apply_diag_dropout(Matrix alpha, double p, std::uint64_t seed) {
    if (alpha.rows() != alpha.cols()) throw ShapeError("apply_diag_dropout: non-square " + shape_str(alpha));
    const Vector mult = diag_dropout_multipliers(alpha.rows(), p, seed);
    for (std::size_t i = 0; i < alpha.rows(); ++i) alpha(i, i) *= mult[i];
    return alpha;
}

AttnTrace attn_forward(const Matrix& x, const AttnWeights& w, const Regularizer& reg,
                       bool residual, bool train_mode) {
    w.validate();
    reg.validate();
    if (x.rows() == 0) throw ShapeError("attn_forward: empty sequence");
    if (x.cols() != w.d_model()) {
        throw ShapeError("attn_forward: input " + shape_str(x) + " but d_model = " +
                         std::to_string(w.d_model()));
    }
    if (residual && w.d_v() != w.d_model()) {
        throw ShapeError("attn_forward: residual needs d_v = d_model (" + std::to_string(w.d_v()) +
                         " vs " + std::to_string(w.d_model()) + ")");
    }

    AttnTrace t;
    t.x = x;
    t.residual = residual;
    t.q = matmul_nt(x, w.wq);
    t.k = matmul_nt(x, w.wk);
    t.v = matmul_nt(x, w.wv);
    t.e = matmul_nt(t.q, t.k);
    t.e *= 1.0 / std::sqrt(static_cast<double>(w.d_k()));

    if (reg.kind == RegKind::DiagMask) t.e = apply_diag_mask(std::move(t.e));
    if (reg.kind == RegKind::DiagPenalty) t.e = apply_diag_penalty(std::move(t.e), reg.lambda);

    t.softmax = softmax_rows(t.e);
    t.alpha = t.softmax;
    t.diag_keep.assign(x.rows(), 1.0);
    if (reg.kind == RegKind::DiagDropout && train_mode) {
        t.diag_keep = diag_dropout_multipliers(x.rows(), reg.p, reg.seed);
        for (std::size_t i = 0; i < x.rows(); ++i) t.alpha(i, i) *= t.diag_keep[i];
    }

    t.h = matmul(t.alpha, t.v);
    t.out = residual ? t.h + x : t.h;
    return t;
}

std::string to_string(PeScheme s) { return s == PeScheme::None ? "none" : "sinusoidal"; }

PeScheme parse_pe_scheme(const std::string& s) {
    if (s == "none") return PeScheme::None;
    if (s == "sinusoidal") return PeScheme::AbsoluteSinusoidal;
    throw std::invalid_argument("unknown positional encoding '" + s + "'");
}

Matrix sinusoidal_table(std::size_t steps, std::size_t d_model) {
    if (d_model % 2 != 0) {
        throw ShapeError("sinusoidal positional encoding needs even d_model, got " + std::to_string(d_model));
    }
    Matrix pe(steps, d_model);
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t k = 0; k < d_model / 2; ++k) {
            const double freq = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(d_model));
            const double angle = static_cast<double>(t) * freq;
            pe(t, 2 * k) = std::sin(angle);
            pe(t, 2 * k + 1) = std::cos(angle);
        }
    }
    return pe;
}

Matrix positional_encode(const Matrix& x, PeScheme scheme) {
    if (scheme == PeScheme::None) return x;
    return x + sinusoidal_table(x.rows(), x.cols());
}

MultiHeadResult multihead_forward(const Matrix& x, const std::vector<AttnWeights>& heads,
                                  const Matrix& wo, const Regularizer& reg, bool residual,
                                  bool train_mode) {
    if (heads.empty()) throw ShapeError("multihead_forward: no heads");
    std::size_t width = 0;
    for (const auto& h : heads) {
        if (h.d_model() != heads.front().d_model()) throw ShapeError("multihead_forward: heads disagree on d_model");
        width += h.d_v();
    }
    const std::size_t d_model = heads.front().d_model();
    if (wo.rows() != d_model || wo.cols() != width) {
        throw ShapeError("multihead_forward: wo is " + shape_str(wo) + ", expected " +
                         std::to_string(d_model) + "x" + std::to_string(width));
    }

    MultiHeadResult r;
    r.concat = Matrix(x.rows(), width);
    r.traces.reserve(heads.size());
    std::size_t offset = 0;
    for (std::size_t h = 0; h < heads.size(); ++h) {
        Regularizer head_reg = reg;
        head_reg.seed = derive_seed(reg.seed, h);
        AttnTrace tr = attn_forward(x, heads[h], head_reg, false, train_mode);
        for (std::size_t t = 0; t < x.rows(); ++t)
            for (std::size_t c = 0; c < tr.h.cols(); ++c) r.concat(t, offset + c) = tr.h(t, c);
        offset += tr.h.cols();
        r.traces.push_back(std::move(tr));
    }
    r.out = matmul_nt(r.concat, wo);
    if (residual) r.out += x;
    return r;
}

}  // namespace tsink
