// Temporal softmax attention over the rows of a T × d_model sequence, the
// three diagonal regularizers, sinusoidal positional encoding and the
// multi-head wrapper.
//
// Conventions: row t of X is x_t. q_t = Wq·x_t, so Q = X·Wqᵀ (T × d_k).
// E[i][j] = q_iᵀk_j / √d_k, Alpha = softmax over each row of E, H = Alpha·V.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsink/linalg.hpp"

namespace tsink {

struct AttnWeights {
    Matrix wq;  // d_k × d_model
    Matrix wk;  // d_k × d_model
    Matrix wv;  // d_v × d_model

    std::size_t d_model() const { return wq.cols(); }
    std::size_t d_k() const { return wq.rows(); }
    std::size_t d_v() const { return wv.rows(); }

    /// Throws ShapeError unless the three matrices agree on d_model and d_k.
    void validate() const;
};

/// Uniform in [-1/√d_model, 1/√d_model], drawn wq, wk, wv in row-major order.
AttnWeights init_attn_weights(std::size_t d_model, std::size_t d_k, std::size_t d_v,
                              std::uint64_t seed);

enum class RegKind { None, DiagMask, DiagDropout, DiagPenalty };

struct Regularizer {
    RegKind kind = RegKind::None;
    double p = 0.0;       // dropout probability
    double lambda = 0.0;  // additive diagonal score penalty
    std::uint64_t seed = 0;

    static Regularizer none() { return {}; }
    static Regularizer mask() { return {RegKind::DiagMask}; }
    static Regularizer dropout(double p, std::uint64_t seed) { return {RegKind::DiagDropout, p, 0.0, seed}; }
    static Regularizer penalty(double lambda) { return {RegKind::DiagPenalty, 0.0, lambda}; }

    void validate() const;
    /// Dropout is the only regularizer whose output depends on a random draw.
    bool deterministic() const { return kind != RegKind::DiagDropout; }
};

std::string to_string(RegKind kind);
RegKind parse_reg_kind(const std::string& s);

struct AttnTrace {
    Matrix x;        // T × d_model
    Matrix q, k, v;  // T × d_k, T × d_k, T × d_v
    Matrix e;        // T × T scores after the regularizer's score edit
    Matrix softmax;  // T × T row softmax of e
    Matrix alpha;    // T × T weights used for H (softmax after diagonal dropout)
    Vector diag_keep;  // per-step diagonal multiplier: 1, 0 or 1/(1-p)
    Matrix h;        // T × d_v
    Matrix out;      // h, or h + x with the residual
    bool residual = false;

    std::size_t steps() const { return x.rows(); }
};

/// Single-head forward pass. Dropout is applied only when `train_mode` is set.
AttnTrace attn_forward(const Matrix& x, const AttnWeights& w, const Regularizer& reg,
                       bool residual, bool train_mode);

Matrix apply_diag_penalty(Matrix e, double lambda);
/// Throws EmptySupportError for T = 1.
Matrix apply_diag_mask(Matrix e);

/// Multipliers for the diagonal: 0 with probability p, else 1/(1-p) (or 0 for
/// every entry when p = 1). One uniform draw per step, in step order.
Vector diag_dropout_multipliers(std::size_t steps, double p, std::uint64_t seed);
Matrix apply_diag_dropout(Matrix alpha, double p, std::uint64_t seed);

enum class PeScheme { None, AbsoluteSinusoidal };

std::string to_string(PeScheme s);
PeScheme parse_pe_scheme(const std::string& s);

/// PE(t, 2k) = sin(t / 10000^(2k/d)), PE(t, 2k+1) = cos(t / 10000^(2k/d)).
Matrix sinusoidal_table(std::size_t steps, std::size_t d_model);
Matrix positional_encode(const Matrix& x, PeScheme scheme);

struct MultiHeadResult {
    Matrix out;     // T × d_model
    Matrix concat;  // T × (heads · d_v)
    std::vector<AttnTrace> traces;
};

/// Head h draws its dropout mask from derive_seed(reg.seed, h).
/// `wo` is d_model × (heads · d_v); out_t = wo · concat_t (+ x_t).
MultiHeadResult multihead_forward(const Matrix& x, const std::vector<AttnWeights>& heads,
                                  const Matrix& wo, const Regularizer& reg, bool residual,
                                  bool train_mode);

}  // namespace tsink
