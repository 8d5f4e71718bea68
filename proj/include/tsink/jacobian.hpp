// Closed-form Jacobians ∂h_i/∂x_j of single-head attention, one function per
// path, next to a central-difference oracle and the reverse-mode pass.
//
// All closed forms are evaluated from a stored AttnTrace. A masked diagonal
// enters through its exactly-zero attention weight; an additive diagonal
// penalty does not change the score gradient. Traces with diagonal dropout
// applied are rejected.

#pragma once

#include <cstddef>
#include <vector>

#include "tsink/attention.hpp"
#include "tsink/linalg.hpp"

namespace tsink {

struct JacobianParts {
    std::size_t i = 0;
    std::size_t j = 0;
    Matrix value;           // α_ij · W^V
    Matrix key;             // (α_ij/√d_k) (v_j − h_i) ⊗ (W^K)ᵀ q_i
    Matrix query;           // (δ_ij/√d_k) Σ_m α_im v_m ⊗ (W^Q)ᵀ (k_m − k̄_i)
    Matrix total_no_res;    // value + key + query
    Matrix total_with_res;  // total_no_res + δ_ij I; empty when d_v ≠ d_model
};

Matrix jac_value(const AttnTrace& trace, const AttnWeights& w, std::size_t i, std::size_t j);
Matrix jac_key(const AttnTrace& trace, const AttnWeights& w, std::size_t i, std::size_t j);
Matrix jac_query(const AttnTrace& trace, const AttnWeights& w, std::size_t i, std::size_t j);

/// All paths for one (i, j). `residual` demands d_v = d_model.
JacobianParts jac_total(const AttnTrace& trace, const AttnWeights& w, std::size_t i, std::size_t j,
                        bool residual);

/// k̄_i = Σ_k α_ik k_k
Vector mean_key(const AttnTrace& trace, std::size_t i);

/// ∂α_m/∂e_k = α_m (δ_mk − α_k)
Matrix softmax_jacobian_row(std::span<const double> alpha_row);

/// Central differences of out_i (h_i, or h_i + x_i with the residual) with
/// respect to x_j. Throws for the dropout regularizer.
Matrix finite_diff_jacobian(const Matrix& x, const AttnWeights& w, const Regularizer& reg,
                            bool residual, std::size_t i, std::size_t j, double step);

/// Same differences for every i at once: element i is ∂out_i/∂x_j.
std::vector<Matrix> finite_diff_jacobian_column(const Matrix& x, const AttnWeights& w,
                                                const Regularizer& reg, bool residual,
                                                std::size_t j, double step);

inline constexpr double kFiniteDiffStep = 1e-5;

struct AttnGrads {
    Matrix dx;  // T × d_model
    Matrix dwq, dwk, dwv;
};

/// Reverse-mode pass: given dL/d(out) (T × d_v), returns dL/dx and the weight
/// gradients. Diagonal dropout multipliers stored in the trace are treated as
/// constants.
AttnGrads attn_backward(const AttnTrace& trace, const AttnWeights& w, const Matrix& d_out);

}  // namespace tsink
