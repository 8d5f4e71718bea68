// Expected-norm sensitivity bounds for one residual attention layer, built
// from the instance constants C_K and C_Q, and the sweep over sequence length
// that checks them.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tsink/attention.hpp"
#include "tsink/linalg.hpp"

namespace tsink {

/// max_j ‖v_j − h_i‖ · ‖(W^K)ᵀ q_i‖
double constant_ck(const AttnTrace& trace, const AttnWeights& w, std::size_t i);
/// max_m ‖v_m − h_i‖ · ‖(W^Q)ᵀ (k_m − k̄_i)‖, keys centered on k̄_i.
double constant_cq(const AttnTrace& trace, const AttnWeights& w, std::size_t i);

struct ExpectedNorms {
    double e_value = 0.0;  // (1/T) Σ_j ‖α_ij W^V‖
    double e_key = 0.0;    // (1/T) Σ_j (α_ij/√d_k) ‖v_j − h_i‖ ‖(W^K)ᵀ q_i‖
    double e_query = 0.0;  // (1/T) ‖J^query_ii‖
};

ExpectedNorms expected_norms(const AttnTrace& trace, const AttnWeights& w, std::size_t i,
                             NormKind norm = NormKind::Spectral);

struct BoundReport {
    std::size_t steps = 0;  // T
    std::size_t i = 0;
    NormKind norm = NormKind::Spectral;
    double c_k = 0.0;
    double c_q = 0.0;
    double wv_norm = 0.0;
    double e_value_norm = 0.0;
    double e_key = 0.0;
    double e_query = 0.0;
    double key_bound = 0.0;    // C_K / (T √d_k)
    double query_bound = 0.0;  // C_Q / (T √d_k)
    double offdiag_bound = 0.0;  // (‖W^V‖ + C_K/√d_k) / T
    double diag_bound = 0.0;     // ‖I‖ + E[α_ii] (‖W^V‖ + C_K/√d_k + C_Q/√d_k)
    double measured_offdiag_mean = 0.0;  // mean over j ≠ i of ‖J_ij‖ (residual form)
    double measured_uniform_mean = 0.0;  // (1/T) Σ_j ‖J_ij‖ over every j, no residual
    double measured_diag = 0.0;          // ‖I + J_ii‖
    double mean_diag_alpha = 0.0;
    bool offdiag_defined = true;  // false for T = 1; off-diagonal fields are NaN

    /// offdiag_bound · T/(T−1): the bound on the mean over the T−1 off-diagonal keys.
    double offdiag_bound_corrected() const;
};

/// Needs d_v = d_model.
BoundReport sensitivity_bounds(const AttnTrace& trace, const AttnWeights& w, std::size_t i,
                               NormKind norm = NormKind::Spectral);

struct DiagMass {
    double mean_diag = 0.0;
    double mean_offdiag = 0.0;
    double ratio = 0.0;  // NaN when mean_offdiag < 1e-15
    bool ratio_defined() const;
};

DiagMass diag_mass(const Matrix& alpha);

struct SweepConfig {
    std::vector<std::size_t> steps{2, 4, 8, 16, 32, 64};
    std::size_t samples = 100;
    std::size_t d_model = 8;
    std::size_t d_k = 8;
    std::uint64_t seed = 0;
    NormKind norm = NormKind::Spectral;
    Regularizer reg;

    void validate() const;
};

struct BoundViolation {
    std::size_t steps = 0;
    std::size_t sample = 0;
    std::size_t i = 0;
    std::string check;
    double lhs = 0.0;
    double rhs = 0.0;
    std::string seed_path;  // "<seed>/T=<T>/sample=<s>"
};

struct SweepResult {
    std::vector<BoundReport> aggregates;  // one per T: means over samples and query steps
    std::vector<BoundViolation> violations;
};

/// Sample s at length T uses weights from (seed, s) and inputs X ~ U[-1, 1]
/// from (seed, T, s), so every T sees the same weight draws. Samples run on
/// OpenMP threads and are reduced in sample order.
SweepResult sweep_T(const SweepConfig& cfg);

/// Tolerances applied by the sweep's checks.
inline constexpr double kEqualityTol = 1e-12;
inline constexpr double kPathBoundTol = 1e-12;
inline constexpr double kOffdiagTol = 1e-9;

/// Every bound check for one instance and query step, appended to `out`.
void check_instance(const BoundReport& r, const ExpectedNorms& en, std::size_t sample,
                    const std::string& seed_path, std::vector<BoundViolation>& out);

void write_bounds_csv(std::ostream& os, const std::vector<BoundReport>& reports);
std::vector<std::string> bounds_csv_header();

namespace serial {
/// Single-threaded reference for tsink::sweep_T; results are bit-identical.
SweepResult sweep_T(const SweepConfig& cfg);
}  // namespace serial

}  // namespace tsink
