// Analytic-versus-finite-difference suites run by `tsink gradcheck`.

#pragma once

#include <cstdint>
#include <string>

#include "tsink/attention.hpp"
#include "tsink/jacobian.hpp"
#include "tsink/model.hpp"

namespace tsink {

struct GradcheckSettings {
    std::size_t configs = 200;
    double tolerance = 1e-5;
    std::size_t model_coords = 50;
    double model_tolerance = 1e-4;
    std::size_t steps = 0;  // fixed T when nonzero, else drawn from 2..8
    std::size_t dim = 0;    // fixed d_model = d_k = d_v when nonzero, else each drawn from 2..16
};

/// One random single-head instance.
struct AttnCase {
    std::uint64_t seed = 0;
    Matrix x;
    AttnWeights w;
    Regularizer reg;

    std::string describe() const;  // "(T=.., d_model=.., d_k=.., d_v=.., reg=.., seed=..)"
};

/// Case `index` of a suite rooted at `seed`. Regularizers cycle through
/// none, penalty(-0.1) and mask.
AttnCase make_attn_case(std::uint64_t seed, std::size_t index, std::size_t fixed_steps = 0,
                        std::size_t fixed_dim = 0);

/// max over blocks (i, j) of max|analytic − fd| / max(max|fd|, 1e-8), where
/// analytic is the closed-form Jacobian without the residual.
double attn_case_error(const AttnCase& c, double step = kFiniteDiffStep);

struct SuiteReport {
    std::string name;
    double max_err = 0.0;
    double max_abs_diff = 0.0;
    double tolerance = 0.0;
    std::size_t cases = 0;
    std::string worst;  // reproduction info for the worst case
    bool pass() const { return max_err < tolerance; }
};

SuiteReport check_attention_jacobian(const GradcheckSettings& s, std::uint64_t seed);
SuiteReport check_softmax_jacobian(const GradcheckSettings& s, std::uint64_t seed);

/// A small composed model with a random batch whose target mask is partial.
struct ModelCase {
    TnSModel model;
    Batch batch;
};

ModelCase make_model_case(std::uint64_t seed);

/// Relative error at one coordinate, treating |a − f| ≤ 1e-6 as agreement (0).
double coordinate_error(double analytic, double numeric);

/// Central differences of the masked loss at `model_coords` random parameter
/// coordinates, dropout off.
SuiteReport check_model_gradients(const GradcheckSettings& s, std::uint64_t seed);

}  // namespace tsink
