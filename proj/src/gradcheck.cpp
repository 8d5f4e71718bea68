#include "tsink/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tsink/format.hpp"
#include "tsink/jacobian.hpp"
#include "tsink/rng.hpp"

namespace tsink {

namespace {

double block_error(const Matrix& analytic, const Matrix& numeric) {
    double diff = 0.0;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        diff = std::max(diff, std::abs(analytic.data()[k] - numeric.data()[k]));
    }
    return diff / std::max(max_abs(numeric), 1e-8);
}

}  // namespace

std::string AttnCase::describe() const {
    std::ostringstream os;
    os << "(T=" << x.rows() << ", d_model=" << w.d_model() << ", d_k=" << w.d_k() << ", d_v=" << w.d_v()
       << ", reg=" << to_string(reg.kind) << ", seed=" << seed << ")";
    return os.str();
}

AttnCase make_attn_case(std::uint64_t seed, std::size_t index, std::size_t fixed_steps, std::size_t fixed_dim) {
    AttnCase c;
    c.seed = derive_seed(seed, index);
    SplitMix64 rng(c.seed);
    const std::size_t t = fixed_steps ? fixed_steps : 2 + rng.below(7);
    const std::size_t dm = fixed_dim ? fixed_dim : 2 + rng.below(15);
    const std::size_t dk = fixed_dim ? fixed_dim : 2 + rng.below(15);
    const std::size_t dv = fixed_dim ? fixed_dim : 2 + rng.below(15);
    switch (index % 3) {
        case 0: c.reg = Regularizer::none(); break;
        case 1: c.reg = Regularizer::penalty(-0.1); break;
        default: c.reg = Regularizer::mask(); break;
    }
    c.x = Matrix(t, dm);
    for (double& v : c.x.data()) v = rng.uniform(-1.0, 1.0);
    c.w = init_attn_weights(dm, dk, dv, rng.next());
    return c;
}

double attn_case_error(const AttnCase& c, double step) {
    const AttnTrace tr = attn_forward(c.x, c.w, c.reg, false, false);
    double worst = 0.0;
    for (std::size_t j = 0; j < c.x.rows(); ++j) {
        const auto column = finite_diff_jacobian_column(c.x, c.w, c.reg, false, j, step);
        for (std::size_t i = 0; i < c.x.rows(); ++i) {
            const JacobianParts parts = jac_total(tr, c.w, i, j, false);
            worst = std::max(worst, block_error(parts.total_no_res, column[i]));
        }
    }
    return worst;
}

SuiteReport check_attention_jacobian(const GradcheckSettings& s, std::uint64_t seed) {
    SuiteReport r{"attention-jacobian", 0.0, 0.0, s.tolerance, s.configs, ""};
    const std::uint64_t root = derive_seed(seed, "gradcheck.attention");
    for (std::size_t k = 0; k < s.configs; ++k) {
        const AttnCase c = make_attn_case(root, k, s.steps, s.dim);
        const double err = attn_case_error(c);
        if (err > r.max_err || k == 0) {
            r.max_err = err;
            r.worst = c.describe();
        }
    }
    return r;
}

SuiteReport check_softmax_jacobian(const GradcheckSettings& s, std::uint64_t seed) {
    SuiteReport r{"softmax-row-jacobian", 0.0, 0.0, s.tolerance, s.configs, ""};
    SplitMix64 rng(derive_seed(seed, "gradcheck.softmax"));
    const double h = kFiniteDiffStep;
    for (std::size_t k = 0; k < s.configs; ++k) {
        const std::size_t t = s.steps ? s.steps : 2 + rng.below(7);
        Vector e(t);
        for (double& v : e) v = rng.uniform(-3.0, 3.0);
        const Matrix analytic = softmax_jacobian_row(softmax_row(e));
        Matrix numeric(t, t);
        for (std::size_t c = 0; c < t; ++c) {
            Vector up = e, down = e;
            up[c] += h;
            down[c] -= h;
            const Vector a = softmax_row(up), b = softmax_row(down);
            for (std::size_t m = 0; m < t; ++m) numeric(m, c) = (a[m] - b[m]) / (2.0 * h);
        }
        const double err = block_error(analytic, numeric);
        if (err > r.max_err || k == 0) {
            r.max_err = err;
            r.worst = "(T=" + std::to_string(t) + ", row=" + std::to_string(k) + ", seed=" + std::to_string(seed) + ")";
        }
    }
    return r;
}

ModelCase make_model_case(std::uint64_t seed) {
    ModelConfig cfg;
    cfg.nodes = 4;
    cfg.features = 2;
    cfg.window = 5;
    cfg.horizon = 3;
    cfg.d_model = 4;
    cfg.heads = 2;
    cfg.d_k = 2;
    cfg.d_v = 2;
    cfg.d_gcn = 3;
    cfg.d_emb = 2;
    cfg.target_mean = 1.5;
    cfg.target_std = 2.0;
    ModelCase mc{make_model(cfg, derive_seed(seed, "init")), {}};
    SplitMix64 rng(derive_seed(seed, "data"));
    // Random nonzero biases.
    mc.model.params.visit([&](const std::string& name, Matrix& m) {
        if (name == "be" || name == "bg" || name == "bout")
            for (double& v : m.data()) v = rng.uniform(-0.5, 0.5);
    });
    for (std::size_t b = 0; b < 3; ++b) {
        std::vector<Matrix> inputs;
        for (std::size_t n = 0; n < cfg.nodes; ++n) {
            Matrix in(cfg.window, cfg.features);
            for (double& v : in.data()) v = rng.normal();
            inputs.push_back(std::move(in));
        }
        Matrix target(cfg.nodes, cfg.horizon), mask(cfg.nodes, cfg.horizon);
        for (double& v : target.data()) v = rng.uniform(-2.0, 5.0);
        for (double& v : mask.data()) v = rng.uniform01() < 0.8 ? 1.0 : 0.0;
        mc.batch.inputs.push_back(std::move(inputs));
        mc.batch.targets.push_back(std::move(target));
        mc.batch.masks.push_back(std::move(mask));
        mc.batch.dropout_seeds.push_back(0);
    }
    return mc;
}

double coordinate_error(double analytic, double numeric) {
    const double diff = std::abs(analytic - numeric);
    if (diff <= 1e-6) return 0.0;
    return diff / std::max(std::abs(analytic), std::abs(numeric));
}

SuiteReport check_model_gradients(const GradcheckSettings& s, std::uint64_t seed) {
    SuiteReport r{"model-gradients", 0.0, 0.0, s.model_tolerance, s.model_coords, ""};
    const std::uint64_t root = derive_seed(seed, "gradcheck.model");
    ModelCase mc = make_model_case(root);
    const LossAndGrad lg = model_backward(mc.batch, mc.model, false);

    std::vector<std::pair<std::string, Matrix*>> params;
    std::vector<const Matrix*> grads;
    mc.model.params.visit([&](const std::string& name, Matrix& m) { params.emplace_back(name, &m); });
    lg.grads.visit([&](const std::string&, const Matrix& m) { grads.push_back(&m); });
    std::size_t total = 0;
    for (const auto& p : params) total += p.second->size();

    SplitMix64 rng(derive_seed(root, "coords"));
    const double h = 1e-6;
    for (std::size_t k = 0; k < s.model_coords; ++k) {
        std::size_t flat = rng.below(total), t = 0;
        while (flat >= params[t].second->size()) flat -= params[t++].second->size();
        double& x = params[t].second->data()[flat];
        const double orig = x;
        x = orig + h;
        const double up = model_loss(mc.batch, mc.model, false);
        x = orig - h;
        const double down = model_loss(mc.batch, mc.model, false);
        x = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double err = coordinate_error(grads[t]->data()[flat], numeric);
        r.max_abs_diff = std::max(r.max_abs_diff, std::abs(grads[t]->data()[flat] - numeric));
        if (err > r.max_err || k == 0) {
            r.max_err = err;
            r.worst = "(" + params[t].first + "[" + std::to_string(flat) + "], analytic=" + fmt_double(grads[t]->data()[flat]) +
                      ", numeric=" + fmt_double(numeric) + ", seed=" + std::to_string(seed) + ")";
        }
    }
    return r;
}

}  // namespace tsink
