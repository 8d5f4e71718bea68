#include "tsink/bounds.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "tsink/format.hpp"
#include "tsink/jacobian.hpp"
#include "tsink/rng.hpp"

namespace tsink {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double dist_v_h(const AttnTrace& trace, std::size_t j, std::size_t i) {
    Vector d(trace.v.cols());
    for (std::size_t c = 0; c < d.size(); ++c) d[c] = trace.v(j, c) - trace.h(i, c);
    return vec_norm2(d);
}

double sqrt_dk(const AttnWeights& w) { return std::sqrt(static_cast<double>(w.d_k())); }

}  // namespace

double constant_ck(const AttnTrace& trace, const AttnWeights& w, std::size_t i) {
    const double kq = vec_norm2(matvec_t(w.wk, trace.q.row(i)));
    double best = 0.0;
    for (std::size_t j = 0; j < trace.steps(); ++j) best = std::max(best, dist_v_h(trace, j, i) * kq);
    return best;
}

double constant_cq(const AttnTrace& trace, const AttnWeights& w, std::size_t i) {
    const Vector kbar = mean_key(trace, i);
    Vector centered(kbar.size());
    double best = 0.0;
    for (std::size_t m = 0; m < trace.steps(); ++m) {
        for (std::size_t c = 0; c < kbar.size(); ++c) centered[c] = trace.k(m, c) - kbar[c];
        const double qk = vec_norm2(matvec_t(w.wq, centered));
        best = std::max(best, dist_v_h(trace, m, i) * qk);
    }
    return best;
}

ExpectedNorms expected_norms(const AttnTrace& trace, const AttnWeights& w, std::size_t i,
                             NormKind norm) {
    const std::size_t t = trace.steps();
    const double inv_t = 1.0 / static_cast<double>(t);
    const double kq = vec_norm2(matvec_t(w.wk, trace.q.row(i)));
    ExpectedNorms en;
    for (std::size_t j = 0; j < t; ++j) {
        en.e_value += matrix_norm(jac_value(trace, w, i, j), norm);
        en.e_key += trace.softmax(i, j) / sqrt_dk(w) * dist_v_h(trace, j, i) * kq;
    }
    en.e_value *= inv_t;
    en.e_key *= inv_t;
    en.e_query = inv_t * matrix_norm(jac_query(trace, w, i, i), norm);
    return en;
}

double BoundReport::offdiag_bound_corrected() const {
    if (steps < 2) return kNaN;
    return offdiag_bound * static_cast<double>(steps) / static_cast<double>(steps - 1);
}

BoundReport sensitivity_bounds(const AttnTrace& trace, const AttnWeights& w, std::size_t i, NormKind norm) {
    if (w.d_v() != w.d_model()) throw ShapeError("sensitivity_bounds: residual form needs d_v = d_model");
    const std::size_t t = trace.steps();
    if (i >= t) throw std::out_of_range("sensitivity_bounds: query index outside sequence");

    const ExpectedNorms en = expected_norms(trace, w, i, norm);
    const double inv_t = 1.0 / static_cast<double>(t);

    BoundReport r;
    r.steps = t;
    r.i = i;
    r.norm = norm;
    r.c_k = constant_ck(trace, w, i);
    r.c_q = constant_cq(trace, w, i);
    r.wv_norm = matrix_norm(w.wv, norm);
    r.e_value_norm = en.e_value;
    r.e_key = en.e_key;
    r.e_query = en.e_query;
    r.key_bound = r.c_k * inv_t / sqrt_dk(w);
    r.query_bound = r.c_q * inv_t / sqrt_dk(w);
    r.offdiag_bound = (r.wv_norm + r.c_k / sqrt_dk(w)) * inv_t;
    r.mean_diag_alpha = trace.softmax(i, i);
    r.diag_bound = identity_norm(w.d_model(), norm) +
                   r.mean_diag_alpha * (r.wv_norm + r.c_k / sqrt_dk(w) + r.c_q / sqrt_dk(w));

    double offdiag_sum = 0.0;
    double uniform_sum = 0.0;
    for (std::size_t j = 0; j < t; ++j) {
        const JacobianParts p = jac_total(trace, w, i, j, true);
        uniform_sum += matrix_norm(p.total_no_res, norm);
        if (j == i) {
            r.measured_diag = matrix_norm(p.total_with_res, norm);
        } else {
            offdiag_sum += matrix_norm(p.total_with_res, norm);
        }
    }
    r.measured_uniform_mean = uniform_sum * inv_t;
    if (t > 1) {
        r.measured_offdiag_mean = offdiag_sum / static_cast<double>(t - 1);
    } else {
        r.offdiag_defined = false;
        r.measured_offdiag_mean = kNaN;
        r.offdiag_bound = kNaN;
    }
    return r;
}

bool DiagMass::ratio_defined() const { return !std::isnan(ratio); }

DiagMass diag_mass(const Matrix& alpha) {
    if (alpha.rows() != alpha.cols()) throw ShapeError("diag_mass: non-square " + shape_str(alpha));
    const std::size_t t = alpha.rows();
    DiagMass dm;
    double diag = 0.0, off = 0.0;
    for (std::size_t r = 0; r < t; ++r)
        for (std::size_t c = 0; c < t; ++c) (r == c ? diag : off) += alpha(r, c);
    dm.mean_diag = t > 0 ? diag / static_cast<double>(t) : 0.0;
    dm.mean_offdiag = t > 1 ? off / static_cast<double>(t * (t - 1)) : 0.0;
    dm.ratio = dm.mean_offdiag < 1e-15 ? kNaN : dm.mean_diag / dm.mean_offdiag;
    return dm;
}

void SweepConfig::validate() const {
    if (steps.empty()) throw std::invalid_argument("sweep: empty T list");
    for (std::size_t k = 0; k < steps.size(); ++k) {
        if (steps[k] < 1) throw std::invalid_argument("sweep: T must be >= 1");
        if (k > 0 && steps[k] <= steps[k - 1]) throw std::invalid_argument("sweep: T list must be strictly ascending");
    }
    if (samples < 1) throw std::invalid_argument("sweep: samples must be >= 1");
    if (d_model < 1 || d_k < 1) throw std::invalid_argument("sweep: dimensions must be >= 1");
    if (!reg.deterministic()) throw std::invalid_argument("sweep: dropout has no analytic Jacobian");
}

void check_instance(const BoundReport& r, const ExpectedNorms& en, std::size_t sample,
                    const std::string& seed_path, std::vector<BoundViolation>& out) {
    auto flag = [&](const char* name, double lhs, double rhs) {
        out.push_back({r.steps, sample, r.i, name, lhs, rhs, seed_path});
    };
    const double exact = r.wv_norm / static_cast<double>(r.steps);
    if (std::abs(en.e_value - exact) >= kEqualityTol) flag("e_value == |Wv|/T", en.e_value, exact);
    if (en.e_key > r.key_bound + kPathBoundTol) flag("e_key <= C_K/(T sqrt(d_k))", en.e_key, r.key_bound);
    if (en.e_query > r.query_bound + kPathBoundTol) flag("e_query <= C_Q/(T sqrt(d_k))", en.e_query, r.query_bound);
    if (r.offdiag_defined && r.measured_offdiag_mean > r.offdiag_bound_corrected() + kOffdiagTol) {
        flag("offdiag mean <= bound*T/(T-1)", r.measured_offdiag_mean, r.offdiag_bound_corrected());
    }
}

namespace {

struct SampleOutcome {
    std::vector<BoundReport> reports;  // one per query step
    std::vector<BoundViolation> violations;
};

SampleOutcome evaluate_sample(const SweepConfig& cfg, std::size_t t, std::size_t s) {
    const std::uint64_t wseed = derive_seed(derive_seed(cfg.seed, "sweep.weights"), s);
    const std::uint64_t xseed = derive_seed(derive_seed(derive_seed(cfg.seed, "sweep.inputs"), t), s);
    const AttnWeights w = init_attn_weights(cfg.d_model, cfg.d_k, cfg.d_model, wseed);
    SplitMix64 rng(xseed);
    Matrix x(t, cfg.d_model);
    for (double& v : x.data()) v = rng.uniform(-1.0, 1.0);

    const AttnTrace trace = attn_forward(x, w, cfg.reg, true, false);
    const std::string path = std::to_string(cfg.seed) + "/T=" + std::to_string(t) + "/sample=" + std::to_string(s);
    SampleOutcome o;
    o.reports.reserve(t);
    for (std::size_t i = 0; i < t; ++i) {
        BoundReport r = sensitivity_bounds(trace, w, i, cfg.norm);
        const ExpectedNorms en{r.e_value_norm, r.e_key, r.e_query};
        check_instance(r, en, s, path, o.violations);
        o.reports.push_back(r);
    }
    return o;
}

BoundReport aggregate(const SweepConfig& cfg, std::size_t t, const std::vector<SampleOutcome>& outcomes) {
    BoundReport a;
    a.steps = t;
    a.i = 0;
    a.norm = cfg.norm;
    a.offdiag_defined = t > 1;
    double n = 0.0;
    double diag_factor = 0.0;
    for (const auto& o : outcomes) {
        for (const auto& r : o.reports) {
            a.c_k += r.c_k;
            a.c_q += r.c_q;
            a.wv_norm += r.wv_norm;
            a.e_value_norm += r.e_value_norm;
            a.e_key += r.e_key;
            a.e_query += r.e_query;
            a.key_bound += r.key_bound;
            a.query_bound += r.query_bound;
            a.offdiag_bound += r.offdiag_bound;
            a.measured_offdiag_mean += r.measured_offdiag_mean;
            a.measured_uniform_mean += r.measured_uniform_mean;
            a.measured_diag += r.measured_diag;
            a.mean_diag_alpha += r.mean_diag_alpha;
            const double sdk = std::sqrt(static_cast<double>(cfg.d_k));
            diag_factor += r.wv_norm + r.c_k / sdk + r.c_q / sdk;
            n += 1.0;
        }
    }
    for (double* f : {&a.c_k, &a.c_q, &a.wv_norm, &a.e_value_norm, &a.e_key, &a.e_query, &a.key_bound,
                      &a.query_bound, &a.offdiag_bound, &a.measured_offdiag_mean, &a.measured_uniform_mean,
                      &a.measured_diag, &a.mean_diag_alpha, &diag_factor}) {
        *f /= n;
    }
    // Monte-Carlo E[α_ii] times the mean bracket.
    a.diag_bound = identity_norm(cfg.d_model, cfg.norm) + a.mean_diag_alpha * diag_factor;
    return a;
}

SweepResult run_sweep(const SweepConfig& cfg, bool parallel) {
    cfg.validate();
    SweepResult res;
    for (std::size_t t : cfg.steps) {
        std::vector<SampleOutcome> outcomes(cfg.samples);
        const auto count = static_cast<std::ptrdiff_t>(cfg.samples);
#pragma omp parallel for schedule(dynamic) if (parallel)
        for (std::ptrdiff_t s = 0; s < count; ++s) {
            outcomes[static_cast<std::size_t>(s)] = evaluate_sample(cfg, t, static_cast<std::size_t>(s));
        }
        for (const auto& o : outcomes) res.violations.insert(res.violations.end(), o.violations.begin(), o.violations.end());
        res.aggregates.push_back(aggregate(cfg, t, outcomes));
    }
    return res;
}

}  // namespace

SweepResult sweep_T(const SweepConfig& cfg) { return run_sweep(cfg, true); }

namespace serial {
SweepResult sweep_T(const SweepConfig& cfg) { return run_sweep(cfg, false); }
}  // namespace serial

std::vector<std::string> bounds_csv_header() {
    return {"T",           "i",           "norm",          "c_k",          "c_q",
            "wv_norm",     "e_value_norm", "e_key",        "e_query",      "key_bound",
            "query_bound", "offdiag_bound", "offdiag_bound_corrected", "diag_bound",
            "measured_offdiag_mean", "measured_uniform_mean", "measured_diag", "mean_diag_alpha"};
}

void write_bounds_csv(std::ostream& os, const std::vector<BoundReport>& reports) {
    write_csv_row(os, bounds_csv_header());
    for (const auto& r : reports) {
        write_csv_row(os, {std::to_string(r.steps), std::to_string(r.i),
                           r.norm == NormKind::Spectral ? "spectral" : "frobenius", fmt_double(r.c_k),
                           fmt_double(r.c_q), fmt_double(r.wv_norm), fmt_double(r.e_value_norm),
                           fmt_double(r.e_key), fmt_double(r.e_query), fmt_double(r.key_bound),
                           fmt_double(r.query_bound), fmt_double(r.offdiag_bound),
                           fmt_double(r.offdiag_bound_corrected()), fmt_double(r.diag_bound),
                           fmt_double(r.measured_offdiag_mean), fmt_double(r.measured_uniform_mean),
                           fmt_double(r.measured_diag), fmt_double(r.mean_diag_alpha)});
    }
}

}  // namespace tsink
