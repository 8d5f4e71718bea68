#include "tsink/model.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "tsink/format.hpp"
#include "tsink/jacobian.hpp"
#include "tsink/rng.hpp"

namespace tsink {

namespace {

Matrix uniform_matrix(std::size_t r, std::size_t c, double a, SplitMix64& rng) {
    Matrix m(r, c);
    for (double& v : m.data()) v = rng.uniform(-a, a);
    return m;
}

double inv_sqrt(std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); }

const Matrix& backward_graph_weight(const TnSModel& m) {
    return m.cfg.share_graph_weight ? m.params.wg_f : m.params.wg_b;
}

// dR of a row softmax given A = softmax(R) and dA.
Matrix softmax_rows_backward(const Matrix& a, const Matrix& da) {
    Matrix dr(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double inner = dot(a.row(i), da.row(i));
        for (std::size_t k = 0; k < a.cols(); ++k) dr(i, k) = a(i, k) * (da(i, k) - inner);
    }
    return dr;
}

Matrix node_rows_at(const SampleTrace& tr, std::size_t t) {
    const std::size_t n = tr.attn.size();
    const std::size_t d = tr.attn.front().out.cols();
    Matrix h(n, d);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t c = 0; c < d; ++c) h(k, c) = tr.attn[k].out(t, c);
    return h;
}

}  // namespace

void ModelConfig::validate() const {
    if (nodes < 1 || features < 1 || window < 1 || horizon < 1) throw std::invalid_argument("model: sizes must be >= 1");
    if (d_model < 1 || heads < 1 || d_k < 1 || d_v < 1 || d_gcn < 1 || d_emb < 1) {
        throw std::invalid_argument("model: dimensions must be >= 1");
    }
    if (pe == PeScheme::AbsoluteSinusoidal && d_model % 2 != 0) {
        throw std::invalid_argument("model: sinusoidal encoding needs even d_model");
    }
    if (reg.kind == RegKind::DiagMask && window < 2) throw std::invalid_argument("model: diagonal mask needs W_in >= 2");
    if (!(target_std > 0.0)) throw std::invalid_argument("model: target_std must be positive");
    reg.validate();
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z = *this;
    z.visit([](const std::string&, Matrix& m) { std::fill(m.data().begin(), m.data().end(), 0.0); });
    return z;
}

std::size_t ModelParams::count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Matrix& m) { n += m.size(); });
    return n;
}

ModelParams& ModelParams::operator+=(const ModelParams& other) {
    std::vector<const Matrix*> src;
    other.visit([&](const std::string&, const Matrix& m) { src.push_back(&m); });
    std::size_t k = 0;
    visit([&](const std::string&, Matrix& m) { m += *src[k++]; });
    return *this;
}

std::size_t TnSModel::attention_param_count() const {
    std::size_t n = params.we.size() + params.be.size() + params.wo.size();
    for (const auto& h : params.heads) n += h.wq.size() + h.wk.size() + h.wv.size();
    return n;
}

std::size_t TnSModel::graph_param_count() const {
    return params.e1.size() + params.e2.size() + params.wg_f.size() + params.wg_b.size() + params.bg.size();
}

TnSModel make_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    TnSModel m;
    m.cfg = cfg;
    ModelParams& p = m.params;
    SplitMix64 rng(derive_seed(seed, "model.init"));

    p.we = uniform_matrix(cfg.d_model, cfg.features, inv_sqrt(cfg.features), rng);
    p.be = Matrix(1, cfg.d_model);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        p.heads.push_back(init_attn_weights(cfg.d_model, cfg.d_k, cfg.d_v, derive_seed(seed, "model.head" + std::to_string(h))));
    }
    p.wo = uniform_matrix(cfg.d_model, cfg.heads * cfg.d_v, inv_sqrt(cfg.heads * cfg.d_v), rng);
    p.e1 = uniform_matrix(cfg.nodes, cfg.d_emb, 1.0, rng);
    p.e2 = uniform_matrix(cfg.nodes, cfg.d_emb, 1.0, rng);
    p.wg_f = uniform_matrix(cfg.d_model, cfg.d_gcn, inv_sqrt(cfg.d_model), rng);
    p.wg_b = cfg.share_graph_weight ? Matrix() : uniform_matrix(cfg.d_model, cfg.d_gcn, inv_sqrt(cfg.d_model), rng);
    p.bg = Matrix(1, cfg.d_gcn);
    p.wout = uniform_matrix(cfg.horizon, cfg.window * cfg.d_gcn, inv_sqrt(cfg.window * cfg.d_gcn), rng);
    p.bout = Matrix(1, cfg.horizon);

    return m;
}

std::string param_ratio_warning(const TnSModel& m) {
    const double ratio = static_cast<double>(m.attention_param_count()) / static_cast<double>(m.graph_param_count());
    if (ratio >= 3.0 && ratio <= 5.0) return "";
    std::ostringstream os;
    os << "attention/graph parameter ratio " << ratio << " is outside 4 +/- 1 (" << m.attention_param_count() << " vs "
       << m.graph_param_count() << ")";
    return os.str();
}

Adjacency learned_adjacency(const Matrix& e1, const Matrix& e2) {
    if (e1.rows() != e2.rows() || e1.cols() != e2.cols()) {
        throw ShapeError("learned_adjacency: e1 " + shape_str(e1) + " vs e2 " + shape_str(e2));
    }
    Adjacency a;
    a.logits = matmul_nt(e1, e2);
    Matrix rf = a.logits;
    for (double& v : rf.data()) v = std::max(0.0, v);
    const Matrix rb = rf.transposed();
    a.fwd = softmax_rows(rf);
    a.bwd = softmax_rows(rb);
    return a;
}

SampleTrace forward_sample(const TnSModel& model, const Adjacency& adj, const std::vector<Matrix>& inputs,
                           bool train_mode, std::uint64_t dropout_seed) {
    const ModelConfig& cfg = model.cfg;
    const ModelParams& p = model.params;
    if (inputs.size() != cfg.nodes) {
        throw ShapeError("forward: " + std::to_string(inputs.size()) + " node inputs for " + std::to_string(cfg.nodes) + " nodes");
    }
    const Matrix pe = cfg.pe == PeScheme::AbsoluteSinusoidal ? sinusoidal_table(cfg.window, cfg.d_model) : Matrix();

    SampleTrace tr;
    tr.embedded.reserve(cfg.nodes);
    tr.attn.reserve(cfg.nodes);
    for (std::size_t n = 0; n < cfg.nodes; ++n) {
        const Matrix& in = inputs[n];
        if (in.rows() != cfg.window || in.cols() != cfg.features) {
            throw ShapeError("forward: node input " + shape_str(in) + ", expected " + std::to_string(cfg.window) + "x" +
                             std::to_string(cfg.features));
        }
        Matrix x = matmul_nt(in, p.we);
        for (std::size_t t = 0; t < cfg.window; ++t)
            for (std::size_t c = 0; c < cfg.d_model; ++c) x(t, c) += p.be(0, c);
        if (!pe.empty()) x += pe;
        Regularizer reg = cfg.reg;
        reg.seed = derive_seed(dropout_seed, n);
        tr.attn.push_back(multihead_forward(x, p.heads, p.wo, reg, cfg.residual, train_mode));
        tr.embedded.push_back(std::move(x));
    }

    const Matrix& wg_b = backward_graph_weight(model);
    tr.pre_act.reserve(cfg.window);
    tr.act.reserve(cfg.window);
    for (std::size_t t = 0; t < cfg.window; ++t) {
        const Matrix h = node_rows_at(tr, t);
        Matrix pre = matmul(matmul(adj.fwd, h), p.wg_f);
        pre += matmul(matmul(adj.bwd, h), wg_b);
        for (std::size_t n = 0; n < cfg.nodes; ++n)
            for (std::size_t c = 0; c < cfg.d_gcn; ++c) pre(n, c) += p.bg(0, c);
        Matrix act = pre;
        for (double& v : act.data()) v = std::max(0.0, v);
        tr.pre_act.push_back(std::move(pre));
        tr.act.push_back(std::move(act));
    }

    tr.pred = Matrix(cfg.nodes, cfg.horizon);
    for (std::size_t n = 0; n < cfg.nodes; ++n) {
        for (std::size_t h = 0; h < cfg.horizon; ++h) {
            double s = p.bout(0, h);
            const auto wrow = p.wout.row(h);
            for (std::size_t t = 0; t < cfg.window; ++t) {
                const auto z = tr.act[t].row(n);
                for (std::size_t c = 0; c < cfg.d_gcn; ++c) s += wrow[t * cfg.d_gcn + c] * z[c];
            }
            tr.pred(n, h) = s;
        }
    }
    return tr;
}

Batch make_batch(const std::vector<WindowSample>& samples, std::uint64_t dropout_root) {
    Batch b;
    for (std::size_t k = 0; k < samples.size(); ++k) {
        b.inputs.push_back(samples[k].inputs);
        b.targets.push_back(samples[k].target);
        b.masks.push_back(samples[k].target_mask);
        b.dropout_seeds.push_back(derive_seed(dropout_root, k));
    }
    return b;
}

ForwardResult model_forward(const Batch& batch, const TnSModel& model, bool train_mode) {
    const Adjacency adj = learned_adjacency(model.params.e1, model.params.e2);
    ForwardResult r;
    r.traces.resize(batch.inputs.size());
    const auto count = static_cast<std::ptrdiff_t>(batch.inputs.size());
#pragma omp parallel for schedule(dynamic) if (!in_parallel_region())
    for (std::ptrdiff_t b = 0; b < count; ++b) {
        const auto k = static_cast<std::size_t>(b);
        const std::uint64_t seed = k < batch.dropout_seeds.size() ? batch.dropout_seeds[k] : 0;
        r.traces[k] = forward_sample(model, adj, batch.inputs[k], train_mode, seed);
    }
    for (const auto& t : r.traces) r.predictions.push_back(t.pred);
    return r;
}

namespace {

std::size_t masked_count(const Batch& batch) {
    std::size_t c = 0;
    for (const auto& m : batch.masks)
        for (double v : m.data()) c += v != 0.0 ? 1 : 0;
    return c;
}

struct SampleGrad {
    GradientSet grads;
    double abs_err_sum = 0.0;
};

// Backward of one window. `inv_count` normalizes the batch MAE.
SampleGrad sample_backward(const TnSModel& model, const Adjacency& adj, const std::vector<Matrix>& inputs,
                           const Matrix& target, const Matrix& mask, double inv_count, bool train_mode,
                           std::uint64_t dropout_seed) {
    const ModelConfig& cfg = model.cfg;
    const ModelParams& p = model.params;
    const SampleTrace tr = forward_sample(model, adj, inputs, train_mode, dropout_seed);

    SampleGrad out;
    out.grads = p.zeros_like();
    GradientSet& g = out.grads;

    // Loss head: MAE on de-normalized predictions.
    Matrix d_pred(cfg.nodes, cfg.horizon);
    for (std::size_t n = 0; n < cfg.nodes; ++n) {
        for (std::size_t h = 0; h < cfg.horizon; ++h) {
            if (mask(n, h) == 0.0) continue;
            const double resid = cfg.target_std * tr.pred(n, h) + cfg.target_mean - target(n, h);
            out.abs_err_sum += std::abs(resid);
            const double sign = resid > 0.0 ? 1.0 : (resid < 0.0 ? -1.0 : 0.0);
            d_pred(n, h) = cfg.target_std * sign * inv_count;
        }
    }

    // Readout.
    std::vector<Matrix> d_act(cfg.window, Matrix(cfg.nodes, cfg.d_gcn));
    for (std::size_t n = 0; n < cfg.nodes; ++n) {
        for (std::size_t h = 0; h < cfg.horizon; ++h) {
            const double dp = d_pred(n, h);
            if (dp == 0.0) continue;
            g.bout(0, h) += dp;
            auto gw = g.wout.row(h);
            const auto w = p.wout.row(h);
            for (std::size_t t = 0; t < cfg.window; ++t) {
                const auto z = tr.act[t].row(n);
                auto dz = d_act[t].row(n);
                for (std::size_t c = 0; c < cfg.d_gcn; ++c) {
                    gw[t * cfg.d_gcn + c] += dp * z[c];
                    dz[c] += dp * w[t * cfg.d_gcn + c];
                }
            }
        }
    }

    // Graph convolution per step.
    const Matrix& wg_b = backward_graph_weight(model);
    Matrix& g_wg_b = cfg.share_graph_weight ? g.wg_f : g.wg_b;
    Matrix d_adj_f(cfg.nodes, cfg.nodes), d_adj_b(cfg.nodes, cfg.nodes);
    std::vector<Matrix> d_out(cfg.nodes, Matrix(cfg.window, cfg.d_model));
    for (std::size_t t = 0; t < cfg.window; ++t) {
        Matrix d_pre = d_act[t];
        for (std::size_t k = 0; k < d_pre.size(); ++k)
            if (!(tr.pre_act[t].data()[k] > 0.0)) d_pre.data()[k] = 0.0;
        for (std::size_t n = 0; n < cfg.nodes; ++n)
            for (std::size_t c = 0; c < cfg.d_gcn; ++c) g.bg(0, c) += d_pre(n, c);

        const Matrix h = node_rows_at(tr, t);
        const Matrix gf = matmul(adj.fwd, h);
        const Matrix gb = matmul(adj.bwd, h);
        g.wg_f += matmul_tn(gf, d_pre);
        g_wg_b += matmul_tn(gb, d_pre);
        const Matrix d_gf = matmul_nt(d_pre, p.wg_f);  // N × d_model
        const Matrix d_gb = matmul_nt(d_pre, wg_b);
        d_adj_f += matmul_nt(d_gf, h);
        d_adj_b += matmul_nt(d_gb, h);
        Matrix d_h = matmul_tn(adj.fwd, d_gf);
        d_h += matmul_tn(adj.bwd, d_gb);
        for (std::size_t n = 0; n < cfg.nodes; ++n)
            for (std::size_t c = 0; c < cfg.d_model; ++c) d_out[n](t, c) = d_h(n, c);
    }

    // Learned adjacency: both directions share the logits E1·E2ᵀ.
    Matrix d_logits = softmax_rows_backward(adj.fwd, d_adj_f);
    const Matrix d_logits_b = softmax_rows_backward(adj.bwd, d_adj_b).transposed();
    d_logits += d_logits_b;
    for (std::size_t k = 0; k < d_logits.size(); ++k)
        if (!(adj.logits.data()[k] > 0.0)) d_logits.data()[k] = 0.0;
    g.e1 += matmul(d_logits, p.e2);
    g.e2 += matmul_tn(d_logits, p.e1);

    // Multi-head attention and the input embedding, node by node.
    for (std::size_t n = 0; n < cfg.nodes; ++n) {
        const MultiHeadResult& mh = tr.attn[n];
        g.wo += matmul_tn(d_out[n], mh.concat);
        const Matrix d_concat = matmul(d_out[n], p.wo);
        Matrix d_x = cfg.residual ? d_out[n] : Matrix(cfg.window, cfg.d_model);
        std::size_t offset = 0;
        for (std::size_t hd = 0; hd < p.heads.size(); ++hd) {
            const std::size_t dv = p.heads[hd].d_v();
            Matrix d_head(cfg.window, dv);
            for (std::size_t t = 0; t < cfg.window; ++t)
                for (std::size_t c = 0; c < dv; ++c) d_head(t, c) = d_concat(t, offset + c);
            offset += dv;
            const AttnGrads ag = attn_backward(mh.traces[hd], p.heads[hd], d_head);
            g.heads[hd].wq += ag.dwq;
            g.heads[hd].wk += ag.dwk;
            g.heads[hd].wv += ag.dwv;
            d_x += ag.dx;
        }
        g.we += matmul_tn(d_x, inputs[n]);
        for (std::size_t t = 0; t < cfg.window; ++t)
            for (std::size_t c = 0; c < cfg.d_model; ++c) g.be(0, c) += d_x(t, c);
    }
    return out;
}

LossAndGrad run_backward(const Batch& batch, const TnSModel& model, bool train_mode, bool parallel) {
    const Adjacency adj = learned_adjacency(model.params.e1, model.params.e2);
    LossAndGrad r;
    r.count = masked_count(batch);
    r.grads = model.params.zeros_like();
    if (r.count == 0) return r;
    const double inv_count = 1.0 / static_cast<double>(r.count);

    std::vector<SampleGrad> per(batch.inputs.size());
    const auto count = static_cast<std::ptrdiff_t>(batch.inputs.size());
#pragma omp parallel for schedule(dynamic) if (parallel && !in_parallel_region())
    for (std::ptrdiff_t b = 0; b < count; ++b) {
        const auto k = static_cast<std::size_t>(b);
        const std::uint64_t seed = k < batch.dropout_seeds.size() ? batch.dropout_seeds[k] : 0;
        per[k] = sample_backward(model, adj, batch.inputs[k], batch.targets[k], batch.masks[k], inv_count, train_mode, seed);
    }
    double abs_sum = 0.0;
    for (const auto& s : per) {
        r.grads += s.grads;
        abs_sum += s.abs_err_sum;
    }
    r.loss = abs_sum * inv_count;
    return r;
}

}  // namespace

LossAndGrad model_backward(const Batch& batch, const TnSModel& model, bool train_mode) {
    return run_backward(batch, model, train_mode, true);
}

namespace serial {
LossAndGrad model_backward(const Batch& batch, const TnSModel& model, bool train_mode) {
    return run_backward(batch, model, train_mode, false);
}
}  // namespace serial

double model_loss(const Batch& batch, const TnSModel& model, bool train_mode) {
    const ForwardResult fr = model_forward(batch, model, train_mode);
    const ModelConfig& cfg = model.cfg;
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < fr.predictions.size(); ++b) {
        for (std::size_t k = 0; k < fr.predictions[b].size(); ++k) {
            if (batch.masks[b].data()[k] == 0.0) continue;
            sum += std::abs(cfg.target_std * fr.predictions[b].data()[k] + cfg.target_mean - batch.targets[b].data()[k]);
            ++count;
        }
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

std::vector<Matrix> mean_attention(const SampleTrace& trace) {
    std::vector<Matrix> out;
    if (trace.attn.empty()) return out;
    const std::size_t heads = trace.attn.front().traces.size();
    for (std::size_t h = 0; h < heads; ++h) {
        Matrix acc = trace.attn.front().traces[h].alpha;
        for (std::size_t n = 1; n < trace.attn.size(); ++n) acc += trace.attn[n].traces[h].alpha;
        acc *= 1.0 / static_cast<double>(trace.attn.size());
        out.push_back(std::move(acc));
    }
    return out;
}

namespace {

std::vector<std::pair<std::string, std::string>> config_entries(const ModelConfig& c) {
    auto u = [](std::size_t v) { return std::to_string(v); };
    return {{"nodes", u(c.nodes)},
            {"features", u(c.features)},
            {"window", u(c.window)},
            {"horizon", u(c.horizon)},
            {"d_model", u(c.d_model)},
            {"heads", u(c.heads)},
            {"d_k", u(c.d_k)},
            {"d_v", u(c.d_v)},
            {"d_gcn", u(c.d_gcn)},
            {"d_emb", u(c.d_emb)},
            {"residual", c.residual ? "true" : "false"},
            {"share_graph_weight", c.share_graph_weight ? "true" : "false"},
            {"pe", to_string(c.pe)},
            {"reg.kind", to_string(c.reg.kind)},
            {"reg.p", fmt_double(c.reg.p)},
            {"reg.lambda", fmt_double(c.reg.lambda)},
            {"reg.seed", std::to_string(c.reg.seed)},
            {"target_mean", fmt_double(c.target_mean)},
            {"target_std", fmt_double(c.target_std)}};
}

void write_tensor(std::ostream& os, const std::string& name, const Matrix& m) {
    os << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) os << (c ? " " : "") << fmt_double(m(r, c));
        os << '\n';
    }
}

bool parse_bool(const std::string& s) {
    if (s == "true") return true;
    if (s == "false") return false;
    throw std::invalid_argument("expected true/false, got '" + s + "'");
}

}  // namespace

void save_checkpoint(std::ostream& os, const Checkpoint& ck) {
    os << kCheckpointVersion << '\n';
    for (const auto& [k, v] : config_entries(ck.model.cfg)) os << "model." << k << " = " << v << '\n';
    for (const auto& [k, v] : ck.meta) os << "meta." << k << " = " << v << '\n';
    ck.model.params.visit([&](const std::string& name, const Matrix& m) { write_tensor(os, name, m); });
    for (std::size_t n = 0; n < ck.probe.size(); ++n) write_tensor(os, "probe" + std::to_string(n), ck.probe[n]);
    os << "end\n";
}

Checkpoint load_checkpoint(std::istream& is) {
    std::string line;
    std::size_t lineno = 0;
    auto next = [&]() -> bool {
        if (!std::getline(is, line)) return false;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };
    if (!next() || line != kCheckpointVersion) throw ParseError("missing '" + std::string(kCheckpointVersion) + "' header", 1);

    std::map<std::string, std::string> model_kv;
    Checkpoint ck;
    while (next()) {
        if (line.rfind("tensor ", 0) == 0) break;
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
        const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
        if (key.rfind("model.", 0) == 0) {
            model_kv[key.substr(6)] = value;
        } else if (key.rfind("meta.", 0) == 0) {
            ck.meta.emplace_back(key.substr(5), value);
        } else {
            throw ParseError("unknown checkpoint key '" + key + "'", lineno);
        }
    }

    ModelConfig c;
    try {
        auto get = [&](const char* k) -> const std::string& {
            const auto it = model_kv.find(k);
            if (it == model_kv.end()) throw std::invalid_argument(std::string("missing model.") + k);
            return it->second;
        };
        auto sz = [&](const char* k) { return static_cast<std::size_t>(parse_int(get(k))); };
        c.nodes = sz("nodes");
        c.features = sz("features");
        c.window = sz("window");
        c.horizon = sz("horizon");
        c.d_model = sz("d_model");
        c.heads = sz("heads");
        c.d_k = sz("d_k");
        c.d_v = sz("d_v");
        c.d_gcn = sz("d_gcn");
        c.d_emb = sz("d_emb");
        c.residual = parse_bool(get("residual"));
        c.share_graph_weight = parse_bool(get("share_graph_weight"));
        c.pe = parse_pe_scheme(get("pe"));
        c.reg.kind = parse_reg_kind(get("reg.kind"));
        c.reg.p = parse_double(get("reg.p"));
        c.reg.lambda = parse_double(get("reg.lambda"));
        c.reg.seed = std::stoull(get("reg.seed"));
        c.target_mean = parse_double(get("target_mean"));
        c.target_std = parse_double(get("target_std"));
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("bad model metadata: ") + e.what(), lineno);
    }

    ck.model = make_model(c, 0);

    std::map<std::string, Matrix*> slots;
    ck.model.params.visit([&](const std::string& name, Matrix& m) { slots[name] = &m; });
    std::map<std::string, bool> seen;
    ck.probe.assign(c.nodes, Matrix());

    bool ended = false;
    while (true) {
        if (line == "end") {
            ended = true;
            break;
        }
        std::istringstream hdr(line);
        std::string tag, name;
        std::size_t rows = 0, cols = 0;
        if (!(hdr >> tag >> name >> rows >> cols) || tag != "tensor") throw ParseError("expected tensor header", lineno);
        Matrix m(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
            if (!next()) throw ParseError("truncated tensor '" + name + "'", lineno);
            std::istringstream row(line);
            std::string cell;
            for (std::size_t col = 0; col < cols; ++col) {
                if (!(row >> cell)) throw ParseError("short row in tensor '" + name + "'", lineno);
                try {
                    m(r, col) = parse_double(cell);
                } catch (const std::invalid_argument& e) {
                    throw ParseError(e.what(), lineno);
                }
            }
        }
        if (name.rfind("probe", 0) == 0) {
            const auto idx = static_cast<std::size_t>(parse_int(name.substr(5)));
            if (idx >= c.nodes) throw ParseError("probe index out of range", lineno);
            ck.probe[idx] = std::move(m);
        } else {
            const auto it = slots.find(name);
            if (it == slots.end()) throw ParseError("unknown tensor '" + name + "'", lineno);
            if (it->second->rows() != rows || it->second->cols() != cols) {
                throw ParseError("tensor '" + name + "' has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                                     ", expected " + shape_str(*it->second),
                                 lineno);
            }
            *it->second = std::move(m);
            seen[name] = true;
        }
        if (!next()) break;
    }
    if (!ended) throw ParseError("checkpoint truncated before 'end'", lineno);
    for (const auto& [name, slot] : slots) {
        if (!seen[name] && !slot->empty()) throw ParseError("missing tensor '" + name + "'", lineno);
    }
    return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
    return load_checkpoint(is);
}

}  // namespace tsink
