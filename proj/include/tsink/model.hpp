// Time&Space forecaster: per-node input embedding + positional encoding,
// multi-head temporal attention over the input window, one graph convolution
// per time step with learned forward/backward adjacency, and a linear readout
// over the flattened window. Gradients are derived by hand, layer by layer.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tsink/attention.hpp"
#include "tsink/data.hpp"
#include "tsink/linalg.hpp"

namespace tsink {

struct ModelConfig {
    std::size_t nodes = 20;
    std::size_t features = 1;  // d_x
    std::size_t window = 12;   // W_in
    std::size_t horizon = 12;  // H_out
    std::size_t d_model = 16;
    std::size_t heads = 8;
    std::size_t d_k = 2;
    std::size_t d_v = 2;
    std::size_t d_gcn = 8;
    std::size_t d_emb = 2;
    bool residual = true;
    bool share_graph_weight = false;  // one Wg for both adjacency directions
    PeScheme pe = PeScheme::AbsoluteSinusoidal;
    Regularizer reg;
    // Predictions are de-normalized with these before the loss.
    double target_mean = 0.0;
    double target_std = 1.0;

    void validate() const;
};

struct ModelParams {
    Matrix we, be;  // d_model × d_x, 1 × d_model
    std::vector<AttnWeights> heads;
    Matrix wo;          // d_model × heads·d_v
    Matrix e1, e2;      // N × d_emb
    Matrix wg_f, wg_b;  // d_model × d_gcn
    Matrix bg;          // 1 × d_gcn
    Matrix wout;        // H_out × W_in·d_gcn
    Matrix bout;        // 1 × H_out

    /// Calls f(name, matrix) for every tensor in a fixed order.
    template <class F>
    void visit(F&& f) { visit_impl(*this, f); }
    template <class F>
    void visit(F&& f) const { visit_impl(*this, f); }

    /// Same shapes, all zeros.
    ModelParams zeros_like() const;
    std::size_t count() const;
    ModelParams& operator+=(const ModelParams& other);

private:
    template <class Self, class F>
    static void visit_impl(Self& self, F& f) {
        f("we", self.we);
        f("be", self.be);
        for (std::size_t h = 0; h < self.heads.size(); ++h) {
            const std::string p = "head" + std::to_string(h) + ".";
            f(p + "wq", self.heads[h].wq);
            f(p + "wk", self.heads[h].wk);
            f(p + "wv", self.heads[h].wv);
        }
        f("wo", self.wo);
        f("e1", self.e1);
        f("e2", self.e2);
        f("wg_f", self.wg_f);
        f("wg_b", self.wg_b);
        f("bg", self.bg);
        f("wout", self.wout);
        f("bout", self.bout);
    }
};

/// Gradient buffers share the parameter layout.
using GradientSet = ModelParams;

struct TnSModel {
    ModelConfig cfg;
    ModelParams params;

    /// Parameters of the temporal block.
    std::size_t attention_param_count() const;
    /// Parameters of the graph block, node embeddings included.
    std::size_t graph_param_count() const;
};

/// Attention projections use the attention init; other weights are uniform in
/// ±1/√fan_in, node embeddings uniform in ±1, biases zero.
TnSModel make_model(const ModelConfig& cfg, std::uint64_t seed);

/// A warning message when the attention/graph parameter ratio leaves [3, 5],
/// otherwise empty.
std::string param_ratio_warning(const TnSModel& model);

struct Adjacency {
    Matrix logits;  // E1·E2ᵀ before the relu
    Matrix fwd;     // row_softmax(relu(E1·E2ᵀ))
    Matrix bwd;     // row_softmax(relu(E2·E1ᵀ))
};

Adjacency learned_adjacency(const Matrix& e1, const Matrix& e2);

/// Everything one window's forward pass keeps for backward and analysis.
struct SampleTrace {
    std::vector<Matrix> embedded;  // per node, W × d_model after PE
    std::vector<MultiHeadResult> attn;  // per node
    std::vector<Matrix> pre_act;   // per step, N × d_gcn
    std::vector<Matrix> act;       // per step, N × d_gcn
    Matrix pred;                   // N × H_out, model units
};

/// One window. `dropout_seed` keys the dropout masks (node n, head h).
SampleTrace forward_sample(const TnSModel& model, const Adjacency& adj, const std::vector<Matrix>& inputs,
                           bool train_mode, std::uint64_t dropout_seed);

struct Batch {
    std::vector<std::vector<Matrix>> inputs;  // B × N × (W × d_x)
    std::vector<Matrix> targets;              // B × (N × H_out), original units
    std::vector<Matrix> masks;                // B × (N × H_out)
    std::vector<std::uint64_t> dropout_seeds; // B
};

Batch make_batch(const std::vector<WindowSample>& samples, std::uint64_t dropout_root = 0);

struct ForwardResult {
    std::vector<Matrix> predictions;  // B × (N × H_out), model units
    std::vector<SampleTrace> traces;
};

ForwardResult model_forward(const Batch& batch, const TnSModel& model, bool train_mode);

struct LossAndGrad {
    double loss = 0.0;  // masked MAE in original units
    GradientSet grads;
    std::size_t count = 0;  // masked entries
};

/// Masked MAE; subgradient sign(pred − target), 0 at ties. Samples are
/// processed on OpenMP threads with per-sample gradient buffers summed in
/// sample order, so the result does not depend on the thread count.
LossAndGrad model_backward(const Batch& batch, const TnSModel& model, bool train_mode);

/// Loss only (for finite differences).
double model_loss(const Batch& batch, const TnSModel& model, bool train_mode);

namespace serial {
/// Single-threaded reference for tsink::model_backward; bit-identical.
LossAndGrad model_backward(const Batch& batch, const TnSModel& model, bool train_mode);
}  // namespace serial

/// Per-head attention averaged over the nodes of one window.
std::vector<Matrix> mean_attention(const SampleTrace& trace);

// Checkpoints are text: a version line, key = value metadata, then each
// tensor as "tensor <name> <rows> <cols>" followed by one row per line with
// 17 significant digits.
inline constexpr const char* kCheckpointVersion = "tsink-checkpoint v1";

struct Checkpoint {
    TnSModel model;
    std::vector<Matrix> probe;  // one W × d_x window per node, normalized
    std::vector<std::pair<std::string, std::string>> meta;
};

void save_checkpoint(std::ostream& os, const Checkpoint& ck);
Checkpoint load_checkpoint(std::istream& is);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tsink
