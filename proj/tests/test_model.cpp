#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "tsink/format.hpp"
#include "tsink/gradcheck.hpp"
#include "tsink/model.hpp"

using namespace tsink;

namespace {

std::vector<std::pair<std::string, Matrix*>> flat_params(ModelParams& p) {
    std::vector<std::pair<std::string, Matrix*>> out;
    p.visit([&](const std::string& n, Matrix& m) { out.emplace_back(n, &m); });
    return out;
}

// Every coordinate of every tensor against central differences of the loss.
void check_all_gradients(ModelCase mc) {
    const LossAndGrad lg = model_backward(mc.batch, mc.model, false);
    GradientSet g = lg.grads;
    auto params = flat_params(mc.model.params);
    auto grads = flat_params(g);
    for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t k = 0; k < params[t].second->size(); ++k) {
            double& x = params[t].second->data()[k];
            const double orig = x;
            x = orig + 1e-6;
            const double up = model_loss(mc.batch, mc.model, false);
            x = orig - 1e-6;
            const double down = model_loss(mc.batch, mc.model, false);
            x = orig;
            const double fd = (up - down) / 2e-6;
            const double a = grads[t].second->data()[k];
            INFO(params[t].first, "[", k, "] analytic ", a, " numeric ", fd);
            CHECK(std::abs(a - fd) <= 1e-6 + 1e-5 * std::abs(fd));
        }
    }
}

}  // namespace

TEST_CASE("default dimensions and parameter split") {
    ModelConfig cfg;
    const TnSModel m = make_model(cfg, 1);
    CHECK(m.params.we.rows() == 16);
    CHECK(m.params.heads.size() == 8);
    CHECK(m.params.wo.cols() == 16);
    CHECK(m.params.wout.cols() == 12 * 8);
    CHECK(m.attention_param_count() == 1056);
    CHECK(m.graph_param_count() == 344);
    CHECK(param_ratio_warning(m).empty());
    cfg.d_gcn = 64;
    CHECK_FALSE(param_ratio_warning(make_model(cfg, 1)).empty());
    CHECK(m.params.count() == m.attention_param_count() + m.graph_param_count() + m.params.wout.size() + 12);
}

TEST_CASE("configuration errors") {
    ModelConfig cfg;
    cfg.d_model = 15;
    CHECK_THROWS(cfg.validate());
    cfg = ModelConfig{};
    cfg.window = 1;
    cfg.reg = Regularizer::mask();
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("learned adjacency rows are distributions") {
    const TnSModel m = make_model(ModelConfig{}, 2);
    const Adjacency a = learned_adjacency(m.params.e1, m.params.e2);
    for (const Matrix* adj : {&a.fwd, &a.bwd})
        for (std::size_t i = 0; i < adj->rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < adj->cols(); ++j) {
                CHECK((*adj)(i, j) > 0.0);
                s += (*adj)(i, j);
            }
            CHECK(std::abs(s - 1.0) < 1e-14);
        }
}

TEST_CASE("analytic gradients match finite differences everywhere") {
    SUBCASE("default options") { check_all_gradients(make_model_case(1)); }
    SUBCASE("no residual, no positional encoding") {
        ModelCase mc = make_model_case(2);
        mc.model.cfg.residual = false;
        mc.model.cfg.pe = PeScheme::None;
        check_all_gradients(mc);
    }
    SUBCASE("diagonal mask and shared graph weight") {
        ModelCase base = make_model_case(3);
        ModelConfig cfg = base.model.cfg;
        cfg.reg = Regularizer::mask();
        cfg.share_graph_weight = true;
        ModelCase mc{make_model(cfg, 9), base.batch};
        CHECK(mc.model.params.wg_b.empty());
        check_all_gradients(mc);
    }
    SUBCASE("diagonal penalty") {
        ModelCase mc = make_model_case(4);
        mc.model.cfg.reg = Regularizer::penalty(-0.1);
        check_all_gradients(mc);
    }
}

TEST_CASE("parallel and serial backward are bit-identical") {
    ModelCase mc = make_model_case(5);
    mc.model.cfg.reg = Regularizer::dropout(0.3, 0);
    for (std::size_t k = 0; k < mc.batch.dropout_seeds.size(); ++k) mc.batch.dropout_seeds[k] = 100 + k;
    const LossAndGrad a = model_backward(mc.batch, mc.model, true);
    const LossAndGrad b = serial::model_backward(mc.batch, mc.model, true);
    CHECK(a.loss == b.loss);
    std::vector<const Matrix*> ga, gb;
    a.grads.visit([&](const std::string&, const Matrix& m) { ga.push_back(&m); });
    b.grads.visit([&](const std::string&, const Matrix& m) { gb.push_back(&m); });
    for (std::size_t k = 0; k < ga.size(); ++k) CHECK(*ga[k] == *gb[k]);
}

TEST_CASE("loss is the masked MAE in original units") {
    ModelCase mc = make_model_case(6);
    const ForwardResult fr = model_forward(mc.batch, mc.model, false);
    double s = 0.0, n = 0.0;
    for (std::size_t b = 0; b < fr.predictions.size(); ++b)
        for (std::size_t k = 0; k < fr.predictions[b].size(); ++k) {
            if (mc.batch.masks[b].data()[k] == 0.0) continue;
            s += std::abs(2.0 * fr.predictions[b].data()[k] + 1.5 - mc.batch.targets[b].data()[k]);
            n += 1.0;
        }
    CHECK(model_loss(mc.batch, mc.model, false) == doctest::Approx(s / n));
    CHECK(model_backward(mc.batch, mc.model, false).loss == doctest::Approx(s / n));
    for (auto& m : mc.batch.masks) m = Matrix(m.rows(), m.cols());
    const LossAndGrad empty = model_backward(mc.batch, mc.model, false);
    CHECK(empty.count == 0);
    CHECK(empty.loss == 0.0);
}

TEST_CASE("mask variant attention has a zero diagonal") {
    ModelCase mc = make_model_case(7);
    mc.model.cfg.reg = Regularizer::mask();
    const Adjacency adj = learned_adjacency(mc.model.params.e1, mc.model.params.e2);
    const SampleTrace tr = forward_sample(mc.model, adj, mc.batch.inputs[0], false, 0);
    for (const Matrix& a : mean_attention(tr))
        for (std::size_t i = 0; i < a.rows(); ++i) CHECK(a(i, i) == 0.0);
}

TEST_CASE("checkpoint round-trip is exact") {
    ModelCase mc = make_model_case(8);
    mc.model.cfg.reg = Regularizer::penalty(-0.1);
    Checkpoint ck{mc.model, mc.batch.inputs[0], {{"variant", "penalty"}, {"seed", "3"}}};
    std::stringstream ss;
    save_checkpoint(ss, ck);
    const std::string text = ss.str();
    CHECK(text.rfind("tsink-checkpoint v1\n", 0) == 0);
    const Checkpoint back = load_checkpoint(ss);
    CHECK(back.meta == ck.meta);
    CHECK(back.probe == ck.probe);
    CHECK(back.model.cfg.reg.kind == RegKind::DiagPenalty);
    CHECK(back.model.cfg.reg.lambda == -0.1);
    CHECK(back.model.cfg.target_std == 2.0);
    std::vector<const Matrix*> a, b;
    ck.model.params.visit([&](const std::string&, const Matrix& m) { a.push_back(&m); });
    back.model.params.visit([&](const std::string&, const Matrix& m) { b.push_back(&m); });
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(*a[k] == *b[k]);

    std::stringstream again;
    save_checkpoint(again, back);
    CHECK(again.str() == text);
}

TEST_CASE("corrupt checkpoints are rejected") {
    ModelCase mc = make_model_case(9);
    std::stringstream ss;
    save_checkpoint(ss, Checkpoint{mc.model, mc.batch.inputs[0], {}});
    const std::string good = ss.str();

    std::istringstream no_header("hello\n");
    CHECK_THROWS_AS(load_checkpoint(no_header), ParseError);
    std::istringstream truncated(good.substr(0, good.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(truncated), ParseError);
    std::string bad_shape = good;
    bad_shape.replace(bad_shape.find("tensor bout 1 3"), 15, "tensor bout 1 4");
    std::istringstream shaped(bad_shape);
    CHECK_THROWS_AS(load_checkpoint(shaped), ParseError);
    std::string bad_number = good;
    const auto pos = bad_number.find("tensor we");
    bad_number.replace(bad_number.find('\n', pos) + 1, 1, "x");
    std::istringstream number(bad_number);
    CHECK_THROWS_AS(load_checkpoint(number), ParseError);
    CHECK_THROWS(load_checkpoint(std::filesystem::path("/nonexistent/ckpt")));
}

TEST_CASE("stored checkpoint reproduces its exported attention") {
    const std::string dir = TSINK_FIXTURES;
    const Checkpoint ck = load_checkpoint(std::filesystem::path(dir + "/mask_final.ckpt"));
    CHECK(ck.model.cfg.reg.kind == RegKind::DiagMask);
    const Adjacency adj = learned_adjacency(ck.model.params.e1, ck.model.params.e2);
    const std::vector<Matrix> heads = mean_attention(forward_sample(ck.model, adj, ck.probe, false, 0));
    std::ifstream is(dir + "/mask_head0.csv");
    const Matrix stored = read_matrix_csv(is);
    REQUIRE(heads.size() == 8);
    REQUIRE(stored.rows() == heads[0].rows());
    for (std::size_t k = 0; k < stored.size(); ++k) CHECK(std::abs(stored.data()[k] - heads[0].data()[k]) < 1e-12);
}
