#include <doctest.h>

#include <cmath>
#include <sstream>

#include "tsink/data.hpp"
#include "tsink/format.hpp"

using namespace tsink;

namespace {

const std::string kFixture = std::string(TSINK_FIXTURES) + "/sensors.csv";

}  // namespace

TEST_CASE("synthetic dataset shape, splits and determinism") {
    SyntheticConfig cfg;
    cfg.seed = 3;
    const SeriesDataset a = gen_synthetic(cfg);
    CHECK(a.nodes == 20);
    CHECK(a.steps == 2016);
    CHECK(a.features == 1);
    CHECK(a.train.begin == 0);
    CHECK(a.train.end == 1411);
    CHECK(a.val.end == 1612);
    CHECK(a.test.end == 2016);
    CHECK(a.values == gen_synthetic(cfg).values);
    cfg.seed = 4;
    CHECK(a.values != gen_synthetic(cfg).values);
}

TEST_CASE("scaler is fitted on the training split only") {
    SyntheticConfig cfg;
    cfg.nodes = 3;
    cfg.steps = 300;
    const SeriesDataset ds = gen_synthetic(cfg);
    double s = 0.0, ss = 0.0, n = 0.0;
    for (std::size_t k = 0; k < ds.nodes; ++k)
        for (std::size_t t = ds.train.begin; t < ds.train.end; ++t) {
            s += ds.value(k, t);
            ss += ds.value(k, t) * ds.value(k, t);
            n += 1;
        }
    const double mean = s / n;
    CHECK(ds.scaler.mean[0] == doctest::Approx(mean));
    CHECK(ds.scaler.std[0] == doctest::Approx(std::sqrt(ss / n - mean * mean)));
    CHECK(ds.scaler.denormalize(ds.scaler.normalize(7.25, 0), 0) == doctest::Approx(7.25));
}

TEST_CASE("time-of-day feature") {
    SyntheticConfig cfg;
    cfg.nodes = 2;
    cfg.steps = 600;
    cfg.time_of_day = true;
    const SeriesDataset ds = gen_synthetic(cfg);
    CHECK(ds.features == 2);
    CHECK(ds.value(1, 288, 1) == 0.0);
    CHECK(ds.value(1, 144, 1) == doctest::Approx(0.5));
}

TEST_CASE("too-short series is rejected") {
    SyntheticConfig cfg;
    cfg.steps = 10;
    CHECK_THROWS_AS(gen_synthetic(cfg, 24), std::invalid_argument);
}

TEST_CASE("noiseless isolated sinusoids are predicted by one-period persistence") {
    SyntheticConfig cfg;
    cfg.nodes = 4;
    cfg.noise_std = 0.0;
    cfg.graph_density = 0.0;
    const SeriesDataset ds = gen_synthetic(cfg);
    double err = 0.0;
    for (std::size_t k = 0; k < ds.nodes; ++k)
        for (std::size_t t = kStepsPerDay; t < ds.steps; ++t) err = std::max(err, std::abs(ds.value(k, t) - ds.value(k, t - kStepsPerDay)));
    CHECK(err < 1e-9);
}

TEST_CASE("window counts") {
    CHECK(window_count(100, 12, 12, 1) == 77);
    CHECK(window_count(100, 12, 12, 5) == 16);
    CHECK(window_count(24, 12, 12, 1) == 1);
    CHECK(window_count(23, 12, 12, 1) == 0);
    SyntheticConfig cfg;
    const SeriesDataset ds = gen_synthetic(cfg);
    CHECK(WindowSet(ds, Split::Train, 12, 12).size() == 1388);
    CHECK(WindowSet(ds, Split::Val, 12, 12).size() == 178);
    CHECK(WindowSet(ds, Split::Test, 12, 12).size() == 381);
}

TEST_CASE("window contents") {
    SyntheticConfig cfg;
    cfg.nodes = 3;
    cfg.steps = 400;
    const SeriesDataset ds = gen_synthetic(cfg);
    const WindowSet val(ds, Split::Val, 6, 4, 2);
    const WindowSample s = val[3];
    CHECK(s.start == ds.val.begin + 6);
    CHECK(s.inputs.size() == 3);
    CHECK(s.inputs[2](5, 0) == doctest::Approx(ds.scaler.normalize(ds.value(2, s.start + 5), 0)));
    CHECK(s.target(1, 0) == ds.value(1, s.start + 6));
    CHECK(s.target(1, 3) == ds.value(1, s.start + 9));
    CHECK(s.target_mask(0, 0) == 1.0);
    CHECK(s.start + 10 <= ds.val.end);
}

TEST_CASE("CSV ingestion with a header and missing readings") {
    const SeriesDataset ds = ingest_csv(kFixture);
    CHECK(ds.nodes == 3);
    CHECK(ds.steps == 40);
    CHECK(ds.timestamps[1] == "2012-03-01 00:05:00");
    CHECK(ds.value(0, 0) == 60.0);
    CHECK_FALSE(ds.is_observed(1, 7));
    CHECK(ds.is_observed(1, 6));
    const WindowSet w(ds, Split::Train, 2, 3);
    bool saw_masked = false;
    for (std::size_t k = 0; k < w.size(); ++k) saw_masked |= w[k].target_mask(1, 0) == 0.0;
    CHECK(saw_masked);
}

TEST_CASE("CSV export and re-import") {
    SyntheticConfig cfg;
    cfg.nodes = 2;
    cfg.steps = 50;
    const SeriesDataset ds = gen_synthetic(cfg);
    std::stringstream ss;
    export_csv(ss, ds);
    const SeriesDataset back = read_wide_csv(ss);
    CHECK(back.values == ds.values);
    CHECK(back.timestamps == ds.timestamps);
}

TEST_CASE("malformed CSV") {
    std::istringstream ragged("t,a,b\n0,1,2\n1,3\n");
    CHECK_THROWS_AS(read_wide_csv(ragged), ParseError);
    std::istringstream text("t,a\n0,1\n1,abc\n");
    try {
        read_wide_csv(text);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    std::istringstream empty("t,a\n");
    CHECK_THROWS_AS(read_wide_csv(empty), ParseError);
}
