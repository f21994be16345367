#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "qtt/rng.hpp"
#include "qtt/scenario_io.hpp"
#include "qtt/simulation.hpp"
#include "qtt/stability.hpp"
#include "qtt/two_way_sync.hpp"
#include "../support.hpp"

using namespace qtt;

namespace {

Scenario quiet_night(double duration) {
    Scenario s = load_scenario(QTT_SOURCE_DIR "/scenarios/stationary_night.scenario");
    s.duration = duration;
    s.clock_a.white_fm_amplitude = 0.0;
    s.clock_b.white_fm_amplitude = 0.0;
    return s;
}

std::vector<Picos> delayed(const std::vector<Picos>& tags, std::int64_t by) {
    std::vector<Picos> out;
    for (Picos t : tags) out.push_back(Picos{t.count + by});
    return out;
}

std::vector<double> deltas(const std::vector<SyncRecord>& records) {
    std::vector<double> out;
    for (const SyncRecord& r : records) {
        if (r.found()) out.push_back(static_cast<double>(r.delta.count));
    }
    return out;
}

}  // namespace

TEST_CASE("absolute offset algebra") {
    CHECK(absolute_offset(Picos{10}, Picos{4}, Picos{0}, Picos{0}).count == 3);
    CHECK(absolute_offset(Picos{77}, Picos{77}, Picos{500}, Picos{500}).count == 0);
    CHECK(absolute_offset(Picos{3}, Picos{0}, Picos{0}, Picos{0}).count == 2);
    CHECK(absolute_offset(Picos{0}, Picos{3}, Picos{0}, Picos{0}).count == -2);
    Rng rng(1);
    for (int i = 0; i < 10000; ++i) {
        const auto big = [&] { return static_cast<std::int64_t>((rng.uniform() * 2.0 - 1.0) * 1e13); };
        const std::int64_t t = big(), delta0 = big();
        CHECK(absolute_offset(Picos{t + delta0}, Picos{t - delta0}, Picos{0}, Picos{0}).count == delta0);
    }
}

TEST_CASE("static clocks") {
    Scenario s = quiet_night(20.0);
    s.clock_a = {};
    s.clock_b = {};
    s.clock_b.delta0 = Picos{1000};
    const auto sim = simulate(s);
    const double bound = 6.0 * s.source_a.pair_jitter_sigma * 1e12 / std::sqrt(1000.0);
    for (ClockMode mode : {ClockMode::Drifting, ClockMode::Synchronized}) {
        const auto records = run_stationary_sync(sim.streams, s.acquisition, mode);
        REQUIRE(records.size() == 20);
        for (const SyncRecord& r : records) {
            REQUIRE(r.found());
            CHECK(static_cast<double>(std::llabs(r.delta.count - 1000)) <= bound);
            CHECK(static_cast<double>(r.t_prop_measured.count) == doctest::Approx(1644.5 / 299'792'458.0 * 1e12).epsilon(0.01));
        }
    }
}

TEST_CASE("drifting mode follows the injected drift") {
    const Scenario s = quiet_night(60.0);
    const auto sim = simulate(s);
    const auto records = run_stationary_sync(sim.streams, s.acquisition, ClockMode::Drifting);
    std::vector<double> t, d;
    for (const SyncRecord& r : records) {
        REQUIRE(r.found());
        t.push_back(seconds_from_picos(r.t_mid));
        d.push_back(static_cast<double>(r.delta.count));
    }
    CHECK(testing::least_squares(t, d).slope == doctest::Approx(450.0).epsilon(0.01));
}

TEST_CASE("drift estimate with noiseless affine clocks") {
    Scenario s = quiet_night(12.0);
    s.source_a.pair_jitter_sigma = 0.0;
    s.source_b.pair_jitter_sigma = 0.0;
    s.source_a.background_rate = s.source_b.background_rate = 0.0;
    s.source_a.dark_rate = s.source_b.dark_rate = 0.0;
    const auto sim = simulate(s);
    for (ClockMode mode : {ClockMode::Drifting, ClockMode::Synchronized}) {
        const auto records = run_stationary_sync(sim.streams, s.acquisition, mode);
        for (std::size_t k = 2; k < records.size(); ++k) {
            CHECK(std::fabs(records[k].drift_alpha - 4.5e-10) <= 1e-12);
            CHECK(std::fabs(records[k].drift_beta + 4.5e-10) <= 1e-12);
        }
    }
}

TEST_CASE("common propagation change cancels") {
    const Scenario s = quiet_night(15.0);
    auto sim = simulate(s);
    for (ClockMode mode : {ClockMode::Drifting, ClockMode::Synchronized}) {
        const auto base = run_stationary_sync(sim.streams, s.acquisition, mode);
        SiteStreams longer = sim.streams;
        longer.bob_receive.tags = delayed(sim.streams.bob_receive.tags, 5000);
        longer.alice_receive.tags = delayed(sim.streams.alice_receive.tags, 5000);
        const auto moved = run_stationary_sync(longer, s.acquisition, mode);
        REQUIRE(moved.size() == base.size());
        for (std::size_t k = 0; k < base.size(); ++k) {
            CHECK(moved[k].delta == base[k].delta);
            CHECK(moved[k].t_prop_measured.count == base[k].t_prop_measured.count + 5000);
        }
    }
}

TEST_CASE("swapping the sites negates the offset") {
    Scenario s = load_scenario(QTT_SOURCE_DIR "/scenarios/stationary_night.scenario");
    s.duration = 15.0;
    const auto sim = simulate(s);
    SiteStreams swapped;
    swapped.alice_local.tags = sim.streams.bob_local.tags;
    swapped.bob_local.tags = sim.streams.alice_local.tags;
    swapped.alice_receive.tags = sim.streams.bob_receive.tags;
    swapped.bob_receive.tags = sim.streams.alice_receive.tags;
    for (ClockMode mode : {ClockMode::Drifting, ClockMode::Synchronized}) {
        const auto fwd = run_stationary_sync(sim.streams, s.acquisition, mode);
        const auto rev = run_stationary_sync(swapped, s.acquisition, mode);
        REQUIRE(fwd.size() == rev.size());
        for (std::size_t k = 0; k < fwd.size(); ++k) CHECK(rev[k].delta.count == -fwd[k].delta.count);
    }
}

TEST_CASE("drifting residuals are zero-mean white noise") {
    const Scenario s = quiet_night(200.0);
    const auto sim = simulate(s);
    const auto records = run_stationary_sync(sim.streams, s.acquisition, ClockMode::Drifting);
    std::vector<double> t, d;
    for (const SyncRecord& r : records) {
        t.push_back(seconds_from_picos(r.t_mid));
        d.push_back(static_cast<double>(r.delta.count));
    }
    const auto line = testing::least_squares(t, d);
    PhaseSeries residual;
    for (std::size_t k = 0; k < t.size(); ++k) residual.x.push_back((d[k] - line.slope * t[k] - line.intercept) * 1e-12);
    CHECK(std::fabs(testing::mean(residual.x)) < 1e-15);
    const auto fit = fit_loglog_slope(overlapping_adev(residual, default_taus(residual)), 1.0, 50.0);
    CHECK(fit.slope == doctest::Approx(-1.0).epsilon(0.15));
}

TEST_CASE("synchronisation lost after repeated misses") {
    const Scenario s = quiet_night(30.0);
    auto sim = simulate(s);
    sim.streams.alice_receive.tags = slice_tags(sim.streams.alice_receive.tags, Picos{0}, picos_from_seconds(10.0));
    try {
        run_stationary_sync(sim.streams, s.acquisition, ClockMode::Drifting);
        FAIL("expected SyncLostError");
    } catch (const SyncLostError& e) {
        CHECK(e.index() == 15);
    }
    AcquisitionConfig lenient = s.acquisition;
    lenient.max_missed = 100;
    const auto records = run_stationary_sync(sim.streams, lenient, ClockMode::Drifting);
    CHECK(records[9].found());
    CHECK_FALSE(records[12].found_beta);
    CHECK(records[12].found_alpha);
}

TEST_CASE("acquisition validation") {
    AcquisitionConfig cfg;
    cfg.acquisition_time = 0.0;
    CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
    cfg = {};
    cfg.max_missed = -1;
    CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
}
