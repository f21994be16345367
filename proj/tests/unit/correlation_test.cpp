#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qtt/correlation.hpp"
#include "qtt/orbit.hpp"
#include "qtt/photon_source.hpp"
#include "qtt/rng.hpp"

using namespace qtt;

namespace {

std::vector<Picos> shifted(const std::vector<Picos>& tags, std::int64_t by) {
    std::vector<Picos> out;
    for (Picos t : tags) out.push_back(Picos{t.count + by});
    return out;
}

struct PairedStreams {
    std::vector<Picos> local;
    std::vector<Picos> receive;
    std::size_t true_pairs = 0;
};

// Poisson pairs at `pair_rate` with Gaussian jitter on both detections, plus uncorrelated noise on
// each side, over one second.
PairedStreams paired(double pair_rate, double sigma_ps, std::int64_t tau, double noise_rate, std::uint64_t seed) {
    Rng rng(seed);
    PairedStreams s;
    const double each = sigma_ps / std::sqrt(2.0);
    double t = 0.0;
    while ((t += rng.exponential(pair_rate)) < 1.0) {
        const double base = t * 1e12;
        s.local.push_back(round_picos(base + each * rng.normal()));
        s.receive.push_back(round_picos(base + tau + each * rng.normal()));
        ++s.true_pairs;
    }
    for (Picos p : generate_background(noise_rate, 1.0, derive_seed(seed, 1)).tags) s.local.push_back(p);
    for (Picos p : generate_background(noise_rate, 1.0, derive_seed(seed, 2)).tags) s.receive.push_back(p);
    for (auto* v : {&s.local, &s.receive}) {
        std::sort(v->begin(), v->end());
        v->erase(std::unique(v->begin(), v->end()), v->end());
    }
    return s;
}

std::vector<IndexPair> brute_force(const std::vector<Picos>& local, const std::vector<Picos>& receive, Picos tau,
                                   Picos window) {
    std::vector<IndexPair> out;
    for (std::size_t i = 0; i < local.size(); ++i) {
        for (std::size_t j = 0; j < receive.size(); ++j) {
            if (std::llabs((receive[j] - local[i] - tau).count) <= window.count) out.push_back({i, j});
        }
    }
    return out;
}

}  // namespace

TEST_CASE("self-correlation with a fixed shift") {
    std::vector<Picos> bg;
    Rng rng(3);
    for (std::int64_t k = 0; k < 10000; ++k) bg.push_back(Picos{k * 100'000'000 + static_cast<std::int64_t>(rng.uniform() * 1e7)});
    const auto cr = correlate(bg, shifted(bg, 3000), CorrelationConfig{});
    CHECK(cr.found);
    CHECK(cr.tau.count == 3000);
    CHECK(cr.accidental_mean == 0.0);
    CHECK(cr.car_unbounded);
    CHECK(cr.car == static_cast<double>(cr.peak_height));
    CHECK(cr.coincidences.size() == bg.size());
}

TEST_CASE("independent streams: flat histogram and no lock") {
    const auto a = generate_background(1e5, 1.0, 11).tags;
    const auto b = generate_background(1e5, 1.0, 12).tags;
    CorrelationConfig cfg;
    const auto cr = correlate(a, b, cfg);
    CHECK_FALSE(cr.found);

    const double floor = 1e5 * 1e5 * 500e-12 * 1.0;
    CHECK(cr.accidental_mean == doctest::Approx(floor).epsilon(0.02));

    const std::int64_t lo = -cfg.search_halfwidth.count, bin = cfg.coarse_bin.count;
    const auto nbins = static_cast<std::size_t>(2 * cfg.search_halfwidth.count / bin);
    std::vector<double> hist(nbins, 0.0);
    for (Picos l : a) {
        auto it = std::lower_bound(b.begin(), b.end(), Picos{l.count + lo});
        for (; it != b.end() && (*it - l).count < -lo; ++it) hist[static_cast<std::size_t>(((*it - l).count - lo) / bin)] += 1;
    }
    double total = 0.0;
    for (double h : hist) total += h;
    CHECK(static_cast<double>(cr.histogram_entries) == total);
    const double mean = total / static_cast<double>(nbins);
    double chi2 = 0.0;
    for (double h : hist) chi2 += (h - mean) * (h - mean) / mean;
    // Upper 0.1% point of chi-square with nbins - 1 degrees of freedom (normal approximation).
    const double dof = static_cast<double>(nbins - 1);
    CHECK(chi2 < dof + 3.09 * std::sqrt(2.0 * dof));
}

TEST_CASE("pure-noise CAR approaches one") {
    const auto a = generate_background(1e6, 1.0, 21).tags;
    const auto b = generate_background(1e6, 1.0, 22).tags;
    CorrelationConfig cfg;
    cfg.search_halfwidth = Picos{100'000};
    const auto cr = correlate(a, b, cfg);
    const double off_peak_bins = 200'000.0 / 500.0 - 41.0;
    CHECK(std::fabs(cr.car - 1.0) <= 5.0 / std::sqrt(off_peak_bins));
}

TEST_CASE("offset recovered near CAR 2") {
    const std::int64_t tau = 3217;
    const auto s = paired(1000.0, 300.0, tau, 7.7e5, 31);
    const auto cr = correlate(s.local, s.receive, CorrelationConfig{});
    REQUIRE(cr.found);
    CHECK(cr.car == doctest::Approx(2.0).epsilon(0.3));
    const double bound = 3.0 * 300.0 / std::sqrt(static_cast<double>(s.true_pairs));
    CHECK(std::fabs(static_cast<double>(cr.tau.count - tau)) <= bound);
}

TEST_CASE("shift equivariance") {
    const auto s = paired(2000.0, 150.0, 12345, 2e3, 41);
    CorrelationConfig cfg;
    const auto base = correlate(s.local, s.receive, cfg);
    REQUIRE(base.found);
    Rng rng(5);
    for (int k = 0; k < 20; ++k) {
        const auto delta = static_cast<std::int64_t>(rng.uniform() * 4e9) - 2'000'000'000;
        CorrelationConfig moved = cfg;
        moved.search_center = Picos{cfg.search_center.count + delta};
        const auto cr = correlate(s.local, shifted(s.receive, delta), moved);
        REQUIRE(cr.found);
        CHECK(cr.tau.count == base.tau.count + delta);
        CHECK(cr.peak_height == base.peak_height);
    }
}

TEST_CASE("swapping streams negates the offset") {
    for (std::uint64_t seed = 50; seed < 60; ++seed) {
        const auto s = paired(2000.0, 150.0, 7777, 2e3, seed);
        const auto fwd = correlate(s.local, s.receive, CorrelationConfig{});
        const auto rev = correlate(s.receive, s.local, CorrelationConfig{});
        REQUIRE(fwd.found);
        REQUIRE(rev.found);
        CHECK(std::llabs(fwd.tau.count + rev.tau.count) <= 1);
    }
}

TEST_CASE("coincidence extraction matches brute force") {
    Rng rng(61);
    for (int instance = 0; instance < 50; ++instance) {
        const auto n = 10 + static_cast<std::size_t>(rng.uniform() * 990);
        const auto m = 10 + static_cast<std::size_t>(rng.uniform() * 990);
        std::vector<Picos> local, receive;
        for (std::size_t i = 0; i < n; ++i) local.push_back(Picos{static_cast<std::int64_t>(rng.uniform() * 1e8)});
        for (std::size_t i = 0; i < m; ++i) receive.push_back(Picos{static_cast<std::int64_t>(rng.uniform() * 1e8)});
        for (auto* v : {&local, &receive}) {
            std::sort(v->begin(), v->end());
            v->erase(std::unique(v->begin(), v->end()), v->end());
        }
        const Picos tau{static_cast<std::int64_t>(rng.uniform() * 2e5) - 100'000};
        const Picos window{1 + static_cast<std::int64_t>(rng.uniform() * 50'000)};
        CHECK(extract_coincidence_indices(local, receive, tau, window) == brute_force(local, receive, tau, window));
    }
}

TEST_CASE("correlation edge cases") {
    const auto a = generate_background(1e3, 1.0, 1).tags;
    CHECK_FALSE(correlate({}, a, CorrelationConfig{}).found);
    CHECK_FALSE(correlate(a, {}, CorrelationConfig{}).found);
    CorrelationConfig wide;
    wide.search_halfwidth = Picos{2'000'000'000'000};
    CHECK_THROWS_AS(correlate(a, a, wide), std::invalid_argument);
    CorrelationConfig bad;
    bad.coarse_bin = Picos{0};
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
}

TEST_CASE("drift compensation") {
    const auto tags = generate_background(1e4, 1.0, 71).tags;
    CHECK(apply_drift_compensation(tags, 0.0, Picos{0}) == tags);

    const double du = 1e-5;
    const Picos ref = picos_from_seconds(0.5);
    std::vector<Picos> stretched;
    for (Picos t : tags) stretched.push_back(ref + round_picos(static_cast<double>((t - ref).count) / (1.0 - du)));
    const auto back = apply_drift_compensation(stretched, du, ref);
    REQUIRE(back.size() == tags.size());
    for (std::size_t i = 0; i < tags.size(); ++i) CHECK(std::llabs((back[i] - tags[i]).count) <= 1);
    CHECK_THROWS_AS(apply_drift_compensation(tags, 1e-3, ref), std::invalid_argument);
}

TEST_CASE("drift compensation narrows an emulated-pass peak") {
    const OrbitParams orbit = overhead_pass(700e3, 98.2 * std::numbers::pi / 180.0, 0.61, -1.86);
    const Picos epoch = picos_from_seconds(143.0);
    const Picos begin = picos_from_seconds(0.0);
    const auto s = paired(1e4, 220.0, 0, 0.0, 81);
    std::vector<Picos> local = shifted(s.local, begin.count);
    const auto moved = apply_motion(shifted(s.receive, begin.count), orbit, LinkDirection::Downlink, epoch);

    const Picos mid = begin + picos_from_seconds(0.5);
    const double t_mid = seconds_from_picos(mid - epoch);
    const double d0 = propagation_delay(orbit, t_mid, LinkDirection::Downlink);
    const double rate = (propagation_delay(orbit, t_mid + 1e-3, LinkDirection::Downlink) -
                         propagation_delay(orbit, t_mid - 1e-3, LinkDirection::Downlink)) / 2e-3;
    CHECK(std::fabs(rate) > 1e-5);
    const Picos delay = round_picos(d0 * 1e12);
    const auto compensated = apply_drift_compensation(moved.tags, rate, mid + delay);

    const Picos bin{50};
    const double jitter = peak_fwhm(s.local, s.receive, Picos{0}, Picos{5000}, bin);
    const double with = peak_fwhm(local, compensated, delay, Picos{5000}, bin);
    const double without = peak_fwhm(local, moved.tags, delay, Picos{40'000'000}, Picos{2000});
    CHECK(jitter > 0.0);
    CHECK(with <= 2.0 * jitter);
    CHECK(without >= 10.0 * jitter);
}
