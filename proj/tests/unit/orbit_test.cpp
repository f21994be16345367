#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <numbers>

#include "qtt/orbit.hpp"
#include "../support.hpp"

using namespace qtt;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

OrbitParams leo(bool rotation = true) {
    OrbitParams o = overhead_pass(700e3, 98.2 * kDeg, 35.0 * kDeg, -106.46 * kDeg);
    o.earth_rotation = rotation;
    return o;
}

double closed_form_range(double elevation, double a, double re) {
    const double s = std::sin(elevation);
    return std::sqrt(re * re * s * s + 2.0 * re * a + a * a) - re * s;
}

// Time after culmination at which the elevation falls to `target`.
double time_at_elevation(const OrbitParams& o, double target) {
    double lo = 0.0, hi = 1500.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (slant_range(o, mid).elevation > target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("orbital period") {
    const OrbitParams o = leo();
    const double r = 6'371'000.0 + 700e3;
    const double kepler = 2.0 * std::numbers::pi * std::sqrt(r * r * r / 3.986004418e14);
    CHECK(2.0 * std::numbers::pi / o.angular_rate() == doctest::Approx(kepler).epsilon(1e-12));
    CHECK(kepler == doctest::Approx(5917.0).epsilon(2e-4));
}

TEST_CASE("epoch anchoring") {
    OrbitParams o = leo();
    o.sat_latitude0 = 20.0 * kDeg;
    o.sat_longitude0 = 170.0 * kDeg;
    const LatLon p = sub_satellite_point(o, 0.0);
    CHECK(p.latitude == doctest::Approx(20.0 * kDeg).epsilon(1e-12));
    CHECK(p.longitude == doctest::Approx(170.0 * kDeg).epsilon(1e-12));
}

TEST_CASE("unreachable initial latitude") {
    OrbitParams o = leo();
    o.inclination = 0.0;
    o.sat_latitude0 = 0.1;
    CHECK_THROWS_AS(validate(o), std::domain_error);
    CHECK_THROWS_AS(sub_satellite_point(o, 0.0), std::domain_error);
    o = leo();
    o.altitude = -1.0;
    CHECK_THROWS_AS(validate(o), std::invalid_argument);
}

TEST_CASE("overhead geometry") {
    const GroundTrackSample s = slant_range(leo(), 0.0);
    CHECK(s.slant_range == doctest::Approx(700e3).epsilon(1e-12));
    CHECK(s.elevation == doctest::Approx(std::numbers::pi / 2).epsilon(1e-6));
    CHECK(s.beta == doctest::Approx(0.0));
}

TEST_CASE("central angle matches the spherical law of cosines") {
    const OrbitParams o = leo();
    for (double t = -600.0; t <= 600.0; t += 37.0) {
        const GroundTrackSample s = slant_range(o, t);
        if (std::fabs(t) < 10.0) continue;
        const double cos_beta = std::sin(o.qgs_latitude) * std::sin(s.sat_latitude) +
                                std::cos(o.qgs_latitude) * std::cos(s.sat_latitude) *
                                    std::cos(o.qgs_longitude - s.sat_longitude);
        CHECK(s.beta == doctest::Approx(std::acos(cos_beta)).epsilon(1e-9));
        const double r = o.radius();
        const double re = o.constants.earth_radius;
        const double d = std::sqrt(r * r + re * re - 2.0 * r * re * cos_beta);
        CHECK(s.slant_range == doctest::Approx(d).epsilon(1e-9));
    }
}

TEST_CASE("range against elevation closed form") {
    const OrbitParams o = leo();
    for (double t = -700.0; t <= 700.0; t += 13.0) {
        const GroundTrackSample s = slant_range(o, t);
        CHECK(s.slant_range == doctest::Approx(closed_form_range(s.elevation, 700e3, o.constants.earth_radius))
                                   .epsilon(1e-9));
    }
    const double at30 = closed_form_range(30.0 * kDeg, 700e3, 6'371'000.0);
    CHECK(at30 == doctest::Approx(1.2368e6).epsilon(1e-3));
    const double t30 = time_at_elevation(leo(false), 30.0 * kDeg);
    CHECK(slant_range(leo(false), t30).slant_range == doctest::Approx(at30).epsilon(1e-6));
}

TEST_CASE("horizon") {
    const OrbitParams o = leo(false);
    const double t0 = time_at_elevation(o, 0.0);
    const GroundTrackSample s = slant_range(o, t0);
    CHECK(o.radius() * std::cos(s.beta) == doctest::Approx(o.constants.earth_radius).epsilon(1e-9));
    CHECK(point_ahead_angle(o, t0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("point-ahead angle") {
    const OrbitParams o = leo();
    const double speed = std::sqrt(3.986004418e14 / 7'071'000.0);
    CHECK(point_ahead_angle(o, 0.0) == doctest::Approx(2.0 * speed / 299'792'458.0).epsilon(1e-6));
    CHECK(point_ahead_angle(o, 0.0) == doctest::Approx(50.1e-6).epsilon(2e-3));
    double prev = point_ahead_angle(o, 0.0);
    for (double t = 10.0; t < 400.0; t += 10.0) {
        const double now = point_ahead_angle(o, t);
        CHECK(now < prev);
        prev = now;
    }
}

TEST_CASE("range is symmetric about culmination") {
    const OrbitParams o = leo(false);
    for (double s = 1.0; s <= 300.0; s += 7.0) {
        CHECK(std::fabs(slant_range(o, s).slant_range - slant_range(o, -s).slant_range) < 1e-6);
    }
}

TEST_CASE("range rate bounded by orbital speed") {
    const OrbitParams o = leo();
    const double h = 1e-3;
    double max_rate = 0.0;
    for (double t = -143.0; t <= 143.0; t += 0.5) {
        const double rate = (slant_range(o, t + h).slant_range - slant_range(o, t - h).slant_range) / (2.0 * h);
        CHECK(std::fabs(rate) < o.orbital_speed());
        max_rate = std::max(max_rate, std::fabs(rate));
    }
    const double max_drift = max_rate / o.constants.c;
    CHECK(max_drift >= 1e-5);
    CHECK(max_drift <= 2.6e-5);
}

namespace {

// Largest deviation of the delay from its least-squares line over [start, start + span].
double max_linear_residual(const OrbitParams& o, double start, double span) {
    std::vector<double> t, d;
    for (int k = 0; k <= 20; ++k) {
        t.push_back(start + span * k / 20.0);
        d.push_back(propagation_delay(o, t.back(), LinkDirection::Downlink));
    }
    const auto line = testing::least_squares(t, d);
    double worst = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        worst = std::max(worst, std::fabs(d[k] - line.slope * t[k] - line.intercept));
    }
    return worst;
}

}  // namespace

// Known failure: near culmination the delay curvature is about 2.4e-7 /s, so a 1-s window deviates
// from a line by up to ~20 ns. The tracker de-spreads with a quadratic per acquisition for this reason.
TEST_CASE("delay is linear over one second to better than 1 ns" * doctest::should_fail()) {
    const OrbitParams o = leo();
    double worst = 0.0;
    for (double start = -143.0; start < 143.0; start += 1.0) worst = std::max(worst, max_linear_residual(o, start, 1.0));
    CHECK(worst < 1e-9);
}

TEST_CASE("one-second linear residual follows the curvature bound") {
    const OrbitParams o = leo();
    const double h = 1e-2;
    for (double start = -143.0; start < 143.0; start += 1.0) {
        const double mid = start + 0.5;
        const double curvature = (propagation_delay(o, mid + h, LinkDirection::Downlink) -
                                  2.0 * propagation_delay(o, mid, LinkDirection::Downlink) +
                                  propagation_delay(o, mid - h, LinkDirection::Downlink)) /
                                 (h * h);
        // x^2 / 2 on a unit interval leaves 1/12 at the ends after a least-squares line.
        CHECK(max_linear_residual(o, start, 1.0) == doctest::Approx(std::fabs(curvature) / 12.0).epsilon(0.05));
    }
    CHECK(max_linear_residual(o, -0.1, 0.2) < 1e-9);
}

TEST_CASE("uplink uses the advanced satellite position") {
    const OrbitParams o = leo();
    for (double t : {-100.0, -20.0, 0.0, 50.0, 120.0}) {
        const double down = propagation_delay(o, t, LinkDirection::Downlink);
        CHECK(down == doctest::Approx(slant_range(o, t).slant_range / o.constants.c).epsilon(1e-14));
        const double up = propagation_delay(o, t, LinkDirection::Uplink);
        CHECK(up == doctest::Approx(slant_range(o, t + down).slant_range / o.constants.c).epsilon(1e-14));
    }
    CHECK(std::fabs(propagation_delay(o, -100.0, LinkDirection::Uplink) -
                    propagation_delay(o, -100.0, LinkDirection::Downlink)) > 1e-11);
}

TEST_CASE("motion shift") {
    const OrbitParams o = leo();
    const Picos epoch = picos_from_seconds(143.0);
    const auto at_top = apply_motion({epoch}, o, LinkDirection::Downlink, epoch);
    CHECK((at_top.tags[0] - epoch).count == round_picos(700e3 / o.constants.c * 1e12).count);
    CHECK(seconds_from_picos(at_top.tags[0] - epoch) == doctest::Approx(2.335e-3).epsilon(1e-3));
    const auto up = apply_motion({epoch}, o, LinkDirection::Uplink, epoch);
    CHECK(seconds_from_picos(up.tags[0] - epoch) == doctest::Approx(2.335e-3).epsilon(1e-3));

    // Spacing contracts on approach and dilates on recession.
    const Picos gap = picos_from_seconds(0.01);
    for (double t : {-113.0, 113.0}) {
        const Picos a = epoch + picos_from_seconds(t);
        const auto shifted = apply_motion({a, a + gap}, o, LinkDirection::Downlink, epoch);
        const auto spacing = (shifted.tags[1] - shifted.tags[0]).count;
        if (t < 0) {
            CHECK(spacing < gap.count);
        } else {
            CHECK(spacing > gap.count);
        }
    }
}

TEST_CASE("superluminal geometry is rejected") {
    OrbitParams o = leo();
    o.constants.gm = 1e32;
    std::vector<Picos> tags;
    for (int k = 0; k < 1000; ++k) tags.push_back(Picos{1'000'000'000'000LL + k * 1'000'000LL});
    CHECK_THROWS_AS(apply_motion(tags, o, LinkDirection::Downlink, Picos{0}), std::logic_error);
}

TEST_CASE("delay table interpolation") {
    const OrbitParams o = leo();
    const Picos epoch = picos_from_seconds(143.0);
    const Picos begin = picos_from_seconds(10.0), end = picos_from_seconds(30.0);
    for (auto dir : {LinkDirection::Downlink, LinkDirection::Uplink}) {
        const DelayTable table(o, dir, epoch, begin, end);
        for (std::int64_t t = begin.count; t < end.count; t += 33'333'333'331LL) {
            const double exact = propagation_delay(o, seconds_from_picos(Picos{t} - epoch), dir) * 1e12;
            CHECK(std::fabs(table.delay_ps(Picos{t}) - exact) < 0.05);
            CHECK(table.evaluate(table.stencil(Picos{t})) == doctest::Approx(table.delay_ps(Picos{t})).epsilon(1e-14));
        }
    }
}

TEST_CASE("longitude normalisation") {
    CHECK(normalize_longitude(3.0 * std::numbers::pi) == doctest::Approx(std::numbers::pi));
    CHECK(normalize_longitude(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
    CHECK(normalize_longitude(0.25) == doctest::Approx(0.25));
}
