#include "qtt/orbit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qtt {

namespace {

constexpr double kPi = std::numbers::pi;

double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }

double haversine(double x) {
    const double s = std::sin(0.5 * x);
    return s * s;
}

}  // namespace

double OrbitParams::angular_rate() const {
    const double r = radius();
    return std::sqrt(constants.gm / (r * r * r));
}

double OrbitParams::orbital_speed() const { return std::sqrt(constants.gm / radius()); }

double normalize_longitude(double lon) {
    double x = std::fmod(lon, 2.0 * kPi);
    if (x <= -kPi) x += 2.0 * kPi;
    if (x > kPi) x -= 2.0 * kPi;
    return x;
}

void validate(const OrbitParams& orbit) {
    if (!(orbit.altitude > 0.0) || !std::isfinite(orbit.altitude)) {
        throw std::invalid_argument("invalid orbit field: altitude must be > 0");
    }
    if (!(orbit.inclination >= 0.0 && orbit.inclination <= kPi)) {
        throw std::invalid_argument("invalid orbit field: inclination must lie in [0, pi]");
    }
    const double limit = orbit.inclination <= 0.5 * kPi ? orbit.inclination : kPi - orbit.inclination;
    if (std::fabs(orbit.sat_latitude0) > limit + 1e-12) {
        throw std::domain_error("initial satellite latitude unreachable for this inclination");
    }
}

OrbitParams overhead_pass(double altitude, double inclination, double qgs_latitude, double qgs_longitude,
                          const PhysicalConstants& constants) {
    OrbitParams o;
    o.altitude = altitude;
    o.inclination = inclination;
    o.qgs_latitude = qgs_latitude;
    o.qgs_longitude = qgs_longitude;
    o.sat_latitude0 = qgs_latitude;
    o.sat_longitude0 = qgs_longitude;
    o.constants = constants;
    return o;
}

LatLon sub_satellite_point(const OrbitParams& orbit, double t) {
    const double sin_i = std::sin(orbit.inclination);
    const double cos_i = std::cos(orbit.inclination);
    const double ratio = std::sin(orbit.sat_latitude0) / sin_i;
    if (!std::isfinite(ratio) || std::fabs(ratio) > 1.0 + 1e-12) {
        throw std::domain_error("initial satellite latitude unreachable for this inclination");
    }
    const double phase0 = std::asin(clamp_unit(ratio));
    const double u = orbit.angular_rate() * t + phase0;

    const double lon_shift = orbit.sat_longitude0 - std::atan2(std::sin(phase0) * cos_i, std::cos(phase0));
    double lon = std::atan2(std::sin(u) * cos_i, std::cos(u)) + lon_shift;
    if (orbit.earth_rotation) {
        lon += (orbit.constants.precession - orbit.constants.earth_rotation) * t;
    }
    return {std::asin(clamp_unit(std::sin(u) * sin_i)), normalize_longitude(lon)};
}

GroundTrackSample slant_range(const OrbitParams& orbit, double t) {
    const LatLon ssp = sub_satellite_point(orbit, t);
    const double r = orbit.radius();
    const double re = orbit.constants.earth_radius;

    // cos(beta) = cos(alpha)cos(gamma) + sin(alpha)sin(gamma)cos(B), evaluated in haversine form so
    // that 1 - cos(beta) keeps full precision near the zenith.
    const double hav_beta = haversine(orbit.qgs_latitude - ssp.latitude) +
                            std::cos(orbit.qgs_latitude) * std::cos(ssp.latitude) *
                                haversine(orbit.qgs_longitude - ssp.longitude);
    const double one_minus_cos = 2.0 * std::clamp(hav_beta, 0.0, 1.0);
    const double cos_beta = 1.0 - one_minus_cos;

    const double a = r - re;
    const double d = std::sqrt(a * a + 2.0 * r * re * one_minus_cos);

    GroundTrackSample s;
    s.t = t;
    s.sat_latitude = ssp.latitude;
    s.sat_longitude = ssp.longitude;
    s.beta = 2.0 * std::asin(std::sqrt(std::clamp(hav_beta, 0.0, 1.0)));
    s.slant_range = d;
    s.elevation = std::asin(clamp_unit((r * cos_beta - re) / d));
    s.t_prop = d / orbit.constants.c;
    return s;
}

double point_ahead_angle(const OrbitParams& orbit, double t) {
    const double eps = slant_range(orbit, t).elevation;
    return 2.0 / orbit.constants.c * orbit.orbital_speed() * std::sin(eps);
}

double propagation_delay(const OrbitParams& orbit, double t, LinkDirection direction) {
    const double first = slant_range(orbit, t).t_prop;
    if (direction == LinkDirection::Downlink) return first;
    return slant_range(orbit, t + first).t_prop;
}

TagStream apply_motion(const std::vector<Picos>& tags, const OrbitParams& orbit, LinkDirection direction,
                       Picos epoch) {
    validate(orbit);
    TagStream out;
    out.tags.reserve(tags.size());
    for (Picos t : tags) {
        const double orbit_time = seconds_from_picos(t - epoch);
        const Picos shifted = t + round_picos(propagation_delay(orbit, orbit_time, direction) * 1e12);
        if (!out.tags.empty() && !(out.tags.back() < shifted)) {
            throw std::logic_error("propagation shift produced non-monotone tags; orbit parameters are unphysical");
        }
        out.tags.push_back(shifted);
    }
    return out;
}

DelayTable::DelayTable(const OrbitParams& orbit, LinkDirection direction, Picos epoch, Picos begin, Picos end,
                       double step_seconds) {
    if (!(step_seconds > 0.0)) throw std::invalid_argument("delay table step must be positive");
    begin_ps_ = static_cast<double>(begin.count);
    step_ps_ = step_seconds * 1e12;
    const double span = std::max(0.0, static_cast<double>((end - begin).count));
    const auto n = static_cast<std::size_t>(std::ceil(span / step_ps_)) + 4;
    values_.resize(n);
    const double t0 = seconds_from_picos(begin - epoch);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = t0 + (static_cast<double>(k) - 1.0) * step_seconds;
        values_[k] = propagation_delay(orbit, t, direction) * 1e12;
    }
}

double DelayTable::delay_ps(Picos t) const {
    const double pos = (static_cast<double>(t.count) - begin_ps_) / step_ps_ + 1.0;
    const double max_pos = static_cast<double>(values_.size()) - 2.0;
    const double clamped = std::clamp(pos, 1.0, max_pos - 1e-9);
    const auto k = static_cast<std::size_t>(clamped);
    const double u = clamped - static_cast<double>(k);
    const double p0 = values_[k - 1], p1 = values_[k], p2 = values_[k + 1], p3 = values_[k + 2];
    return p1 + 0.5 * u * (p2 - p0 + u * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + u * (3.0 * (p1 - p2) + p3 - p0)));
}

DelayTable::Stencil DelayTable::stencil(Picos t) const {
    const double pos = (static_cast<double>(t.count) - begin_ps_) / step_ps_ + 1.0;
    const double max_pos = static_cast<double>(values_.size()) - 2.0;
    const double clamped = std::clamp(pos, 1.0, max_pos - 1e-9);
    Stencil s;
    s.k = static_cast<std::size_t>(clamped);
    const double u = clamped - static_cast<double>(s.k);
    const double u2 = u * u;
    const double u3 = u2 * u;
    s.w = {0.5 * (-u + 2.0 * u2 - u3), 0.5 * (2.0 - 5.0 * u2 + 3.0 * u3), 0.5 * (u + 4.0 * u2 - 3.0 * u3),
           0.5 * (u3 - u2)};
    return s;
}

}  // namespace qtt
