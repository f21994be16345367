#pragma once

#include <array>
#include <vector>

#include "qtt/core_types.hpp"

namespace qtt {

// Circular sun-synchronous orbit seen from one ground station. Angles in radians, lengths in metres,
// orbit time t in seconds from the epoch at which the satellite sits at (sat_lat0, sat_lon0).
struct OrbitParams {
    double altitude = 700e3;
    double inclination = 98.2 * std::numbers::pi / 180.0;
    double qgs_latitude = 0.0;
    double qgs_longitude = 0.0;
    double sat_latitude0 = 0.0;
    double sat_longitude0 = 0.0;
    bool earth_rotation = true;  // include (omega_p - omega_E) * t in the sub-satellite longitude
    PhysicalConstants constants{};

    double radius() const { return constants.earth_radius + altitude; }
    double angular_rate() const;   // omega_0 = sqrt(GM / r^3)
    double orbital_speed() const;  // sqrt(GM / r)
};

// Throws std::invalid_argument / std::domain_error on violated invariants.
void validate(const OrbitParams& orbit);

// Satellite starts overhead of the ground station.
OrbitParams overhead_pass(double altitude, double inclination, double qgs_latitude, double qgs_longitude,
                          const PhysicalConstants& constants = {});

struct LatLon {
    double latitude = 0.0;
    double longitude = 0.0;  // normalised to (-pi, pi]
};

struct GroundTrackSample {
    double t = 0.0;
    double sat_latitude = 0.0;
    double sat_longitude = 0.0;
    double beta = 0.0;           // geocentric angle ground station -> sub-satellite point
    double slant_range = 0.0;    // m
    double elevation = 0.0;      // rad
    double t_prop = 0.0;         // s, slant_range / c
};

enum class LinkDirection { Downlink, Uplink };  // alpha: satellite -> ground, beta: ground -> satellite

LatLon sub_satellite_point(const OrbitParams& orbit, double t);
GroundTrackSample slant_range(const OrbitParams& orbit, double t);
double point_ahead_angle(const OrbitParams& orbit, double t);

// One-way light time for a photon sent at orbit time t. The uplink is evaluated against the satellite
// position advanced by one light time (single fixed-point iteration).
double propagation_delay(const OrbitParams& orbit, double t, LinkDirection direction);

// Shifts source-frame tags by the propagation delay. `epoch` is the tag time corresponding to
// orbit time zero. Throws std::logic_error if the output would not be strictly increasing.
TagStream apply_motion(const std::vector<Picos>& tags, const OrbitParams& orbit, LinkDirection direction,
                       Picos epoch);

double normalize_longitude(double lon);

// Uniformly sampled propagation delay (picoseconds) with cubic Catmull-Rom interpolation. Used
// where the delay is needed for many tags under many trial orbits.
class DelayTable {
public:
    DelayTable() = default;
    // Covers tag times [begin, end) with the given grid step (seconds).
    DelayTable(const OrbitParams& orbit, LinkDirection direction, Picos epoch, Picos begin, Picos end,
               double step_seconds = 0.05);

    double delay_ps(Picos t) const;

    // Interpolation weights for one time; valid for every table built over the same range and step.
    struct Stencil {
        std::size_t k = 1;
        std::array<double, 4> w{};
    };
    Stencil stencil(Picos t) const;
    double evaluate(const Stencil& s) const {
        return s.w[0] * values_[s.k - 1] + s.w[1] * values_[s.k] + s.w[2] * values_[s.k + 1] +
               s.w[3] * values_[s.k + 2];
    }

private:
    double begin_ps_ = 0.0;
    double step_ps_ = 1.0;
    std::vector<double> values_;  // values_[k] at begin + (k - 1) * step
};

}  // namespace qtt
