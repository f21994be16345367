#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "qtt/correlation.hpp"
#include "qtt/orbit.hpp"
#include "qtt/two_way_sync.hpp"

namespace qtt {

// Known pass geometry: ground station, constants and the tag time at which the satellite is
// overhead. Altitude and inclination in the template are ignored; they are what the tracker estimates.
struct PassGeometry {
    OrbitParams orbit_template{};
    Picos epoch{0};

    OrbitParams with(double altitude, double inclination) const {
        OrbitParams o = orbit_template;
        o.altitude = altitude;
        o.inclination = inclination;
        return o;
    }
};

struct CoarseScanConfig {
    double a_min = 650e3;
    double a_max = 750e3;
    double a_step = 133.0;
    double theta_min = 96.0 * std::numbers::pi / 180.0;
    double theta_max = 100.0 * std::numbers::pi / 180.0;
    double theta_step = 0.1 * std::numbers::pi / 180.0;
    CorrelationConfig correlation{};
    std::size_t scan_acquisitions = 1;  // acquisitions from the start of the data used by the scan

    std::vector<double> altitudes() const;
    std::vector<double> inclinations() const;
};

void validate(const CoarseScanConfig& cfg);

struct CoarseScanResult {
    std::vector<double> altitudes;
    std::vector<double> inclinations;
    // Row-major: index = theta_index * altitudes.size() + a_index.
    std::vector<std::int64_t> peak_height;
    std::vector<std::uint8_t> found;
    std::vector<double> significance;
    std::size_t best_a_index = 0;
    std::size_t best_theta_index = 0;
    // Per cell, valid where found: residual offset after removing the cell's delay (window centre)
    // and its rate from a regression over the coincidences.
    std::vector<std::int64_t> residual_tau;
    std::vector<double> residual_rate;
    Picos best_tau{0};  // residual offset at the highest-peak cell
    double max_significance = 0.0;

    double best_altitude() const { return altitudes.at(best_a_index); }
    double best_inclination() const { return inclinations.at(best_theta_index); }
    std::size_t cell(std::size_t theta_index, std::size_t a_index) const {
        return theta_index * altitudes.size() + a_index;
    }
    // True when all cells that locked form one 8-connected region.
    bool island_contiguous() const;
};

class ScanFailedError : public std::runtime_error {
public:
    explicit ScanFailedError(double max_significance)
        : std::runtime_error("coarse orbit scan failed: no cell locked (max significance " +
                             std::to_string(max_significance) + ")"),
          max_significance_(max_significance) {}
    double max_significance() const { return max_significance_; }

private:
    double max_significance_;
};

class DegenerateGeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Removes a modelled offset tau_model(t_send) from receive tags, solving t_send = t_r - tau_model(t_send)
// by fixed-point iteration. `model_ps` maps a tag time to an offset in picoseconds. The output has the
// same length as the input (index i maps to receive[i]) and is non-decreasing.
template <typename Model>
std::vector<Picos> remove_offset_model(const std::vector<Picos>& receive, Model&& model_ps) {
    std::vector<Picos> out;
    out.reserve(receive.size());
    for (Picos t : receive) {
        double offset = model_ps(t);
        offset = model_ps(t - round_picos(offset));
        offset = model_ps(t - round_picos(offset));
        Picos shifted = t - round_picos(offset);
        if (!out.empty() && shifted < out.back()) shifted = out.back();
        out.push_back(shifted);
    }
    return out;
}

// Grid search over (altitude, inclination) on the tags in [begin, end). Each cell's delay is removed
// with a quadratic per acquisition, then correlated with the scan configuration.
CoarseScanResult coarse_scan(const std::vector<Picos>& local, const std::vector<Picos>& receive,
                             LinkDirection direction, const CoarseScanConfig& cfg, const PassGeometry& pass,
                             Picos begin, Picos end);

struct TwoWayCell {
    std::size_t a_index = 0;
    std::size_t theta_index = 0;
    double range_misfit_ps = 0.0;  // true minus cell round-trip light time
    double rate_misfit = 0.0;      // true minus cell round-trip rate
    double distance_steps = 0.0;   // misfit mapped to grid steps
};

// Among cells locked in both directions, the one whose round-trip light time and rate best match
// the measurement. Clock offset and drift cancel in the sum of the two residuals. `t_ref` is the
// centre of the scan window. Throws ScanFailedError when no cell locks in both directions.
TwoWayCell select_two_way_cell(const CoarseScanResult& alpha, const CoarseScanResult& beta, const PassGeometry& pass,
                               Picos t_ref);

struct FitPoint {
    Picos t_local;  // sender local tag
    Picos tau;      // raw receive - local
};

struct OrbitFitState {
    double a_fit = 0.0;
    double theta_fit = 0.0;
    double m = 0.0;     // fractional drift
    double b_ps = 0.0;  // offset at t = 0
    std::vector<FitPoint> accumulated_coincidences;  // time-sorted
    std::array<double, 16> covariance{};             // row-major over (a, theta, m, b)
    double residual_rms_ps = 0.0;
    int iterations = 0;
    bool converged = false;

    double correlation(int i, int j) const;
};

struct FitOptions {
    std::size_t min_points = 100;
    int max_iterations = 50;
    double outlier_threshold_ps = 5000.0;  // 5 x default coincidence window
    double table_step = 0.05;              // s, delay interpolation grid
};

// Model offset (ps) at tag time t for the given state.
double fitted_offset_ps(const OrbitFitState& state, LinkDirection direction, const PassGeometry& pass, Picos t);

// Separable least squares of tau = T_prop(t; a, theta) + m t + b over the accumulated coincidences:
// damped Gauss-Newton on (a, theta) with a finite-difference Jacobian, (m, b) solved exactly for
// every trial (a, theta). Throws std::invalid_argument below min_points and DegenerateGeometryError
// on singular normal equations.
OrbitFitState precise_fit(const OrbitFitState& state, LinkDirection direction, const PassGeometry& pass,
                          const FitOptions& options = {});

struct FitSnapshot {
    std::size_t acq_index = 0;
    Picos t_mid{0};
    std::array<double, 4> alpha{};  // a, theta, m, b_ps
    std::array<double, 4> beta{};
    double corr_a_m_alpha = 0.0;
    double corr_a_m_beta = 0.0;
    std::size_t points_alpha = 0;
    std::size_t points_beta = 0;
};

struct TrackingResult {
    CoarseScanResult scan_alpha;
    CoarseScanResult scan_beta;
    TwoWayCell start_cell;
    std::vector<SyncRecord> synchronized;
    std::vector<SyncRecord> drifting;
    std::vector<FitSnapshot> history;
    OrbitFitState final_alpha;
    OrbitFitState final_beta;
};

TrackingResult run_tracked_sync(const SiteStreams& streams, const AcquisitionConfig& cfg,
                                const CoarseScanConfig& scan_cfg, const PassGeometry& pass,
                                const FitOptions& fit_options = {});

}  // namespace qtt
