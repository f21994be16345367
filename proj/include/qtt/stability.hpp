#pragma once

#include <cstddef>
#include <vector>

#include "qtt/two_way_sync.hpp"

namespace qtt {

// Phase samples in seconds at interval tau0. Values at the indices listed in `gaps` are ignored.
struct PhaseSeries {
    std::vector<double> x;
    double tau0 = 1.0;
    std::vector<std::size_t> gaps;
};

void validate(const PhaseSeries& series);

struct DeviationPoint {
    double tau = 0.0;
    double dev = 0.0;
    std::size_t terms = 0;  // second differences that entered the estimate
};

// Delta column of SyncRecords as a phase series; acquisitions without lock become gaps.
PhaseSeries phase_series_from_records(const std::vector<SyncRecord>& records, double tau0);

// Octave-spaced tau = 2^k tau0 up to N tau0 / 4.
std::vector<double> default_taus(const PhaseSeries& series);

std::vector<DeviationPoint> overlapping_adev(const PhaseSeries& series, const std::vector<double>& taus);
std::vector<DeviationPoint> modified_adev(const PhaseSeries& series, const std::vector<double>& taus);
// tau * MDEV / sqrt(3).
std::vector<DeviationPoint> time_deviation(const PhaseSeries& series, const std::vector<double>& taus);

struct LogLogFit {
    double slope = 0.0;
    double intercept = 0.0;  // natural log of the deviation at tau = 1 s
    std::size_t used = 0;
    std::size_t excluded = 0;  // nonpositive or non-finite deviations inside the range
};

// Least-squares slope of log(dev) against log(tau) over tau_min <= tau <= tau_max.
LogLogFit fit_loglog_slope(const std::vector<DeviationPoint>& points, double tau_min, double tau_max);

}  // namespace qtt
