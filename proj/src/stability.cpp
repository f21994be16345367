#include "qtt/stability.hpp"

#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace qtt {

namespace {

std::vector<std::uint8_t> gap_mask(const PhaseSeries& s) {
    std::vector<std::uint8_t> mask(s.x.size(), 0);
    for (std::size_t g : s.gaps) mask[g] = 1;
    return mask;
}

std::size_t multiple_of_tau0(const PhaseSeries& s, double tau) {
    const double ratio = tau / s.tau0;
    const double m = std::round(ratio);
    if (!(m >= 1.0) || std::fabs(ratio - m) > 1e-9 * std::max(1.0, ratio)) {
        throw std::invalid_argument("tau " + std::to_string(tau) + " s is not a positive integer multiple of tau0");
    }
    return static_cast<std::size_t>(m);
}

}  // namespace

void validate(const PhaseSeries& series) {
    if (series.x.size() < 3) throw std::invalid_argument("phase series needs at least 3 samples");
    if (!(series.tau0 > 0.0)) throw std::invalid_argument("tau0 must be positive");
    for (std::size_t g : series.gaps) {
        if (g >= series.x.size()) throw std::invalid_argument("gap index out of range");
    }
}

PhaseSeries phase_series_from_records(const std::vector<SyncRecord>& records, double tau0) {
    PhaseSeries s;
    s.tau0 = tau0;
    s.x.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].found()) {
            s.x.push_back(static_cast<double>(records[i].delta.count) * 1e-12);
        } else {
            s.x.push_back(0.0);
            s.gaps.push_back(i);
        }
    }
    return s;
}

std::vector<double> default_taus(const PhaseSeries& series) {
    std::vector<double> taus;
    for (std::size_t m = 1; 4 * m <= series.x.size(); m *= 2) taus.push_back(static_cast<double>(m) * series.tau0);
    return taus;
}

std::vector<DeviationPoint> overlapping_adev(const PhaseSeries& series, const std::vector<double>& taus) {
    validate(series);
    const auto mask = gap_mask(series);
    const std::size_t n = series.x.size();
    std::vector<DeviationPoint> out;
    for (double tau : taus) {
        const std::size_t m = multiple_of_tau0(series, tau);
        if (2 * m > n - 1) throw std::invalid_argument("tau too long for the series");
        double sum = 0.0;
        std::size_t terms = 0;
        for (std::size_t i = 0; i + 2 * m < n; ++i) {
            if (mask[i] || mask[i + m] || mask[i + 2 * m]) continue;
            const double d = series.x[i + 2 * m] - 2.0 * series.x[i + m] + series.x[i];
            sum += d * d;
            ++terms;
        }
        const double mt = static_cast<double>(m) * series.tau0;
        DeviationPoint p{tau, std::numeric_limits<double>::quiet_NaN(), terms};
        if (terms > 0) p.dev = std::sqrt(sum / (2.0 * static_cast<double>(terms) * mt * mt));
        out.push_back(p);
    }
    return out;
}

std::vector<DeviationPoint> modified_adev(const PhaseSeries& series, const std::vector<double>& taus) {
    validate(series);
    const auto mask = gap_mask(series);
    const std::size_t n = series.x.size();
    std::vector<DeviationPoint> out;
    for (double tau : taus) {
        const std::size_t m = multiple_of_tau0(series, tau);
        if (3 * m > n) throw std::invalid_argument("tau too long for the series");
        // Running sum of m consecutive second differences and of their gap flags.
        std::vector<double> d(n - 2 * m);
        std::vector<std::uint8_t> bad(n - 2 * m);
        for (std::size_t i = 0; i + 2 * m < n; ++i) {
            d[i] = series.x[i + 2 * m] - 2.0 * series.x[i + m] + series.x[i];
            bad[i] = mask[i] || mask[i + m] || mask[i + 2 * m];
        }
        double window = 0.0;
        std::size_t window_bad = 0;
        for (std::size_t i = 0; i < m; ++i) {
            window += bad[i] ? 0.0 : d[i];
            window_bad += bad[i];
        }
        double sum = 0.0;
        std::size_t terms = 0;
        for (std::size_t j = 0;; ++j) {
            if (window_bad == 0) {
                sum += window * window;
                ++terms;
            }
            if (j + m >= d.size()) break;
            window += (bad[j + m] ? 0.0 : d[j + m]) - (bad[j] ? 0.0 : d[j]);
            window_bad += bad[j + m];
            window_bad -= bad[j];
        }
        const double mt = static_cast<double>(m) * series.tau0;
        const double mm = static_cast<double>(m);
        DeviationPoint p{tau, std::numeric_limits<double>::quiet_NaN(), terms};
        if (terms > 0) p.dev = std::sqrt(sum / (2.0 * mm * mm * mt * mt * static_cast<double>(terms)));
        out.push_back(p);
    }
    return out;
}

std::vector<DeviationPoint> time_deviation(const PhaseSeries& series, const std::vector<double>& taus) {
    auto out = modified_adev(series, taus);
    for (DeviationPoint& p : out) p.dev = p.tau * p.dev / std::sqrt(3.0);
    return out;
}

LogLogFit fit_loglog_slope(const std::vector<DeviationPoint>& points, double tau_min, double tau_max) {
    LogLogFit fit;
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const DeviationPoint& p : points) {
        if (p.tau < tau_min || p.tau > tau_max) continue;
        if (!(p.dev > 0.0) || !std::isfinite(p.dev) || !(p.tau > 0.0)) {
            ++fit.excluded;
            continue;
        }
        const double lx = std::log(p.tau);
        const double ly = std::log(p.dev);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++fit.used;
    }
    if (fit.excluded > 0) {
        std::cerr << "warning: " << fit.excluded << " nonpositive deviation(s) excluded from slope fit\n";
    }
    if (fit.used < 3) throw std::invalid_argument("slope fit needs at least 3 positive points in range");
    const double n = static_cast<double>(fit.used);
    const double denom = n * sxx - sx * sx;
    if (!(denom > 0.0)) throw std::invalid_argument("slope fit needs distinct tau values");
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    return fit;
}

}  // namespace qtt
