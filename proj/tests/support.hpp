#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "qtt/rng.hpp"

namespace qtt::testing {

struct Line {
    double slope = 0.0;
    double intercept = 0.0;
};

inline Line least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    return {sxy / sxx, my - sxy / sxx * mx};
}

inline double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

inline double stddev(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline std::vector<double> white_pm(std::size_t n, double sigma, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> x(n);
    for (double& v : x) v = sigma * rng.normal();
    return x;
}

inline std::vector<double> white_fm(std::size_t n, double sigma, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> x(n);
    double acc = 0.0;
    for (double& v : x) {
        acc += sigma * rng.normal();
        v = acc;
    }
    return x;
}

// Power-law phase noise with spectrum ~ f^-alpha by fractional integration of white noise
// (Kasdin & Walter filter, applied as a direct convolution). alpha = 1 gives flicker PM.
inline std::vector<double> power_law_phase(std::size_t n, double alpha, std::uint64_t seed) {
    std::vector<double> h(n);
    h[0] = 1.0;
    for (std::size_t k = 1; k < n; ++k) {
        h[k] = h[k - 1] * ((0.5 * alpha + static_cast<double>(k) - 1.0) / static_cast<double>(k));
    }
    Rng rng(seed);
    std::vector<double> w(n);
    for (double& v : w) v = rng.normal();
    std::vector<double> x(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k <= i; ++k) x[i] += h[k] * w[i - k];
    }
    return x;
}

}  // namespace qtt::testing
