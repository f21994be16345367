#include "qtt/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace qtt {

namespace {

// Rounded integer division, ties away from zero.
std::int64_t div_round(std::int64_t num, std::int64_t den) {
    const std::int64_t q = num / den;
    const std::int64_t r = num % den;
    if (2 * std::llabs(r) >= den) return q + (num < 0 ? -1 : 1);
    return q;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    const std::int64_t q = a / b;
    return (a % b != 0 && (a < 0) != (b < 0)) ? q - 1 : q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

struct Hit {
    std::size_t local;
    std::size_t receive;
    std::int64_t diff;
};

struct BinCount {
    std::int64_t index;
    std::int64_t count;
};

// Visits every (i, j) with lo <= receive[j] - local[i] < hi.
template <typename Fn>
void sweep_pairs(const std::vector<Picos>& local, const std::vector<Picos>& receive, std::int64_t lo,
                 std::int64_t hi, Fn&& fn) {
    std::size_t start = 0;
    const std::size_t m = receive.size();
    for (std::size_t i = 0; i < local.size(); ++i) {
        const std::int64_t l = local[i].count;
        while (start < m && receive[start].count - l < lo) ++start;
        for (std::size_t j = start; j < m; ++j) {
            const std::int64_t diff = receive[j].count - l;
            if (diff >= hi) break;
            fn(i, j, diff);
        }
    }
}

// Centroid of differences within [center - window, center + window].
bool windowed_centroid(const std::vector<Picos>& local, const std::vector<Picos>& receive, std::int64_t center,
                       std::int64_t window, std::int64_t& out) {
    std::int64_t sum = 0;
    std::int64_t n = 0;
    sweep_pairs(local, receive, center - window, center + window + 1, [&](std::size_t, std::size_t, std::int64_t d) {
        sum += d - center;
        ++n;
    });
    if (n == 0) return false;
    out = center + div_round(sum, n);
    return true;
}

}  // namespace

void validate(const CorrelationConfig& cfg) {
    if (cfg.coarse_bin.count <= 0 || cfg.fine_bin.count <= 0) {
        throw std::invalid_argument("correlation bins must be positive");
    }
    if (cfg.fine_bin > cfg.coarse_bin) throw std::invalid_argument("fine_bin must not exceed coarse_bin");
    if (cfg.coincidence_window < cfg.fine_bin) {
        throw std::invalid_argument("coincidence_window must be at least fine_bin");
    }
    if (cfg.search_halfwidth < cfg.coarse_bin) {
        throw std::invalid_argument("search_halfwidth must be at least coarse_bin");
    }
    if (!(cfg.min_peak_significance > 0.0)) {
        throw std::invalid_argument("min_peak_significance must be positive");
    }
}

CorrelationResult correlate(const std::vector<Picos>& local, const std::vector<Picos>& receive,
                            const CorrelationConfig& cfg) {
    validate(cfg);
    CorrelationResult res;
    if (local.empty() || receive.empty()) return res;

    const Picos first = std::min(local.front(), receive.front());
    const Picos last = std::max(local.back(), receive.back());
    if (cfg.search_halfwidth > last - first) {
        throw std::invalid_argument("search_halfwidth exceeds the span of the tag streams");
    }

    const std::int64_t bin = cfg.coarse_bin.count;
    const std::int64_t lo = cfg.search_center.count - cfg.search_halfwidth.count;
    const std::int64_t hi = cfg.search_center.count + cfg.search_halfwidth.count;
    const std::int64_t nbins = (hi - lo + bin - 1) / bin;

    std::vector<Hit> hits;
    std::vector<std::int64_t> indices;
    sweep_pairs(local, receive, lo, hi, [&](std::size_t i, std::size_t j, std::int64_t d) {
        hits.push_back({i, j, d});
        indices.push_back((d - lo) / bin);
    });
    res.histogram_entries = indices.size();
    if (indices.empty()) return res;

    // Sparse histogram as sorted (index, count) runs; bins not listed are empty.
    std::vector<BinCount> bins;
    if (nbins <= static_cast<std::int64_t>(8 * indices.size() + 1024)) {
        std::vector<std::int64_t> dense(static_cast<std::size_t>(nbins), 0);
        for (std::int64_t k : indices) ++dense[static_cast<std::size_t>(k)];
        for (std::int64_t k = 0; k < nbins; ++k) {
            if (dense[static_cast<std::size_t>(k)] != 0) bins.push_back({k, dense[static_cast<std::size_t>(k)]});
        }
    } else {
        std::sort(indices.begin(), indices.end());
        for (std::int64_t k : indices) {
            if (!bins.empty() && bins.back().index == k) {
                ++bins.back().count;
            } else {
                bins.push_back({k, 1});
            }
        }
    }

    auto bin_center = [&](std::int64_t k) { return lo + k * bin + bin / 2; };

    // Peak: highest bin; equal heights resolved towards the search centre.
    const BinCount* peak = &bins.front();
    for (const BinCount& b : bins) {
        if (b.count > peak->count) {
            peak = &b;
        } else if (b.count == peak->count) {
            const auto dist_new = std::llabs(bin_center(b.index) - cfg.search_center.count);
            const auto dist_old = std::llabs(bin_center(peak->index) - cfg.search_center.count);
            if (dist_new < dist_old) peak = &b;
        }
    }
    const std::int64_t peak_center = bin_center(peak->index);
    res.peak_center = Picos{peak_center};
    res.peak_height = peak->count;

    // Accidental level from bins farther than 10 coincidence windows from the peak; falls back to
    // bins outside one window for narrow searches.
    auto off_peak_mean = [&](std::int64_t exclusion, double& mean) {
        std::int64_t near_count = 0;
        // Bins k with |bin_center(k) - peak_center| <= exclusion form a contiguous index range.
        const std::int64_t base = lo + bin / 2;
        const std::int64_t k_lo = std::max<std::int64_t>(0, ceil_div(peak_center - exclusion - base, bin));
        const std::int64_t k_hi = std::min<std::int64_t>(nbins - 1, floor_div(peak_center + exclusion - base, bin));
        const std::int64_t near_bins = std::max<std::int64_t>(0, k_hi - k_lo + 1);
        for (const BinCount& b : bins) {
            if (std::llabs(bin_center(b.index) - peak_center) <= exclusion) near_count += b.count;
        }
        const std::int64_t far_bins = nbins - near_bins;
        if (far_bins <= 0) return false;
        mean = static_cast<double>(static_cast<std::int64_t>(indices.size()) - near_count) /
               static_cast<double>(far_bins);
        return true;
    };
    double accidental = 0.0;
    if (!off_peak_mean(10 * cfg.coincidence_window.count, accidental)) {
        if (!off_peak_mean(cfg.coincidence_window.count, accidental)) accidental = 0.0;
    }
    res.accidental_mean = accidental;
    res.significance = (static_cast<double>(res.peak_height) - accidental) / std::sqrt(std::max(accidental, 1.0));
    if (accidental > 0.0) {
        res.car = static_cast<double>(res.peak_height) / accidental;
    } else {
        res.car = static_cast<double>(res.peak_height);
        res.car_unbounded = true;
    }
    res.found = res.significance >= cfg.min_peak_significance;
    if (!res.found) return res;

    // Two centroid passes: around the peak bin, then around the first estimate.
    const std::int64_t window = cfg.coincidence_window.count;
    // Windows inside the search range are served from the pairs already visited.
    auto inside = [&](std::int64_t center) { return center - window >= lo && center + window < hi; };
    auto centroid_at = [&](std::int64_t center, std::int64_t& out) {
        if (!inside(center)) return windowed_centroid(local, receive, center, window, out);
        std::int64_t sum = 0;
        std::int64_t n = 0;
        for (const Hit& h : hits) {
            if (std::llabs(h.diff - center) <= window) {
                sum += h.diff - center;
                ++n;
            }
        }
        if (n == 0) return false;
        out = center + div_round(sum, n);
        return true;
    };
    std::int64_t centroid = peak_center;
    if (centroid_at(peak_center, centroid)) {
        std::int64_t refined = centroid;
        if (centroid_at(centroid, refined)) centroid = refined;
    }
    const std::int64_t fine = cfg.fine_bin.count;
    res.tau = Picos{fine == 1 ? centroid : div_round(centroid, fine) * fine};

    if (inside(res.tau.count)) {
        for (const Hit& h : hits) {
            if (std::llabs(h.diff - res.tau.count) <= window) res.coincidence_indices.push_back({h.local, h.receive});
        }
    } else {
        res.coincidence_indices = extract_coincidence_indices(local, receive, res.tau, cfg.coincidence_window);
    }
    res.coincidences.reserve(res.coincidence_indices.size());
    for (const IndexPair& p : res.coincidence_indices) {
        res.coincidences.push_back({local[p.local], receive[p.receive]});
    }
    return res;
}

std::vector<IndexPair> extract_coincidence_indices(const std::vector<Picos>& local,
                                                   const std::vector<Picos>& receive, Picos tau, Picos window) {
    std::vector<IndexPair> out;
    sweep_pairs(local, receive, tau.count - window.count, tau.count + window.count + 1,
                [&](std::size_t i, std::size_t j, std::int64_t) { out.push_back({i, j}); });
    return out;
}

std::vector<Picos> apply_drift_compensation(const std::vector<Picos>& receive, double drift, Picos t_ref) {
    if (!std::isfinite(drift) || std::fabs(drift) >= 1e-4) {
        throw std::invalid_argument("drift compensation requires |drift| < 1e-4");
    }
    std::vector<Picos> out;
    out.reserve(receive.size());
    bool sorted = true;
    for (Picos t : receive) {
        const Picos shifted = t - round_picos(drift * static_cast<double>((t - t_ref).count));
        if (!out.empty() && !(out.back() < shifted)) sorted = false;
        out.push_back(shifted);
    }
    if (!sorted) {
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
    }
    return out;
}

TagStream apply_drift_compensation(const TagStream& receive, double drift, Picos t_ref) {
    return {receive.channel, apply_drift_compensation(receive.tags, drift, t_ref)};
}

double peak_fwhm(const std::vector<Picos>& local, const std::vector<Picos>& receive, Picos center,
                 Picos halfwidth, Picos bin) {
    const std::int64_t lo = center.count - halfwidth.count;
    const std::int64_t nbins = (2 * halfwidth.count + bin.count - 1) / bin.count;
    std::vector<std::int64_t> hist(static_cast<std::size_t>(nbins), 0);
    sweep_pairs(local, receive, lo, lo + nbins * bin.count,
                [&](std::size_t, std::size_t, std::int64_t d) { ++hist[static_cast<std::size_t>((d - lo) / bin.count)]; });
    const auto peak_it = std::max_element(hist.begin(), hist.end());
    if (peak_it == hist.end() || *peak_it == 0) return 0.0;
    const double half = 0.5 * static_cast<double>(*peak_it);
    const auto first = std::find_if(hist.begin(), hist.end(), [&](std::int64_t c) { return c >= half; });
    const auto last = std::find_if(hist.rbegin(), hist.rend(), [&](std::int64_t c) { return c >= half; });
    const auto width_bins = (hist.rend() - last) - (first - hist.begin());
    return static_cast<double>(width_bins * bin.count);
}

}  // namespace qtt
