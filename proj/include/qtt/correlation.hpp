#pragma once

#include <cstdint>
#include <vector>

#include "qtt/core_types.hpp"

namespace qtt {

struct CorrelationConfig {
    Picos coarse_bin{500};
    Picos search_center{0};                // differences scanned in [center - halfwidth, center + halfwidth)
    Picos search_halfwidth{20'000'000};    // 20 us
    Picos coincidence_window{1000};
    Picos fine_bin{1};
    double min_peak_significance = 6.0;
};

// Throws std::invalid_argument on violated invariants.
void validate(const CorrelationConfig& cfg);

struct CoincidencePair {
    Picos local;
    Picos receive;
    friend bool operator==(const CoincidencePair&, const CoincidencePair&) = default;
};

struct IndexPair {
    std::size_t local = 0;
    std::size_t receive = 0;
    friend auto operator<=>(const IndexPair&, const IndexPair&) = default;
};

struct CorrelationResult {
    bool found = false;
    Picos tau{0};               // receive - local at the peak centroid; meaningful only when found
    Picos peak_center{0};       // centre of the peak histogram bin
    std::int64_t peak_height = 0;
    double accidental_mean = 0.0;  // counts per bin away from the peak
    double significance = 0.0;     // (peak - accidental) / sqrt(max(accidental, 1))
    double car = 0.0;
    bool car_unbounded = false;    // no accidentals observed; car then holds peak_height
    std::size_t histogram_entries = 0;
    std::vector<CoincidencePair> coincidences;
    std::vector<IndexPair> coincidence_indices;
};

// Cross-correlates receive against local (differences receive - local) with a merged two-pointer
// sweep; cost is proportional to the number of pairs inside the search window.
CorrelationResult correlate(const std::vector<Picos>& local, const std::vector<Picos>& receive,
                            const CorrelationConfig& cfg);

inline CorrelationResult correlate(const TagStream& local, const TagStream& receive, const CorrelationConfig& cfg) {
    return correlate(local.tags, receive.tags, cfg);
}

// All pairs with |receive - local - tau| <= window, ordered by (local, receive) index.
std::vector<IndexPair> extract_coincidence_indices(const std::vector<Picos>& local,
                                                   const std::vector<Picos>& receive, Picos tau, Picos window);

// t -> t - drift * (t - t_ref), rounded to the nearest picosecond.
TagStream apply_drift_compensation(const TagStream& receive, double drift, Picos t_ref);
std::vector<Picos> apply_drift_compensation(const std::vector<Picos>& receive, double drift, Picos t_ref);

// Full width at half maximum (ps) of the difference histogram around `center`, using `bin` wide bins
// over +/- halfwidth. Returns 0 when no pairs fall inside.
double peak_fwhm(const std::vector<Picos>& local, const std::vector<Picos>& receive, Picos center,
                 Picos halfwidth, Picos bin);

}  // namespace qtt
