#pragma once

#include <cstdint>
#include <vector>

#include "qtt/core_types.hpp"

namespace qtt {

struct SourceConfig {
    double pair_rate = 1.0e5;              // pairs/s
    double local_efficiency = 0.2;         // probability the local photon is detected
    double channel_efficiency = 0.05;      // probability the transmitted photon is detected remotely
    double pair_jitter_sigma = 150e-12;    // s, Gaussian timing jitter per detection
    double detector_dead_time = 25e-9;     // s
    double background_rate = 0.0;          // counts/s on the receive detector fed by this source
    double dark_rate = 0.0;                // counts/s on each detector
    double scintillation_sigma = 0.0;      // log-normal sigma of per-second channel efficiency; 0 = off
    std::uint64_t rng_seed = 1;
};

// Throws std::invalid_argument naming the offending field.
void validate(const SourceConfig& cfg);

struct TransmittedDetection {
    std::size_t emission_index = 0;
    Picos time;
};

struct EmissionRecord {
    // Emissions that produced at least one surviving detection; pairs with both photons
    // lost are never observable and are not materialised.
    std::vector<Picos> true_emission_times;
    TagStream local_detections;
    std::vector<std::size_t> local_emission_index;  // parallel to local_detections.tags
    std::vector<TransmittedDetection> transmitted_detections;  // source frame, time-ordered
};

EmissionRecord generate_pairs(const SourceConfig& cfg, double duration);

// Homogeneous Poisson stream on [0, duration), sorted and deduplicated at 1 ps.
TagStream generate_background(double rate, double duration, std::uint64_t seed);

// Merges two sorted streams; a tag closer than dead_time to the previously kept tag is dropped.
// A dead time below 1 ps still removes exact duplicates.
std::vector<Picos> merge_with_dead_time(const std::vector<Picos>& a, const std::vector<Picos>& b, Picos dead_time);

// Drops tags violating dead time in an already sorted list.
std::vector<Picos> apply_dead_time(const std::vector<Picos>& sorted, Picos dead_time);

}  // namespace qtt
