#pragma once

#include <filesystem>
#include <vector>

#include "qtt/correlation.hpp"
#include "qtt/scenario_io.hpp"
#include "qtt/two_way_sync.hpp"

namespace qtt {

struct TruthSample {
    std::size_t acq_index = 0;
    Picos t{0};                  // true time at the acquisition midpoint
    double delta_ps = 0.0;       // Bob clock - Alice clock
    double tprop_alpha_ps = 0.0;
    double tprop_beta_ps = 0.0;
};

struct SimulationTruth {
    std::vector<TruthSample> samples;
    std::vector<IndexPair> pairs_alpha;  // AliceLocal index, BobReceive index
    std::vector<IndexPair> pairs_beta;   // BobLocal index, AliceReceive index
    Picos delta0{0};
    double fractional_drift_difference = 0.0;
};

struct SimulationResult {
    SiteStreams streams;
    SimulationTruth truth;
};

// Sources, channel (fixed range or orbit), noise, dead time and both site clocks.
SimulationResult simulate(const Scenario& scenario);

// Simulation directory layout.
inline constexpr const char* kTagsBinary = "tags.qtt";
inline constexpr const char* kTagsCsv = "tags.csv";
inline constexpr const char* kMeasurementFile = "measurement.cfg";
inline constexpr const char* kTruthJson = "truth.json";
inline constexpr const char* kTruthDelta = "truth_delta.csv";
inline constexpr const char* kTruthPairs = "truth_pairs.csv";

// Writes tags, the measurement-only config and the truth sidecar files.
void write_simulation(const std::filesystem::path& dir, const Scenario& scenario, const SimulationResult& sim,
                      bool csv_tags = false);

}  // namespace qtt
