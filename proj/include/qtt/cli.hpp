#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "qtt/two_way_sync.hpp"

namespace qtt {

inline constexpr const char* kVersion = "1.0.0";

struct CarPoint {
    double background_rate = 0.0;  // counts/s added to each receive detector
    std::size_t acquisitions = 0;  // per direction, both directions counted
    std::size_t locked = 0;
    double mean_car = 0.0;         // over acquisitions with a finite CAR
    double mean_peak = 0.0;
    double mean_accidental = 0.0;

    double lock_fraction() const {
        return acquisitions == 0 ? 0.0 : static_cast<double>(locked) / static_cast<double>(acquisitions);
    }
};

// Adds Poisson noise at each rate to both receive streams and correlates every acquisition
// independently with the acquisition correlation configuration.
std::vector<CarPoint> car_sweep(const SiteStreams& streams, const AcquisitionConfig& cfg,
                                const std::vector<double>& rates, std::uint64_t seed);

// Command-line entry point. Returns 0 on success, 1 on domain errors, 2 on usage errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qtt
