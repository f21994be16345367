#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "qtt/core_types.hpp"
#include "qtt/correlation.hpp"

namespace qtt {

struct AcquisitionConfig {
    double acquisition_time = 1.0;  // T_a, seconds
    // Used as-is for the first lock of each direction.
    CorrelationConfig correlation{};
    // After a direction has locked, later acquisitions search +/- this around the previous offset.
    Picos track_halfwidth{50'000};
    int max_missed = 5;  // consecutive acquisitions without lock before synchronisation is declared lost
};

void validate(const AcquisitionConfig& cfg);

enum class ClockMode { Synchronized, Drifting };

// The four detector streams, each in its own site's local clock frame.
struct SiteStreams {
    TagStream alice_local{Channel::AliceLocal, {}};
    TagStream alice_receive{Channel::AliceReceive, {}};
    TagStream bob_local{Channel::BobLocal, {}};
    TagStream bob_receive{Channel::BobReceive, {}};

    TagStream& operator[](Channel ch);
    const TagStream& operator[](Channel ch) const;
};

struct SyncRecord {
    std::size_t acq_index = 0;
    Picos t_mid{0};
    Picos tau_alpha{0};        // downlink, Bob receive - Alice local
    Picos tau_beta{0};         // uplink, Alice receive - Bob local
    Picos delta{0};            // absolute offset, Bob clock - Alice clock
    Picos t_prop_measured{0};  // one-way light time, (tau_alpha + tau_beta) / 2 before any steering
    double drift_alpha = 0.0;  // fractional drift estimate in use for each direction
    double drift_beta = 0.0;
    bool found_alpha = false;
    bool found_beta = false;

    bool found() const { return found_alpha && found_beta; }
};

class SyncLostError : public std::runtime_error {
public:
    explicit SyncLostError(std::size_t index)
        : std::runtime_error("synchronization lost at acquisition " + std::to_string(index)), index_(index) {}
    std::size_t index() const { return index_; }

private:
    std::size_t index_;
};

// (tau_alpha - tau_beta - tprop_alpha + tprop_beta) / 2, rounded to nearest with ties away from zero.
Picos absolute_offset(Picos tau_alpha, Picos tau_beta, Picos tprop_alpha, Picos tprop_beta);

// Per-acquisition two-way synchronisation of a stationary link.
//
// Drifting: every acquisition is correlated on the raw tags and delta is tracked as measured.
// Synchronized: the receive tags of each direction are steered by a software clock whose rate is
// the latest two-point drift estimate dU = (tau_i - tau_{i-1}) / T_a; the steering phase is carried
// forward continuously, so each acquisition reports the residual offset of the steered clock.
std::vector<SyncRecord> run_stationary_sync(const SiteStreams& streams, const AcquisitionConfig& cfg,
                                            ClockMode mode);

}  // namespace qtt
