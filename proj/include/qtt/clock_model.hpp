#pragma once

#include <cstdint>
#include <vector>

#include "qtt/core_types.hpp"

namespace qtt {

struct ClockParams {
    Picos delta0{0};                    // initial absolute offset
    double fractional_drift = 0.0;      // dimensionless, 4.5e-10 == 450 ps/s
    double drift_rate_of_change = 0.0;  // 1/s, linear aging
    double white_fm_amplitude = 0.0;    // Allan deviation at 1 s
    std::uint64_t seed = 1;
};

void validate(const ClockParams& clk);

// Deterministic realisation of one site clock: offset(t) = delta0 + dU*t + aging*t^2/2 + noise(t).
// The white-FM noise is a random-walk phase sampled on a fixed grid and linearly interpolated;
// it is zero for t <= 0.
class ClockTrack {
public:
    static constexpr double kNoiseStep = 0.01;  // s

    ClockTrack(const ClockParams& params, Picos horizon);

    // Clock offset in picoseconds (real valued) at true time t.
    double offset_ps(Picos t) const;
    double noise_ps(Picos t) const;

    // Local clock reading of true time t.
    Picos to_local(Picos t) const { return t + round_picos(offset_ps(t)); }

    const ClockParams& params() const { return params_; }

private:
    void extend(Picos horizon);

    ClockParams params_;
    std::vector<double> noise_ps_;  // at grid points k * kNoiseStep
};

TagStream to_local_frame(const TagStream& true_tags, const ClockParams& clk);

// Inverse of the deterministic part (noise must be off). Recovers true tags to <= 1 ps.
TagStream from_local_frame(const TagStream& local_tags, const ClockParams& clk);

// Offset of `clk` minus offset of `reference` at true time t.
Picos relative_offset_truth(const ClockParams& clk, const ClockParams& reference, Picos t);

}  // namespace qtt
