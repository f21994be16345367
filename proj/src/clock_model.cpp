#include "qtt/clock_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qtt/rng.hpp"

namespace qtt {

void validate(const ClockParams& clk) {
    if (!std::isfinite(clk.fractional_drift) || std::fabs(clk.fractional_drift) >= 1e-4) {
        throw std::invalid_argument("invalid clock field: fractional_drift (|dU| must be < 1e-4)");
    }
    if (!std::isfinite(clk.drift_rate_of_change)) {
        throw std::invalid_argument("invalid clock field: drift_rate_of_change");
    }
    if (!std::isfinite(clk.white_fm_amplitude) || clk.white_fm_amplitude < 0.0) {
        throw std::invalid_argument("invalid clock field: white_fm_amplitude");
    }
}

ClockTrack::ClockTrack(const ClockParams& params, Picos horizon) : params_(params) {
    validate(params_);
    noise_ps_.push_back(0.0);
    extend(horizon);
}

void ClockTrack::extend(Picos horizon) {
    if (params_.white_fm_amplitude == 0.0) return;
    const double end_s = seconds_from_picos(horizon);
    const auto needed = static_cast<std::size_t>(std::max(0.0, std::ceil(end_s / kNoiseStep))) + 2;
    if (needed <= noise_ps_.size()) return;
    // Random-walk phase: increments have variance sigma_y(1 s)^2 * step.
    Rng rng(params_.seed);
    const double step_sigma_ps = params_.white_fm_amplitude * std::sqrt(kNoiseStep) * 1e12;
    noise_ps_.assign(1, 0.0);
    noise_ps_.reserve(needed);
    while (noise_ps_.size() < needed) noise_ps_.push_back(noise_ps_.back() + step_sigma_ps * rng.normal());
}

double ClockTrack::noise_ps(Picos t) const {
    if (params_.white_fm_amplitude == 0.0 || t.count <= 0) return 0.0;
    const double pos = seconds_from_picos(t) / kNoiseStep;
    const auto k = static_cast<std::size_t>(pos);
    if (k + 1 >= noise_ps_.size()) {
        throw std::out_of_range("clock track evaluated beyond its horizon");
    }
    const double frac = pos - static_cast<double>(k);
    return noise_ps_[k] + frac * (noise_ps_[k + 1] - noise_ps_[k]);
}

double ClockTrack::offset_ps(Picos t) const {
    const double ts = seconds_from_picos(t);
    return static_cast<double>(params_.delta0.count) + params_.fractional_drift * static_cast<double>(t.count) +
           0.5 * params_.drift_rate_of_change * ts * static_cast<double>(t.count) + noise_ps(t);
}

TagStream to_local_frame(const TagStream& true_tags, const ClockParams& clk) {
    TagStream out;
    out.channel = true_tags.channel;
    if (true_tags.empty()) return out;
    const ClockTrack track(clk, true_tags.tags.back());
    out.tags.reserve(true_tags.size());
    bool sorted = true;
    for (Picos t : true_tags.tags) {
        const Picos local = track.to_local(t);
        if (!out.tags.empty() && !(out.tags.back() < local)) sorted = false;
        out.tags.push_back(local);
    }
    if (!sorted) {
        std::sort(out.tags.begin(), out.tags.end());
        out.tags.erase(std::unique(out.tags.begin(), out.tags.end()), out.tags.end());
    }
    return out;
}

TagStream from_local_frame(const TagStream& local_tags, const ClockParams& clk) {
    validate(clk);
    if (clk.white_fm_amplitude != 0.0) {
        throw std::invalid_argument("from_local_frame requires a noise-free clock");
    }
    const ClockTrack track(clk, Picos{0});
    TagStream out;
    out.channel = local_tags.channel;
    out.tags.reserve(local_tags.size());
    for (Picos local : local_tags.tags) {
        // Fixed-point iteration t = local - offset(t); contraction factor |dU| < 1e-4.
        Picos t = local;
        for (int i = 0; i < 8; ++i) {
            const Picos next = local - round_picos(track.offset_ps(t));
            if (next == t) break;
            t = next;
        }
        out.tags.push_back(t);
    }
    return out;
}

Picos relative_offset_truth(const ClockParams& clk, const ClockParams& reference, Picos t) {
    const Picos horizon{std::max<std::int64_t>(t.count, 0)};
    const ClockTrack a(clk, horizon);
    const ClockTrack b(reference, horizon);
    return round_picos(a.offset_ps(t) - b.offset_ps(t));
}

}  // namespace qtt
