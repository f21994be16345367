#include "qtt/photon_source.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "qtt/rng.hpp"

namespace qtt {

namespace {

void require(bool ok, const char* field) {
    if (!ok) throw std::invalid_argument(std::string("invalid source config field: ") + field);
}

bool is_probability(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }
bool is_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

}  // namespace

void validate(const SourceConfig& cfg) {
    require(is_nonneg(cfg.pair_rate), "pair_rate");
    require(is_probability(cfg.local_efficiency), "local_efficiency");
    require(is_probability(cfg.channel_efficiency), "channel_efficiency");
    require(is_nonneg(cfg.pair_jitter_sigma), "pair_jitter_sigma");
    require(is_nonneg(cfg.detector_dead_time), "detector_dead_time");
    require(is_nonneg(cfg.background_rate), "background_rate");
    require(is_nonneg(cfg.dark_rate), "dark_rate");
    require(is_nonneg(cfg.scintillation_sigma), "scintillation_sigma");
}

std::vector<Picos> apply_dead_time(const std::vector<Picos>& sorted, Picos dead_time) {
    const Picos min_gap{std::max<std::int64_t>(dead_time.count, 1)};
    std::vector<Picos> out;
    out.reserve(sorted.size());
    for (Picos t : sorted) {
        if (out.empty() || t - out.back() >= min_gap) out.push_back(t);
    }
    return out;
}

std::vector<Picos> merge_with_dead_time(const std::vector<Picos>& a, const std::vector<Picos>& b, Picos dead_time) {
    std::vector<Picos> merged;
    merged.reserve(a.size() + b.size());
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(merged));
    return apply_dead_time(merged, dead_time);
}

EmissionRecord generate_pairs(const SourceConfig& cfg, double duration) {
    validate(cfg);
    if (!(duration > 0.0)) throw std::invalid_argument("duration must be positive");

    EmissionRecord rec;
    if (cfg.pair_rate == 0.0) return rec;

    Rng rng(cfg.rng_seed);
    const double eta_local = cfg.local_efficiency;
    const double sigma = cfg.pair_jitter_sigma;

    std::vector<std::pair<Picos, std::size_t>> local;
    std::vector<TransmittedDetection> transmitted;

    // Each one-second segment has its own channel efficiency when scintillation is on. Within a
    // segment only emissions with at least one detected photon are drawn: they form a Poisson
    // process at pair_rate * q, where q = 1 - (1 - eta_local)(1 - eta_channel).
    const auto segments = static_cast<std::int64_t>(std::ceil(duration));
    for (std::int64_t k = 0; k < segments; ++k) {
        double eta_channel = cfg.channel_efficiency;
        if (cfg.scintillation_sigma > 0.0) {
            const double s = cfg.scintillation_sigma;
            eta_channel = std::min(1.0, eta_channel * std::exp(s * rng.normal() - 0.5 * s * s));
        }
        const double q = 1.0 - (1.0 - eta_local) * (1.0 - eta_channel);
        if (q <= 0.0) continue;
        const double seg_end = std::min(duration, static_cast<double>(k + 1));
        const double rate = cfg.pair_rate * q;
        double t = static_cast<double>(k);
        while (true) {
            t += rng.exponential(rate);
            if (t >= seg_end) break;
            const double u = rng.uniform() * q;
            const bool both = u < eta_local * eta_channel;
            const bool has_local = both || u < eta_local;
            const bool has_transmitted = both || !has_local;

            const std::size_t index = rec.true_emission_times.size();
            rec.true_emission_times.push_back(picos_from_seconds(t));
            if (has_local) {
                const double tl = sigma > 0.0 ? t + sigma * rng.normal() : t;
                local.emplace_back(picos_from_seconds(tl), index);
            }
            if (has_transmitted) {
                const double tr = sigma > 0.0 ? t + sigma * rng.normal() : t;
                transmitted.push_back({index, picos_from_seconds(tr)});
            }
        }
    }

    std::stable_sort(local.begin(), local.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    std::stable_sort(transmitted.begin(), transmitted.end(),
                     [](const auto& x, const auto& y) { return x.time < y.time; });

    const Picos dead{std::max<std::int64_t>(picos_from_seconds(cfg.detector_dead_time).count, 1)};

    rec.local_detections.channel = Channel::AliceLocal;
    for (const auto& [time, index] : local) {
        auto& tags = rec.local_detections.tags;
        if (tags.empty() || time - tags.back() >= dead) {
            tags.push_back(time);
            rec.local_emission_index.push_back(index);
        }
    }
    for (const auto& det : transmitted) {
        auto& out = rec.transmitted_detections;
        if (out.empty() || det.time - out.back().time >= dead) out.push_back(det);
    }
    return rec;
}

TagStream generate_background(double rate, double duration, std::uint64_t seed) {
    if (!std::isfinite(rate) || rate < 0.0) throw std::invalid_argument("background rate must be >= 0");
    TagStream out;
    if (rate == 0.0 || !(duration > 0.0)) return out;
    Rng rng(seed);
    out.tags.reserve(static_cast<std::size_t>(rate * duration * 1.01) + 16);
    double t = 0.0;
    while (true) {
        t += rng.exponential(rate);
        if (t >= duration) break;
        const Picos p = picos_from_seconds(t);
        if (out.tags.empty() || out.tags.back() < p) out.tags.push_back(p);
    }
    return out;
}

}  // namespace qtt
