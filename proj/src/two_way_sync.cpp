#include "qtt/two_way_sync.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>

namespace qtt {

TagStream& SiteStreams::operator[](Channel ch) {
    switch (ch) {
        case Channel::AliceLocal: return alice_local;
        case Channel::AliceReceive: return alice_receive;
        case Channel::BobLocal: return bob_local;
        case Channel::BobReceive: return bob_receive;
    }
    throw std::invalid_argument("bad channel");
}

const TagStream& SiteStreams::operator[](Channel ch) const {
    return const_cast<SiteStreams&>(*this)[ch];
}

void validate(const AcquisitionConfig& cfg) {
    if (!(cfg.acquisition_time > 0.0)) throw std::invalid_argument("acquisition_time must be positive");
    validate(cfg.correlation);
    if (cfg.track_halfwidth < cfg.correlation.coarse_bin) {
        throw std::invalid_argument("track_halfwidth must be at least coarse_bin");
    }
    if (cfg.max_missed < 0) throw std::invalid_argument("max_missed must be >= 0");
}

Picos absolute_offset(Picos tau_alpha, Picos tau_beta, Picos tprop_alpha, Picos tprop_beta) {
    const std::int64_t twice = tau_alpha.count - tau_beta.count - tprop_alpha.count + tprop_beta.count;
    // Halving with ties away from zero keeps the result odd-symmetric.
    const std::int64_t half = twice / 2;
    if (twice % 2 != 0) return Picos{half + (twice < 0 ? -1 : 1)};
    return Picos{half};
}

namespace {

struct DirectionState {
    double phase_ps = 0.0;  // steering correction at the start of the current acquisition
    double freq = 0.0;      // steering rate (fractional)
    std::optional<Picos> last_center;
    std::optional<double> last_raw_tau_ps;
    double last_raw_time_ps = 0.0;
};

CorrelationConfig search_config(const AcquisitionConfig& cfg, const DirectionState& st) {
    CorrelationConfig c = cfg.correlation;
    if (st.last_center) {
        c.search_center = *st.last_center;
        c.search_halfwidth = cfg.track_halfwidth;
    }
    return c;
}

struct DirectionResult {
    bool found = false;
    Picos tau{0};
    double raw_ps = 0.0;  // offset with the steering added back
    double epoch_ps = 0.0;  // time after the window start the offset refers to
};

DirectionResult measure(const std::vector<Picos>& local_all, const std::vector<Picos>& receive_all, Picos begin,
                        Picos end, const AcquisitionConfig& cfg, ClockMode mode, DirectionState& st) {
    const auto local = slice_tags(local_all, begin, end);
    auto receive = slice_tags(receive_all, begin, end);
    const double t_a_ps = cfg.acquisition_time * 1e12;

    if (mode == ClockMode::Synchronized) {
        for (Picos& t : receive) {
            t -= round_picos(st.phase_ps + st.freq * static_cast<double>((t - begin).count));
        }
        // Steering keeps order for |freq| < 1e-4; ties are merged.
        receive.erase(std::unique(receive.begin(), receive.end()), receive.end());
    }

    DirectionResult out;
    if (!local.empty() && !receive.empty()) {
        const CorrelationResult cr = correlate(local, receive, search_config(cfg, st));
        out.found = cr.found;
        out.tau = cr.tau;
        // The centroid refers to the mean local time of the coincidences, not the window centre.
        if (cr.found && !cr.coincidences.empty()) {
            double sum = 0.0;
            for (const CoincidencePair& p : cr.coincidences) sum += static_cast<double>((p.local - begin).count);
            out.epoch_ps = sum / static_cast<double>(cr.coincidences.size());
        }
    }

    if (out.found) {
        st.last_center = out.tau;
        const double steer = mode == ClockMode::Synchronized ? st.phase_ps + st.freq * out.epoch_ps : 0.0;
        const double raw = static_cast<double>(out.tau.count) + steer;
        const double epoch = static_cast<double>(begin.count) + out.epoch_ps;
        out.raw_ps = raw;
        double estimate = st.freq;
        if (st.last_raw_tau_ps) {
            estimate = (raw - *st.last_raw_tau_ps) / (epoch - st.last_raw_time_ps);
        }
        st.last_raw_tau_ps = raw;
        st.last_raw_time_ps = epoch;
        if (mode == ClockMode::Synchronized) {
            st.phase_ps += st.freq * t_a_ps;
            st.freq = std::clamp(estimate, -9.9e-5, 9.9e-5);
        } else {
            st.freq = estimate;
        }
    } else if (mode == ClockMode::Synchronized) {
        st.phase_ps += st.freq * t_a_ps;
    }
    return out;
}

}  // namespace

std::vector<SyncRecord> run_stationary_sync(const SiteStreams& streams, const AcquisitionConfig& cfg,
                                            ClockMode mode) {
    validate(cfg);
    const Picos t_a = picos_from_seconds(cfg.acquisition_time);
    Picos last{0};
    for (Channel ch : {Channel::AliceLocal, Channel::BobLocal}) {
        if (!streams[ch].empty()) last = std::max(last, streams[ch].tags.back());
    }
    const auto count = static_cast<std::size_t>(
        std::floor(static_cast<double>(last.count) / static_cast<double>(t_a.count) + 0.5));

    DirectionState alpha;
    DirectionState beta;
    std::vector<SyncRecord> records;
    records.reserve(count);
    int missed = 0;
    for (std::size_t k = 0; k < count; ++k) {
        const Picos begin{static_cast<std::int64_t>(k) * t_a.count};
        const Picos end = begin + t_a;
        SyncRecord rec;
        rec.acq_index = k;
        rec.t_mid = begin + Picos{t_a.count / 2};

        const DirectionResult a =
            measure(streams.alice_local.tags, streams.bob_receive.tags, begin, end, cfg, mode, alpha);
        const DirectionResult b =
            measure(streams.bob_local.tags, streams.alice_receive.tags, begin, end, cfg, mode, beta);
        rec.found_alpha = a.found;
        rec.found_beta = b.found;
        rec.drift_alpha = alpha.freq;
        rec.drift_beta = beta.freq;
        if (a.found) rec.tau_alpha = a.tau;
        if (b.found) rec.tau_beta = b.tau;
        if (rec.found()) {
            rec.delta = absolute_offset(a.tau, b.tau, Picos{0}, Picos{0});
            rec.t_prop_measured = round_picos(0.5 * (a.raw_ps + b.raw_ps));
            missed = 0;
        } else if (++missed > cfg.max_missed) {
            throw SyncLostError(k);
        }
        records.push_back(rec);
    }
    return records;
}

}  // namespace qtt
