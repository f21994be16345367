#include "qtt/simulation.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "qtt/clock_model.hpp"
#include "qtt/orbit.hpp"
#include "qtt/photon_source.hpp"
#include "qtt/rng.hpp"

namespace qtt {

namespace {

struct LinkOutput {
    std::vector<Picos> local;    // true time, sender site
    std::vector<Picos> receive;  // true time, receiver site
    std::vector<std::pair<Picos, Picos>> true_pairs;  // (local, receive) true times of detected pairs
};

LinkOutput simulate_link(const Scenario& s, const SourceConfig& src, LinkDirection direction) {
    const EmissionRecord rec = generate_pairs(src, s.duration);
    const Picos dead = picos_from_seconds(src.detector_dead_time);

    std::vector<Picos> transmitted;
    transmitted.reserve(rec.transmitted_detections.size());
    for (const TransmittedDetection& d : rec.transmitted_detections) transmitted.push_back(d.time);

    std::vector<Picos> arrivals;
    if (s.orbit) {
        arrivals = apply_motion(transmitted, *s.orbit, direction, picos_from_seconds(s.pass_center)).tags;
    } else {
        const Picos delay = picos_from_seconds(*s.range_m / PhysicalConstants{}.c);
        arrivals.reserve(transmitted.size());
        for (Picos t : transmitted) arrivals.push_back(t + delay);
    }

    // Noise extends past the duration to cover the light time.
    const double span = s.duration + 0.02;
    const auto background = generate_background(src.background_rate, span, derive_seed(src.rng_seed, 101));
    const auto dark_receive = generate_background(src.dark_rate, span, derive_seed(src.rng_seed, 102));
    const auto dark_local = generate_background(src.dark_rate, s.duration, derive_seed(src.rng_seed, 103));

    LinkOutput out;
    out.local = merge_with_dead_time(rec.local_detections.tags, dark_local.tags, dead);
    out.receive = merge_with_dead_time(merge_with_dead_time(arrivals, background.tags, Picos{0}), dark_receive.tags, dead);

    std::vector<std::int64_t> local_of_emission(rec.true_emission_times.size(), -1);
    for (std::size_t i = 0; i < rec.local_detections.tags.size(); ++i) {
        local_of_emission[rec.local_emission_index[i]] = static_cast<std::int64_t>(i);
    }
    for (std::size_t k = 0; k < rec.transmitted_detections.size(); ++k) {
        const std::int64_t li = local_of_emission[rec.transmitted_detections[k].emission_index];
        if (li >= 0) out.true_pairs.emplace_back(rec.local_detections.tags[static_cast<std::size_t>(li)], arrivals[k]);
    }
    return out;
}

std::vector<Picos> to_local(const std::vector<Picos>& tags, const ClockTrack& clock) {
    std::vector<Picos> out;
    out.reserve(tags.size());
    for (Picos t : tags) out.push_back(clock.to_local(t));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<IndexPair> locate_pairs(const std::vector<std::pair<Picos, Picos>>& pairs, const ClockTrack& sender,
                                    const ClockTrack& receiver, const std::vector<Picos>& local,
                                    const std::vector<Picos>& receive) {
    std::vector<IndexPair> out;
    for (const auto& [tl, tr] : pairs) {
        const Picos l = sender.to_local(tl);
        const Picos r = receiver.to_local(tr);
        const auto li = std::lower_bound(local.begin(), local.end(), l);
        const auto ri = std::lower_bound(receive.begin(), receive.end(), r);
        if (li == local.end() || *li != l || ri == receive.end() || *ri != r) continue;
        out.push_back({static_cast<std::size_t>(li - local.begin()), static_cast<std::size_t>(ri - receive.begin())});
    }
    std::sort(out.begin(), out.end(), [](const IndexPair& a, const IndexPair& b) {
        return a.local != b.local ? a.local < b.local : a.receive < b.receive;
    });
    return out;
}

}  // namespace

SimulationResult simulate(const Scenario& s) {
    if (!(s.duration > 0.0)) throw std::invalid_argument("duration must be positive");
    const Picos horizon = picos_from_seconds(s.duration + 1.0);
    const ClockTrack clock_a(s.clock_a, horizon);
    const ClockTrack clock_b(s.clock_b, horizon);

    const LinkOutput alpha = simulate_link(s, s.source_a, LinkDirection::Downlink);
    const LinkOutput beta = simulate_link(s, s.source_b, LinkDirection::Uplink);

    SimulationResult res;
    res.streams.alice_local.tags = to_local(alpha.local, clock_a);
    res.streams.bob_receive.tags = to_local(alpha.receive, clock_b);
    res.streams.bob_local.tags = to_local(beta.local, clock_b);
    res.streams.alice_receive.tags = to_local(beta.receive, clock_a);

    SimulationTruth& truth = res.truth;
    truth.pairs_alpha =
        locate_pairs(alpha.true_pairs, clock_a, clock_b, res.streams.alice_local.tags, res.streams.bob_receive.tags);
    truth.pairs_beta =
        locate_pairs(beta.true_pairs, clock_b, clock_a, res.streams.bob_local.tags, res.streams.alice_receive.tags);
    truth.delta0 = s.clock_b.delta0 - s.clock_a.delta0;
    truth.fractional_drift_difference = s.clock_b.fractional_drift - s.clock_a.fractional_drift;

    const double t_a = s.acquisition.acquisition_time;
    const auto count = static_cast<std::size_t>(std::floor(s.duration / t_a + 1e-9));
    for (std::size_t k = 0; k < count; ++k) {
        TruthSample ts;
        ts.acq_index = k;
        ts.t = picos_from_seconds((static_cast<double>(k) + 0.5) * t_a);
        ts.delta_ps = clock_b.offset_ps(ts.t) - clock_a.offset_ps(ts.t);
        if (s.orbit) {
            const double t_orbit = seconds_from_picos(ts.t) - s.pass_center;
            ts.tprop_alpha_ps = propagation_delay(*s.orbit, t_orbit, LinkDirection::Downlink) * 1e12;
            ts.tprop_beta_ps = propagation_delay(*s.orbit, t_orbit, LinkDirection::Uplink) * 1e12;
        } else {
            ts.tprop_alpha_ps = ts.tprop_beta_ps = *s.range_m / PhysicalConstants{}.c * 1e12;
        }
        truth.samples.push_back(ts);
    }
    return res;
}

void write_simulation(const std::filesystem::path& dir, const Scenario& s, const SimulationResult& sim, bool csv_tags) {
    std::filesystem::create_directories(dir);
    write_tags(dir / (csv_tags ? kTagsCsv : kTagsBinary), from_site_streams(sim.streams));
    write_file_atomic(dir / kMeasurementFile, format_measurement_config(measurement_config(s)));

    nlohmann::ordered_json j;
    j["label"] = s.label;
    j["duration_s"] = s.duration;
    j["delta0_ps"] = sim.truth.delta0.count;
    j["fractional_drift_difference"] = sim.truth.fractional_drift_difference;
    j["clock_a"] = {{"delta0_ps", s.clock_a.delta0.count},
                    {"fractional_drift", s.clock_a.fractional_drift},
                    {"white_fm_amplitude", s.clock_a.white_fm_amplitude},
                    {"seed", s.clock_a.seed}};
    j["clock_b"] = {{"delta0_ps", s.clock_b.delta0.count},
                    {"fractional_drift", s.clock_b.fractional_drift},
                    {"white_fm_amplitude", s.clock_b.white_fm_amplitude},
                    {"seed", s.clock_b.seed}};
    if (s.orbit) {
        j["orbit"] = {{"altitude_m", s.orbit->altitude},
                      {"inclination_deg", s.orbit->inclination * 180.0 / std::numbers::pi},
                      {"qgs_latitude_deg", s.orbit->qgs_latitude * 180.0 / std::numbers::pi},
                      {"qgs_longitude_deg", s.orbit->qgs_longitude * 180.0 / std::numbers::pi},
                      {"pass_center_s", s.pass_center}};
    } else {
        j["range_m"] = *s.range_m;
    }
    j["true_pairs_alpha"] = sim.truth.pairs_alpha.size();
    j["true_pairs_beta"] = sim.truth.pairs_beta.size();
    write_file_atomic(dir / kTruthJson, j.dump(2) + "\n");

    std::string delta = "acq_index,t_s,delta_ps,tprop_alpha_ps,tprop_beta_ps\n";
    for (const TruthSample& t : sim.truth.samples) {
        delta += fmt::format("{},{:.3f},{},{},{}\n", t.acq_index, seconds_from_picos(t.t), format_ps(t.delta_ps),
                             format_ps(t.tprop_alpha_ps), format_ps(t.tprop_beta_ps));
    }
    write_file_atomic(dir / kTruthDelta, delta);

    std::string pairs = "direction,local_index,receive_index\n";
    for (const IndexPair& p : sim.truth.pairs_alpha) pairs += fmt::format("alpha,{},{}\n", p.local, p.receive);
    for (const IndexPair& p : sim.truth.pairs_beta) pairs += fmt::format("beta,{},{}\n", p.local, p.receive);
    write_file_atomic(dir / kTruthPairs, pairs);
}

}  // namespace qtt
