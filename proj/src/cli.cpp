#include "qtt/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "qtt/orbit_tracking.hpp"
#include "qtt/photon_source.hpp"
#include "qtt/rng.hpp"
#include "qtt/scenario_io.hpp"
#include "qtt/simulation.hpp"
#include "qtt/stability.hpp"

namespace fs = std::filesystem;

namespace qtt {

std::vector<CarPoint> car_sweep(const SiteStreams& streams, const AcquisitionConfig& cfg,
                                const std::vector<double>& rates, std::uint64_t seed) {
    validate(cfg);
    const Picos t_a = picos_from_seconds(cfg.acquisition_time);
    Picos last{0};
    for (Channel ch : kAllChannels) {
        if (!streams[ch].empty()) last = std::max(last, streams[ch].tags.back());
    }
    const double span = seconds_from_picos(last) + cfg.acquisition_time;
    const auto count = static_cast<std::size_t>(
        std::floor(static_cast<double>(last.count) / static_cast<double>(t_a.count) + 0.5));

    std::vector<CarPoint> out;
    for (std::size_t r = 0; r < rates.size(); ++r) {
        CarPoint pt;
        pt.background_rate = rates[r];
        const std::array<std::pair<const std::vector<Picos>*, const std::vector<Picos>*>, 2> links{
            std::pair{&streams.alice_local.tags, &streams.bob_receive.tags},
            std::pair{&streams.bob_local.tags, &streams.alice_receive.tags}};
        std::size_t finite = 0;
        for (std::size_t j = 0; j < 2; ++j) {
            const auto noise = generate_background(rates[r], span, derive_seed(seed, 2 * r + j));
            const auto receive = merge_with_dead_time(*links[j].second, noise.tags, Picos{0});
            for (std::size_t k = 0; k < count; ++k) {
                const Picos begin{static_cast<std::int64_t>(k) * t_a.count};
                const auto local = slice_tags(*links[j].first, begin, begin + t_a);
                const auto recv = slice_tags(receive, begin, begin + t_a);
                ++pt.acquisitions;
                if (local.empty() || recv.empty()) continue;
                const CorrelationResult cr = correlate(local, recv, cfg.correlation);
                if (cr.found) ++pt.locked;
                pt.mean_peak += static_cast<double>(cr.peak_height);
                pt.mean_accidental += cr.accidental_mean;
                if (!cr.car_unbounded && cr.histogram_entries > 0) {
                    pt.mean_car += cr.car;
                    ++finite;
                }
            }
        }
        if (pt.acquisitions > 0) {
            pt.mean_peak /= static_cast<double>(pt.acquisitions);
            pt.mean_accidental /= static_cast<double>(pt.acquisitions);
        }
        if (finite > 0) pt.mean_car /= static_cast<double>(finite);
        out.push_back(pt);
    }
    return out;
}

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Stats {
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t n = 0;
};

Stats stats_of(const std::vector<double>& v) {
    Stats s;
    s.n = v.size();
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

// Least-squares slope of y against x.
double slope_of(const std::vector<double>& x, const std::vector<double>& y) {
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    return sxx > 0.0 ? sxy / sxx : 0.0;
}

struct SimulationDir {
    MeasurementConfig config;
    SiteStreams streams;
};

SimulationDir load_simulation_dir(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
    const fs::path cfg = dir / kMeasurementFile;
    fs::path tags = dir / kTagsBinary;
    if (!fs::exists(tags)) tags = dir / kTagsCsv;
    if (!fs::exists(cfg) || !fs::exists(tags)) {
        throw UsageError("directory " + dir.string() + " does not contain simulate output (" + kMeasurementFile +
                         " and " + kTagsBinary + ")");
    }
    SimulationDir out;
    out.config = parse_measurement_config(read_file(cfg));
    out.streams = to_site_streams(read_tags(tags));
    return out;
}

std::vector<SyncRecord> load_records(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw UsageError("records file not found: " + path.string());
    return parse_records_csv(read_file(path));
}

void summarize_records(std::ostream& out, const std::string& name, const std::vector<SyncRecord>& records) {
    std::vector<double> t, delta;
    for (const SyncRecord& r : records) {
        if (!r.found()) continue;
        t.push_back(seconds_from_picos(r.t_mid));
        delta.push_back(static_cast<double>(r.delta.count));
    }
    const Stats s = stats_of(delta);
    out << fmt::format("{}: {} acquisitions, {} locked, delta mean {} ps, std {} ps, slope {} ps/s\n", name,
                       records.size(), s.n, format_ps(s.mean), format_ps(s.stddev),
                       format_ps(t.size() > 1 ? slope_of(t, delta) : 0.0));
}

std::string fig2c_table(const std::vector<SyncRecord>& sync, const std::vector<SyncRecord>& drift) {
    std::string out = "t_mid_s,delta_sync_ps,delta_drift_ps\n";
    for (std::size_t i = 0; i < std::min(sync.size(), drift.size()); ++i) {
        out += fmt::format("{:.3f},{},{}\n", seconds_from_picos(sync[i].t_mid),
                           sync[i].found() ? std::to_string(sync[i].delta.count) : "nan",
                           drift[i].found() ? std::to_string(drift[i].delta.count) : "nan");
    }
    return out;
}

std::string coarse_grid_table(const TrackingResult& tr) {
    std::string out = "direction,inclination_deg,altitude_m,peak_height,significance,found\n";
    for (const auto& [name, scan] : {std::pair{"alpha", &tr.scan_alpha}, std::pair{"beta", &tr.scan_beta}}) {
        for (std::size_t ti = 0; ti < scan->inclinations.size(); ++ti) {
            for (std::size_t ai = 0; ai < scan->altitudes.size(); ++ai) {
                const std::size_t c = scan->cell(ti, ai);
                out += fmt::format("{},{:.3f},{:.1f},{},{},{}\n", name,
                                   scan->inclinations[ti] * 180.0 / std::numbers::pi, scan->altitudes[ai],
                                   scan->peak_height[c], format_sig6(scan->significance[c]),
                                   static_cast<int>(scan->found[c]));
            }
        }
    }
    return out;
}

std::string fit_history_table(const TrackingResult& tr) {
    std::string out =
        "acq_index,t_mid_s,a_alpha_m,theta_alpha_deg,m_alpha,b_alpha_ps,a_beta_m,theta_beta_deg,m_beta,b_beta_ps,"
        "corr_a_m_alpha,corr_a_m_beta,points_alpha,points_beta\n";
    constexpr double deg = 180.0 / std::numbers::pi;
    for (const FitSnapshot& s : tr.history) {
        out += fmt::format("{},{:.3f},{:.3f},{:.6f},{},{},{:.3f},{:.6f},{},{},{},{},{},{}\n", s.acq_index,
                           seconds_from_picos(s.t_mid), s.alpha[0], s.alpha[1] * deg, format_sig6(s.alpha[2]),
                           format_ps(s.alpha[3]), s.beta[0], s.beta[1] * deg, format_sig6(s.beta[2]),
                           format_ps(s.beta[3]), format_sig6(s.corr_a_m_alpha), format_sig6(s.corr_a_m_beta),
                           s.points_alpha, s.points_beta);
    }
    return out;
}

std::vector<double> parse_rates(const std::string& text) {
    std::vector<double> rates;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = text.find(',', pos);
        const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            std::size_t used = 0;
            const double v = std::stod(item, &used);
            if (used != item.size() || !(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(item);
            rates.push_back(v);
        } catch (const std::logic_error&) {
            throw UsageError("invalid rate in --sweep: '" + item + "'");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return rates;
}

fs::path output_path(const std::string& given, const fs::path& fallback) {
    return given.empty() ? fallback : fs::path(given);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Two-way quantum time transfer toolkit", "qtt"};
    app.set_version_flag("--version", std::string("qtt ") + kVersion);
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed;
    app.add_option("--seed", seed, "Override all random seeds");
    bool plot_data = false;
    app.add_flag("--plot-data", plot_data, "Also write per-figure data files");

    std::string scenario_path, out_dir;
    bool csv_tags = false;
    auto* sim = app.add_subcommand("simulate", "Simulate tag streams for a scenario");
    sim->add_option("scenario", scenario_path, "Scenario file")->required();
    sim->add_option("-o,--output", out_dir, "Output directory")->required();
    sim->add_flag("--csv", csv_tags, "Write tags as CSV instead of binary");

    std::string dir, mode = "sync", output;
    auto* sync = app.add_subcommand("sync", "Two-way synchronisation of a stationary link");
    sync->add_option("dir", dir, "simulate output directory")->required();
    sync->add_option("--mode", mode, "sync or drift")->check(CLI::IsMember({"sync", "drift"}));
    sync->add_option("-o,--output", output, "Records CSV (default <dir>/records_<mode>.csv)");

    auto* track = app.add_subcommand("track", "Coarse scan, orbit fit and tracked synchronisation");
    track->add_option("dir", dir, "simulate output directory")->required();

    std::string records_path;
    double tau0 = 0.0;
    auto* stab = app.add_subcommand("stability", "ADEV, MDEV and TDEV of a records CSV");
    stab->add_option("records", records_path, "Records CSV")->required();
    stab->add_option("-o,--output", output, "Deviation table (default <records>.stability.csv)");
    stab->add_option("--tau0", tau0, "Sample interval in seconds (default: from t_mid)");

    std::string sweep;
    auto* car = app.add_subcommand("car", "CAR and lock fraction against added background rate");
    car->add_option("dir", dir, "simulate output directory")->required();
    car->add_option("--sweep", sweep, "Comma-separated background rates (counts/s)")->required();
    car->add_option("-o,--output", output, "CAR table (default <dir>/car.csv)");

    auto* range = app.add_subcommand("range", "Range series from a records CSV");
    range->add_option("records", records_path, "Records CSV")->required();
    range->add_option("-o,--output", output, "Range table (default <records>.range.csv)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << "qtt " << kVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*sim) {
            if (!fs::is_regular_file(scenario_path)) throw UsageError("scenario file not found: " + scenario_path);
            Scenario s = load_scenario(scenario_path);
            if (seed) override_seeds(s, *seed);
            const SimulationResult res = simulate(s);
            write_simulation(out_dir, s, res, csv_tags);
            out << fmt::format("simulated '{}': {} s, tags AL {} AR {} BL {} BR {}, true pairs {} / {}\n", s.label,
                               s.duration, res.streams.alice_local.size(), res.streams.alice_receive.size(),
                               res.streams.bob_local.size(), res.streams.bob_receive.size(),
                               res.truth.pairs_alpha.size(), res.truth.pairs_beta.size());
        } else if (*sync) {
            const SimulationDir d = load_simulation_dir(dir);
            const ClockMode cm = mode == "sync" ? ClockMode::Synchronized : ClockMode::Drifting;
            const auto records = run_stationary_sync(d.streams, d.config.acquisition, cm);
            const fs::path path = output_path(output, fs::path(dir) / ("records_" + mode + ".csv"));
            write_file_atomic(path, format_records_csv(records));
            summarize_records(out, mode, records);
            if (plot_data) {
                const auto other = run_stationary_sync(
                    d.streams, d.config.acquisition, cm == ClockMode::Synchronized ? ClockMode::Drifting : ClockMode::Synchronized);
                const auto& s_rec = cm == ClockMode::Synchronized ? records : other;
                const auto& d_rec = cm == ClockMode::Synchronized ? other : records;
                write_file_atomic(fs::path(dir) / "fig2c.csv", fig2c_table(s_rec, d_rec));
            }
        } else if (*track) {
            const SimulationDir d = load_simulation_dir(dir);
            if (!d.config.has_orbit) throw std::domain_error("scenario has no orbit");
            const TrackingResult tr = run_tracked_sync(d.streams, d.config.acquisition, d.config.tracking.scan,
                                                       d.config.pass, d.config.tracking.fit);
            const fs::path base(dir);
            write_file_atomic(base / "track_records_sync.csv", format_records_csv(tr.synchronized));
            write_file_atomic(base / "track_records_drift.csv", format_records_csv(tr.drifting));
            write_file_atomic(base / "fit_history.csv", fit_history_table(tr));
            if (plot_data) {
                write_file_atomic(base / "coarse_grid.csv", coarse_grid_table(tr));
                write_file_atomic(base / "fig2c.csv", fig2c_table(tr.synchronized, tr.drifting));
            }
            out << fmt::format("coarse scan alpha: a {:.1f} m, theta {:.3f} deg, max significance {}\n",
                               tr.scan_alpha.best_altitude(), tr.scan_alpha.best_inclination() * 180.0 / std::numbers::pi,
                               format_sig6(tr.scan_alpha.max_significance));
            out << fmt::format("coarse scan beta: a {:.1f} m, theta {:.3f} deg, max significance {}\n",
                               tr.scan_beta.best_altitude(), tr.scan_beta.best_inclination() * 180.0 / std::numbers::pi,
                               format_sig6(tr.scan_beta.max_significance));
            out << fmt::format("final fit alpha: a {:.3f} m, m {}; beta: a {:.3f} m, m {}\n", tr.final_alpha.a_fit,
                               format_sig6(tr.final_alpha.m), tr.final_beta.a_fit, format_sig6(tr.final_beta.m));
            summarize_records(out, "tracked sync", tr.synchronized);
            summarize_records(out, "tracked drift", tr.drifting);
        } else if (*stab) {
            const auto records = load_records(records_path);
            if (records.size() < 3) throw std::domain_error("stability needs at least 3 records");
            double t0 = tau0;
            if (t0 <= 0.0) t0 = seconds_from_picos(records[1].t_mid - records[0].t_mid);
            const PhaseSeries series = phase_series_from_records(records, t0);
            const auto taus = default_taus(series);
            if (taus.size() < 1) throw std::domain_error("series too short for any tau");
            const auto adev = overlapping_adev(series, taus);
            const auto mdev = modified_adev(series, taus);
            const auto tdev = time_deviation(series, taus);
            const std::string table = format_deviation_table(adev, mdev, tdev);
            write_file_atomic(output_path(output, fs::path(records_path + ".stability.csv")), table);
            if (plot_data) {
                write_file_atomic(fs::path(records_path).parent_path() / "fig2e.csv", table);
            }
            if (taus.size() >= 3) {
                out << fmt::format("ADEV slope {}, MDEV slope {}, TDEV slope {}\n",
                                   format_sig6(fit_loglog_slope(adev, taus.front(), taus.back()).slope),
                                   format_sig6(fit_loglog_slope(mdev, taus.front(), taus.back()).slope),
                                   format_sig6(fit_loglog_slope(tdev, taus.front(), taus.back()).slope));
            }
        } else if (*car) {
            const std::vector<double> rates = parse_rates(sweep);
            const SimulationDir d = load_simulation_dir(dir);
            const auto points = car_sweep(d.streams, d.config.acquisition, rates, seed.value_or(1));
            std::string table = "background_rate,acquisitions,lock_fraction,mean_car,mean_peak,mean_accidental\n";
            for (const CarPoint& p : points) {
                table += fmt::format("{},{},{},{},{},{}\n", format_sig6(p.background_rate), p.acquisitions,
                                     format_sig6(p.lock_fraction()), format_sig6(p.mean_car),
                                     format_sig6(p.mean_peak), format_sig6(p.mean_accidental));
            }
            write_file_atomic(output_path(output, fs::path(dir) / "car.csv"), table);
            if (plot_data) write_file_atomic(fs::path(dir) / "fig2b.csv", table);
            out << table;
        } else if (*range) {
            const auto records = load_records(records_path);
            std::vector<double> d;
            std::string table = "acq_index,t_mid_s,d_m,residual_m\n";
            for (const SyncRecord& r : records) {
                if (r.found()) d.push_back(static_cast<double>(r.t_prop_measured.count) * 1e-12 * PhysicalConstants{}.c);
            }
            const Stats s = stats_of(d);
            std::size_t i = 0;
            for (const SyncRecord& r : records) {
                if (!r.found()) continue;
                table += fmt::format("{},{:.3f},{:.6f},{:.6f}\n", r.acq_index, seconds_from_picos(r.t_mid), d[i],
                                     d[i] - s.mean);
                ++i;
            }
            write_file_atomic(output_path(output, fs::path(records_path + ".range.csv")), table);
            if (plot_data) write_file_atomic(fs::path(records_path).parent_path() / "fig3.csv", table);
            out << fmt::format("range: {} samples, mean {:.6f} m, std {:.6f} m\n", s.n, s.mean, s.stddev);
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace qtt
