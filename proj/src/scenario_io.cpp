#include "qtt/scenario_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <system_error>

#include <fmt/format.h>

#include "qtt/rng.hpp"

namespace qtt {

ConfigError::ConfigError(const std::string& what, int line)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

struct Entry {
    std::string value;
    int line = 0;
};

// section -> key -> value; the top level is section "".
using Document = std::map<std::string, std::map<std::string, Entry>>;

Document parse_document(const std::string& text, const std::vector<std::string>& sections) {
    Document doc;
    doc[""];
    std::string current;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    bool any = false;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        any = true;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("unterminated section header", line_no);
            current = trim(std::string_view(line).substr(1, line.size() - 2));
            if (std::find(sections.begin(), sections.end(), current) == sections.end()) {
                throw ConfigError("unknown section [" + current + "]", line_no);
            }
            if (doc.count(current) != 0) throw ConfigError("duplicate section [" + current + "]", line_no);
            doc[current];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key = value", line_no);
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        if (key.empty()) throw ConfigError("empty key", line_no);
        if (value.empty()) throw ConfigError("empty value for '" + key + "'", line_no);
        auto& sec = doc[current];
        if (sec.count(key) != 0) throw ConfigError("duplicate key '" + key + "'", line_no);
        sec[key] = {value, line_no};
    }
    if (!any) throw ConfigError("empty configuration", 1);
    return doc;
}

double parse_double(const Entry& e, const std::string& key) {
    double v = 0.0;
    const char* begin = e.value.data();
    const char* end = begin + e.value.size();
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end || !std::isfinite(v)) {
        throw ConfigError("'" + key + "' is not a number: " + e.value, e.line);
    }
    return v;
}

std::int64_t parse_int(const Entry& e, const std::string& key) {
    std::int64_t v = 0;
    const char* begin = e.value.data();
    const char* end = begin + e.value.size();
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end) throw ConfigError("'" + key + "' is not an integer: " + e.value, e.line);
    return v;
}

std::uint64_t parse_uint(const Entry& e, const std::string& key) {
    std::uint64_t v = 0;
    const char* begin = e.value.data();
    const char* end = begin + e.value.size();
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end) throw ConfigError("'" + key + "' is not an unsigned integer: " + e.value, e.line);
    return v;
}

bool parse_bool(const Entry& e, const std::string& key) {
    if (e.value == "true") return true;
    if (e.value == "false") return false;
    throw ConfigError("'" + key + "' must be true or false", e.line);
}

using Setter = std::function<void(const Entry&, const std::string&)>;

void apply(const std::map<std::string, Entry>& section, const std::map<std::string, Setter>& setters,
           const std::string& name) {
    for (const auto& [key, entry] : section) {
        const auto it = setters.find(key);
        if (it == setters.end()) {
            throw ConfigError("unknown key '" + key + "'" + (name.empty() ? "" : " in [" + name + "]"), entry.line);
        }
        it->second(entry, key);
    }
}

Setter set_double(double& target, double scale = 1.0) {
    return [&target, scale](const Entry& e, const std::string& k) { target = parse_double(e, k) * scale; };
}
Setter set_picos(Picos& target) {
    return [&target](const Entry& e, const std::string& k) { target = Picos{parse_int(e, k)}; };
}
Setter set_uint(std::uint64_t& target) {
    return [&target](const Entry& e, const std::string& k) { target = parse_uint(e, k); };
}
Setter set_size(std::size_t& target) {
    return [&target](const Entry& e, const std::string& k) { target = static_cast<std::size_t>(parse_uint(e, k)); };
}
Setter set_int(int& target) {
    return [&target](const Entry& e, const std::string& k) {
        const std::int64_t v = parse_int(e, k);
        if (v < 0 || v > 1'000'000) throw ConfigError("'" + k + "' out of range", e.line);
        target = static_cast<int>(v);
    };
}

std::map<std::string, Setter> source_setters(SourceConfig& s) {
    return {{"pair_rate", set_double(s.pair_rate)},
            {"local_efficiency", set_double(s.local_efficiency)},
            {"channel_efficiency", set_double(s.channel_efficiency)},
            {"pair_jitter_sigma_ps", set_double(s.pair_jitter_sigma, 1e-12)},
            {"detector_dead_time_ns", set_double(s.detector_dead_time, 1e-9)},
            {"background_rate", set_double(s.background_rate)},
            {"dark_rate", set_double(s.dark_rate)},
            {"scintillation_sigma", set_double(s.scintillation_sigma)},
            {"seed", set_uint(s.rng_seed)}};
}

std::map<std::string, Setter> clock_setters(ClockParams& c) {
    return {{"delta0_ps", set_picos(c.delta0)},
            {"fractional_drift", set_double(c.fractional_drift)},
            {"drift_rate_of_change", set_double(c.drift_rate_of_change)},
            {"white_fm_amplitude", set_double(c.white_fm_amplitude)},
            {"seed", set_uint(c.seed)}};
}

std::map<std::string, Setter> acquisition_setters(AcquisitionConfig& a) {
    return {{"acquisition_time", set_double(a.acquisition_time)},
            {"coarse_bin_ps", set_picos(a.correlation.coarse_bin)},
            {"search_center_ps", set_picos(a.correlation.search_center)},
            {"search_halfwidth_ps", set_picos(a.correlation.search_halfwidth)},
            {"coincidence_window_ps", set_picos(a.correlation.coincidence_window)},
            {"fine_bin_ps", set_picos(a.correlation.fine_bin)},
            {"min_peak_significance", set_double(a.correlation.min_peak_significance)},
            {"track_halfwidth_ps", set_picos(a.track_halfwidth)},
            {"max_missed", set_int(a.max_missed)}};
}

std::map<std::string, Setter> tracking_setters(TrackingConfig& t) {
    return {{"a_min_m", set_double(t.scan.a_min)},
            {"a_max_m", set_double(t.scan.a_max)},
            {"a_step_m", set_double(t.scan.a_step)},
            {"theta_min_deg", set_double(t.scan.theta_min, kDeg)},
            {"theta_max_deg", set_double(t.scan.theta_max, kDeg)},
            {"theta_step_deg", set_double(t.scan.theta_step, kDeg)},
            {"scan_acquisitions", set_size(t.scan.scan_acquisitions)},
            {"scan_search_halfwidth_ps", set_picos(t.scan.correlation.search_halfwidth)},
            {"min_points", set_size(t.fit.min_points)},
            {"max_iterations", set_int(t.fit.max_iterations)},
            {"outlier_threshold_ps", set_double(t.fit.outlier_threshold_ps)},
            {"table_step", set_double(t.fit.table_step)}};
}

struct OrbitFields {
    double altitude = 700e3;
    double inclination = 98.2 * kDeg;
    double qgs_latitude = 0.0;
    double qgs_longitude = 0.0;
    bool earth_rotation = true;
};

std::map<std::string, Setter> orbit_setters(OrbitFields& o, bool with_elements) {
    std::map<std::string, Setter> m{{"qgs_latitude_deg", set_double(o.qgs_latitude, kDeg)},
                                    {"qgs_longitude_deg", set_double(o.qgs_longitude, kDeg)},
                                    {"earth_rotation", [&o](const Entry& e, const std::string& k) {
                                         o.earth_rotation = parse_bool(e, k);
                                     }}};
    if (with_elements) {
        m["altitude_m"] = set_double(o.altitude);
        m["inclination_deg"] = set_double(o.inclination, kDeg);
    }
    return m;
}

OrbitParams make_orbit(const OrbitFields& f) {
    OrbitParams o = overhead_pass(f.altitude, f.inclination, f.qgs_latitude, f.qgs_longitude);
    o.earth_rotation = f.earth_rotation;
    return o;
}

template <typename Fn>
void validated(const std::string& what, Fn&& fn) {
    try {
        fn();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(what + ": " + e.what());
    } catch (const std::domain_error& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

// The coarse scan correlation starts from the acquisition settings, with its own half-width.
void link_scan_correlation(TrackingConfig& t, const AcquisitionConfig& a, Picos scan_halfwidth) {
    t.scan.correlation = a.correlation;
    t.scan.correlation.search_halfwidth = scan_halfwidth;
}

std::string g17(double v) { return fmt::format("{:.17g}", v); }
// Unit-converted values: 15 digits survive the scale and its inverse.
std::string g15(double v) { return fmt::format("{:.15g}", v); }

void emit_acquisition(std::ostream& out, const AcquisitionConfig& a) {
    out << "[acquisition]\n"
        << "acquisition_time = " << g17(a.acquisition_time) << "\n"
        << "coarse_bin_ps = " << a.correlation.coarse_bin.count << "\n"
        << "search_center_ps = " << a.correlation.search_center.count << "\n"
        << "search_halfwidth_ps = " << a.correlation.search_halfwidth.count << "\n"
        << "coincidence_window_ps = " << a.correlation.coincidence_window.count << "\n"
        << "fine_bin_ps = " << a.correlation.fine_bin.count << "\n"
        << "min_peak_significance = " << g17(a.correlation.min_peak_significance) << "\n"
        << "track_halfwidth_ps = " << a.track_halfwidth.count << "\n"
        << "max_missed = " << a.max_missed << "\n\n";
}

void emit_tracking(std::ostream& out, const TrackingConfig& t) {
    out << "[tracking]\n"
        << "a_min_m = " << g17(t.scan.a_min) << "\n"
        << "a_max_m = " << g17(t.scan.a_max) << "\n"
        << "a_step_m = " << g17(t.scan.a_step) << "\n"
        << "theta_min_deg = " << g15(t.scan.theta_min / kDeg) << "\n"
        << "theta_max_deg = " << g15(t.scan.theta_max / kDeg) << "\n"
        << "theta_step_deg = " << g15(t.scan.theta_step / kDeg) << "\n"
        << "scan_acquisitions = " << t.scan.scan_acquisitions << "\n"
        << "scan_search_halfwidth_ps = " << t.scan.correlation.search_halfwidth.count << "\n"
        << "min_points = " << t.fit.min_points << "\n"
        << "max_iterations = " << t.fit.max_iterations << "\n"
        << "outlier_threshold_ps = " << g17(t.fit.outlier_threshold_ps) << "\n"
        << "table_step = " << g17(t.fit.table_step) << "\n\n";
}

void emit_ground_station(std::ostream& out, const OrbitParams& o) {
    out << "qgs_latitude_deg = " << g15(o.qgs_latitude / kDeg) << "\n"
        << "qgs_longitude_deg = " << g15(o.qgs_longitude / kDeg) << "\n"
        << "earth_rotation = " << (o.earth_rotation ? "true" : "false") << "\n";
}

}  // namespace

PassGeometry Scenario::pass() const {
    if (!orbit) throw std::logic_error("scenario has no orbit");
    return {*orbit, picos_from_seconds(pass_center)};
}

Scenario parse_scenario(const std::string& text) {
    const Document doc = parse_document(
        text, {"source_a", "source_b", "clock_a", "clock_b", "orbit", "acquisition", "tracking"});
    Scenario s;
    Picos scan_halfwidth = CoarseScanConfig{}.correlation.search_halfwidth;
    double range = 0.0;
    bool has_range = false;
    std::map<std::string, Setter> top{
        {"label", [&](const Entry& e, const std::string&) { s.label = e.value; }},
        {"duration", set_double(s.duration)},
        {"range_m", [&](const Entry& e, const std::string& k) {
             range = parse_double(e, k);
             has_range = true;
         }},
        {"pass_center", set_double(s.pass_center)}};
    apply(doc.at(""), top, "");

    for (const char* name : {"source_a", "source_b"}) {
        if (doc.count(name) == 0) continue;
        SourceConfig& src = std::string(name) == "source_a" ? s.source_a : s.source_b;
        apply(doc.at(name), source_setters(src), name);
    }
    for (const char* name : {"clock_a", "clock_b"}) {
        if (doc.count(name) == 0) continue;
        ClockParams& clk = std::string(name) == "clock_a" ? s.clock_a : s.clock_b;
        apply(doc.at(name), clock_setters(clk), name);
    }
    if (doc.count("acquisition") != 0) apply(doc.at("acquisition"), acquisition_setters(s.acquisition), "acquisition");
    if (doc.count("orbit") != 0) {
        OrbitFields f;
        apply(doc.at("orbit"), orbit_setters(f, true), "orbit");
        s.orbit = make_orbit(f);
    }
    if (doc.count("tracking") != 0) {
        TrackingConfig t;
        auto setters = tracking_setters(t);
        setters["scan_search_halfwidth_ps"] = set_picos(scan_halfwidth);
        apply(doc.at("tracking"), setters, "tracking");
        s.tracking = t;
    }

    if (!(s.duration > 0.0)) throw ConfigError("duration must be positive");
    if (has_range && s.orbit) throw ConfigError("range_m and [orbit] are mutually exclusive");
    if (!has_range && !s.orbit) throw ConfigError("stationary scenario requires range_m (or an [orbit] section)");
    if (has_range) {
        if (!(range > 0.0)) throw ConfigError("range_m must be positive");
        s.range_m = range;
    }
    if (s.tracking && !s.orbit) throw ConfigError("[tracking] requires [orbit]");
    if (s.orbit && !s.tracking) s.tracking = TrackingConfig{};
    if (s.tracking) link_scan_correlation(*s.tracking, s.acquisition, scan_halfwidth);

    validated("source_a", [&] { validate(s.source_a); });
    validated("source_b", [&] { validate(s.source_b); });
    validated("clock_a", [&] { validate(s.clock_a); });
    validated("clock_b", [&] { validate(s.clock_b); });
    validated("acquisition", [&] { validate(s.acquisition); });
    if (s.orbit) validated("orbit", [&] { validate(*s.orbit); });
    if (s.tracking) validated("tracking", [&] { validate(s.tracking->scan); });
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return parse_scenario(text);
}

std::string format_scenario(const Scenario& s) {
    std::ostringstream out;
    out << "label = " << s.label << "\n"
        << "duration = " << g17(s.duration) << "\n";
    if (s.range_m) out << "range_m = " << g17(*s.range_m) << "\n";
    if (s.orbit) out << "pass_center = " << g17(s.pass_center) << "\n";
    out << "\n";
    for (const auto& [name, src] : {std::pair{"source_a", &s.source_a}, std::pair{"source_b", &s.source_b}}) {
        out << "[" << name << "]\n"
            << "pair_rate = " << g17(src->pair_rate) << "\n"
            << "local_efficiency = " << g17(src->local_efficiency) << "\n"
            << "channel_efficiency = " << g17(src->channel_efficiency) << "\n"
            << "pair_jitter_sigma_ps = " << g15(src->pair_jitter_sigma * 1e12) << "\n"
            << "detector_dead_time_ns = " << g15(src->detector_dead_time * 1e9) << "\n"
            << "background_rate = " << g17(src->background_rate) << "\n"
            << "dark_rate = " << g17(src->dark_rate) << "\n"
            << "scintillation_sigma = " << g17(src->scintillation_sigma) << "\n"
            << "seed = " << src->rng_seed << "\n\n";
    }
    for (const auto& [name, clk] : {std::pair{"clock_a", &s.clock_a}, std::pair{"clock_b", &s.clock_b}}) {
        out << "[" << name << "]\n"
            << "delta0_ps = " << clk->delta0.count << "\n"
            << "fractional_drift = " << g17(clk->fractional_drift) << "\n"
            << "drift_rate_of_change = " << g17(clk->drift_rate_of_change) << "\n"
            << "white_fm_amplitude = " << g17(clk->white_fm_amplitude) << "\n"
            << "seed = " << clk->seed << "\n\n";
    }
    if (s.orbit) {
        out << "[orbit]\n"
            << "altitude_m = " << g17(s.orbit->altitude) << "\n"
            << "inclination_deg = " << g15(s.orbit->inclination / kDeg) << "\n";
        emit_ground_station(out, *s.orbit);
        out << "\n";
    }
    emit_acquisition(out, s.acquisition);
    if (s.tracking) emit_tracking(out, *s.tracking);
    return out.str();
}

void override_seeds(Scenario& s, std::uint64_t base) {
    s.source_a.rng_seed = derive_seed(base, 1);
    s.source_b.rng_seed = derive_seed(base, 2);
    s.clock_a.seed = derive_seed(base, 3);
    s.clock_b.seed = derive_seed(base, 4);
}

MeasurementConfig measurement_config(const Scenario& s) {
    MeasurementConfig m;
    m.label = s.label;
    m.acquisition = s.acquisition;
    if (s.orbit) {
        m.has_orbit = true;
        m.pass = s.pass();
        // Orbital elements are what the tracker estimates; only the scan grid centre is kept.
        m.pass.orbit_template.altitude = 0.5 * (s.tracking->scan.a_min + s.tracking->scan.a_max);
        m.pass.orbit_template.inclination = 0.5 * (s.tracking->scan.theta_min + s.tracking->scan.theta_max);
        m.tracking = *s.tracking;
    }
    return m;
}

std::string format_measurement_config(const MeasurementConfig& m) {
    std::ostringstream out;
    out << "label = " << m.label << "\n\n";
    emit_acquisition(out, m.acquisition);
    if (m.has_orbit) {
        out << "[pass]\n"
            << "pass_center = " << g17(seconds_from_picos(m.pass.epoch)) << "\n";
        emit_ground_station(out, m.pass.orbit_template);
        out << "\n";
        emit_tracking(out, m.tracking);
    }
    return out.str();
}

MeasurementConfig parse_measurement_config(const std::string& text) {
    const Document doc = parse_document(text, {"acquisition", "pass", "tracking"});
    MeasurementConfig m;
    apply(doc.at(""), {{"label", [&](const Entry& e, const std::string&) { m.label = e.value; }}}, "");
    if (doc.count("acquisition") != 0) apply(doc.at("acquisition"), acquisition_setters(m.acquisition), "acquisition");
    Picos scan_halfwidth = CoarseScanConfig{}.correlation.search_halfwidth;
    if (doc.count("tracking") != 0) {
        auto setters = tracking_setters(m.tracking);
        setters["scan_search_halfwidth_ps"] = set_picos(scan_halfwidth);
        apply(doc.at("tracking"), setters, "tracking");
    }
    if (doc.count("pass") != 0) {
        OrbitFields f;
        double center = 0.0;
        auto setters = orbit_setters(f, false);
        setters["pass_center"] = set_double(center);
        apply(doc.at("pass"), setters, "pass");
        m.has_orbit = true;
        link_scan_correlation(m.tracking, m.acquisition, scan_halfwidth);
        f.altitude = 0.5 * (m.tracking.scan.a_min + m.tracking.scan.a_max);
        f.inclination = 0.5 * (m.tracking.scan.theta_min + m.tracking.scan.theta_max);
        m.pass = {make_orbit(f), picos_from_seconds(center)};
        validated("tracking", [&] { validate(m.tracking.scan); });
    }
    validated("acquisition", [&] { validate(m.acquisition); });
    return m;
}

// ---- tag files ----

namespace {

constexpr std::array<char, 8> kMagic{'Q', 'T', 'T', 'T', 'A', 'G', 'S', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
std::uint64_t get_le(const unsigned char* p, int bytes) {
    std::uint64_t v = 0;
    for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

Channel channel_from_id(std::uint64_t id) {
    if (id > 3) throw FormatError("invalid channel id " + std::to_string(id));
    return static_cast<Channel>(id);
}

std::vector<TagStream> group_by_channel(std::vector<std::pair<Channel, Picos>>&& records) {
    std::vector<TagStream> out;
    for (const auto& [ch, t] : records) {
        auto it = std::find_if(out.begin(), out.end(), [ch = ch](const TagStream& s) { return s.channel == ch; });
        if (it == out.end()) {
            out.push_back({ch, {}});
            it = std::prev(out.end());
        }
        it->tags.push_back(t);
    }
    return out;
}

std::size_t total_tags(const std::vector<TagStream>& streams) {
    std::size_t n = 0;
    for (const TagStream& s : streams) n += s.tags.size();
    return n;
}

}  // namespace

void write_tags_binary(const std::filesystem::path& path, const std::vector<TagStream>& streams) {
    const std::size_t n = total_tags(streams);
    if (n > 0xFFFFFFFFu) throw FormatError("too many tags for one file");
    std::string out;
    out.reserve(16 + 16 * n);
    out.append(kMagic.data(), kMagic.size());
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(n));
    for (const TagStream& s : streams) {
        for (Picos t : s.tags) {
            put_u64(out, static_cast<std::uint64_t>(t.count));
            out.push_back(static_cast<char>(s.channel));
            out.append(7, '\0');
        }
    }
    write_file_atomic(path, out);
}

std::vector<TagStream> read_tags_binary(const std::filesystem::path& path) {
    const std::string data = read_file(path);
    if (data.size() < 16) throw FormatError("truncated tag file header");
    if (std::memcmp(data.data(), kMagic.data(), kMagic.size()) != 0) throw FormatError("bad magic in tag file");
    const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
    const auto version = static_cast<std::uint32_t>(get_le(bytes + 8, 4));
    if (version != kVersion) throw FormatError("unsupported tag file version " + std::to_string(version));
    const auto count = get_le(bytes + 12, 4);
    if (data.size() != 16 + 16 * count) {
        throw FormatError(data.size() < 16 + 16 * count ? "truncated tag file" : "trailing bytes in tag file");
    }
    std::vector<std::pair<Channel, Picos>> records;
    records.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const unsigned char* rec = bytes + 16 + 16 * i;
        for (int k = 9; k < 16; ++k) {
            if (rec[k] != 0) throw FormatError("nonzero reserved bytes in record " + std::to_string(i));
        }
        records.emplace_back(channel_from_id(rec[8]), Picos{static_cast<std::int64_t>(get_le(rec, 8))});
    }
    return group_by_channel(std::move(records));
}

void write_tags_csv(const std::filesystem::path& path, const std::vector<TagStream>& streams) {
    std::string out = "channel,picoseconds\n";
    out.reserve(out.size() + 32 * total_tags(streams));
    for (const TagStream& s : streams) {
        const std::string_view name = channel_name(s.channel);
        for (Picos t : s.tags) {
            out.append(name);
            out.push_back(',');
            out.append(std::to_string(t.count));
            out.push_back('\n');
        }
    }
    write_file_atomic(path, out);
}

std::vector<TagStream> read_tags_csv(const std::filesystem::path& path) {
    const std::string data = read_file(path);
    std::istringstream in(data);
    std::string line;
    if (!std::getline(in, line) || trim(line) != "channel,picoseconds") {
        throw FormatError("tag CSV must start with header 'channel,picoseconds'");
    }
    std::vector<std::pair<Channel, Picos>> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw FormatError("tag CSV line " + std::to_string(line_no) + ": missing comma");
        Channel ch{};
        try {
            ch = channel_from_name(line.substr(0, comma));
        } catch (const std::invalid_argument& e) {
            throw FormatError("tag CSV line " + std::to_string(line_no) + ": " + e.what());
        }
        std::int64_t v = 0;
        const char* b = line.data() + comma + 1;
        const char* e = line.data() + line.size();
        const auto [ptr, ec] = std::from_chars(b, e, v);
        if (ec != std::errc{} || ptr != e) {
            throw FormatError("tag CSV line " + std::to_string(line_no) + ": bad timestamp");
        }
        records.emplace_back(ch, Picos{v});
    }
    return group_by_channel(std::move(records));
}

void write_tags(const std::filesystem::path& path, const std::vector<TagStream>& streams) {
    if (path.extension() == ".csv") {
        write_tags_csv(path, streams);
    } else {
        write_tags_binary(path, streams);
    }
}

std::vector<TagStream> read_tags(const std::filesystem::path& path) {
    return path.extension() == ".csv" ? read_tags_csv(path) : read_tags_binary(path);
}

SiteStreams to_site_streams(const std::vector<TagStream>& streams) {
    SiteStreams out;
    for (const TagStream& s : streams) {
        if (!is_strictly_increasing(s.tags)) {
            throw FormatError(std::string("tags of channel ") + std::string(channel_name(s.channel)) +
                              " are not strictly increasing");
        }
        TagStream& dst = out[s.channel];
        if (!dst.tags.empty()) throw FormatError("channel appears twice");
        dst.tags = s.tags;
    }
    return out;
}

std::vector<TagStream> from_site_streams(const SiteStreams& streams) {
    std::vector<TagStream> out;
    for (Channel ch : kAllChannels) out.push_back(streams[ch]);
    return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string format_ps(double ps) { return fmt::format("{:.3f}", ps); }

std::string format_sig6(double value) {
    if (!std::isfinite(value)) return "nan";
    return fmt::format("{:.5e}", value);
}

// ---- result tables ----

namespace {

constexpr std::string_view kRecordsHeader =
    "acq_index,t_mid_s,tau_alpha_ps,tau_beta_ps,delta_ps,t_prop_measured_ps,drift_alpha,drift_beta,found_alpha,"
    "found_beta";

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

std::string format_records_csv(const std::vector<SyncRecord>& records) {
    std::string out(kRecordsHeader);
    out.push_back('\n');
    for (const SyncRecord& r : records) {
        out += fmt::format("{},{:.3f},{},{},{},{},{},{},{},{}\n", r.acq_index, seconds_from_picos(r.t_mid),
                           r.tau_alpha.count, r.tau_beta.count, r.delta.count, r.t_prop_measured.count,
                           format_sig6(r.drift_alpha), format_sig6(r.drift_beta), r.found_alpha ? 1 : 0,
                           r.found_beta ? 1 : 0);
    }
    return out;
}

std::vector<SyncRecord> parse_records_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || trim(line) != kRecordsHeader) {
        throw FormatError("records CSV must start with header '" + std::string(kRecordsHeader) + "'");
    }
    std::vector<SyncRecord> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 10) throw FormatError("records CSV line " + std::to_string(line_no) + ": expected 10 fields");
        try {
            SyncRecord r;
            r.acq_index = static_cast<std::size_t>(std::stoull(f[0]));
            r.t_mid = picos_from_seconds(std::stod(f[1]));
            r.tau_alpha = Picos{std::stoll(f[2])};
            r.tau_beta = Picos{std::stoll(f[3])};
            r.delta = Picos{std::stoll(f[4])};
            r.t_prop_measured = Picos{std::stoll(f[5])};
            r.drift_alpha = std::stod(f[6]);
            r.drift_beta = std::stod(f[7]);
            r.found_alpha = f[8] == "1";
            r.found_beta = f[9] == "1";
            out.push_back(r);
        } catch (const std::logic_error&) {
            throw FormatError("records CSV line " + std::to_string(line_no) + ": malformed field");
        }
    }
    return out;
}

std::string format_deviation_table(const std::vector<DeviationPoint>& adev, const std::vector<DeviationPoint>& mdev,
                                   const std::vector<DeviationPoint>& tdev) {
    std::string out = "tau_s,adev,mdev,tdev_s,terms\n";
    for (std::size_t i = 0; i < adev.size(); ++i) {
        out += fmt::format("{},{},{},{},{}\n", format_sig6(adev[i].tau), format_sig6(adev[i].dev),
                           i < mdev.size() ? format_sig6(mdev[i].dev) : "nan",
                           i < tdev.size() ? format_sig6(tdev[i].dev) : "nan", adev[i].terms);
    }
    return out;
}

}  // namespace qtt
