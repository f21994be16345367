#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qtt/clock_model.hpp"
#include "qtt/orbit.hpp"
#include "qtt/orbit_tracking.hpp"
#include "qtt/photon_source.hpp"
#include "qtt/stability.hpp"
#include "qtt/two_way_sync.hpp"

namespace qtt {

// Syntax or validation problem in a configuration file. `line` is 0 when not tied to a line.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& what, int line = 0);
    int line() const { return line_; }

private:
    int line_;
};

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrackingConfig {
    CoarseScanConfig scan{};
    FitOptions fit{};
};

struct Scenario {
    std::string label;
    double duration = 0.0;  // s
    SourceConfig source_a{};
    SourceConfig source_b{};
    ClockParams clock_a{};
    ClockParams clock_b{};
    std::optional<double> range_m;      // stationary link
    std::optional<OrbitParams> orbit;   // satellite pass; Alice on the satellite, Bob on the ground
    double pass_center = 0.0;           // s of tag time at which the satellite is overhead
    AcquisitionConfig acquisition{};
    std::optional<TrackingConfig> tracking;

    PassGeometry pass() const;
};

// Key/value text with [section] headers; '#' starts a comment. Unknown keys and sections are rejected.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);
std::string format_scenario(const Scenario& s);

// Replaces every seed in the scenario with one derived from `base`.
void override_seeds(Scenario& s, std::uint64_t base);

// What the measurement pipeline may know: no clocks, no true orbit elements.
struct MeasurementConfig {
    std::string label;
    AcquisitionConfig acquisition{};
    bool has_orbit = false;
    PassGeometry pass{};
    TrackingConfig tracking{};
};

MeasurementConfig measurement_config(const Scenario& s);
std::string format_measurement_config(const MeasurementConfig& m);
MeasurementConfig parse_measurement_config(const std::string& text);

// Tag files. Binary: 16-byte header ("QTTTAGS1", u32 version = 1, u32 record count) then 16-byte
// little-endian records (i64 picoseconds, u8 channel, 7 zero bytes). CSV: header `channel,picoseconds`.
void write_tags_binary(const std::filesystem::path& path, const std::vector<TagStream>& streams);
std::vector<TagStream> read_tags_binary(const std::filesystem::path& path);
void write_tags_csv(const std::filesystem::path& path, const std::vector<TagStream>& streams);
std::vector<TagStream> read_tags_csv(const std::filesystem::path& path);
// Dispatches on the extension (.csv or binary).
void write_tags(const std::filesystem::path& path, const std::vector<TagStream>& streams);
std::vector<TagStream> read_tags(const std::filesystem::path& path);

SiteStreams to_site_streams(const std::vector<TagStream>& streams);
std::vector<TagStream> from_site_streams(const SiteStreams& streams);

// Writes via a temporary file in the same directory and renames over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

// Fixed decimal text: ps quantities with 3 decimals, deviations with 6 significant figures.
std::string format_ps(double ps);
std::string format_sig6(double value);

std::string format_records_csv(const std::vector<SyncRecord>& records);
std::vector<SyncRecord> parse_records_csv(const std::string& text);

std::string format_deviation_table(const std::vector<DeviationPoint>& adev, const std::vector<DeviationPoint>& mdev,
                                   const std::vector<DeviationPoint>& tdev);

}  // namespace qtt
