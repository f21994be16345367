#include <doctest.h>

#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qtt/cli.hpp"
#include "qtt/scenario_io.hpp"

using namespace qtt;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run qtt_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("qtt_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Night scenario shortened to `seconds`.
fs::path short_night(const fs::path& dir, double seconds) {
    Scenario s = load_scenario(fs::path(QTT_SOURCE_DIR) / "scenarios" / "stationary_night.scenario");
    s.duration = seconds;
    const fs::path p = dir / "short.scenario";
    write_file_atomic(p, format_scenario(s));
    return p;
}

}  // namespace

TEST_CASE("cli version and usage errors") {
    const Run v = qtt_cli({"--version"});
    CHECK(v.code == 0);
    CHECK(v.out == std::string("qtt ") + kVersion + "\n");

    CHECK(qtt_cli({}).code == 2);
    CHECK(qtt_cli({"frobnicate"}).code == 2);
    CHECK(qtt_cli({"sync"}).code == 2);

    const fs::path empty = scratch_dir("empty");
    const Run r = qtt_cli({"sync", empty.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("usage error") != std::string::npos);
    CHECK(qtt_cli({"simulate", (empty / "missing.scenario").string(), "-o", empty.string()}).code == 2);
    CHECK(qtt_cli({"car", empty.string(), "--sweep", "1,abc"}).code == 2);
    fs::remove_all(empty);
}

TEST_CASE("cli simulate, sync and stability on a short stationary run") {
    const fs::path dir = scratch_dir("night");
    const fs::path scenario = short_night(dir, 40.0);
    const fs::path sim = dir / "sim";
    const Run s = qtt_cli({"simulate", scenario.string(), "-o", sim.string()});
    REQUIRE(s.code == 0);
    CHECK(fs::exists(sim / "tags.qtt"));
    CHECK(fs::exists(sim / "measurement.cfg"));
    CHECK(fs::exists(sim / "truth.json"));

    const Run drift = qtt_cli({"sync", sim.string(), "--mode", "drift"});
    REQUIRE(drift.code == 0);
    const auto records = parse_records_csv(read_file(sim / "records_drift.csv"));
    CHECK(records.size() == 40);
    std::vector<double> t, d;
    for (const SyncRecord& r : records) {
        if (!r.found()) continue;
        t.push_back(seconds_from_picos(r.t_mid));
        d.push_back(static_cast<double>(r.delta.count));
    }
    REQUIRE(t.size() >= 35);
    double mt = 0.0, md = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        mt += t[i];
        md += d[i];
    }
    mt /= static_cast<double>(t.size());
    md /= static_cast<double>(t.size());
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        sxx += (t[i] - mt) * (t[i] - mt);
        sxy += (t[i] - mt) * (d[i] - md);
    }
    CHECK(sxy / sxx == doctest::Approx(450.0).epsilon(0.05));

    const Run sync = qtt_cli({"sync", sim.string(), "--mode", "sync"});
    CHECK(sync.code == 0);
    const Run stab = qtt_cli({"stability", (sim / "records_sync.csv").string()});
    CHECK(stab.code == 0);
    CHECK(read_file(sim / "records_sync.csv.stability.csv").rfind("tau_s,", 0) == 0);

    const Run track = qtt_cli({"track", sim.string()});
    CHECK(track.code == 1);
    CHECK(track.err.find("scenario has no orbit") != std::string::npos);

    const Run range = qtt_cli({"range", (sim / "records_sync.csv").string()});
    CHECK(range.code == 0);
    fs::remove_all(dir);
}

TEST_CASE("cli simulate is deterministic for a fixed seed") {
    const fs::path dir = scratch_dir("determinism");
    const fs::path scenario = short_night(dir, 5.0);
    REQUIRE(qtt_cli({"--seed", "7", "simulate", scenario.string(), "-o", (dir / "a").string()}).code == 0);
    REQUIRE(qtt_cli({"--seed", "7", "simulate", scenario.string(), "-o", (dir / "b").string()}).code == 0);
    REQUIRE(qtt_cli({"--seed", "8", "simulate", scenario.string(), "-o", (dir / "c").string()}).code == 0);
    CHECK(read_file(dir / "a" / "tags.qtt") == read_file(dir / "b" / "tags.qtt"));
    CHECK(read_file(dir / "a" / "truth.json") == read_file(dir / "b" / "truth.json"));
    CHECK(read_file(dir / "a" / "tags.qtt") != read_file(dir / "c" / "tags.qtt"));

    REQUIRE(qtt_cli({"sync", (dir / "a").string()}).code == 0);
    REQUIRE(qtt_cli({"sync", (dir / "b").string()}).code == 0);
    CHECK(read_file(dir / "a" / "records_sync.csv") == read_file(dir / "b" / "records_sync.csv"));
    fs::remove_all(dir);
}
