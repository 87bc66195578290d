#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "aphi/cli.hpp"
#include "aphi/config.hpp"
#include "aphi/errors.hpp"
#include "aphi/snapshot.hpp"

using namespace aphi;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("aphi_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "aphi42");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(int(argv.size()), argv.data());
}

const char* kSmall = R"({
  "grid": {"M": 8},
  "solver": {"dt": 0.01, "T": 0.1},
  "initial": {"kind": "sine", "amplitude": 1.0},
  "seed": 3
})";

}  // namespace

TEST(Config, RoundTrip) {
    const ExperimentConfig c = parse_config(json::parse(kSmall));
    const json once = to_json(c);
    EXPECT_EQ(to_json(parse_config(once)), once);
    EXPECT_EQ(c.M, 8);
    EXPECT_EQ(c.seed, 3u);
    EXPECT_EQ(config_hash(c), config_hash(parse_config(once)));
}

TEST(Config, MissingGridSize) {
    try {
        parse_config(json::parse(R"({"solver": {"dt": 0.01}})"));
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("grid.M"), std::string::npos);
    }
}

TEST(Config, UnknownKeyAndBadGrid) {
    EXPECT_THROW(parse_config(json::parse(R"({"grid": {"M": 8}, "solver": {"dtt": 0.1}})")), ConfigError);
    EXPECT_THROW(parse_config(json::parse(R"({"grid": {"M": 12}})")), ConfigError);
    EXPECT_THROW(parse_config(json::parse(R"({"grid": {"M": "8"}})")), ConfigError);
}

TEST(Cli, ExitCodes) {
    const fs::path d = scratch("exit");
    write(d / "miss.json", R"({"solver": {"dt": 0.01}})");
    EXPECT_EQ(cli({"simulate", "--config", (d / "miss.json").string(), "--out", (d / "o").string()}), 2);
    EXPECT_EQ(cli({"simulate", "--config", (d / "absent.json").string()}), 2);
    EXPECT_EQ(cli({"nonsense"}), 2);
}

TEST(Cli, SimulateWritesManifestAndSnapshots) {
    const fs::path d = scratch("sim");
    write(d / "c.json", kSmall);
    ASSERT_EQ(cli({"simulate", "--config", (d / "c.json").string(), "--out", (d / "o").string()}), 0);
    const json m = json::parse(slurp(d / "o" / "manifest.json"));
    EXPECT_EQ(m["command"], "simulate");
    EXPECT_TRUE(fs::exists(d / "o" / "diagnostics.csv"));
    bool snapshot = false;
    for (const auto& f : m["files"]) {
        EXPECT_TRUE(fs::exists(d / "o" / f.get<std::string>())) << f;
        snapshot |= f.get<std::string>().find(".aphi") != std::string::npos;
    }
    EXPECT_TRUE(snapshot);
    const Snapshot s = read_snapshot((d / "o" / "snapshots" / "u_0000.aphi").string());
    EXPECT_EQ(s.field.grid.points_per_side, 8);
}

TEST(Cli, WickOutputIndependentOfWorkers) {
    const fs::path d = scratch("wick");
    write(d / "c.json", kSmall);
    for (const char* w : {"1", "3"})
        cli({"wick", "--config", (d / "c.json").string(), "--out", (d / w).string(), "--workers", w,
             "--samples", "640", "--stat", "covariance"});
    const std::string a = slurp(d / "1" / "wick_covariance.json");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(d / "3" / "wick_covariance.json"));
}

TEST(Snapshot, RoundTripBytes) {
    const TorusGrid g = TorusGrid::make(8);
    const RealField f = RealField::from_function(g, [](double x, double y) { return std::sin(x) * std::exp(y); });
    const std::string bytes = encode_snapshot(f, 1.25);
    EXPECT_EQ(bytes.size(), 32u + 64u * 8u);
    const Snapshot s = decode_snapshot(bytes);
    EXPECT_EQ(s.time, 1.25);
    EXPECT_EQ(s.field.values, f.values);
    EXPECT_EQ(s.field.grid, g);
    EXPECT_EQ(encode_snapshot(s.field, s.time), bytes);
}

TEST(Snapshot, CorruptFilesAreRejected) {
    const TorusGrid g = TorusGrid::make(4);
    const std::string bytes = encode_snapshot(RealField(g), 0.0);
    EXPECT_THROW(decode_snapshot(bytes.substr(0, bytes.size() - 1)), FormatError);
    EXPECT_THROW(decode_snapshot(bytes.substr(0, 10)), FormatError);
    std::string magic = bytes;
    magic[0] = 'X';
    EXPECT_THROW(decode_snapshot(magic), FormatError);
    std::string version = bytes;
    version[4] = 9;
    EXPECT_THROW(decode_snapshot(version), FormatError);
}

TEST(Snapshot, InitialDatumFromFile) {
    const fs::path d = scratch("snap");
    const TorusGrid g = TorusGrid::make(8);
    write_snapshot((d / "u.aphi").string(), RealField::from_function(g, [](double x, double) { return x; }), 0.0);
    ExperimentConfig c = parse_config(json::parse(kSmall));
    c.initial.kind = "snapshot";
    c.initial.path = (d / "u.aphi").string();
    EXPECT_EQ(build_initial(c, g).values, read_snapshot(c.initial.path).field.values);
    EXPECT_THROW(build_initial(c, TorusGrid::make(16)), GridMismatch);
}
