#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aphi/ergodicity.hpp"
#include "aphi/hamiltonian.hpp"
#include "aphi/solver.hpp"

namespace aphi {

// Initial datum u0: zero, constant(amplitude), sine(amplitude sin x2) or a snapshot file.
struct InitialSpec {
    std::string kind = "zero";
    double amplitude = 0.0;
    std::string path;
};

struct HamiltonianSpec {
    double mass_floor = 1.0;            // lambda_min enforced by ensure_positive
    std::optional<double> renorm;       // empty means the lattice constant c_h
    double mass = 0.0;
};

struct SimulateSpec {
    std::vector<double> record_times;   // snapshot times; T is always recorded
    int diagnostic_stride = 1;
};

struct CoupleSpec {
    double amplitude = 10.0;            // u0 = amplitude, u0~ = 0
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

struct ErgodicitySpec {
    double amplitude = 10.0;
    long ks_samples = 400;
    std::vector<double> ks_times{1.0, 3.0, 10.0};
    double kb_T = 50.0;
    long kb_samples = 32;
    double observable_scale = 0.2;      // phi(u) = cos(<scale cos x1, u> + pi/4)
};

struct BelSpec {
    long samples = 10000;
    double t = 0.5;
    std::string variant = "both";       // plain | feynman_kac | both
    double c_tilde = 1.0;
    int pV = 2;
    double epsV = 0.25;
    double fd_delta = 1e-4;
    double observable_scale = 0.2;
};

struct RelaxSpec {
    RelaxationOptions options;
};

struct SweepSpec {
    std::vector<double> scales{1.0, 10.0, 100.0, 1000.0};
    std::vector<std::uint64_t> seeds{1, 2, 3};
};

struct WickSpec {
    std::vector<int> cauchy_N{16, 32, 64, 128};
    double cauchy_eps = 0.25;
    int probe_sites = 10;
};

struct ExperimentConfig {
    int M = 0;                          // required
    double L = 6.283185307179586;
    HamiltonianSpec hamiltonian;
    SolverConfig solver;
    InitialSpec initial;
    std::uint64_t seed = 1;
    std::string output = "out";
    SimulateSpec simulate;
    CoupleSpec couple;
    ErgodicitySpec ergodicity;
    BelSpec bel;
    RelaxSpec relax;
    SweepSpec sweep;
    WickSpec wick;

    TorusGrid grid() const { return TorusGrid::make(M, L); }
};

// Strict parse: unknown keys and missing grid.M raise ConfigError naming the key.
ExperimentConfig parse_config(const nlohmann::json& j);
// Reads and parses a file; messages carry the file name and, where found, the line.
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& c);

// FNV-1a 64 of the canonical serialization, as 16 hex digits.
std::string config_hash(const ExperimentConfig& c);
std::string fnv1a_hex(const std::string& s);

// xi from RngStream(seed, space_noise, 0), then assemble and ensure_positive.
AndersonOperator build_operator(const ExperimentConfig& c);
RealField build_initial(const ExperimentConfig& c, const TorusGrid& g);

}  // namespace aphi
