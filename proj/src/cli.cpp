#include "aphi/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "aphi/acceptance.hpp"
#include "aphi/config.hpp"
#include "aphi/errors.hpp"
#include "aphi/noise.hpp"
#include "aphi/parallel.hpp"
#include "aphi/snapshot.hpp"
#include "aphi/spectral.hpp"
#include "aphi/version.hpp"

namespace aphi {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Options {
    std::string command, config, out, profile = "full", stat = "cancel";
    std::uint64_t seed = 0;
    bool seed_given = false;
    int workers = 0;
    int modes = -1;
    long samples = 10000;
};

struct Check {
    std::string name;
    bool passed;
};

// Collects the files of one run and writes the manifest last.
class Output {
public:
    Output(const Options& o, std::string hash) : dir_(o.out), opt_(o), hash_(std::move(hash)) {
        fs::create_directories(dir_);
    }

    void text(const std::string& name, const std::string& body) {
        std::ofstream f(fs::path(dir_) / name, std::ios::binary);
        f << body;
        if (!f) throw std::runtime_error("cannot write " + (fs::path(dir_) / name).string());
        files_.push_back(name);
    }

    void report(const std::string& name, json body) {
        body["manifest"] = "manifest.json";
        body["config_hash"] = hash_;
        text(name, body.dump(2) + "\n");
    }

    void snapshot(const std::string& name, const RealField& f, double t) {
        fs::create_directories(fs::path(dir_ / fs::path(name)).parent_path());
        write_snapshot((fs::path(dir_) / name).string(), f, t);
        files_.push_back(name);
    }

    void check(const std::string& name, bool passed) { checks_.push_back({name, passed}); }

    bool all_passed() const {
        for (const Check& c : checks_)
            if (!c.passed) return false;
        return true;
    }

    void manifest(double seconds) {
        json checks = json::array();
        for (const Check& c : checks_) checks.push_back({{"name", c.name}, {"passed", c.passed}});
        const json m = {{"command", opt_.command},     {"config_hash", hash_},
                        {"code_version", kVersion},    {"wall_clock_seconds", seconds},
                        {"workers", resolve_workers(opt_.workers)},
                        {"files", files_},             {"checks", checks}};
        std::ofstream f(fs::path(dir_) / "manifest.json", std::ios::binary);
        f << m.dump(2) << "\n";
    }

private:
    fs::path dir_;
    const Options& opt_;
    std::string hash_;
    std::vector<std::string> files_;
    std::vector<Check> checks_;
};

std::string csv_number(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

json mean_json(const MeanEstimate& m) {
    return {{"mean", m.mean}, {"stderr", m.stderr_}, {"samples", m.samples}};
}

RealField scaled_cos(const TorusGrid& g, double a) {
    return RealField::from_function(g, [a](double x, double) { return a * std::cos(x); });
}

void cmd_spectrum(const ExperimentConfig& c, Output& out) {
    const TorusGrid g = c.grid();
    RngStream rng(c.seed, StreamPurpose::space_noise, 0);
    const RealField xi = sample_space_white_noise(g, rng);
    const double ren = c.hamiltonian.renorm ? *c.hamiltonian.renorm : renorm_constant(g);
    const PositiveShift ps = ensure_positive(assemble(xi, ren, c.hamiltonian.mass), c.hamiltonian.mass_floor);
    std::ostringstream csv;
    csv << "index,lambda\n";
    for (int k = 0; k < ps.op.dimension(); ++k) csv << k << "," << csv_number(ps.op.eigenvalues[k]) << "\n";
    out.text("spectrum.csv", csv.str());
    out.report("spectrum.json", {{"M", c.M}, {"L", c.L}, {"c_h", ren}, {"mass", ps.op.mass},
                                 {"shift", ps.increment}, {"lambda_min", ps.op.lowest_eigenvalue()},
                                 {"lambda_max", ps.op.eigenvalues[ps.op.dimension() - 1]}});
}

void cmd_wick(const ExperimentConfig& c, const Options& o, Output& out) {
    const AndersonOperator op = build_operator(c);
    const TorusGrid& g = op.grid;
    const int N = o.modes < 0 ? g.size() - 1 : o.modes;
    if (N >= g.size()) throw ConfigError("--modes exceeds the number of modes", "modes");
    const WickSampling ws{o.samples, c.seed, o.workers};
    if (c.wick.probe_sites > g.size()) throw ConfigError("wick.probe_sites: exceeds M^2", "wick.probe_sites");
    for (int n : c.wick.cauchy_N)
        if (o.stat == "cauchy" && 2 * n >= g.size())
            throw ConfigError("wick.cauchy_N: 2N must stay below M^2", "wick.cauchy_N");
    json r = {{"stat", o.stat}, {"M", c.M}, {"modes", N}, {"samples", o.samples}};
    if (o.stat == "cancel") {
        std::vector<int> sites;
        for (int i = 0; i < c.wick.probe_sites; ++i) sites.push_back(int((long(i) * g.size()) / c.wick.probe_sites));
        json rows = json::array();
        double worst = 0.0;
        for (const SiteMean& s : wick_cancellation(op, N, sites, ws)) {
            worst = std::max(worst, std::abs(s.mean) / s.stderr_);
            rows.push_back({{"site", s.site}, {"mean", s.mean}, {"stderr", s.stderr_}});
        }
        r["sites"] = rows;
        r["max_abs_z"] = worst;
        out.check("cancellation within 3 stderr", worst < 3.0);
    } else if (o.stat == "covariance") {
        const int M = c.M, m = M / 2;
        auto site = [&](int a, int b) { return g.index(a % M, b % M); };
        const std::vector<std::pair<int, int>> pairs{{site(m, m), site(m, m)}, {site(m, m), site(m + 1, m)},
                                                     {site(m, m), site(m + 1, m + 1)}, {site(m, m), site(m + 2, m)},
                                                     {site(m, m), site(m + 2, m + 1)}};
        json rows = json::array();
        double worst = 0.0;
        for (const CovariancePair& p : chaos_covariance(op, N, pairs, ws)) {
            worst = std::max(worst, p.relative_error);
            rows.push_back({{"x", p.x}, {"y", p.y}, {"covariance", p.covariance}, {"chaos", p.chaos},
                            {"chaos_stderr", p.chaos_stderr}, {"relative_error", p.relative_error}});
        }
        r["pairs"] = rows;
        r["max_relative_error"] = worst;
        out.check("chaos covariance within 15%", worst < 0.15);
    } else if (o.stat == "logdiv") {
        std::vector<int> Ns;
        for (int n = 16; n <= g.size() / 2; n *= 2) Ns.push_back(n);
        const LogDivergence ld = sigma_log_divergence(op, Ns);
        r.erase("samples");
        r["N"] = ld.N;
        r["mean_sigma"] = ld.mean_sigma;
        r["slope"] = ld.slope;
        r["r_squared"] = ld.r_squared;
        out.check("log-divergence fit R^2 > 0.9", ld.r_squared > 0.9);
    } else if (o.stat == "cauchy") {
        const CauchyTrend t = cauchy_differences(op, c.wick.cauchy_N, c.wick.cauchy_eps, ws);
        r.erase("modes");
        r["N"] = t.N;
        r["renormalized"] = t.renormalized;
        r["unrenormalized"] = t.unrenormalized;
        r["renormalized_decreasing"] = t.renormalized_decreasing;
        r["unrenormalized_decreasing"] = t.unrenormalized_decreasing;
        out.check("renormalized differences decrease", t.renormalized_decreasing);
        out.check("unrenormalized differences do not decrease", !t.unrenormalized_decreasing);
    } else {
        throw ConfigError("--stat must be cancel, covariance, logdiv or cauchy", "stat");
    }
    out.report("wick_" + o.stat + ".json", r);
}

void cmd_simulate(const ExperimentConfig& c, Output& out) {
    const AndersonOperator op = build_operator(c);
    const RealField u0 = build_initial(c, op.grid);
    std::vector<double> times = c.simulate.record_times;
    if (times.empty() || std::abs(times.back() - c.solver.T) > 1e-12) times.push_back(c.solver.T);
    RngStream rng(c.seed, StreamPurpose::time_noise, 0);
    const Trajectory tr = simulate(op, u0, c.solver, rng, times, c.simulate.diagnostic_stride);
    std::ostringstream csv;
    csv << "t,L2,L4,L3p2,besov,K,K_tilde\n";
    for (const DiagnosticRow& d : tr.diagnostics)
        csv << csv_number(d.t) << "," << csv_number(d.l2) << "," << csv_number(d.l4) << ","
            << csv_number(d.l3p2) << "," << csv_number(d.besov) << "," << csv_number(d.K) << ","
            << csv_number(d.K_tilde) << "\n";
    out.text("diagnostics.csv", csv.str());
    json snaps = json::array();
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
        std::ostringstream name;
        name << "snapshots/u_" << std::setw(4) << std::setfill('0') << i << ".aphi";
        out.snapshot(name.str(), tr.u[i], tr.times[i]);
        snaps.push_back({{"file", name.str()}, {"t", tr.times[i]}});
    }
    const RealField& last = tr.u.back();
    out.report("simulate.json", {{"M", c.M}, {"T", c.solver.T}, {"dt", c.solver.dt},
                                 {"steps", c.solver.steps()}, {"substeps", tr.substeps},
                                 {"snapshots", snaps},
                                 {"final", {{"L2", lp_norm(last, 2.0)},
                                            {"besov", besov_norm(last, -c.solver.eps, kInf, kInf)}}}});
}

void cmd_couple(const ExperimentConfig& c, Output& out) {
    const AndersonOperator op = build_operator(c);
    RealField a(op.grid), b(op.grid);
    a.values.setConstant(c.couple.amplitude);
    json runs = json::array();
    int good = 0;
    for (std::uint64_t s : c.couple.seeds) {
        const CouplingResult r = synchronous_couple(op, c.solver, a, b, c.solver.T, s);
        std::ostringstream csv;
        csv << "t,d_l2,d_besov\n";
        for (std::size_t i = 0; i < r.times.size(); ++i)
            csv << csv_number(r.times[i]) << "," << csv_number(r.d_l2[i]) << "," << csv_number(r.d_besov[i]) << "\n";
        out.text("couple_" + std::to_string(s) + ".csv", csv.str());
        good += r.rate > 0 && r.r_squared > 0.7;
        runs.push_back({{"seed", s}, {"rate", r.rate}, {"r_squared", r.r_squared}, {"fit_accepted", r.fit_accepted}});
    }
    const int need = std::max<int>(1, int(c.couple.seeds.size()) - 1);
    out.report("couple.json", {{"T", c.solver.T}, {"amplitude", c.couple.amplitude}, {"runs", runs},
                               {"accepted", good}, {"needed", need}});
    out.check("positive coupling rate with R^2 > 0.7", good >= need);
}

void cmd_ergodicity(const ExperimentConfig& c, const Options& o, Output& out) {
    const AndersonOperator op = build_operator(c);
    const TorusGrid& g = op.grid;
    const ErgodicitySpec& e = c.ergodicity;
    RealField a(g), b(g);
    a.values.setConstant(e.amplitude);
    McOptions mc;
    mc.seed = c.seed;
    mc.workers = o.workers;
    mc.samples = e.ks_samples;
    const Observable mean_obs = Observable::linear(
        RealField::from_function(g, [&](double, double) { return 1.0 / (c.L * c.L); }));
    const std::vector<MixingPoint> ks = mixing_distance(op, c.solver, mean_obs, a, b, e.ks_times, mc);
    std::ostringstream kcsv;
    kcsv << "t,ks,p_value\n";
    bool decreasing = true;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (i > 0) decreasing &= ks[i].ks.statistic < ks[i - 1].ks.statistic;
        kcsv << csv_number(ks[i].t) << "," << csv_number(ks[i].ks.statistic) << ","
             << csv_number(ks[i].ks.p_value) << "\n";
    }
    out.text("ks.csv", kcsv.str());

    const Observable bounded = Observable::fourier_char(scaled_cos(g, e.observable_scale), M_PI / 4);
    mc.samples = e.kb_samples;
    mc.seed = c.seed + 1;
    const KrylovBogoliubov ka = krylov_bogoliubov(op, c.solver, bounded, a, e.kb_T, mc);
    mc.stream_offset = std::uint64_t(e.kb_samples);
    const KrylovBogoliubov kb = krylov_bogoliubov(op, c.solver, bounded, b, e.kb_T, mc);
    std::ostringstream bcsv;
    bcsv << "t,mean_a,var_a,mean_b,var_b\n";
    for (std::size_t i = 0; i < ka.times.size(); ++i)
        bcsv << csv_number(ka.times[i]) << "," << csv_number(ka.running_mean[i]) << ","
             << csv_number(ka.running_var[i]) << "," << csv_number(kb.running_mean[i]) << ","
             << csv_number(kb.running_var[i]) << "\n";
    out.text("kb.csv", bcsv.str());
    const double z = std::abs(joint_z(ka.final, kb.final));
    json kj = json::array();
    for (const MixingPoint& m : ks) kj.push_back({{"t", m.t}, {"statistic", m.ks.statistic}, {"p_value", m.ks.p_value}});
    out.report("ergodicity.json",
               {{"ks", {{"observable", mean_obs.describe()}, {"samples", e.ks_samples}, {"points", kj},
                        {"decreasing", decreasing}}},
                {"krylov_bogoliubov", {{"observable", bounded.describe()}, {"T", e.kb_T},
                                       {"from_a", mean_json(ka.final)}, {"from_b", mean_json(kb.final)},
                                       {"joint_z", z}, {"variance_slope", {ka.variance_slope, kb.variance_slope}}}}});
    out.check("KS distance decreasing", decreasing);
    out.check("Krylov-Bogoliubov averages within 2 joint stderr", z < 2.0);
}

void cmd_bel(const ExperimentConfig& c, const Options& o, Output& out) {
    const AndersonOperator op = build_operator(c);
    const TorusGrid& g = op.grid;
    const BelSpec& s = c.bel;
    const RealField h = scaled_cos(g, 1.0);
    const Observable phi = Observable::fourier_char(scaled_cos(g, s.observable_scale), M_PI / 4);
    const RealField u0 = build_initial(c, g);
    McOptions mc;
    mc.samples = s.samples;
    mc.seed = c.seed;
    mc.workers = o.workers;
    BelOptions bo;
    bo.c_tilde = s.c_tilde;
    bo.pV = s.pV;
    bo.epsV = s.epsV;
    bo.fd_delta = s.fd_delta;
    json r = {{"t", s.t}, {"samples", s.samples},
              {"potential", {{"c_tilde", s.c_tilde}, {"p", s.pV}, {"eps", s.epsV}}}};
    std::vector<MeanEstimate> estimates;
    for (const char* v : {"plain", "feynman_kac"}) {
        if (s.variant != "both" && s.variant != v) continue;
        bo.variant = std::string(v) == "plain" ? BelVariant::plain : BelVariant::feynman_kac;
        const BelResult b = bel_derivative(op, c.solver, phi, u0, h, s.t, mc, bo);
        const double rel = std::abs(b.estimate.mean - b.fd.mean) / std::abs(b.fd.mean);
        const double z = std::abs(joint_z(b.estimate, b.fd));
        r[v] = {{"estimate", mean_json(b.estimate)}, {"finite_difference", mean_json(b.fd)},
                {"paired_gap", mean_json(b.paired_gap)}, {"relative", rel}, {"joint_z", z}};
        if (bo.variant == BelVariant::feynman_kac) r[v]["fk_semigroup"] = mean_json(b.fk_semigroup);
        out.check(std::string(v) + " agrees with finite difference", rel < 0.1 || z < 2.0);
        estimates.push_back(b.estimate);
    }
    if (estimates.size() == 2) {
        const double z = std::abs(joint_z(estimates[0], estimates[1]));
        r["plain_vs_fk_joint_z"] = z;
        out.check("plain and Feynman-Kac within 2 joint stderr", z < 2.0);
    }
    out.report("bel.json", r);
}

void cmd_relax(const ExperimentConfig& c, Output& out) {
    const AndersonOperator op = build_operator(c);
    const RealField u0 = build_initial(c, op.grid);
    const RelaxationOptions& ro = c.relax.options;
    const RelaxationResult res = relaxation_probe(op, c.solver, u0, ro, c.seed);
    std::ostringstream csv;
    csv << "eps,hit_time,prediction\n";
    json rows = json::array();
    for (const RelaxationRow& row : res.rows) {
        const double pred = relaxation_prediction(op, c.solver, u0, 1.0, row.eps_target, ro.kappa);
        csv << csv_number(row.eps_target) << "," << csv_number(row.hit_time) << "," << csv_number(pred) << "\n";
        rows.push_back({{"eps", row.eps_target}, {"hit_time", row.hit_time}, {"prediction", pred}});
    }
    out.text("relax.csv", csv.str());
    out.report("relax.json", {{"rows", rows}, {"slope", res.fit.slope}, {"r_squared", res.fit.r_squared},
                              {"bound", res.bound}, {"conditioned", res.conditioned},
                              {"attempts", res.attempts}, {"lambda0", op.lowest_eigenvalue()}});
    out.check("hit time affine in log(1/eps) with R^2 > 0.8", res.conditioned && res.fit.r_squared > 0.8);
}

void cmd_sweep(const ExperimentConfig& c, Output& out) {
    const AndersonOperator op = build_operator(c);
    RealField profile = build_initial(c, op.grid);
    if (c.initial.kind == "zero") profile.values.setOnes();
    profile.values /= besov_norm(profile, -c.solver.eps, kInf, kInf);
    const ComingDownTable t = coming_down_sweep(op, c.solver, profile, c.sweep.scales, c.sweep.seeds);
    std::ostringstream csv;
    csv << "scale,seed,peak,bound\n";
    for (const ComingDownCell& cell : t.cells)
        csv << csv_number(cell.scale) << "," << cell.seed << "," << csv_number(cell.peak) << ","
            << csv_number(cell.bound) << "\n";
    out.text("sweep.csv", csv.str());
    out.report("sweep.json", {{"ratio_per_seed", t.ratio_per_seed}, {"worst_ratio", t.worst_ratio},
                              {"bound_holds", t.bound_holds}});
    out.check("peak ratio across scales < 1.2", t.worst_ratio < 1.2);
    out.check("bound 1 + K-tilde holds", t.bound_holds);
}

void cmd_accept(const Options& o, Output& out) {
    AcceptanceOptions a;
    a.profile = o.profile;
    a.seed = o.seed_given ? o.seed : 1;
    a.workers = o.workers;
    a.on_result = [](const CheckResult& r) { std::cout << one_line(r) << std::endl; };
    const std::vector<CheckResult> results = run_acceptance(a);
    std::ostringstream csv;
    csv << "criterion,name,passed\n";
    for (const CheckResult& r : results) {
        csv << r.id << "," << r.name << "," << (r.passed ? 1 : 0) << "\n";
        out.check(r.name, r.passed);
    }
    out.text("accept.csv", csv.str());
    out.report("accept.json", acceptance_report(a, results));
}

}  // namespace

int run(int argc, const char* const* argv) {
    const auto start = std::chrono::steady_clock::now();
    Options o;
    CLI::App app{"Lattice simulator for the Anderson Phi^4_2 stochastic quantization equation"};
    app.require_subcommand(1, 1);
    for (const char* name : {"spectrum", "wick", "simulate", "couple", "ergodicity", "bel", "relax", "sweep", "accept"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--workers", o.workers, "worker threads (results do not depend on it)");
        sub->add_option("--seed", o.seed, "overrides the configured seed")->each([&](const std::string&) { o.seed_given = true; });
        if (std::string(name) == "accept") {
            sub->add_option("--profile", o.profile)->check(CLI::IsMember({"quick", "full"}));
        } else {
            sub->add_option("--config", o.config, "JSON configuration")->required();
        }
        if (std::string(name) == "wick") {
            sub->add_option("--modes", o.modes, "truncation N (default: all modes)");
            sub->add_option("--samples", o.samples, "Monte Carlo samples");
            sub->add_option("--stat", o.stat)->check(CLI::IsMember({"cancel", "covariance", "logdiv", "cauchy"}));
        }
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    o.command = app.get_subcommands().front()->get_name();

    try {
        ExperimentConfig cfg;
        std::string hash;
        if (o.command == "accept") {
            if (o.out.empty()) o.out = "accept_out";
            json j = {{"command", "accept"}, {"profile", o.profile}, {"seed", o.seed_given ? o.seed : 1}};
            hash = fnv1a_hex(j.dump());
        } else {
            cfg = load_config(o.config);
            if (o.seed_given) cfg.seed = o.seed;
            if (o.out.empty()) o.out = cfg.output;
            hash = config_hash(cfg);
        }
        Output out(o, hash);
        if (o.command == "spectrum") cmd_spectrum(cfg, out);
        else if (o.command == "wick") cmd_wick(cfg, o, out);
        else if (o.command == "simulate") cmd_simulate(cfg, out);
        else if (o.command == "couple") cmd_couple(cfg, out);
        else if (o.command == "ergodicity") cmd_ergodicity(cfg, o, out);
        else if (o.command == "bel") cmd_bel(cfg, o, out);
        else if (o.command == "relax") cmd_relax(cfg, out);
        else if (o.command == "sweep") cmd_sweep(cfg, out);
        else if (o.command == "accept") cmd_accept(o, out);
        out.manifest(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        return out.all_passed() ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const IntegrationError& e) {
        std::cerr << "numerical failure at t = " << e.time() << ": " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace aphi
