#include "aphi/acceptance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "aphi/ergodicity.hpp"
#include "aphi/errors.hpp"
#include "aphi/noise.hpp"
#include "aphi/spectral.hpp"
#include "aphi/wick.hpp"

namespace aphi {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Profile {
    bool quick = false;
    int instances = 50;
    int wick_M = 32;
    long cancel_samples = 10000, chaos_samples = 100000, cauchy_samples = 200;
    std::vector<int> cauchy_N{16, 32, 64, 128};
    int schauder_M = 32, schauder_data = 20;
    int cd_M = 32;
    double cd_dt = 1e-3;
    std::vector<std::uint64_t> cd_seeds{1, 2, 3};
    int bel_M = 16;
    long bel_samples = 10000;
    int mix_M = 16;
    double couple_T = 20.0;
    int couple_seeds = 5;
    long ks_samples = 400;
    double kb_T = 50.0;
    long kb_samples = 32;
    int relax_M = 16;
    double relax_T = 20.0;

    static Profile make(const std::string& name) {
        if (name == "full") return {};
        if (name != "quick") throw ConfigError("profile must be quick or full", "profile");
        Profile p;
        p.quick = true;
        p.instances = 10;
        p.wick_M = 16;
        p.cancel_samples = 2000;
        p.chaos_samples = 100000;
        p.cauchy_samples = 64;
        p.cauchy_N = {8, 16, 32, 64};
        p.schauder_M = 16;
        p.schauder_data = 6;
        p.cd_M = 16;
        p.cd_dt = 2e-3;
        p.cd_seeds = {1};
        p.bel_M = 8;
        p.bel_samples = 1000;
        p.mix_M = 8;
        p.couple_T = 10.0;
        p.couple_seeds = 3;
        p.ks_samples = 400;
        p.kb_T = 20.0;
        p.kb_samples = 16;
        p.relax_M = 8;
        p.relax_T = 10.0;
        return p;
    }
};

AndersonOperator sampled_operator(int M, std::uint64_t seed) {
    const TorusGrid g = TorusGrid::make(M);
    RngStream rng(seed, StreamPurpose::space_noise, 0);
    const RealField xi = sample_space_white_noise(g, rng);
    return ensure_positive(assemble(xi, renorm_constant(g), 0.0), 1.0).op;
}

RealField gaussian_field(const TorusGrid& g, RngStream& rng, double scale = 1.0) {
    RealField f(g);
    for (Eigen::Index i = 0; i < f.values.size(); ++i) f.values[i] = scale * rng.normal();
    return f;
}

double rel_sup(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).lpNorm<Eigen::Infinity>() / std::max(b.lpNorm<Eigen::Infinity>(), 1e-300);
}

// 1. LP reconstruction, Bony decomposition, Gamma o Phi = id, binomial Wick identity.
CheckResult harmonic_exactness(const Profile& pr, std::uint64_t seed) {
    CheckResult r{1, "harmonic-analysis exactness", false, json::object()};
    double lp = 0, bony = 0, gamma = 0, binom = 0;
    for (int M : {8, 16}) {
        const TorusGrid g = TorusGrid::make(M);
        for (int i = 0; i < pr.instances; ++i) {
            RngStream rng(seed, StreamPurpose::test_function, std::uint64_t(M) * 1000 + i);
            const RealField f = gaussian_field(g, rng), h = gaussian_field(g, rng);

            Eigen::VectorXd sum = Eigen::VectorXd::Zero(g.size());
            for (const RealField& b : lp_blocks(f)) sum += b.values;
            lp = std::max(lp, rel_sup(sum, f.values));

            const Eigen::VectorXd fg = f.values.cwiseProduct(h.values);
            const Eigen::VectorXd parts = paraproduct(f, h, ParaproductMode::lower).values +
                                          paraproduct(f, h, ParaproductMode::upper).values +
                                          paraproduct(f, h, ParaproductMode::resonant).values;
            bony = std::max(bony, rel_sup(parts, fg));

            const int n = 1;
            const RealField X = truncate_high(lift_X(gaussian_field(g, rng, 1.0 / g.spacing())), n);
            const RealField v = low_pass(gaussian_field(g, rng), 2);
            const ParacontrolledPair pair = gamma_map(phi_map(v, X), X, n, 1e-15, 500);
            gamma = std::max(gamma, rel_sup(pair.v.values, v.values));

            RealField sigma(g), P = gaussian_field(g, rng);
            for (Eigen::Index k = 0; k < sigma.values.size(); ++k) sigma.values[k] = 0.5 + rng.uniform();
            const std::array<RealField, 3> wick{f, wick_power(f, sigma, 2), wick_power(f, sigma, 3)};
            for (int deg = 1; deg <= 3; ++deg) {
                const RealField lhs = binomial_shift(wick, P, deg);
                Eigen::VectorXd rhs(g.size());
                for (int k = 0; k < g.size(); ++k)
                    rhs[k] = hermite(deg, f.values[k] - P.values[k], sigma.values[k]);
                binom = std::max(binom, rel_sup(lhs.values, rhs));
            }
        }
    }
    const double tol = 1e-10;
    r.values = {{"instances_per_M", pr.instances}, {"M", {8, 16}}, {"tolerance", tol},
                {"lp_reconstruction", lp}, {"bony", bony}, {"gamma_phi", gamma},
                {"binomial_wick", binom}};
    r.passed = lp < tol && bony < tol && gamma < tol && binom < tol;
    return r;
}

std::vector<int> probe_sites(const TorusGrid& g, int count) {
    std::vector<int> s;
    const int n = g.size();
    for (int i = 0; i < count; ++i) s.push_back(int((long(i) * n) / count + i) % n);
    return s;
}

// 2. sigma log-divergence, Wick cancellation, chaos covariance.
CheckResult renormalization_signature(const Profile& pr, std::uint64_t seed, int workers) {
    CheckResult r{2, "renormalization signature", false, json::object()};
    const AndersonOperator op = sampled_operator(pr.wick_M, seed);
    const TorusGrid& g = op.grid;
    const int top = g.size() - 1;

    std::vector<int> Ns;
    for (int N = 16; N <= g.size() / 2; N *= 2) Ns.push_back(N);
    const LogDivergence ld = sigma_log_divergence(op, Ns);

    WickSampling ws{pr.cancel_samples, seed, workers};
    const std::vector<SiteMean> cancel = wick_cancellation(op, top, probe_sites(g, 10), ws);
    double worst_z = 0.0;
    json jc = json::array();
    for (const SiteMean& s : cancel) {
        worst_z = std::max(worst_z, std::abs(s.mean) / s.stderr_);
        jc.push_back({{"site", s.site}, {"mean", s.mean}, {"stderr", s.stderr_}});
    }

    const int M = g.points_per_side;
    auto site = [&](int a, int b) { return g.index(a % M, b % M); };
    const int c = M / 2;
    const std::vector<std::pair<int, int>> pairs{{site(c, c), site(c, c)},
                                                 {site(c, c), site(c + 1, c)},
                                                 {site(3, 5), site(4, 6)},
                                                 {site(c, 2), site(c + 2, 2)},
                                                 {site(1, c), site(3, c + 1)}};
    ws.samples = pr.chaos_samples;
    ws.seed = seed + 1;
    const std::vector<CovariancePair> chaos = chaos_covariance(op, top, pairs, ws);
    double worst_rel = 0.0;
    json jp = json::array();
    for (const CovariancePair& p : chaos) {
        worst_rel = std::max(worst_rel, p.relative_error);
        jp.push_back({{"x", p.x}, {"y", p.y}, {"covariance", p.covariance}, {"chaos", p.chaos},
                      {"chaos_stderr", p.chaos_stderr}, {"relative_error", p.relative_error}});
    }
    r.values = {{"M", M},
                {"log_divergence", {{"N", ld.N}, {"mean_sigma", ld.mean_sigma}, {"slope", ld.slope},
                                    {"r_squared", ld.r_squared}, {"threshold", 0.9}}},
                {"cancellation", {{"samples", pr.cancel_samples}, {"sites", jc},
                                  {"max_abs_z", worst_z}, {"threshold", 3.0}}},
                {"chaos", {{"samples", pr.chaos_samples}, {"pairs", jp},
                           {"max_relative_error", worst_rel}, {"threshold", 0.15}}}};
    r.passed = ld.r_squared > 0.9 && worst_z < 3.0 && worst_rel < 0.15;
    return r;
}

// 3. Renormalized differences shrink along N, unrenormalized ones do not.
CheckResult renormalization_necessity(const Profile& pr, std::uint64_t seed, int workers) {
    CheckResult r{3, "renormalization necessity", false, json::object()};
    const AndersonOperator op = sampled_operator(pr.wick_M, seed);
    const WickSampling ws{pr.cauchy_samples, seed + 2, workers};
    const CauchyTrend t = cauchy_differences(op, pr.cauchy_N, 0.25, ws);
    r.values = {{"M", pr.wick_M}, {"samples", pr.cauchy_samples}, {"N", t.N}, {"eps", 0.25},
                {"renormalized", t.renormalized}, {"unrenormalized", t.unrenormalized},
                {"renormalized_decreasing", t.renormalized_decreasing},
                {"unrenormalized_decreasing", t.unrenormalized_decreasing}};
    r.passed = t.renormalized_decreasing && !t.unrenormalized_decreasing;
    return r;
}

// 4. Schauder smoothing exponent on a sampled operator.
CheckResult schauder_exponent(const Profile& pr, std::uint64_t seed) {
    CheckResult r{4, "Schauder exponent", false, json::object()};
    const double alpha = -0.2, beta = 0.4;
    const AndersonOperator op = sampled_operator(pr.schauder_M, seed);
    RngStream rng(seed, StreamPurpose::initial_data, 0);
    std::vector<RealField> data;
    for (int i = 0; i < pr.schauder_data; ++i) data.push_back(rough_profile(op.grid, alpha, rng));
    const SchauderFit f = schauder_exponent_fit(op, alpha, beta, data);
    const double target = -(beta - alpha) / 2;
    r.values = {{"M", pr.schauder_M}, {"data", pr.schauder_data}, {"alpha", alpha}, {"beta", beta},
                {"slope", f.slope}, {"r_squared", f.r_squared}, {"target", target},
                {"tolerance", 0.15}};
    r.passed = std::abs(f.slope - target) <= 0.15;
    return r;
}

// 5. Coming down from infinity.
CheckResult coming_down(const Profile& pr, std::uint64_t seed) {
    CheckResult r{5, "coming down from infinity", false, json::object()};
    const AndersonOperator op = sampled_operator(pr.cd_M, seed);
    SolverConfig cfg;
    cfg.dt = pr.cd_dt;
    cfg.T = 1.0;
    cfg.p = 2;
    RealField profile(op.grid);
    profile.values.setOnes();
    profile.values /= besov_norm(profile, -cfg.eps, kInf, kInf);
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s : pr.cd_seeds) seeds.push_back(seed * 100 + s);
    const ComingDownTable t = coming_down_sweep(op, cfg, profile, {1.0, 10.0, 100.0, 1000.0}, seeds);
    json cells = json::array();
    for (const ComingDownCell& c : t.cells)
        cells.push_back({{"scale", c.scale}, {"seed", c.seed}, {"peak", c.peak}, {"bound", c.bound}});
    r.values = {{"M", pr.cd_M}, {"dt", pr.cd_dt}, {"cells", cells},
                {"ratio_per_seed", t.ratio_per_seed}, {"worst_ratio", t.worst_ratio},
                {"ratio_threshold", 1.2}, {"bound_holds", t.bound_holds}};
    r.passed = t.worst_ratio < 1.2 && t.bound_holds;
    return r;
}

json mean_json(const MeanEstimate& m) {
    return {{"mean", m.mean}, {"stderr", m.stderr_}, {"samples", m.samples}};
}

// 6. BEL derivative against common-random-number finite differences.
CheckResult derivative_consistency(const Profile& pr, std::uint64_t seed, int workers) {
    CheckResult r{6, "derivative consistency", false, json::object()};
    const AndersonOperator op = sampled_operator(pr.bel_M, seed);
    const TorusGrid& g = op.grid;
    const double t = 0.5;
    SolverConfig cfg;
    cfg.dt = 0.005;
    cfg.T = t;
    const RealField h = RealField::from_function(g, [](double x, double) { return std::cos(x); });
    RealField fs = h;
    fs.values *= 0.2;
    const Observable phi = Observable::fourier_char(fs, M_PI / 4);
    const RealField u0 = RealField::from_function(g, [](double, double y) { return 0.5 * std::sin(y); });
    McOptions mc;
    mc.samples = pr.bel_samples;
    mc.seed = seed + 3;
    mc.workers = workers;
    BelOptions bo;
    const BelResult plain = bel_derivative(op, cfg, phi, u0, h, t, mc, bo);
    bo.variant = BelVariant::feynman_kac;
    const BelResult fk = bel_derivative(op, cfg, phi, u0, h, t, mc, bo);

    auto agrees = [](const MeanEstimate& est, const MeanEstimate& fd, double& rel, double& z) {
        rel = std::abs(est.mean - fd.mean) / std::abs(fd.mean);
        z = std::abs(joint_z(est, fd));
        return rel < 0.1 || z < 2.0;
    };
    double rel_p, z_p, rel_f, z_f;
    const bool ok_plain = agrees(plain.estimate, plain.fd, rel_p, z_p);
    const bool ok_fk = agrees(fk.estimate, fk.fd, rel_f, z_f);
    const double z_pf = std::abs(joint_z(plain.estimate, fk.estimate));
    r.values = {{"M", pr.bel_M}, {"t", t}, {"dt", cfg.dt}, {"samples", pr.bel_samples},
                {"plain", mean_json(plain.estimate)}, {"feynman_kac", mean_json(fk.estimate)},
                {"finite_difference", mean_json(plain.fd)},
                {"plain_vs_fd", {{"relative", rel_p}, {"joint_z", z_p}}},
                {"fk_vs_fd", {{"relative", rel_f}, {"joint_z", z_f}}},
                {"plain_vs_fk_joint_z", z_pf},
                {"potential", {{"c_tilde", bo.c_tilde}, {"p", bo.pV}, {"eps", bo.epsV}}}};
    r.passed = ok_plain && ok_fk && z_pf < 2.0;
    return r;
}

// 7. Coupling rate, KS mixing trend, Krylov-Bogoliubov uniqueness signature.
CheckResult mixing(const Profile& pr, std::uint64_t seed, int workers) {
    CheckResult r{7, "mixing", false, json::object()};
    const AndersonOperator op = sampled_operator(pr.mix_M, seed);
    const TorusGrid& g = op.grid;
    SolverConfig cfg;
    cfg.dt = 0.005;
    RealField big(g), zero(g);
    big.values.setConstant(10.0);

    cfg.T = pr.couple_T;
    int good = 0;
    json cj = json::array();
    for (int s = 1; s <= pr.couple_seeds; ++s) {
        const CouplingResult c = synchronous_couple(op, cfg, big, zero, pr.couple_T, seed * 100 + s);
        const bool ok = c.rate > 0 && c.r_squared > 0.7;
        good += ok;
        cj.push_back({{"seed", seed * 100 + s}, {"rate", c.rate}, {"r_squared", c.r_squared}});
    }
    const int need = pr.couple_seeds - 1;

    const Observable mean_obs = Observable::linear(
        RealField::from_function(g, [](double, double) { return 1.0 / (4 * M_PI * M_PI); }));
    McOptions mc;
    mc.samples = pr.ks_samples;
    mc.seed = seed + 4;
    mc.workers = workers;
    cfg.T = 10.0;
    const std::vector<MixingPoint> ks = mixing_distance(op, cfg, mean_obs, big, zero, {1.0, 3.0, 10.0}, mc);
    bool ks_decreasing = true;
    json kj = json::array();
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (i > 0) ks_decreasing &= ks[i].ks.statistic < ks[i - 1].ks.statistic;
        kj.push_back({{"t", ks[i].t}, {"statistic", ks[i].ks.statistic}, {"p_value", ks[i].ks.p_value}});
    }

    const RealField f = RealField::from_function(g, [](double x, double) { return 0.2 * std::cos(x); });
    const Observable bounded = Observable::fourier_char(f, M_PI / 4);
    cfg.T = pr.kb_T;
    mc.samples = pr.kb_samples;
    mc.seed = seed + 5;
    mc.stream_offset = 0;
    const KrylovBogoliubov a = krylov_bogoliubov(op, cfg, bounded, big, pr.kb_T, mc);
    mc.stream_offset = std::uint64_t(pr.kb_samples);
    const KrylovBogoliubov b = krylov_bogoliubov(op, cfg, bounded, zero, pr.kb_T, mc);
    const double kb_z = std::abs(joint_z(a.final, b.final));

    r.values = {{"M", pr.mix_M},
                {"coupling", {{"T", pr.couple_T}, {"runs", cj}, {"accepted", good}, {"needed", need}}},
                {"ks", {{"samples", pr.ks_samples}, {"points", kj}, {"decreasing", ks_decreasing}}},
                {"krylov_bogoliubov", {{"T", pr.kb_T}, {"observable", bounded.describe()},
                                       {"from_10", mean_json(a.final)}, {"from_0", mean_json(b.final)},
                                       {"joint_z", kb_z}, {"threshold", 2.0}}}};
    r.passed = good >= need && ks_decreasing && kb_z < 2.0;
    return r;
}

// 8. Hitting times under conditioned small noise.
CheckResult relaxation(const Profile& pr, std::uint64_t seed) {
    CheckResult r{8, "relaxation scaling", false, json::object()};
    const AndersonOperator op = sampled_operator(pr.relax_M, seed);
    SolverConfig cfg;
    cfg.dt = 0.005;
    cfg.T = pr.relax_T;
    RealField u0(op.grid);
    u0.values.setOnes();
    RelaxationOptions ro;
    ro.T = pr.relax_T;
    const RelaxationResult res = relaxation_probe(op, cfg, u0, ro, seed + 6);
    bool all_hit = true;
    json rows = json::array();
    for (const RelaxationRow& row : res.rows) {
        all_hit &= row.hit_time >= 0;
        rows.push_back({{"eps", row.eps_target}, {"hit_time", row.hit_time}});
    }
    r.values = {{"M", pr.relax_M}, {"rows", rows}, {"slope", res.fit.slope},
                {"r_squared", res.fit.r_squared}, {"threshold", 0.8}, {"bound", res.bound},
                {"conditioned", res.conditioned}, {"attempts", res.attempts},
                {"inverse_lambda0", 1.0 / op.lowest_eigenvalue()}};
    r.passed = res.conditioned && all_hit && res.fit.r_squared > 0.8;
    return r;
}

// 9. Quick profile twice with different worker counts.
CheckResult determinism(std::uint64_t seed, int workers) {
    CheckResult r{9, "determinism", false, json::object()};
    AcceptanceOptions o;
    o.profile = "quick";
    o.seed = seed;
    o.determinism = false;
    o.workers = 1;
    const std::string first = acceptance_report(o, run_acceptance(o)).dump(2);
    o.workers = std::max(3, workers);
    const std::string second = acceptance_report(o, run_acceptance(o)).dump(2);
    r.values = {{"workers", {1, o.workers}}, {"bytes", {first.size(), second.size()}},
                {"identical", first == second}};
    r.passed = first == second;
    return r;
}

bool selected(const AcceptanceOptions& o, int id) {
    if (id == 9 && !o.determinism) return false;
    if (o.only.empty()) return true;
    return std::find(o.only.begin(), o.only.end(), id) != o.only.end();
}

}  // namespace

std::vector<CheckResult> run_acceptance(const AcceptanceOptions& opt) {
    const Profile pr = Profile::make(opt.profile);
    const std::uint64_t s = opt.seed;
    const int w = opt.workers;
    const std::vector<std::pair<int, std::function<CheckResult()>>> checks{
        {1, [&] { return harmonic_exactness(pr, s); }},
        {2, [&] { return renormalization_signature(pr, s, w); }},
        {3, [&] { return renormalization_necessity(pr, s, w); }},
        {4, [&] { return schauder_exponent(pr, s); }},
        {5, [&] { return coming_down(pr, s); }},
        {6, [&] { return derivative_consistency(pr, s, w); }},
        {7, [&] { return mixing(pr, s, w); }},
        {8, [&] { return relaxation(pr, s); }},
        {9, [&] { return determinism(s, w); }},
    };
    std::vector<CheckResult> out;
    for (const auto& [id, fn] : checks) {
        if (!selected(opt, id)) continue;
        CheckResult r = fn();
        if (opt.on_result) opt.on_result(r);
        out.push_back(std::move(r));
    }
    return out;
}

json acceptance_report(const AcceptanceOptions& opt, const std::vector<CheckResult>& results) {
    json checks = json::array();
    bool all = true;
    for (const CheckResult& r : results) {
        all &= r.passed;
        checks.push_back({{"id", r.id}, {"name", r.name}, {"passed", r.passed}, {"values", r.values}});
    }
    return {{"profile", opt.profile}, {"seed", opt.seed}, {"passed", all}, {"checks", checks}};
}

std::string one_line(const CheckResult& r) {
    std::ostringstream os;
    os << (r.passed ? "PASS" : "FAIL") << "  criterion " << r.id << "  " << r.name;
    return os.str();
}

}  // namespace aphi
