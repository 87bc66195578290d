#include "aphi/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <set>

#include "aphi/errors.hpp"
#include "aphi/noise.hpp"
#include "aphi/snapshot.hpp"

namespace aphi {

using nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were consumed.
class Reader {
public:
    Reader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) throw ConfigError(where("") + ": expected an object", where(""));
    }

    template <class T>
    void get(const char* key, T& out) {
        used_.insert(key);
        if (!j_.contains(key)) return;
        convert(key, out);
    }

    template <class T>
    void require(const char* key, T& out) {
        used_.insert(key);
        if (!j_.contains(key)) throw ConfigError("missing required key " + where(key), where(key));
        convert(key, out);
    }

    bool has(const char* key) const { return j_.contains(key); }

    Reader child(const char* key) {
        used_.insert(key);
        static const json empty = json::object();
        return Reader(j_.contains(key) ? j_.at(key) : empty, where(key));
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key()))
                throw ConfigError("unknown key " + where(it.key()), where(it.key()));
    }

    std::string where(const std::string& key) const {
        if (key.empty()) return prefix_.empty() ? "<root>" : prefix_;
        return prefix_.empty() ? key : prefix_ + "." + key;
    }

    const json& raw(const char* key) const { return j_.at(key); }

private:
    template <class T>
    void convert(const char* key, T& out) {
        const json& v = j_.at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError(where(key) + ": expected a boolean", where(key));
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer", where(key));
                if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned())
                    throw ConfigError(where(key) + ": expected a non-negative integer", where(key));
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw ConfigError(where(key) + ": expected a number", where(key));
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError(where(key) + ": expected a string", where(key));
            } else {
                if (!v.is_array()) throw ConfigError(where(key) + ": expected an array", where(key));
            }
            out = v.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where(key) + ": bad value: " + e.what(), where(key));
        }
    }

    const json& j_;
    std::string prefix_;
    std::set<std::string> used_;
};

OuStart parse_start(const std::string& s, const std::string& key) {
    if (s == "zero") return OuStart::zero;
    if (s == "stationary") return OuStart::stationary;
    throw ConfigError(key + ": expected \"zero\" or \"stationary\"", key);
}

const char* start_name(OuStart s) { return s == OuStart::zero ? "zero" : "stationary"; }

void check(bool ok, const std::string& what, const std::string& key) {
    if (!ok) throw ConfigError(key + ": " + what, key);
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
    ExperimentConfig c;
    Reader root(j, "");

    Reader grid = root.child("grid");
    if (!root.has("grid")) throw ConfigError("missing required key grid.M", "grid.M");
    grid.require("M", c.M);
    grid.get("L", c.L);
    grid.finish();
    check(c.M >= 2 && (c.M & (c.M - 1)) == 0, "must be a power of two >= 2", "grid.M");
    check(c.L > 0, "must be positive", "grid.L");

    Reader ham = root.child("hamiltonian");
    ham.get("mass_floor", c.hamiltonian.mass_floor);
    ham.get("mass", c.hamiltonian.mass);
    if (ham.has("renorm")) {
        const json& r = ham.raw("renorm");
        if (r.is_string() && r.get<std::string>() == "auto") {
            std::string s;
            ham.get("renorm", s);
        } else {
            double v = 0.0;
            ham.get("renorm", v);
            c.hamiltonian.renorm = v;
        }
    }
    ham.finish();
    check(c.hamiltonian.mass_floor > 0, "must be positive", "hamiltonian.mass_floor");

    SolverConfig& s = c.solver;
    Reader sol = root.child("solver");
    sol.get("dt", s.dt);
    sol.get("T", s.T);
    sol.get("N", s.N);
    sol.get("n", s.n);
    sol.get("eps", s.eps);
    sol.get("sigma", s.sigma);
    sol.get("p", s.p);
    sol.get("q", s.q);
    sol.get("a", s.a);
    sol.get("b", s.b);
    sol.get("stiffness", s.stiffness);
    sol.get("noise", s.noise);
    sol.get("nonlinear", s.nonlinear);
    std::string start = start_name(s.ou_start), wv = start_name(s.wick_variance);
    sol.get("ou_start", start);
    sol.get("wick_variance", wv);
    s.ou_start = parse_start(start, "solver.ou_start");
    s.wick_variance = parse_start(wv, "solver.wick_variance");
    sol.finish();
    s.lambda_min = c.hamiltonian.mass_floor;
    s.validate();
    check(s.N < c.M * c.M, "exceeds the number of modes", "solver.N");

    Reader ini = root.child("initial");
    ini.get("kind", c.initial.kind);
    ini.get("amplitude", c.initial.amplitude);
    ini.get("path", c.initial.path);
    ini.finish();
    const std::string& k = c.initial.kind;
    check(k == "zero" || k == "constant" || k == "sine" || k == "snapshot",
          "expected zero, constant, sine or snapshot", "initial.kind");
    check(k != "snapshot" || !c.initial.path.empty(), "snapshot needs a path", "initial.path");

    root.get("seed", c.seed);
    root.get("output", c.output);

    Reader sim = root.child("simulate");
    sim.get("record_times", c.simulate.record_times);
    sim.get("diagnostic_stride", c.simulate.diagnostic_stride);
    sim.finish();
    check(c.simulate.diagnostic_stride >= 1, "must be >= 1", "simulate.diagnostic_stride");
    for (double t : c.simulate.record_times)
        check(t >= 0 && t <= s.T, "record time outside [0, T]", "simulate.record_times");

    Reader cp = root.child("couple");
    cp.get("amplitude", c.couple.amplitude);
    cp.get("seeds", c.couple.seeds);
    cp.finish();
    check(!c.couple.seeds.empty(), "needs at least one seed", "couple.seeds");

    ErgodicitySpec& e = c.ergodicity;
    Reader er = root.child("ergodicity");
    er.get("amplitude", e.amplitude);
    er.get("ks_samples", e.ks_samples);
    er.get("ks_times", e.ks_times);
    er.get("kb_T", e.kb_T);
    er.get("kb_samples", e.kb_samples);
    er.get("observable_scale", e.observable_scale);
    er.finish();
    check(e.ks_samples >= 100, "KS needs at least 100 samples", "ergodicity.ks_samples");
    check(e.kb_samples >= 2, "needs at least 2 trajectories", "ergodicity.kb_samples");
    check(e.kb_T > 0, "must be positive", "ergodicity.kb_T");

    BelSpec& b = c.bel;
    Reader be = root.child("bel");
    be.get("samples", b.samples);
    be.get("t", b.t);
    be.get("variant", b.variant);
    be.get("c_tilde", b.c_tilde);
    be.get("pV", b.pV);
    be.get("epsV", b.epsV);
    be.get("fd_delta", b.fd_delta);
    be.get("observable_scale", b.observable_scale);
    be.finish();
    check(b.variant == "plain" || b.variant == "feynman_kac" || b.variant == "both",
          "expected plain, feynman_kac or both", "bel.variant");
    check(b.samples >= 2, "needs at least 2 samples", "bel.samples");
    check(b.t > 0, "must be positive", "bel.t");
    check(b.fd_delta > 0, "must be positive", "bel.fd_delta");

    RelaxationOptions& ro = c.relax.options;
    Reader re = root.child("relax");
    re.get("eps_targets", ro.eps_targets);
    re.get("eps_box", ro.eps_box);
    re.get("N_cond", ro.N_cond);
    re.get("kappa", ro.kappa);
    re.get("T", ro.T);
    re.get("max_attempts", ro.max_attempts);
    std::string method = ro.method == ConditioningMethod::stepwise ? "stepwise" : "path_rejection";
    re.get("method", method);
    re.finish();
    check(method == "stepwise" || method == "path_rejection", "expected stepwise or path_rejection",
          "relax.method");
    ro.method = method == "stepwise" ? ConditioningMethod::stepwise : ConditioningMethod::path_rejection;
    check(ro.eps_box > 0, "must be positive", "relax.eps_box");
    check(ro.N_cond >= 0 && ro.N_cond < c.M * c.M, "out of range", "relax.N_cond");
    for (double x : ro.eps_targets) check(x > 0, "targets must be positive", "relax.eps_targets");

    Reader sw = root.child("sweep");
    sw.get("scales", c.sweep.scales);
    sw.get("seeds", c.sweep.seeds);
    sw.finish();
    check(!c.sweep.scales.empty() && !c.sweep.seeds.empty(), "needs scales and seeds", "sweep");

    Reader wk = root.child("wick");
    wk.get("cauchy_N", c.wick.cauchy_N);
    wk.get("cauchy_eps", c.wick.cauchy_eps);
    wk.get("probe_sites", c.wick.probe_sites);
    wk.finish();
    for (int N : c.wick.cauchy_N) check(N >= 1, "levels must be positive", "wick.cauchy_N");
    check(c.wick.probe_sites >= 1, "must be positive", "wick.probe_sites");

    root.finish();
    return c;
}

namespace {

// 1-based line of the first occurrence of "key" in the text, 0 if absent.
int line_of(const std::string& text, const std::string& dotted) {
    const std::string leaf = "\"" + dotted.substr(dotted.find_last_of('.') + 1) + "\"";
    const auto pos = text.find(leaf);
    if (pos == std::string::npos) return 0;
    return 1 + int(std::count(text.begin(), text.begin() + pos, '\n'));
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path, "config");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what(), "config");
    }
    try {
        return parse_config(j);
    } catch (const ConfigError& e) {
        std::string where = path;
        int line = line_of(text, e.key());
        if (line == 0 && e.key().find('.') != std::string::npos)
            line = line_of(text, e.key().substr(0, e.key().find_last_of('.')));
        if (line > 0) where += ":" + std::to_string(line);
        throw ConfigError(where + ": " + e.what(), e.key());
    }
}

json to_json(const ExperimentConfig& c) {
    const SolverConfig& s = c.solver;
    const RelaxationOptions& ro = c.relax.options;
    json j;
    j["grid"] = {{"M", c.M}, {"L", c.L}};
    j["hamiltonian"] = {{"mass_floor", c.hamiltonian.mass_floor}, {"mass", c.hamiltonian.mass}};
    if (c.hamiltonian.renorm)
        j["hamiltonian"]["renorm"] = *c.hamiltonian.renorm;
    else
        j["hamiltonian"]["renorm"] = "auto";
    j["solver"] = {{"dt", s.dt},       {"T", s.T},         {"N", s.N},
                   {"n", s.n},         {"eps", s.eps},     {"sigma", s.sigma},
                   {"p", s.p},         {"q", s.q},         {"a", s.a},
                   {"b", s.b},         {"stiffness", s.stiffness},
                   {"noise", s.noise}, {"nonlinear", s.nonlinear},
                   {"ou_start", start_name(s.ou_start)},
                   {"wick_variance", start_name(s.wick_variance)}};
    j["initial"] = {{"kind", c.initial.kind}, {"amplitude", c.initial.amplitude},
                    {"path", c.initial.path}};
    j["seed"] = c.seed;
    j["output"] = c.output;
    j["simulate"] = {{"record_times", c.simulate.record_times},
                     {"diagnostic_stride", c.simulate.diagnostic_stride}};
    j["couple"] = {{"amplitude", c.couple.amplitude}, {"seeds", c.couple.seeds}};
    const ErgodicitySpec& e = c.ergodicity;
    j["ergodicity"] = {{"amplitude", e.amplitude},   {"ks_samples", e.ks_samples},
                       {"ks_times", e.ks_times},     {"kb_T", e.kb_T},
                       {"kb_samples", e.kb_samples}, {"observable_scale", e.observable_scale}};
    const BelSpec& b = c.bel;
    j["bel"] = {{"samples", b.samples}, {"t", b.t},           {"variant", b.variant},
                {"c_tilde", b.c_tilde}, {"pV", b.pV},         {"epsV", b.epsV},
                {"fd_delta", b.fd_delta}, {"observable_scale", b.observable_scale}};
    j["relax"] = {{"eps_targets", ro.eps_targets}, {"eps_box", ro.eps_box},
                  {"N_cond", ro.N_cond},           {"kappa", ro.kappa},
                  {"T", ro.T},                     {"max_attempts", ro.max_attempts},
                  {"method", ro.method == ConditioningMethod::stepwise ? "stepwise" : "path_rejection"}};
    j["sweep"] = {{"scales", c.sweep.scales}, {"seeds", c.sweep.seeds}};
    j["wick"] = {{"cauchy_N", c.wick.cauchy_N}, {"cauchy_eps", c.wick.cauchy_eps},
                 {"probe_sites", c.wick.probe_sites}};
    return j;
}

std::string config_hash(const ExperimentConfig& c) { return fnv1a_hex(to_json(c).dump()); }

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

AndersonOperator build_operator(const ExperimentConfig& c) {
    const TorusGrid g = c.grid();
    RngStream rng(c.seed, StreamPurpose::space_noise, 0);
    const RealField xi = sample_space_white_noise(g, rng);
    const double ren = c.hamiltonian.renorm ? *c.hamiltonian.renorm : renorm_constant(g);
    return ensure_positive(assemble(xi, ren, c.hamiltonian.mass), c.hamiltonian.mass_floor).op;
}

RealField build_initial(const ExperimentConfig& c, const TorusGrid& g) {
    const InitialSpec& s = c.initial;
    if (s.kind == "constant") {
        RealField u(g);
        u.values.setConstant(s.amplitude);
        return u;
    }
    if (s.kind == "sine") {
        const double a = s.amplitude;
        return RealField::from_function(g, [a](double, double y) { return a * std::sin(y); });
    }
    if (s.kind == "snapshot") {
        Snapshot snap = read_snapshot(s.path);
        if (!(snap.field.grid == g)) throw GridMismatch("initial snapshot grid differs from grid.M/L");
        return snap.field;
    }
    return RealField(g);
}

}  // namespace aphi
