#include "surftrap/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "surftrap/compensation.hpp"
#include "surftrap/dynamics.hpp"
#include "surftrap/error.hpp"
#include "surftrap/parallel.hpp"
#include "surftrap/trap_analysis.hpp"

namespace surftrap {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string sha256_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error(ErrorKind::internal, "sha256: digest init failed");
    }
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

namespace {

// ---------------------------------------------------------------------------
// Option access with type checks; unknown keys are rejected.

class Options {
public:
    Options(const json& j, std::set<std::string> allowed) : j_(j)
    {
        static const std::set<std::string> common{"config", "out", "seed", "threads", "method", "panels",
                                                  "record_time", "vtop"};
        allowed.insert(common.begin(), common.end());
        for (const auto& [k, v] : j_.items())
            if (!allowed.count(k)) throw ConfigError("unknown option '" + k + "'");
    }

    bool has(const std::string& k) const { return j_.contains(k) && !j_.at(k).is_null(); }

    double number(const std::string& k, double fallback) const
    {
        if (!has(k)) return fallback;
        if (!j_.at(k).is_number()) throw ConfigError("option '" + k + "': expected a number");
        const double v = j_.at(k).get<double>();
        if (!std::isfinite(v)) throw ConfigError("option '" + k + "': not finite");
        return v;
    }
    std::optional<double> maybe_number(const std::string& k) const
    {
        if (!has(k)) return std::nullopt;
        return number(k, 0.0);
    }
    long integer(const std::string& k, long fallback) const
    {
        if (!has(k)) return fallback;
        if (!j_.at(k).is_number_integer()) throw ConfigError("option '" + k + "': expected an integer");
        return j_.at(k).get<long>();
    }
    std::uint64_t seed() const
    {
        if (!has("seed")) return 1;
        if (!j_.at("seed").is_number_unsigned() && !(j_.at("seed").is_number_integer() && j_.at("seed").get<long>() >= 0))
            throw ConfigError("option 'seed': expected a non-negative integer");
        return j_.at("seed").get<std::uint64_t>();
    }
    bool boolean(const std::string& k, bool fallback) const
    {
        if (!has(k)) return fallback;
        if (!j_.at(k).is_boolean()) throw ConfigError("option '" + k + "': expected true or false");
        return j_.at(k).get<bool>();
    }
    std::string text(const std::string& k, const std::string& fallback) const
    {
        if (!has(k)) return fallback;
        if (!j_.at(k).is_string()) throw ConfigError("option '" + k + "': expected a string");
        return j_.at(k).get<std::string>();
    }
    std::vector<double> numbers(const std::string& k, std::vector<double> fallback) const
    {
        if (!has(k)) return fallback;
        const auto& a = j_.at(k);
        if (!a.is_array()) throw ConfigError("option '" + k + "': expected an array of numbers");
        std::vector<double> out;
        for (const auto& v : a) {
            if (!v.is_number()) throw ConfigError("option '" + k + "': expected an array of numbers");
            out.push_back(v.get<double>());
        }
        return out;
    }
    const json& raw(const std::string& k) const { return j_.at(k); }

private:
    const json& j_;
};

int parse_axis(const std::string& s)
{
    if (s == "x") return 0;
    if (s == "y") return 1;
    if (s == "z") return 2;
    throw ConfigError("axis must be x, y or z (got '" + s + "')");
}

const char* axis_name(int a) { return a == 0 ? "x" : a == 1 ? "y" : "z"; }

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

// ---------------------------------------------------------------------------

struct Context {
    std::string command;
    std::string config_label; // as given (or "builtin:canonical")
    TrapConfig config;
    fs::path out_dir;
    std::uint64_t seed = 1;
    int threads = 0;
    bool record_time = false;
    std::string method = "analytic";
    int panels = 4;
    std::vector<fs::path> written;
    std::vector<std::string> written_names;

    void write(const std::string& name, const std::string& content)
    {
        const fs::path p = out_dir / name;
        written.push_back(p);
        written_names.push_back(name);
        std::ofstream out(p, std::ios::binary);
        if (!out) throw IoError("cannot write '" + p.string() + "'");
        out << content;
        out.close();
        if (!out) throw IoError("write failed for '" + p.string() + "'");
    }

    BasisPtr basis() const
    {
        if (method == "analytic") return make_analytic_basis(config.layout);
        if (method == "bem") return solve_bem(config.layout, panels);
        throw ConfigError("method must be 'analytic' or 'bem' (got '" + method + "')");
    }
};

Context make_context(std::string_view command, const Options& o)
{
    Context c;
    c.command = std::string(command);
    std::string path = o.text("config", "");
    if (path.empty())
        if (const char* env = std::getenv(kConfigEnvVar); env && *env) path = env;
    if (path.empty()) {
        c.config = canonical_config();
        c.config_label = "builtin:canonical";
    } else {
        c.config = load_config(path);
        c.config_label = path;
    }
    if (o.has("vtop")) {
        if (!c.config.layout.top_plate) throw ConfigError("option 'vtop': layout has no top plate");
        c.config.voltages.dc[std::string(kTopPlateName)] = o.number("vtop", 0.0);
    }
    c.out_dir = o.text("out", ".");
    c.seed = o.seed();
    const long threads = o.integer("threads", 0);
    if (threads < 0) throw ConfigError("option 'threads': must be >= 0");
    c.threads = int(threads);
    c.record_time = o.boolean("record_time", false);
    c.method = o.text("method", "analytic");
    const long panels = o.integer("panels", 4);
    if (panels < 1) throw ConfigError("option 'panels': must be >= 1");
    c.panels = int(panels);
    std::error_code ec;
    fs::create_directories(c.out_dir, ec);
    if (ec || !fs::is_directory(c.out_dir)) throw IoError("cannot create output directory '" + c.out_dir.string() + "'");
    return c;
}

// ---------------------------------------------------------------------------
// Commands. Each writes its files through ctx.write and returns a summary line.

using CommandFn = std::function<std::string(Context&, const Options&, json& echo)>;

std::string cmd_fields(Context& ctx, const Options& o, json& echo)
{
    const long n = o.integer("grid", 41);
    if (n < 2 || n > 401) throw ConfigError("option 'grid': must be in 2..401");
    echo["grid"] = n;
    const BasisPtr basis = ctx.basis();
    const Vec3 null = find_rf_null(*basis);
    const double y0 = null.y();
    const Vec3 lo(null.x() - 2.0 * y0, 0.25 * y0, null.z() - 2.0 * y0);
    const Vec3 hi(null.x() + 2.0 * y0, 2.5 * y0, null.z() + 2.0 * y0);
    const SecularPotential pot(basis, ctx.config.voltages, ctx.config.ion);
    const auto& w = pot.dc_weights();
    const std::size_t nn = std::size_t(n), total = nn * nn * nn;
    std::vector<std::array<double, 6>> rows(total);
    parallel_for(total, ctx.threads, [&](std::size_t b, std::size_t e) {
        BasisEval ev;
        for (std::size_t i = b; i < e; ++i) {
            const std::size_t ix = i % nn, iy = (i / nn) % nn, iz = i / (nn * nn);
            const Vec3 r = lo + Vec3(double(ix), double(iy), double(iz)).cwiseProduct(hi - lo) / double(n - 1);
            basis->evaluate(r, ev);
            double phi_dc = 0.0;
            for (std::size_t k = 0; k < w.size(); ++k) phi_dc += w[k] * ev.phi[k];
            const double grad_rf = ctx.config.voltages.v_rf_amplitude * ev.grad[basis->rf_index()].norm();
            rows[i] = {r.x(), r.y(), r.z(), phi_dc, grad_rf, pot.energy_ev(r)};
        }
    });
    std::ostringstream os;
    os << "x,y,z,phi_dc,grad_rf_mag,pseudo_eV\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r[0], r[1], r[2], r[3], r[4], r[5]);
        os << buf;
    }
    ctx.write("fields.csv", os.str());
    return "fields.csv: " + std::to_string(total) + " points (" + ctx.method + ")";
}

json characterization_json(const TrapCharacterization& c)
{
    json j;
    j["trapped"] = c.trapped;
    j["status"] = c.status;
    j["rf_null_m"] = vec_json(c.rf_null);
    j["minimum_m"] = vec_json(c.minimum);
    j["min_energy_eV"] = c.min_energy_ev;
    j["secular_freqs_Hz"] = json::array(
        {units::rad_to_hz(c.secular_freqs[0]), units::rad_to_hz(c.secular_freqs[1]), units::rad_to_hz(c.secular_freqs[2])});
    j["principal_axes"] = json::array();
    for (int k = 0; k < 3; ++k) j["principal_axes"].push_back(vec_json(c.principal_axes.col(k)));
    j["depth_eV"] = c.depth_ev;
    j["escape_saddle_m"] = vec_json(c.escape_saddle);
    j["saddle_refined"] = c.saddle_refined;
    j["saddle_on_boundary"] = c.saddle_on_boundary;
    j["displacement_um"] = json::array({c.displacement.x() / units::um, c.displacement.y() / units::um});
    return j;
}

std::string cmd_characterize(Context& ctx, const Options&, json&)
{
    const BasisPtr basis = ctx.basis();
    CharacterizeOptions co;
    co.threads = ctx.threads;
    const SecularPotential pot(basis, ctx.config.voltages, ctx.config.ion);
    const auto c = characterize(pot, co);
    json j = characterization_json(c);
    j["v_top"] = ctx.config.voltages.dc_voltage(kTopPlateName);
    j["method"] = ctx.method;
    ctx.write("characterize.json", j.dump(2) + "\n");
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s: depth %.4f eV, secular %.2f/%.2f/%.2f kHz, |displacement| %.4g um",
                  c.trapped ? "trapped" : "untrapped", c.depth_ev, units::rad_to_hz(c.secular_freqs[0]) / 1e3,
                  units::rad_to_hz(c.secular_freqs[1]) / 1e3, units::rad_to_hz(c.secular_freqs[2]) / 1e3,
                  c.displacement.norm() / units::um);
    return buf;
}

std::string cmd_scan_vtop(Context& ctx, const Options& o, json& echo)
{
    const double from = o.number("from", -30.0), to = o.number("to", 40.0);
    const long points = o.integer("points", 71);
    if (points < 1) throw ConfigError("option 'points': must be >= 1");
    if (points > 1 && !(to > from)) throw ConfigError("option 'to' must exceed 'from'");
    echo["from"] = from;
    echo["to"] = to;
    echo["points"] = points;
    std::vector<double> values;
    for (long i = 0; i < points; ++i) values.push_back(points == 1 ? from : from + (to - from) * double(i) / double(points - 1));
    const BasisPtr basis = ctx.basis();
    ScanOptions so;
    so.threads = ctx.threads;
    const auto scan = scan_vtop(basis, ctx.config.voltages, ctx.config.ion, values, so);
    ctx.write("vtop_scan.csv", vtop_scan_csv(scan));
    json s;
    s["rows"] = scan.rows.size();
    s["v_top_star"] = scan.v_top_star ? json(*scan.v_top_star) : json(nullptr);
    s["displacement_at_star_um"] = scan.displacement_at_star / units::um;
    ctx.write("vtop_scan_summary.json", s.dump(2) + "\n");
    char buf[160];
    if (scan.v_top_star)
        std::snprintf(buf, sizeof buf, "V_top* = %.4f V (|displacement| %.3g um), %zu rows", *scan.v_top_star,
                      scan.displacement_at_star / units::um, scan.rows.size());
    else
        std::snprintf(buf, sizeof buf, "V_top* not found (no trapped point), %zu rows", scan.rows.size());
    return buf;
}

struct DynamicsSetup {
    BasisPtr basis;
    Vec3 null;
    std::shared_ptr<const SampledBasis> sampled;
};

DynamicsSetup dynamics_setup(const Context& ctx)
{
    DynamicsSetup d;
    d.basis = ctx.basis();
    d.null = find_rf_null(*d.basis);
    d.sampled = std::make_shared<SampledBasis>(*d.basis, dynamics_sample_box(d.null, d.basis->layout()),
                                               dynamics_sample_spacing(d.null), ctx.threads);
    return d;
}

std::string cmd_lifetime(Context& ctx, const Options& o, json& echo)
{
    const auto pressures_torr = o.numbers("pressures_torr", {1e-7, 1e-6, 1e-5, 1e-4});
    if (pressures_torr.empty()) throw ConfigError("option 'pressures_torr': empty");
    LifetimeOptions lo;
    lo.ensemble = int(o.integer("ensemble", 50));
    lo.temperature = o.number("temperature_K", 1000.0);
    lo.position_spread = o.number("position_spread_um", 0.0) * units::um;
    lo.threads = ctx.threads;
    const double duration = o.number("duration_s", 0.025);
    const double heating = o.number("heating_rate", 300.0);
    const long steps_per_period = o.integer("steps_per_period", 50);
    if (steps_per_period < 50) throw ConfigError("option 'steps_per_period': must be >= 50");
    if (lo.ensemble < 1) throw ConfigError("option 'ensemble': must be >= 1");
    if (!(lo.temperature > 0.0)) throw ConfigError("option 'temperature_K': must be > 0");
    if (!(heating >= 0.0)) throw ConfigError("option 'heating_rate': must be >= 0");
    const bool dump = o.boolean("dump_trajectory", false);
    echo["pressures_torr"] = pressures_torr;
    echo["ensemble"] = lo.ensemble;
    echo["temperature_K"] = lo.temperature;
    echo["duration_s"] = duration;
    echo["heating_rate"] = heating;
    echo["steps_per_period"] = steps_per_period;

    const auto setup = dynamics_setup(ctx);
    VoltageSet volts = ctx.config.voltages;
    if (!o.has("vtop")) {
        const double target = o.number("displacement_um", 200.0) * units::um;
        echo["displacement_um"] = target / units::um;
        volts.dc[std::string(kTopPlateName)] =
            find_vtop_for_displacement(setup.basis, volts, ctx.config.ion, target, find_vtop_star(setup.basis, volts, ctx.config.ion, -30.0, 40.0), 80.0);
    }
    const SecularPotential pot(setup.basis, volts, ctx.config.ion);
    CharacterizeOptions co;
    co.threads = ctx.threads;
    const auto ch = characterize(pot, co);
    if (!ch.trapped) throw NumericError("lifetime: configuration is not trapped (" + ch.status + ")");
    const SplineTrapField field(setup.sampled, volts, ctx.config.ion);

    DynamicsConfig cfg;
    cfg.duration = duration;
    cfg.timestep = 2.0 * constants::pi / volts.omega_rf / double(steps_per_period);
    cfg.rng_seed = ctx.seed;
    cfg.heating_rate = heating;
    const double y0 = setup.null.y();
    cfg.escape = {setup.null, 2.0 * y0, 3.0 * y0, 5.0 * y0, units::ev_to_joule(ch.depth_ev), field.secular_energy(ch.minimum)};

    std::vector<double> pressures;
    for (double p : pressures_torr) pressures.push_back(units::torr_to_pa(p));
    const auto rows = lifetime_scan(field, ctx.config.buffer_gas, pressures, cfg, ch.minimum, lo);
    ctx.write("lifetime.csv", lifetime_csv(rows));
    if (dump) {
        BufferGas gas = ctx.config.buffer_gas;
        gas.pressure = pressures.back();
        DynamicsConfig c = cfg;
        c.rng_seed = lifetime_trajectory_seed(cfg.rng_seed, 0);
        c.sample_every = int(steps_per_period);
        const auto traj = integrate(field, gas, c, lifetime_initial_state(cfg.rng_seed, 0, ch.minimum, ctx.config.ion, lo));
        ctx.write("trajectory.csv", trajectory_csv(traj));
    }
    char buf[200];
    std::snprintf(buf, sizeof buf, "V_top %.3f V, |displacement| %.1f um, depth %.3f eV; survival %.2f -> %.2f",
                  volts.dc_voltage(kTopPlateName), ch.displacement.norm() / units::um, ch.depth_ev,
                  rows.front().survival_fraction, rows.back().survival_fraction);
    return buf;
}

std::string cmd_tickle(Context& ctx, const Options& o, json& echo)
{
    const std::string electrode = o.text("electrode", "V5");
    const int axis = parse_axis(o.text("axis", "x"));
    TickleScan ts;
    ts.amplitude = o.number("amplitude_V", 0.25);
    ts.points = int(o.integer("points", 41));
    ts.threads = ctx.threads;
    const double periods = o.number("periods", 200.0);
    const long steps_per_period = o.integer("steps_per_period", 100);
    if (steps_per_period < 50) throw ConfigError("option 'steps_per_period': must be >= 50");
    if (!(periods > 0.0)) throw ConfigError("option 'periods': must be > 0");
    echo["electrode"] = electrode;
    echo["axis"] = axis_name(axis);
    echo["amplitude_V"] = ts.amplitude;
    echo["points"] = ts.points;
    echo["periods"] = periods;

    const auto setup = dynamics_setup(ctx);
    const VoltageSet& volts = ctx.config.voltages;
    const SecularPotential reference(setup.basis, volts, ctx.config.ion);
    const auto m_ref = locate_minimum(reference, setup.null);
    if (!m_ref.converged) throw NumericError("tickle: configuration is not trapped");
    const double w_hess = mode_frequency_along(m_ref.hessian, ctx.config.ion.mass, axis);
    // Start at the minimum of the sampled field so the ion begins at rest in its own well.
    const SecularPotential sampled_pot(setup.sampled, volts, ctx.config.ion);
    const auto m = locate_minimum(sampled_pot, m_ref.position);
    if (!m.converged) throw NumericError("tickle: no minimum in the sampled field");

    ts.omega_lo = units::hz_to_rad(o.number("f_lo_kHz", 0.92 * units::rad_to_hz(w_hess) / 1e3) * 1e3);
    ts.omega_hi = units::hz_to_rad(o.number("f_hi_kHz", 1.08 * units::rad_to_hz(w_hess) / 1e3) * 1e3);
    ts.duration = periods * 2.0 * constants::pi / (0.5 * (ts.omega_lo + ts.omega_hi));
    ts.timestep = 2.0 * constants::pi / volts.omega_rf / double(steps_per_period);
    const SplineTrapField field(setup.sampled, volts, ctx.config.ion, {}, electrode);
    const auto res = measure_secular_frequency(field, m.position, ts);

    std::ostringstream os;
    os << "freq_kHz,response_eV\n";
    char buf[160];
    for (std::size_t i = 0; i < res.omegas.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.6f,%.9g\n", units::rad_to_hz(res.omegas[i]) / 1e3, units::joule_to_ev(res.response[i]));
        os << buf;
    }
    ctx.write("tickle.csv", os.str());
    json j;
    j["hessian_freq_Hz"] = units::rad_to_hz(w_hess);
    j["tickle_freq_Hz"] = units::rad_to_hz(res.omega);
    j["half_width_Hz"] = units::rad_to_hz(res.half_width);
    j["relative_difference"] = res.omega / w_hess - 1.0;
    j["q_estimate"] = 2.0 * std::sqrt(2.0) * w_hess / volts.omega_rf;
    ctx.write("tickle.json", j.dump(2) + "\n");
    std::snprintf(buf, sizeof buf, "tickle %.3f kHz vs Hessian %.3f kHz (%+.2f%%)", units::rad_to_hz(res.omega) / 1e3,
                  units::rad_to_hz(w_hess) / 1e3, 100.0 * (res.omega / w_hess - 1.0));
    return buf;
}

json e0fit_json(const E0Fit& f)
{
    return {{"E0_V_per_m", f.e0},          {"E0_sigma", f.e0_sigma}, {"intercept_m", f.intercept},
            {"intercept_sigma_m", f.intercept_sigma}, {"chi2", f.chi2}, {"dof", f.dof}};
}

std::string cmd_compensate(Context& ctx, const Options& o, json& echo)
{
    CompensationInputs in;
    in.basis = ctx.basis();
    in.volts = ctx.config.voltages;
    in.ion = ctx.config.ion;
    in.seed = ctx.seed;
    in.threads = ctx.threads;
    const auto e0 = o.numbers("stray_e0", {0.0, 0.0, 0.0});
    const auto e1 = o.numbers("stray_e1", {0.0, 0.0, 0.0});
    if (e0.size() != 3 || e1.size() != 3) throw ConfigError("options 'stray_e0'/'stray_e1': expected 3 components");
    const Vec3 null = find_rf_null(*in.basis);
    in.stray = {Vec3(e0[0], e0[1], e0[2]), Vec3(e1[0], e1[1], e1[2]), null};
    const double vrf = ctx.config.voltages.v_rf_amplitude;
    const double rf_min = o.number("rf_min_V", 0.5 * vrf), rf_max = o.number("rf_max_V", vrf);
    const long rf_points = o.integer("rf_points", 10);
    if (rf_points < 3 || !(rf_max > rf_min) || !(rf_min > 0.0))
        throw ConfigError("rf settings: need rf_points >= 3 and 0 < rf_min_V < rf_max_V");
    for (long i = 0; i < rf_points; ++i) in.v_rf_values.push_back(rf_min + (rf_max - rf_min) * double(i) / double(rf_points - 1));
    in.scan.noise = o.number("noise", 0.01);
    in.scan.samples = int(o.integer("samples", 61));
    in.scan.temperature = o.number("temperature_K", 1000.0);
    in.scan.spot_fwhm = o.number("spot_fwhm_um", 60.0) * units::um;
    const std::string src = o.text("omega_source", "hessian");
    if (src == "hessian") in.omega_source = OmegaSource::hessian;
    else if (src == "tickle") in.omega_source = OmegaSource::tickle;
    else throw ConfigError("option 'omega_source': expected 'hessian' or 'tickle'");
    const long rounds = o.integer("rounds", 3);
    if (rounds < 1) throw ConfigError("option 'rounds': must be >= 1");

    std::vector<CompensationStep> steps;
    if (o.has("steps")) {
        const auto& a = o.raw("steps");
        if (!a.is_array() || a.empty()) throw ConfigError("option 'steps': expected a non-empty array");
        for (const auto& s : a) {
            if (!s.is_object()) throw ConfigError("option 'steps': entries must be objects");
            Options so(s, {"control", "axis", "span", "points", "degree"});
            CompensationStep st;
            st.control = so.text("control", "");
            st.axis = parse_axis(so.text("axis", "y"));
            st.span = so.number("span", 2.0);
            st.points = int(so.integer("points", 9));
            st.degree = int(so.integer("degree", 1));
            steps.push_back(st);
        }
    } else {
        steps = {{std::string(kTopPlateName), 1, 2.0, 9, 3}, {"V5", 0, 10.0, 9, 1}};
    }
    for (const auto& st : steps) {
        if (!in.basis->index_of(st.control)) throw ConfigError("compensation control '" + st.control + "' is not an electrode");
        if (st.control == kTopPlateName && !o.has("vtop")) {
            // Start the top-plate scan at the calculated compensation point.
            in.volts.dc[st.control] = find_vtop_star(in.basis, in.volts, in.ion, -30.0, 40.0);
        }
    }
    echo["stray_e0"] = e0;
    echo["stray_e1"] = e1;
    echo["rf_V"] = {rf_min, rf_max, rf_points};
    echo["noise"] = in.scan.noise;
    echo["samples"] = in.scan.samples;
    echo["temperature_K"] = in.scan.temperature;
    echo["omega_source"] = src;
    echo["rounds"] = rounds;

    const auto result = compensate(in, steps, int(rounds));
    const SecularPotential check(in.basis, result.volts, in.ion, in.stray);
    const auto m = locate_minimum(check, null);
    Vec3 disp = m.position - null;
    disp.z() = 0.0;

    json rep;
    rep["stray_e0_V_per_m"] = e0;
    rep["compensated_voltages"] = json::object();
    json steps_out = json::array();
    const std::size_t first_final = result.reports.size() - steps.size();
    for (std::size_t i = 0; i < result.reports.size(); ++i) {
        const auto& r = result.reports[i];
        json jr;
        jr["control"] = r.control;
        jr["axis"] = axis_name(r.axis);
        jr["round"] = i / steps.size();
        jr["degree"] = r.degree;
        jr["root_V"] = r.root;
        jr["root_sigma_V"] = r.root_sigma;
        jr["extrapolated"] = r.extrapolated;
        jr["poly"] = r.poly;
        jr["points"] = json::array();
        for (const auto& p : r.points) {
            json jp{{"control_V", p.value}, {"valid", p.valid}};
            if (p.valid) jp["fit"] = e0fit_json(p.fit);
            else jp["error"] = p.error;
            jr["points"].push_back(jp);
        }
        steps_out.push_back(jr);
        if (i >= first_final) {
            rep["compensated_voltages"][r.control] = {{"value_V", r.root}, {"sigma_V", r.root_sigma}, {"extrapolated", r.extrapolated}};
            ctx.write("scan_" + r.control + ".csv", control_csv(r));
        }
    }
    rep["steps"] = steps_out;
    rep["residual_displacement_um"] = json::array({disp.x() / units::um, disp.y() / units::um});
    const auto& last = result.reports.back();
    ctx.write("profile.csv", profile_csv(last.example_profile));
    const ControlPoint* nearest = nullptr;
    for (const auto& p : last.points)
        if (p.valid && (!nearest || std::abs(p.value - last.root) < std::abs(nearest->value - last.root))) nearest = &p;
    ctx.write("centers.csv", nearest ? records_csv(nearest->records) : records_csv({}));
    ctx.write("compensation.json", rep.dump(2) + "\n");

    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(4);
    for (std::size_t i = first_final; i < result.reports.size(); ++i) {
        const auto& r = result.reports[i];
        s << r.control << " = " << r.root << " +- " << r.root_sigma << " V" << (r.extrapolated ? " (extrapolated)" : "") << "; ";
    }
    s.precision(3);
    s << "residual |displacement| " << disp.norm() / units::um << " um";
    return s.str();
}

struct Entry {
    CommandFn fn;
    std::set<std::string> keys;
};

const std::map<std::string, Entry>& registry()
{
    static const std::map<std::string, Entry> r{
        {"fields", {cmd_fields, {"grid"}}},
        {"characterize", {cmd_characterize, {}}},
        {"scan-vtop", {cmd_scan_vtop, {"from", "to", "points"}}},
        {"lifetime",
         {cmd_lifetime,
          {"pressures_torr", "ensemble", "temperature_K", "position_spread_um", "duration_s", "heating_rate",
           "steps_per_period", "displacement_um", "dump_trajectory"}}},
        {"tickle", {cmd_tickle, {"electrode", "axis", "amplitude_V", "points", "periods", "steps_per_period", "f_lo_kHz", "f_hi_kHz"}}},
        {"compensate",
         {cmd_compensate,
          {"stray_e0", "stray_e1", "rf_min_V", "rf_max_V", "rf_points", "noise", "samples", "temperature_K",
           "spot_fwhm_um", "omega_source", "rounds", "steps"}}},
    };
    return r;
}

} // namespace

const std::vector<std::string>& command_names()
{
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& [k, e] : registry()) v.push_back(k);
        return v;
    }();
    return names;
}

RunResult run_command(std::string_view command, std::string_view options_json)
{
    const auto it = registry().find(std::string(command));
    if (it == registry().end()) throw ConfigError("unknown command '" + std::string(command) + "'");
    json opts;
    try {
        opts = options_json.empty() ? json::object() : json::parse(options_json.begin(), options_json.end());
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("options: ") + e.what());
    }
    if (!opts.is_object()) throw ConfigError("options: expected an object");
    const Options o(opts, it->second.keys);

    const auto t0 = std::chrono::steady_clock::now();
    Context ctx = make_context(command, o);
    try {
        json echo = json::object();
        RunResult res;
        res.summary = it->second.fn(ctx, o, echo);

        json m;
        m["command"] = ctx.command;
        m["config"] = ctx.config_label;
        m["seed"] = ctx.seed;
        m["method"] = ctx.method;
        m["tool_version"] = SURFTRAP_VERSION;
        m["config_schema_version"] = kConfigSchemaVersion;
        m["options"] = echo;
        m["wall_time_s"] = ctx.record_time
                               ? json(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count())
                               : json(nullptr);
        m["outputs"] = json::array();
        for (std::size_t i = 0; i < ctx.written.size(); ++i)
            m["outputs"].push_back({{"file", ctx.written_names[i]}, {"sha256", sha256_file(ctx.written[i])}});
        res.manifest_json = m.dump(2) + "\n";
        ctx.write("manifest.json", res.manifest_json);
        res.outputs = ctx.written;
        return res;
    } catch (...) {
        for (const auto& p : ctx.written) {
            std::error_code ec;
            fs::remove(p, ec);
        }
        throw;
    }
}

} // namespace surftrap
