// Command-line front end. Links only the C interface.
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "surftrap/surftrap.h"

namespace {

using json = nlohmann::json;

enum class Kind { number, integer, text, flag, numbers };

struct FlagSpec {
    const char* flag;
    const char* key;
    Kind kind;
    const char* help;
};

// Per-command flags; each maps to one key of the options object.
const std::map<std::string, std::vector<FlagSpec>> kFlags{
    {"fields", {{"--grid", "grid", Kind::integer, "points per axis (default 41)"}}},
    {"characterize", {}},
    {"scan-vtop",
     {{"--from", "from", Kind::number, "first V_top (V)"},
      {"--to", "to", Kind::number, "last V_top (V)"},
      {"--points", "points", Kind::integer, "number of V_top values"}}},
    {"lifetime",
     {{"--pressures", "pressures_torr", Kind::numbers, "buffer-gas pressures (torr)"},
      {"--ensemble", "ensemble", Kind::integer, "trajectories per pressure"},
      {"--duration", "duration_s", Kind::number, "simulated time per trajectory (s)"},
      {"--heating-rate", "heating_rate", Kind::number, "rf-heating coefficient (1/s)"},
      {"--temperature", "temperature_K", Kind::number, "initial ion temperature (K)"},
      {"--position-spread", "position_spread_um", Kind::number, "initial position sigma (um)"},
      {"--displacement", "displacement_um", Kind::number, "cloud displacement from the rf null (um)"},
      {"--steps-per-period", "steps_per_period", Kind::integer, "integrator steps per rf period"},
      {"--dump-trajectory", "dump_trajectory", Kind::flag, "also write one trajectory at the highest pressure"}}},
    {"tickle",
     {{"--electrode", "electrode", Kind::text, "drive electrode"},
      {"--axis", "axis", Kind::text, "mode to compare (x, y, z)"},
      {"--amplitude", "amplitude_V", Kind::number, "drive amplitude (V)"},
      {"--f-lo", "f_lo_kHz", Kind::number, "scan start (kHz)"},
      {"--f-hi", "f_hi_kHz", Kind::number, "scan end (kHz)"},
      {"--points", "points", Kind::integer, "scan points"},
      {"--periods", "periods", Kind::number, "drive duration in secular periods"},
      {"--steps-per-period", "steps_per_period", Kind::integer, "integrator steps per rf period"}}},
    {"compensate",
     {{"--stray-e0", "stray_e0", Kind::numbers, "injected uniform stray field Ex Ey Ez (V/m)"},
      {"--stray-e1", "stray_e1", Kind::numbers, "injected stray gradient (V/m^2)"},
      {"--rf-min", "rf_min_V", Kind::number, "lowest rf amplitude (V)"},
      {"--rf-max", "rf_max_V", Kind::number, "highest rf amplitude (V)"},
      {"--rf-points", "rf_points", Kind::integer, "rf settings"},
      {"--noise", "noise", Kind::number, "fractional fluorescence noise"},
      {"--samples", "samples", Kind::integer, "points per fluorescence scan"},
      {"--temperature", "temperature_K", Kind::number, "cloud temperature (K)"},
      {"--spot-fwhm", "spot_fwhm_um", Kind::number, "laser spot FWHM (um)"},
      {"--omega-source", "omega_source", Kind::text, "hessian or tickle"},
      {"--rounds", "rounds", Kind::integer, "passes over the steps"},
      {"--steps", "steps", Kind::text, "JSON array of {control, axis, span, points, degree}"}}},
};

using Value = std::variant<double, long, std::string, bool, std::vector<double>>;

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"surftrap: surface-electrode ion trap simulator"};
    app.require_subcommand(0, 1);
    bool show_version = false;
    app.add_flag("--version", show_version, "print version and config schema version");

    // Storage for parsed values, keyed by command then option key.
    std::map<std::string, std::map<std::string, Value>> values;
    std::map<std::string, CLI::App*> subs;

    for (const auto& [name, flags] : kFlags) {
        CLI::App* sub = app.add_subcommand(name);
        subs[name] = sub;
        auto& v = values[name];
        // Common flags.
        v["config"] = std::string();
        sub->add_option("--config", std::get<std::string>(v["config"]), "trap configuration (JSON); default $SURFTRAP_CONFIG or built-in");
        v["out"] = std::string(".");
        sub->add_option("--out", std::get<std::string>(v["out"]), "output directory")->capture_default_str();
        v["seed"] = long(1);
        sub->add_option("--seed", std::get<long>(v["seed"]), "random seed")->capture_default_str()->check(CLI::NonNegativeNumber);
        v["threads"] = long(0);
        sub->add_option("--threads", std::get<long>(v["threads"]), "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
        v["method"] = std::string("analytic");
        sub->add_option("--method", std::get<std::string>(v["method"]), "field model")
            ->check(CLI::IsMember({"analytic", "bem"}))
            ->capture_default_str();
        v["panels"] = long(4);
        sub->add_option("--panels", std::get<long>(v["panels"]), "BEM panels per electrode dimension");
        v["record_time"] = false;
        sub->add_flag("--record-time", std::get<bool>(v["record_time"]), "store wall time in the manifest");
        v["vtop"] = 0.0;
        sub->add_option("--vtop", std::get<double>(v["vtop"]), "top-plate voltage (V)");
        for (const auto& f : flags) {
            const std::string help = std::string(f.help) + " [" + f.key + "]";
            switch (f.kind) {
            case Kind::number: v[f.key] = 0.0; sub->add_option(f.flag, std::get<double>(v[f.key]), help); break;
            case Kind::integer: v[f.key] = long(0); sub->add_option(f.flag, std::get<long>(v[f.key]), help); break;
            case Kind::text: v[f.key] = std::string(); sub->add_option(f.flag, std::get<std::string>(v[f.key]), help); break;
            case Kind::flag: v[f.key] = false; sub->add_flag(f.flag, std::get<bool>(v[f.key]), help); break;
            case Kind::numbers:
                v[f.key] = std::vector<double>();
                sub->add_option(f.flag, std::get<std::vector<double>>(v[f.key]), help)->expected(1, -1);
                break;
            }
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (show_version) {
        std::printf("surftrap %s (config schema %d)\n", st_version(), st_config_schema_version());
        return 0;
    }
    if (app.get_subcommands().empty()) {
        std::fputs(app.help().c_str(), stderr);
        return 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    json opts = json::object();
    for (const auto& [key, value] : values[name]) {
        const std::string flag = key == "record_time" ? "--record-time" : "--" + key;
        // Only pass what the user set, so library defaults apply otherwise.
        bool given = false;
        if (key == "config" || key == "out" || key == "seed" || key == "threads" || key == "method" || key == "panels" ||
            key == "record_time" || key == "vtop") {
            given = sub->count(flag) > 0;
        } else {
            for (const auto& f : kFlags.at(name))
                if (f.key == key) given = sub->count(f.flag) > 0;
        }
        if (!given) continue;
        if (key == "steps") {
            try {
                opts[key] = json::parse(std::get<std::string>(value));
            } catch (const json::parse_error& e) {
                std::fprintf(stderr, "error: --steps: %s\n", e.what());
                return 2;
            }
            continue;
        }
        std::visit([&](const auto& x) { opts[key] = x; }, value);
    }

    st_result* result = nullptr;
    const st_status status = st_run(name.c_str(), opts.dump().c_str(), &result);
    if (status != ST_OK) {
        std::fprintf(stderr, "error: %s\n", st_last_error());
        return static_cast<int>(status);
    }
    std::printf("%s\n", st_result_summary(result));
    for (size_t i = 0; i < st_result_output_count(result); ++i) std::printf("  wrote %s\n", st_result_output(result, i));
    st_result_free(result);
    return 0;
}
