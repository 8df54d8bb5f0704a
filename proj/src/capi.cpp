#include "surftrap/surftrap.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "surftrap/commands.hpp"
#include "surftrap/electrostatics.hpp"
#include "surftrap/error.hpp"
#include "surftrap/trap_model.hpp"

struct st_config {
    surftrap::TrapConfig config;
};

struct st_result {
    std::string summary;
    std::string manifest;
    std::vector<std::string> outputs;
};

namespace {

thread_local std::string last_error;

template <class F>
st_status guarded(F&& f)
{
    try {
        f();
        last_error.clear();
        return ST_OK;
    } catch (const surftrap::Error& e) {
        last_error = e.what();
        return static_cast<st_status>(e.kind());
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
    } catch (const std::exception& e) {
        last_error = e.what();
    } catch (...) {
        last_error = "unknown error";
    }
    return ST_ERR_INTERNAL;
}

void require(const void* p, const char* what)
{
    if (!p) throw surftrap::ConfigError(std::string(what) + " must not be null");
}

char* dup(const std::string& s)
{
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

} // namespace

extern "C" {

const char* st_version(void) { return SURFTRAP_VERSION; }
int st_config_schema_version(void) { return surftrap::kConfigSchemaVersion; }
const char* st_last_error(void) { return last_error.c_str(); }

st_status st_config_load(const char* path, st_config** out)
{
    return guarded([&] {
        require(out, "out");
        *out = nullptr;
        std::string p = path ? path : "";
        if (p.empty())
            if (const char* env = std::getenv(surftrap::kConfigEnvVar)) p = env;
        auto c = std::make_unique<st_config>();
        c->config = p.empty() ? surftrap::canonical_config() : surftrap::load_config(p);
        *out = c.release();
    });
}

st_status st_config_parse(const char* json_text, st_config** out)
{
    return guarded([&] {
        require(out, "out");
        require(json_text, "json_text");
        *out = nullptr;
        auto c = std::make_unique<st_config>();
        c->config = surftrap::parse_config(json_text);
        *out = c.release();
    });
}

st_status st_config_canonical(st_config** out)
{
    return guarded([&] {
        require(out, "out");
        *out = new st_config{surftrap::canonical_config()};
    });
}

st_status st_config_to_json(const st_config* config, char** out)
{
    return guarded([&] {
        require(config, "config");
        require(out, "out");
        *out = dup(surftrap::serialize_config(config->config));
    });
}

void st_config_free(st_config* config) { delete config; }

st_status st_secular_potential_ev(const st_config* config, double x, double y, double z, double* out)
{
    return guarded([&] {
        require(config, "config");
        require(out, "out");
        const auto basis = surftrap::make_analytic_basis(config->config.layout);
        *out = surftrap::secular_potential(basis, config->config.voltages, config->config.ion, surftrap::Vec3(x, y, z));
    });
}

size_t st_command_count(void) { return surftrap::command_names().size(); }

const char* st_command_name(size_t index)
{
    const auto& names = surftrap::command_names();
    return index < names.size() ? names[index].c_str() : nullptr;
}

st_status st_run(const char* command, const char* options_json, st_result** out)
{
    return guarded([&] {
        require(command, "command");
        require(out, "out");
        *out = nullptr;
        auto r = surftrap::run_command(command, options_json ? options_json : "");
        auto res = std::make_unique<st_result>();
        res->summary = std::move(r.summary);
        res->manifest = std::move(r.manifest_json);
        for (const auto& p : r.outputs) res->outputs.push_back(p.string());
        *out = res.release();
    });
}

const char* st_result_summary(const st_result* result) { return result ? result->summary.c_str() : ""; }
const char* st_result_manifest(const st_result* result) { return result ? result->manifest.c_str() : ""; }
size_t st_result_output_count(const st_result* result) { return result ? result->outputs.size() : 0; }

const char* st_result_output(const st_result* result, size_t index)
{
    return result && index < result->outputs.size() ? result->outputs[index].c_str() : nullptr;
}

void st_result_free(st_result* result) { delete result; }
void st_string_free(char* s) { std::free(s); }

} // extern "C"
