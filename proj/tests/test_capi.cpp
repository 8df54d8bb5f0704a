#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "surftrap/surftrap.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("surftrap_test_" + std::to_string(::getpid()) + "_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string sha256_hex(const std::string& bytes)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
    std::string out;
    char buf[3];
    for (unsigned i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        out += buf;
    }
    return out;
}

struct Run {
    st_status status;
    std::string summary, manifest, error;
};

Run run(const char* cmd, const json& opts)
{
    st_result* r = nullptr;
    Run out;
    out.status = st_run(cmd, opts.dump().c_str(), &r);
    if (out.status == ST_OK) {
        out.summary = st_result_summary(r);
        out.manifest = st_result_manifest(r);
        st_result_free(r);
    } else {
        out.error = st_last_error();
        CHECK(r == nullptr);
    }
    return out;
}

int lines(const std::string& s) { return int(std::count(s.begin(), s.end(), '\n')); }

// Runs the CLI and returns (exit code, stdout).
std::pair<int, std::string> cli(const std::string& args)
{
    const std::string cmd = std::string(SURFTRAP_CLI) + " " + args + " 2>/dev/null";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::string out;
    std::array<char, 512> buf{};
    while (std::fgets(buf.data(), int(buf.size()), p)) out += buf.data();
    const int status = pclose(p);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

} // namespace

TEST_CASE("version and commands")
{
    CHECK(std::string(st_version()).size() >= 5);
    CHECK(st_config_schema_version() == 1);
    REQUIRE(st_command_count() == 6);
    std::set<std::string> names;
    for (size_t i = 0; i < st_command_count(); ++i) names.insert(st_command_name(i));
    CHECK(names == std::set<std::string>{"characterize", "compensate", "fields", "lifetime", "scan-vtop", "tickle"});
    CHECK(st_command_name(99) == nullptr);
}

TEST_CASE("config handles")
{
    st_config* c = nullptr;
    REQUIRE(st_config_load(SURFTRAP_DATA_DIR "/canonical_trap.json", &c) == ST_OK);
    char* text = nullptr;
    REQUIRE(st_config_to_json(c, &text) == ST_OK);
    st_config* c2 = nullptr;
    REQUIRE(st_config_parse(text, &c2) == ST_OK);
    double u1 = 0, u2 = 0;
    CHECK(st_secular_potential_ev(c, 0.1e-3, 1.0e-3, 0.0, &u1) == ST_OK);
    CHECK(st_secular_potential_ev(c2, 0.1e-3, 1.0e-3, 0.0, &u2) == ST_OK);
    CHECK(u1 == u2);
    CHECK(u1 > 0.0);
    st_string_free(text);
    st_config_free(c2);

    CHECK(st_config_parse("{}", &c2) == ST_ERR_CONFIG);
    CHECK(c2 == nullptr);
    CHECK(std::string(st_last_error()).size() > 0);
    CHECK(st_config_load("/nonexistent.json", &c2) == ST_ERR_IO);
    CHECK(st_config_parse(nullptr, &c2) == ST_ERR_CONFIG);
    CHECK(st_secular_potential_ev(c, 0.0, -1e-3, 0.0, &u1) == ST_ERR_NUMERIC);
    st_config_free(c);
    st_config_free(nullptr);
}

TEST_CASE("fields: tiny grid, determinism, manifest hashes")
{
    const auto d1 = scratch("fields1"), d2 = scratch("fields2");
    const auto r1 = run("fields", {{"grid", 3}, {"out", d1.string()}, {"threads", 1}});
    REQUIRE_MESSAGE(r1.status == ST_OK, r1.error);
    const auto r2 = run("fields", {{"grid", 3}, {"out", d2.string()}, {"threads", 3}});
    REQUIRE(r2.status == ST_OK);
    const auto csv = slurp(d1 / "fields.csv");
    CHECK(csv.rfind("x,y,z,phi_dc,grad_rf_mag,pseudo_eV\n", 0) == 0);
    CHECK(lines(csv) == 28);
    CHECK(csv == slurp(d2 / "fields.csv"));

    const auto m = json::parse(slurp(d1 / "manifest.json"));
    CHECK(m["command"] == "fields");
    CHECK(m["seed"] == 1);
    CHECK(m["wall_time_s"].is_null());
    REQUIRE(m["outputs"].size() == 1);
    for (const auto& o : m["outputs"]) {
        const auto f = d1 / o["file"].get<std::string>();
        REQUIRE(fs::exists(f));
        CHECK(o["sha256"] == sha256_hex(slurp(f)));
    }
    CHECK(r1.manifest == slurp(d1 / "manifest.json"));
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("scan-vtop: rows, summary, identical manifests for the same seed")
{
    const auto d1 = scratch("scan1"), d2 = scratch("scan2");
    const json o{{"from", -30.0}, {"to", 40.0}, {"points", 20}, {"seed", 42}};
    auto o1 = o, o2 = o;
    o1["out"] = d1.string();
    o2["out"] = d2.string();
    const auto r1 = run("scan-vtop", o1);
    REQUIRE_MESSAGE(r1.status == ST_OK, r1.error);
    const auto r2 = run("scan-vtop", o2);
    REQUIRE(r2.status == ST_OK);
    CHECK(lines(slurp(d1 / "vtop_scan.csv")) == 21);
    CHECK(r1.summary.find("V_top* =") != std::string::npos);
    CHECK(slurp(d1 / "manifest.json") == slurp(d2 / "manifest.json"));
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("record_time adds the wall time")
{
    const auto d = scratch("timed");
    REQUIRE(run("fields", {{"grid", 2}, {"out", d.string()}, {"record_time", true}}).status == ST_OK);
    CHECK(json::parse(slurp(d / "manifest.json"))["wall_time_s"].is_number());
    fs::remove_all(d);
}

TEST_CASE("errors map to status codes")
{
    const auto d = scratch("errors");
    CHECK(run("nope", json::object()).status == ST_ERR_CONFIG);
    CHECK(run("fields", {{"grid", "x"}, {"out", d.string()}}).status == ST_ERR_CONFIG);
    CHECK(run("fields", {{"gird", 3}, {"out", d.string()}}).status == ST_ERR_CONFIG);
    CHECK(run("fields", {{"method", "fdm"}, {"out", d.string()}}).status == ST_ERR_CONFIG);
    CHECK(run("fields", {{"config", "/nonexistent.json"}, {"out", d.string()}}).status == ST_ERR_IO);
    CHECK(st_run("fields", "[1,2", nullptr) == ST_ERR_CONFIG);
    st_result* r = nullptr;
    CHECK(st_run("fields", "{not json", &r) == ST_ERR_CONFIG);

    SUBCASE("environment variable supplies the default config")
    {
        ::setenv("SURFTRAP_CONFIG", "/nonexistent.json", 1);
        CHECK(run("fields", {{"grid", 2}, {"out", d.string()}}).status == ST_ERR_IO);
        ::setenv("SURFTRAP_CONFIG", SURFTRAP_DATA_DIR "/canonical_trap.json", 1);
        const auto ok = run("fields", {{"grid", 2}, {"out", d.string()}});
        CHECK(ok.status == ST_OK);
        CHECK(json::parse(ok.manifest)["config"] == SURFTRAP_DATA_DIR "/canonical_trap.json");
        ::unsetenv("SURFTRAP_CONFIG");
    }
    SUBCASE("partial outputs are removed on failure")
    {
        fs::create_directories(d / "manifest.json"); // blocks the manifest write
        const auto bad = run("fields", {{"grid", 2}, {"out", d.string()}});
        CHECK(bad.status == ST_ERR_IO);
        CHECK_FALSE(fs::exists(d / "fields.csv"));
    }
    fs::remove_all(d);
}

TEST_CASE("compensate recovers an injected stray field")
{
    const auto d = scratch("comp");
    const auto r = run("compensate", {{"stray_e0", {60.0, -110.0, 0.0}}, {"out", d.string()}, {"seed", 3}});
    REQUIRE_MESSAGE(r.status == ST_OK, r.error);
    const auto rep = json::parse(slurp(d / "compensation.json"));
    const auto disp = rep["residual_displacement_um"];
    CHECK(std::hypot(disp[0].get<double>(), disp[1].get<double>()) < 1.0);
    for (const char* f : {"profile.csv", "centers.csv", "scan_Vtop.csv", "scan_V5.csv", "manifest.json"})
        CHECK(fs::exists(d / f));
    fs::remove_all(d);
}

TEST_CASE("command-line front end")
{
    const auto v = cli("--version");
    CHECK(v.first == 0);
    CHECK(v.second.find(st_version()) != std::string::npos);
    CHECK(v.second.find("schema 1") != std::string::npos);

    const auto d = scratch("cli");
    const auto ok = cli("fields --grid 3 --threads 1 --out " + d.string());
    CHECK(ok.first == 0);
    CHECK(lines(slurp(d / "fields.csv")) == 28);
    CHECK(cli("fields --config /nonexistent.json --out " + d.string()).first == 4);
    CHECK(cli("fields --grid 0 --out " + d.string()).first == 2);
    CHECK(cli("fields --method fdm").first == 2);
    CHECK(cli("no-such-command").first == 2);
    fs::remove_all(d);
}
