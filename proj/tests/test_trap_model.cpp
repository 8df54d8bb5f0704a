#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "surftrap/error.hpp"
#include "surftrap/trap_model.hpp"

using namespace surftrap;
using json = nlohmann::json;

namespace {

std::string data(const char* name) { return std::string(SURFTRAP_DATA_DIR) + "/" + name; }

json canonical_json()
{
    return json::parse(serialize_config(canonical_config()));
}

// Electrode sets compared as (role, sorted rectangles) ignoring names.
bool same_geometry(const ElectrodeLayout& a, const ElectrodeLayout& b)
{
    auto rects = [](const ElectrodeLayout& l) {
        std::vector<std::tuple<int, long, long, long, long>> out;
        for (const auto& e : l.electrodes)
            for (const auto& p : e.polygons) {
                const auto r = as_axis_aligned_rect(p);
                REQUIRE(r);
                auto q = [](double v) { return std::lround(v * 1e9); };
                out.emplace_back(int(e.role), q(r->x1), q(r->x2), q(r->z1), q(r->z2));
            }
        std::sort(out.begin(), out.end());
        return out;
    };
    return rects(a) == rects(b);
}

} // namespace

TEST_CASE("shipped config file matches the built-in trap")
{
    const auto cfg = load_config(data("canonical_trap.json"));
    CHECK(cfg == canonical_config());
}

TEST_CASE("ion mass and rf frequency conversions")
{
    const auto cfg = load_config(data("canonical_trap.json"));
    // 88 u with u = 1.66053906660e-27 kg
    CHECK(cfg.ion.mass == doctest::Approx(88.0 * 1.66053906660e-27).epsilon(1e-12));
    CHECK(cfg.ion.mass == doctest::Approx(1.4613e-25).epsilon(1e-4));
    CHECK(cfg.voltages.omega_rf == doctest::Approx(2.0 * 3.14159265358979 * 7.6e6).epsilon(1e-12));
    CHECK(cfg.voltages.omega_rf == doctest::Approx(4.775e7).epsilon(1e-3));
    CHECK(cfg.buffer_gas.pressure == doctest::Approx(1e-5 * 101325.0 / 760.0));
}

TEST_CASE("serialize then parse is bit-identical")
{
    auto cfg = canonical_config();
    cfg.voltages.dc["V5"] = 1.0 / 3.0;
    cfg.buffer_gas.pressure = 1.234567890123e-7;
    const auto back = parse_config(serialize_config(cfg));
    CHECK(back == cfg);
    CHECK(serialize_config(back) == serialize_config(cfg));
}

TEST_CASE("overlapping electrodes are rejected naming both")
{
    auto j = canonical_json();
    // Widen V4 into the rf rail.
    for (auto& e : j["layout"]["electrodes"])
        if (e["name"] == "V4") e["polygons"][0][1][0] = -0.5e-3;
    try {
        parse_config(j.dump());
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        CHECK(what.find("V4") != std::string::npos);
        CHECK(what.find("rf") != std::string::npos);
    }
}

TEST_CASE("validation errors")
{
    SUBCASE("malformed json")
    {
        CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
    }
    SUBCASE("missing section")
    {
        auto j = canonical_json();
        j.erase("ion");
        CHECK_THROWS_AS(parse_config(j.dump()), ConfigError);
    }
    SUBCASE("voltage on unknown electrode")
    {
        auto j = canonical_json();
        j["voltages"]["V9"] = 1.0;
        CHECK_THROWS_WITH_AS(parse_config(j.dump()), doctest::Contains("V9"), ConfigError);
    }
    SUBCASE("voltage on the rf electrode")
    {
        auto j = canonical_json();
        j["voltages"]["rf"] = 1.0;
        CHECK_THROWS_AS(parse_config(j.dump()), ConfigError);
    }
    SUBCASE("non-positive mass")
    {
        auto j = canonical_json();
        j["ion"]["mass_kg"] = 0.0;
        CHECK_THROWS_WITH_AS(parse_config(j.dump()), doctest::Contains("ion.mass"), ConfigError);
    }
    SUBCASE("both SI and lab keys")
    {
        auto j = canonical_json();
        j["ion"]["mass_u"] = 88.0;
        CHECK_THROWS_AS(parse_config(j.dump()), ConfigError);
    }
    SUBCASE("self-intersecting polygon")
    {
        auto j = canonical_json();
        auto& poly = j["layout"]["electrodes"][0]["polygons"][0];
        std::swap(poly[1], poly[2]);
        CHECK_THROWS_AS(parse_config(j.dump()), ConfigError);
    }
    SUBCASE("missing file is an I/O error")
    {
        CHECK_THROWS_AS(load_config("/nonexistent/trap.json"), IoError);
    }
}

TEST_CASE("canonical layout")
{
    const auto l = canonical_layout();
    REQUIRE(l.top_plate);
    CHECK(l.top_plate->height_m == doctest::Approx(6.3e-3));
    CHECK(same_geometry(mirrored_x(l), l));
    CHECK(l.rf_electrode().polygons.size() == 2);
    CHECK_NOTHROW(validate(l));
    // V4 and V5 swap under the mirror.
    const auto m = mirrored_x(l);
    const auto r4 = as_axis_aligned_rect(l.find("V4")->polygons[0]);
    const auto r5 = as_axis_aligned_rect(m.find("V5")->polygons[0]);
    CHECK(r4->x1 == doctest::Approx(r5->x1));
    CHECK(r4->x2 == doctest::Approx(r5->x2));
    CHECK(r4->z1 == doctest::Approx(r5->z1));
}

TEST_CASE("geometry helpers")
{
    const Polygon sq{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    CHECK(signed_area(sq) == doctest::Approx(1.0));
    CHECK(is_simple(sq));
    const Polygon bow{{0, 0}, {1, 1}, {1, 0}, {0, 1}};
    CHECK_FALSE(is_simple(bow));
    const Polygon touching{{1, 0}, {2, 0}, {2, 1}, {1, 1}};
    CHECK_FALSE(polygons_overlap(sq, touching));
    const Polygon inside{{0.25, 0.25}, {0.75, 0.25}, {0.75, 0.75}, {0.25, 0.75}};
    CHECK(polygons_overlap(sq, inside));
    CHECK_FALSE(as_axis_aligned_rect(Polygon{{0, 0}, {1, 0}, {0.5, 1}}));
}

TEST_CASE("gas number density from the ideal gas law")
{
    BufferGas g;
    g.pressure = units::torr_to_pa(1e-4);
    g.temperature = 300.0;
    CHECK(g.number_density() == doctest::Approx(1e-4 * 133.322368 / (1.380649e-23 * 300.0)).epsilon(1e-8));
}
