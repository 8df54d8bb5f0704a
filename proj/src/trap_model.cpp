#include "surftrap/trap_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "surftrap/error.hpp"

namespace surftrap {

using json = nlohmann::json;

std::string_view to_string(ElectrodeRole role)
{
    switch (role) {
    case ElectrodeRole::rf: return "rf";
    case ElectrodeRole::dc: return "dc";
    case ElectrodeRole::ground: return "ground";
    }
    return "dc";
}

ElectrodeRole role_from_string(std::string_view s)
{
    if (s == "rf") return ElectrodeRole::rf;
    if (s == "dc") return ElectrodeRole::dc;
    if (s == "ground") return ElectrodeRole::ground;
    throw ConfigError("unknown electrode role '" + std::string(s) + "'");
}

const Electrode* ElectrodeLayout::find(std::string_view name) const
{
    for (const auto& e : electrodes)
        if (e.name == name) return &e;
    return nullptr;
}

const Electrode& ElectrodeLayout::rf_electrode() const
{
    for (const auto& e : electrodes)
        if (e.role == ElectrodeRole::rf) return e;
    throw ConfigError("layout has no rf electrode");
}

double VoltageSet::dc_voltage(std::string_view name) const
{
    auto it = dc.find(name);
    return it == dc.end() ? 0.0 : it->second;
}

double BufferGas::number_density() const
{
    return pressure / (constants::boltzmann * temperature);
}

// ---------------------------------------------------------------------------
// Planar geometry

namespace {

double cross(const PlanarPoint& o, const PlanarPoint& a, const PlanarPoint& b)
{
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

int sign(double v, double eps)
{
    if (v > eps) return 1;
    if (v < -eps) return -1;
    return 0;
}

double poly_scale(const Polygon& p)
{
    double s = 0.0;
    for (const auto& v : p) s = std::max(s, v.cwiseAbs().maxCoeff());
    return std::max(s, 1e-12);
}

// Strict crossing of open segments ab and cd.
bool proper_crossing(const PlanarPoint& a, const PlanarPoint& b, const PlanarPoint& c,
                     const PlanarPoint& d, double eps)
{
    const int d1 = sign(cross(a, b, c), eps);
    const int d2 = sign(cross(a, b, d), eps);
    const int d3 = sign(cross(c, d, a), eps);
    const int d4 = sign(cross(c, d, b), eps);
    return d1 * d2 < 0 && d3 * d4 < 0;
}

bool on_segment(const PlanarPoint& p, const PlanarPoint& a, const PlanarPoint& b, double eps)
{
    if (sign(cross(a, b, p), eps) != 0) return false;
    return p.x() >= std::min(a.x(), b.x()) - eps && p.x() <= std::max(a.x(), b.x()) + eps &&
           p.y() >= std::min(a.y(), b.y()) - eps && p.y() <= std::max(a.y(), b.y()) + eps;
}

// Interior test; points on the boundary count as outside.
bool strictly_inside(const PlanarPoint& p, const Polygon& poly, double eps)
{
    const size_t n = poly.size();
    for (size_t i = 0; i < n; ++i)
        if (on_segment(p, poly[i], poly[(i + 1) % n], eps)) return false;
    bool inside = false;
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const auto& a = poly[i];
        const auto& b = poly[j];
        if ((a.y() > p.y()) != (b.y() > p.y())) {
            const double xi = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
            if (p.x() < xi) inside = !inside;
        }
    }
    return inside;
}

} // namespace

double signed_area(const Polygon& poly)
{
    double a = 0.0;
    for (size_t i = 0, n = poly.size(); i < n; ++i) {
        const auto& p = poly[i];
        const auto& q = poly[(i + 1) % n];
        a += p.x() * q.y() - q.x() * p.y();
    }
    return 0.5 * a;
}

bool is_simple(const Polygon& poly)
{
    const size_t n = poly.size();
    if (n < 3) return false;
    const double eps = 1e-12 * poly_scale(poly);
    if (std::abs(signed_area(poly)) <= eps * eps) return false;
    for (size_t i = 0; i < n; ++i) {
        if ((poly[i] - poly[(i + 1) % n]).norm() <= eps) return false;
        for (size_t j = i + 1; j < n; ++j) {
            const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if (adjacent) continue;
            const auto& a = poly[i];
            const auto& b = poly[(i + 1) % n];
            const auto& c = poly[j];
            const auto& d = poly[(j + 1) % n];
            if (proper_crossing(a, b, c, d, eps)) return false;
            if (on_segment(c, a, b, eps) || on_segment(d, a, b, eps) || on_segment(a, c, d, eps) ||
                on_segment(b, c, d, eps))
                return false;
        }
    }
    return true;
}

std::optional<Rect> as_axis_aligned_rect(const Polygon& poly)
{
    if (poly.size() != 4) return std::nullopt;
    double x1 = poly[0].x(), x2 = x1, z1 = poly[0].y(), z2 = z1;
    for (const auto& p : poly) {
        x1 = std::min(x1, p.x());
        x2 = std::max(x2, p.x());
        z1 = std::min(z1, p.y());
        z2 = std::max(z2, p.y());
    }
    for (const auto& p : poly) {
        const bool on_x = p.x() == x1 || p.x() == x2;
        const bool on_z = p.y() == z1 || p.y() == z2;
        if (!on_x || !on_z) return std::nullopt;
    }
    // Every corner must appear exactly once.
    for (double cx : {x1, x2})
        for (double cz : {z1, z2}) {
            const auto hits = std::count_if(poly.begin(), poly.end(), [&](const PlanarPoint& p) {
                return p.x() == cx && p.y() == cz;
            });
            if (hits != 1) return std::nullopt;
        }
    if (!(x2 > x1) || !(z2 > z1)) return std::nullopt;
    return Rect{x1, x2, z1, z2};
}

bool polygons_overlap(const Polygon& a, const Polygon& b)
{
    const auto ra = as_axis_aligned_rect(a);
    const auto rb = as_axis_aligned_rect(b);
    if (ra && rb) {
        return std::min(ra->x2, rb->x2) > std::max(ra->x1, rb->x1) &&
               std::min(ra->z2, rb->z2) > std::max(ra->z1, rb->z1);
    }
    const double eps = 1e-12 * std::max(poly_scale(a), poly_scale(b));
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j)
            if (proper_crossing(a[i], a[(i + 1) % a.size()], b[j], b[(j + 1) % b.size()], eps))
                return true;
    auto probe = [&](const Polygon& p, const Polygon& q) {
        PlanarPoint centroid = PlanarPoint::Zero();
        for (size_t i = 0; i < p.size(); ++i) {
            if (strictly_inside(p[i], q, eps)) return true;
            if (strictly_inside(0.5 * (p[i] + p[(i + 1) % p.size()]), q, eps)) return true;
            centroid += p[i];
        }
        centroid /= static_cast<double>(p.size());
        return strictly_inside(centroid, q, eps) && strictly_inside(centroid, p, eps);
    };
    return probe(a, b) || probe(b, a);
}

void validate(const ElectrodeLayout& layout)
{
    if (layout.electrodes.empty()) throw ConfigError("layout.electrodes: empty");
    int rf_count = 0;
    for (size_t i = 0; i < layout.electrodes.size(); ++i) {
        const auto& e = layout.electrodes[i];
        if (e.name.empty()) throw ConfigError("layout.electrodes[" + std::to_string(i) + "].name: empty");
        if (e.name == kTopPlateName)
            throw ConfigError("electrode '" + e.name + "': name is reserved for the top plate");
        if (e.polygons.empty()) throw ConfigError("electrode '" + e.name + "': no polygons");
        if (e.role == ElectrodeRole::rf) ++rf_count;
        for (size_t j = i + 1; j < layout.electrodes.size(); ++j)
            if (layout.electrodes[j].name == e.name)
                throw ConfigError("electrode '" + e.name + "': duplicate name");
        for (size_t p = 0; p < e.polygons.size(); ++p)
            if (!is_simple(e.polygons[p]))
                throw ConfigError("electrode '" + e.name + "': polygon " + std::to_string(p) +
                                  " is not simple");
    }
    if (rf_count != 1)
        throw ConfigError("layout: expected exactly one rf electrode, found " + std::to_string(rf_count));

    for (size_t i = 0; i < layout.electrodes.size(); ++i)
        for (size_t j = i; j < layout.electrodes.size(); ++j) {
            const auto& a = layout.electrodes[i];
            const auto& b = layout.electrodes[j];
            for (size_t p = 0; p < a.polygons.size(); ++p)
                for (size_t q = (i == j ? p + 1 : 0); q < b.polygons.size(); ++q)
                    if (polygons_overlap(a.polygons[p], b.polygons[q])) {
                        if (i == j)
                            throw ConfigError("electrode '" + a.name + "': polygons " +
                                              std::to_string(p) + " and " + std::to_string(q) +
                                              " overlap");
                        throw ConfigError("electrodes '" + a.name + "' and '" + b.name + "' overlap");
                    }
        }

    if (layout.top_plate) {
        if (!(layout.top_plate->height_m > 0.0))
            throw ConfigError("layout.top_plate.height: must be > 0");
        if (layout.top_plate->slit_halfwidth_m < 0.0)
            throw ConfigError("layout.top_plate.slit_halfwidth: must be >= 0");
    }
    const auto& bb = layout.bounding_box;
    if (!(bb.x_max > bb.x_min) || !(bb.z_max > bb.z_min))
        throw ConfigError("layout.bounding_box: empty box");
    for (const auto& e : layout.electrodes)
        for (const auto& poly : e.polygons)
            for (const auto& v : poly)
                if (v.x() < bb.x_min || v.x() > bb.x_max || v.y() < bb.z_min || v.y() > bb.z_max)
                    throw ConfigError("electrode '" + e.name + "': outside layout.bounding_box");
}

void validate(const TrapConfig& config)
{
    validate(config.layout);
    const auto& v = config.voltages;
    if (!(v.v_rf_amplitude >= 0.0) || !std::isfinite(v.v_rf_amplitude))
        throw ConfigError("drive.rf_amplitude: must be >= 0");
    if (!(v.omega_rf > 0.0) || !std::isfinite(v.omega_rf))
        throw ConfigError("drive.rf_frequency: must be > 0");
    for (const auto& [name, volts] : v.dc) {
        if (!std::isfinite(volts)) throw ConfigError("voltages." + name + ": not finite");
        if (name == kTopPlateName) {
            if (!config.layout.top_plate)
                throw ConfigError("voltages." + name + ": layout has no top plate");
            continue;
        }
        const auto* e = config.layout.find(name);
        if (!e) throw ConfigError("voltages." + name + ": no such electrode");
        if (e->role != ElectrodeRole::dc)
            throw ConfigError("voltages." + name + ": electrode is not a dc electrode");
    }
    if (!(config.ion.mass > 0.0)) throw ConfigError("ion.mass: must be > 0");
    if (config.ion.charge == 0.0 || !std::isfinite(config.ion.charge))
        throw ConfigError("ion.charge: must be nonzero");
    const auto& g = config.buffer_gas;
    if (!(g.pressure >= 0.0)) throw ConfigError("buffer_gas.pressure: must be >= 0");
    if (!(g.temperature > 0.0)) throw ConfigError("buffer_gas.temperature: must be > 0");
    if (!(g.gas_mass > 0.0)) throw ConfigError("buffer_gas.mass: must be > 0");
    if (!(g.polarizability >= 0.0)) throw ConfigError("buffer_gas.polarizability: must be >= 0");
}

// ---------------------------------------------------------------------------
// Canonical five-wire trap

namespace {

Polygon rect_polygon(double x1, double x2, double z1, double z2)
{
    return {PlanarPoint(x1, z1), PlanarPoint(x2, z1), PlanarPoint(x2, z2), PlanarPoint(x1, z2)};
}

} // namespace

ElectrodeLayout canonical_layout()
{
    using units::mm;
    // Edges in mm, written out so the values round exactly as in the shipped JSON:
    // 1 mm center, 0.2 mm gaps, 2 mm rails, 1.5 mm segments, 20 mm long.
    const double c = 0.5 * mm;
    const double rf0 = 0.7 * mm, rf1 = 2.7 * mm;
    const double dc0 = 2.9 * mm, dc1 = 4.9 * mm;
    const double half_len = 10.0 * mm;

    const double mid = 0.75 * mm;
    const double flank0 = 0.95 * mm, flank1 = 2.45 * mm;
    const double outer0 = 2.65 * mm;

    ElectrodeLayout layout;
    layout.electrodes.push_back({"gnd", ElectrodeRole::ground, {rect_polygon(-c, c, -half_len, half_len)}});
    layout.electrodes.push_back({"rf", ElectrodeRole::rf,
                                 {rect_polygon(-rf1, -rf0, -half_len, half_len),
                                  rect_polygon(rf0, rf1, -half_len, half_len)}});

    Electrode v2{"V2", ElectrodeRole::dc, {}};
    Electrode v3{"V3", ElectrodeRole::dc, {}};
    for (auto [xa, xb] : {std::pair{-dc1, -dc0}, std::pair{dc0, dc1}}) {
        v3.polygons.push_back(rect_polygon(xa, xb, -flank1, -flank0));
        v3.polygons.push_back(rect_polygon(xa, xb, flank0, flank1));
        v2.polygons.push_back(rect_polygon(xa, xb, -half_len, -outer0));
        v2.polygons.push_back(rect_polygon(xa, xb, outer0, half_len));
    }
    layout.electrodes.push_back(std::move(v2));
    layout.electrodes.push_back(std::move(v3));
    layout.electrodes.push_back({"V4", ElectrodeRole::dc, {rect_polygon(-dc1, -dc0, -mid, mid)}});
    layout.electrodes.push_back({"V5", ElectrodeRole::dc, {rect_polygon(dc0, dc1, -mid, mid)}});

    layout.top_plate = TopPlate{6.3 * mm, 0.5 * mm};
    layout.bounding_box = BoundingBox{-12.0 * mm, 12.0 * mm, -12.0 * mm, 12.0 * mm};
    return layout;
}

TrapConfig canonical_config()
{
    TrapConfig cfg;
    cfg.layout = canonical_layout();
    cfg.voltages.v_rf_amplitude = 1260.0;
    cfg.voltages.omega_rf = 7.6 * units::hz_to_rad(units::MHz);
    cfg.voltages.dc = {{"V2", 110.0}, {"V3", -50.0}, {"V4", 0.0}, {"V5", 0.0},
                       {std::string(kTopPlateName), 0.0}};
    cfg.ion.mass = units::u_to_kg(88.0);
    cfg.ion.charge = constants::elementary_charge;
    cfg.buffer_gas.pressure = units::torr_to_pa(1e-5);
    cfg.buffer_gas.temperature = 300.0;
    cfg.buffer_gas.gas_mass = units::u_to_kg(4.002602);
    cfg.buffer_gas.polarizability = 0.205 * units::angstrom3;
    return cfg;
}

ElectrodeLayout mirrored_x(const ElectrodeLayout& layout)
{
    ElectrodeLayout out = layout;
    for (auto& e : out.electrodes)
        for (auto& poly : e.polygons) {
            for (auto& v : poly) v.x() = -v.x();
            std::reverse(poly.begin(), poly.end());
        }
    auto& bb = out.bounding_box;
    bb = BoundingBox{-layout.bounding_box.x_max, -layout.bounding_box.x_min, bb.z_min, bb.z_max};
    return out;
}

// ---------------------------------------------------------------------------
// Structured-text I/O

namespace {

// Reads a quantity that may be given in lab units or SI. Exactly one key must be present.
double read_quantity(const json& obj, const std::string& path, const std::string& si_key,
                     const std::string& lab_key, double lab_to_si, std::optional<double> fallback = {})
{
    const bool has_si = obj.contains(si_key);
    const bool has_lab = si_key != lab_key && obj.contains(lab_key);
    if (has_si && has_lab)
        throw ConfigError(path + ": both '" + si_key + "' and '" + lab_key + "' given");
    const std::string key = has_si ? si_key : lab_key;
    if (!has_si && !has_lab) {
        if (fallback) return *fallback;
        throw ConfigError(path + "." + lab_key + ": missing");
    }
    const auto& v = obj.at(key);
    if (!v.is_number()) throw ConfigError(path + "." + key + ": expected a number");
    const double raw = v.get<double>();
    return has_si ? raw : raw * lab_to_si;
}

const json& require_object(const json& parent, const std::string& key, const std::string& path)
{
    if (!parent.contains(key)) throw ConfigError(path + key + ": missing");
    const auto& v = parent.at(key);
    if (!v.is_object()) throw ConfigError(path + key + ": expected an object");
    return v;
}

Polygon parse_polygon(const json& j, double scale, const std::string& path)
{
    if (!j.is_array()) throw ConfigError(path + ": expected an array of [x, z] vertices");
    Polygon poly;
    for (size_t i = 0; i < j.size(); ++i) {
        const auto& v = j[i];
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
            throw ConfigError(path + "[" + std::to_string(i) + "]: expected [x, z]");
        poly.emplace_back(v[0].get<double>() * scale, v[1].get<double>() * scale);
    }
    return poly;
}

ElectrodeLayout parse_layout(const json& j)
{
    ElectrodeLayout layout;
    double scale = units::mm;
    if (j.contains("units")) {
        const auto u = j.at("units").get<std::string>();
        if (u == "m") scale = 1.0;
        else if (u == "mm") scale = units::mm;
        else if (u == "um") scale = units::um;
        else throw ConfigError("layout.units: expected one of m, mm, um");
    }
    if (!j.contains("electrodes") || !j.at("electrodes").is_array())
        throw ConfigError("layout.electrodes: missing or not an array");
    const auto& arr = j.at("electrodes");
    for (size_t i = 0; i < arr.size(); ++i) {
        const std::string path = "layout.electrodes[" + std::to_string(i) + "]";
        const auto& e = arr[i];
        if (!e.is_object()) throw ConfigError(path + ": expected an object");
        Electrode el;
        if (!e.contains("name") || !e.at("name").is_string()) throw ConfigError(path + ".name: missing");
        el.name = e.at("name").get<std::string>();
        if (!e.contains("role") || !e.at("role").is_string()) throw ConfigError(path + ".role: missing");
        el.role = role_from_string(e.at("role").get<std::string>());
        if (e.contains("polygons")) {
            const auto& ps = e.at("polygons");
            if (!ps.is_array()) throw ConfigError(path + ".polygons: expected an array");
            for (size_t p = 0; p < ps.size(); ++p)
                el.polygons.push_back(parse_polygon(ps[p], scale, path + ".polygons[" + std::to_string(p) + "]"));
        } else if (e.contains("polygon")) {
            el.polygons.push_back(parse_polygon(e.at("polygon"), scale, path + ".polygon"));
        } else {
            throw ConfigError(path + ".polygons: missing");
        }
        layout.electrodes.push_back(std::move(el));
    }
    if (j.contains("top_plate") && !j.at("top_plate").is_null()) {
        const auto& t = j.at("top_plate");
        if (!t.is_object()) throw ConfigError("layout.top_plate: expected an object");
        TopPlate tp;
        tp.height_m = read_quantity(t, "layout.top_plate", "height_m", "height_mm", units::mm);
        tp.slit_halfwidth_m =
            read_quantity(t, "layout.top_plate", "slit_halfwidth_m", "slit_halfwidth_mm", units::mm, 0.0);
        layout.top_plate = tp;
    }
    const bool bb_si = j.contains("bounding_box_m");
    if (!bb_si && !j.contains("bounding_box_mm")) throw ConfigError("layout.bounding_box_mm: missing");
    const auto& bb = j.at(bb_si ? "bounding_box_m" : "bounding_box_mm");
    const double s = bb_si ? 1.0 : units::mm;
    const std::string bpath = bb_si ? "layout.bounding_box_m" : "layout.bounding_box_mm";
    auto range = [&](const char* axis) {
        if (!bb.contains(axis) || !bb.at(axis).is_array() || bb.at(axis).size() != 2)
            throw ConfigError(bpath + "." + axis + ": expected [min, max]");
        return std::pair{bb.at(axis)[0].get<double>() * s, bb.at(axis)[1].get<double>() * s};
    };
    auto [x0, x1] = range("x");
    auto [z0, z1] = range("z");
    layout.bounding_box = BoundingBox{x0, x1, z0, z1};
    return layout;
}

json layout_to_json(const ElectrodeLayout& layout)
{
    json j;
    j["units"] = "m";
    j["electrodes"] = json::array();
    for (const auto& e : layout.electrodes) {
        json je;
        je["name"] = e.name;
        je["role"] = std::string(to_string(e.role));
        je["polygons"] = json::array();
        for (const auto& poly : e.polygons) {
            json jp = json::array();
            for (const auto& v : poly) jp.push_back({v.x(), v.y()});
            je["polygons"].push_back(jp);
        }
        j["electrodes"].push_back(je);
    }
    if (layout.top_plate)
        j["top_plate"] = {{"height_m", layout.top_plate->height_m},
                          {"slit_halfwidth_m", layout.top_plate->slit_halfwidth_m}};
    const auto& bb = layout.bounding_box;
    j["bounding_box_m"] = {{"x", {bb.x_min, bb.x_max}}, {"z", {bb.z_min, bb.z_max}}};
    return j;
}

} // namespace

TrapConfig parse_config(std::string_view text)
{
    json j;
    try {
        j = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("parse error: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be an object");

    TrapConfig cfg;
    try {
        cfg.layout = parse_layout(require_object(j, "layout", ""));

        const auto& drive = require_object(j, "drive", "");
        cfg.voltages.v_rf_amplitude = read_quantity(drive, "drive", "rf_amplitude_V", "rf_amplitude_V", 1.0);
        cfg.voltages.omega_rf =
            read_quantity(drive, "drive", "omega_rf_rad_s", "rf_frequency_MHz", units::hz_to_rad(units::MHz));

        const auto& volts = require_object(j, "voltages", "");
        for (const auto& [name, v] : volts.items()) {
            if (!v.is_number()) throw ConfigError("voltages." + name + ": expected a number");
            cfg.voltages.dc[name] = v.get<double>();
        }

        const auto& ion = require_object(j, "ion", "");
        cfg.ion.mass = read_quantity(ion, "ion", "mass_kg", "mass_u", constants::atomic_mass_unit);
        cfg.ion.charge = read_quantity(ion, "ion", "charge_C", "charge_e", constants::elementary_charge);

        const auto& gas = require_object(j, "buffer_gas", "");
        cfg.buffer_gas.pressure = read_quantity(gas, "buffer_gas", "pressure_Pa", "pressure_torr", units::torr);
        cfg.buffer_gas.temperature = read_quantity(gas, "buffer_gas", "temperature_K", "temperature_K", 1.0, 300.0);
        cfg.buffer_gas.gas_mass = read_quantity(gas, "buffer_gas", "mass_kg", "mass_u", constants::atomic_mass_unit);
        cfg.buffer_gas.polarizability =
            read_quantity(gas, "buffer_gas", "polarizability_m3", "polarizability_A3", units::angstrom3);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("schema violation: ") + e.what());
    }
    validate(cfg);
    return cfg;
}

TrapConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const TrapConfig& cfg)
{
    json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["layout"] = layout_to_json(cfg.layout);
    j["drive"] = {{"rf_amplitude_V", cfg.voltages.v_rf_amplitude}, {"omega_rf_rad_s", cfg.voltages.omega_rf}};
    j["voltages"] = json::object();
    for (const auto& [name, v] : cfg.voltages.dc) j["voltages"][name] = v;
    j["ion"] = {{"mass_kg", cfg.ion.mass}, {"charge_C", cfg.ion.charge}};
    j["buffer_gas"] = {{"pressure_Pa", cfg.buffer_gas.pressure},
                       {"temperature_K", cfg.buffer_gas.temperature},
                       {"mass_kg", cfg.buffer_gas.gas_mass},
                       {"polarizability_m3", cfg.buffer_gas.polarizability}};
    return j.dump(2) + "\n";
}

void save_config(const TrapConfig& config, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write config '" + path.string() + "'");
    out << serialize_config(config);
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

} // namespace surftrap
