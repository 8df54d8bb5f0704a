#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "surftrap/units.hpp"

namespace surftrap {

/// Planar vertex in the electrode plane (y = 0): (x, z) in meters.
using PlanarPoint = Eigen::Vector2d;
using Polygon = std::vector<PlanarPoint>;

enum class ElectrodeRole { rf, dc, ground };

std::string_view to_string(ElectrodeRole role);
ElectrodeRole role_from_string(std::string_view s);

/// One electrical node. Several polygons may be wired together (e.g. the two rf rails).
struct Electrode {
    std::string name;
    ElectrodeRole role = ElectrodeRole::dc;
    std::vector<Polygon> polygons;

    bool operator==(const Electrode&) const = default;
};

struct TopPlate {
    double height_m = 0.0;
    double slit_halfwidth_m = 0.0;

    bool operator==(const TopPlate&) const = default;
};

struct BoundingBox {
    double x_min = 0.0, x_max = 0.0;
    double z_min = 0.0, z_max = 0.0;

    bool operator==(const BoundingBox&) const = default;
};

/// Name under which the top plate appears in voltage maps and bases.
inline constexpr std::string_view kTopPlateName = "Vtop";

struct ElectrodeLayout {
    std::vector<Electrode> electrodes;
    std::optional<TopPlate> top_plate;
    BoundingBox bounding_box;

    const Electrode* find(std::string_view name) const;
    const Electrode& rf_electrode() const;

    bool operator==(const ElectrodeLayout&) const = default;
};

struct VoltageSet {
    double v_rf_amplitude = 0.0; // V
    double omega_rf = 0.0;       // rad/s
    std::map<std::string, double, std::less<>> dc;

    /// Voltage on a dc electrode or the top plate; absent keys are 0 V.
    double dc_voltage(std::string_view name) const;

    bool operator==(const VoltageSet&) const = default;
};

struct IonSpecies {
    double mass = 0.0;   // kg
    double charge = 0.0; // C

    bool operator==(const IonSpecies&) const = default;
};

struct BufferGas {
    double pressure = 0.0;       // Pa
    double temperature = 300.0;  // K
    double gas_mass = 0.0;       // kg
    double polarizability = 0.0; // m^3, volume polarizability

    /// Number density from the ideal gas law.
    double number_density() const;

    bool operator==(const BufferGas&) const = default;
};

struct TrapConfig {
    ElectrodeLayout layout;
    VoltageSet voltages;
    IonSpecies ion;
    BufferGas buffer_gas;

    bool operator==(const TrapConfig&) const = default;
};

// Geometry helpers.
bool is_simple(const Polygon& poly);
bool polygons_overlap(const Polygon& a, const Polygon& b);
double signed_area(const Polygon& poly);

/// Axis-aligned rectangle covered by a polygon, if the polygon is one.
struct Rect {
    double x1, x2, z1, z2;
};
std::optional<Rect> as_axis_aligned_rect(const Polygon& poly);

/// Throws ConfigError naming the offending field or electrode.
void validate(const ElectrodeLayout& layout);
void validate(const TrapConfig& config);

/// Five-wire reference trap: grounded center strip, two rf rails, two dc rails
/// cut into middle (V4 left, V5 right), flanking (V3) and outer (V2) segments,
/// and a top plate 6.3 mm above the surface.
ElectrodeLayout canonical_layout();

/// Canonical layout with Sr+ at 1260 V / 7.6 MHz, V2 = 110 V, V3 = -50 V, helium at 1e-5 torr.
TrapConfig canonical_config();

/// Mirror image x -> -x.
ElectrodeLayout mirrored_x(const ElectrodeLayout& layout);

// Structured-text configuration (JSON). Loading accepts lab units (mm, MHz, torr, u, e,
// A^3) or SI keys; serialization writes SI keys so that a reload is bit-identical.
TrapConfig parse_config(std::string_view text);
TrapConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const TrapConfig& config);
void save_config(const TrapConfig& config, const std::filesystem::path& path);

inline constexpr int kConfigSchemaVersion = 1;

} // namespace surftrap
