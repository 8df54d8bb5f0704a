#pragma once

#include <numbers>

#include <Eigen/Core>

namespace surftrap {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// CODATA 2018 exact / recommended values.
namespace constants {
inline constexpr double elementary_charge = 1.602176634e-19;  // C
inline constexpr double atomic_mass_unit = 1.66053906660e-27; // kg
inline constexpr double boltzmann = 1.380649e-23;             // J/K
inline constexpr double vacuum_permittivity = 8.8541878128e-12;
inline constexpr double pi = std::numbers::pi;
} // namespace constants

namespace units {
inline constexpr double torr = 101325.0 / 760.0; // Pa
inline constexpr double mm = 1e-3;
inline constexpr double um = 1e-6;
inline constexpr double MHz = 1e6;
inline constexpr double angstrom3 = 1e-30; // m^3

constexpr double torr_to_pa(double p) { return p * torr; }
constexpr double pa_to_torr(double p) { return p / torr; }
constexpr double u_to_kg(double m) { return m * constants::atomic_mass_unit; }
constexpr double kg_to_u(double m) { return m / constants::atomic_mass_unit; }
constexpr double joule_to_ev(double e) { return e / constants::elementary_charge; }
constexpr double ev_to_joule(double e) { return e * constants::elementary_charge; }
constexpr double hz_to_rad(double f) { return 2.0 * constants::pi * f; }
constexpr double rad_to_hz(double w) { return w / (2.0 * constants::pi); }
} // namespace units

} // namespace surftrap
