#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "surftrap/electrostatics.hpp"

namespace surftrap {

/// Regular sampling grid (counts points per axis, inclusive of both faces).
struct GridBox {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();
    std::array<int, 3> counts{121, 121, 61};

    std::size_t size() const { return std::size_t(counts[0]) * counts[1] * counts[2]; }
    Vec3 point(std::size_t ix, std::size_t iy, std::size_t iz) const;
    Vec3 spacing() const;
};

/// Default depth-search box around an rf null at height y0: x within +-4 y0, y from
/// 0.05 y0 to 4 y0 (clipped below the top plate), z within +-6 y0 of the null.
GridBox default_grid_box(const Vec3& rf_null, const ElectrodeLayout& layout);

/// Per-electrode samples on a grid. Secular energies for any voltage set on the same
/// basis come from these without re-evaluating the basis, which is what makes a V_top
/// scan cheap.
class FieldSamples {
public:
    FieldSamples(BasisPtr basis, const GridBox& box, int threads = 0);

    const GridBox& box() const { return box_; }
    const PotentialBasis& basis() const { return *basis_; }
    /// Secular energy (J) at every grid point; +inf outside the field region.
    std::vector<double> energies(const SecularPotential& potential) const;

private:
    BasisPtr basis_;
    GridBox box_;
    std::vector<double> phi_;         // [point][function]
    std::vector<double> grad_rf_sq_;  // |grad phi_rf|^2 per point
    std::vector<unsigned char> valid_;
};

/// Energies sampled directly from the potential (no caching).
std::vector<double> sample_energies(const SecularPotential& potential, const GridBox& box, int threads = 0);

struct WatershedResult {
    double level = 0.0;         // J, lowest threshold joining the seed cell to the boundary
    std::size_t saddle_cell = 0; // highest cell on the best escape path
    bool saddle_on_boundary = false;
};

/// Minimax flood from the grid boundary (Dijkstra on max-edge cost, 6-neighbour).
WatershedResult watershed(const std::vector<double>& energies, const GridBox& box, std::size_t seed_cell);

/// Point in the transverse plane at axial position z minimizing |grad phi_rf|^2.
/// Grid-seeded Gauss-Newton; throws NumericError if no null lies in the search region.
Vec3 find_rf_null(const PotentialBasis& basis, double axial_z = 0.0);

struct MinimumResult {
    Vec3 position = Vec3::Zero();
    double energy = 0.0; // J
    Mat3 hessian = Mat3::Zero();
    int iterations = 0;
    bool converged = false;
};

/// Damped Newton descent on the secular potential from a seed point.
MinimumResult locate_minimum(const SecularPotential& potential, const Vec3& seed, int max_iterations = 200);

struct TrapCharacterization {
    bool trapped = false;
    std::string status;          // "ok", or why the point is untrapped / flagged
    Vec3 rf_null = Vec3::Zero();
    Vec3 minimum = Vec3::Zero();
    double min_energy_ev = 0.0;
    std::array<double, 3> secular_freqs{0.0, 0.0, 0.0}; // rad/s, ascending
    Mat3 principal_axes = Mat3::Identity();             // columns match secular_freqs
    double depth_ev = 0.0;
    Vec3 escape_saddle = Vec3::Zero();
    bool saddle_refined = false;    // false: grid value used
    bool saddle_on_boundary = false; // escape limited by the search box, depth is a lower bound
    Vec3 displacement = Vec3::Zero(); // minimum - rf_null in the x-y plane (z component 0)
};

struct CharacterizeOptions {
    int threads = 0;
    double axial_z = 0.0;
    std::optional<GridBox> box;     // default_grid_box around the null when unset
    std::optional<Vec3> seed;       // minimum search start; the rf null when unset
    const FieldSamples* cache = nullptr; // reused grid samples (must match basis and box)
    bool compute_depth = true;
};

/// Minimum, secular frequencies (eigenvalues of the Hessian, w = sqrt(lambda / m)) and
/// watershed depth with Newton-refined escape saddle.
TrapCharacterization characterize(const SecularPotential& potential, const CharacterizeOptions& options = {});

struct VtopRow {
    double v_top = 0.0;
    TrapCharacterization result;
};

struct VtopScan {
    std::vector<VtopRow> rows;
    std::optional<double> v_top_star;    // |displacement| minimized (refined between scan points)
    double displacement_at_star = 0.0;   // m
};

struct ScanOptions {
    int threads = 0;
    double axial_z = 0.0;
    std::optional<GridBox> box;
    bool refine_star = true;
};

VtopScan scan_vtop(const BasisPtr& basis, const VoltageSet& volts, const IonSpecies& ion,
                   const std::vector<double>& vtop_values, const ScanOptions& options = {});

/// Displacement (transverse, m) of the secular minimum from the rf null at a given V_top.
Vec3 displacement_at(const BasisPtr& basis, VoltageSet volts, const IonSpecies& ion, double v_top,
                     const Vec3& rf_null, const StrayField& stray = {});

/// V_top in [lo, hi] at which the transverse displacement magnitude equals target (m).
double find_vtop_for_displacement(const BasisPtr& basis, const VoltageSet& volts, const IonSpecies& ion,
                                  double target, double lo, double hi);

/// V_top in [lo, hi] at which the vertical displacement changes sign (the compensating
/// top-plate voltage without a depth scan). Coarse scan, then bracketed root.
double find_vtop_star(const BasisPtr& basis, const VoltageSet& volts, const IonSpecies& ion, double lo, double hi,
                      const StrayField& stray = {});

/// Fixed-header CSV: v_top,depth_eV,disp_x_um,disp_y_um,trapped
std::string vtop_scan_csv(const VtopScan& scan);

} // namespace surftrap
