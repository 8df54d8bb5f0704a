#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "surftrap/spline.hpp"
#include "surftrap/trap_model.hpp"
#include "surftrap/units.hpp"

namespace surftrap {

enum class BasisMethod { bem, analytic, sampled };

std::string_view to_string(BasisMethod method);

struct SolverInfo {
    std::size_t panel_count = 0;
    double residual_norm = 0.0;      // max over right-hand sides, relative to |rhs|
    double condition_estimate = 0.0; // 1 / rcond of the collocation matrix
};

enum class HessianMode { none, rf_only, all };

/// Values of every basis function at one point. phi is the fraction of the applied
/// volts; grad in 1/m; hess in 1/m^2.
struct BasisEval {
    std::vector<double> phi;
    std::vector<Vec3> grad;
    std::vector<Mat3> hess;
};

/// Unit-voltage potentials phi_i(r) of each electrode (all others grounded), plus the
/// top plate when the layout has one. The rf electrode is one basis function.
class PotentialBasis {
public:
    virtual ~PotentialBasis() = default;

    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return names_.size(); }
    std::optional<std::size_t> index_of(std::string_view name) const;
    std::size_t rf_index() const { return rf_index_; }
    bool is_dc(std::size_t i) const { return dc_mask_[i]; }
    const ElectrodeLayout& layout() const { return layout_; }
    const SolverInfo& info() const { return info_; }

    virtual BasisMethod method() const = 0;
    virtual bool in_region(const Vec3& r) const;
    /// Fills all basis functions at r. Throws NumericError outside the field region.
    virtual void evaluate(const Vec3& r, BasisEval& out, HessianMode mode = HessianMode::none) const = 0;

    double potential(std::size_t i, const Vec3& r) const;
    Vec3 gradient(std::size_t i, const Vec3& r) const;
    Mat3 hessian(std::size_t i, const Vec3& r) const;

protected:
    explicit PotentialBasis(ElectrodeLayout layout);
    void require_region(const Vec3& r) const;
    /// Central differences of analytic gradients; step relative to the plate height or 1 mm.
    void finite_difference_hessians(const Vec3& r, BasisEval& out, HessianMode mode) const;

    ElectrodeLayout layout_;
    std::vector<std::string> names_;
    std::vector<bool> dc_mask_;
    std::size_t rf_index_ = 0;
    SolverInfo info_;
};

using BasisPtr = std::shared_ptr<const PotentialBasis>;

// ---------------------------------------------------------------------------
// Gapless-plane analytic model

struct AnalyticOptions {
    /// Image pairs summed exactly when a top plate is present; the remainder of the
    /// image series is added in its far-field (uniform field) form.
    int image_pairs = 3;
};

/// Rectangular electrodes in an otherwise grounded infinite plane. With a top plate the
/// plate is modeled as an infinite grounded plane at its height (images) and its own
/// basis function is the parallel-plate ramp y/h. The slit is ignored.
BasisPtr make_analytic_basis(const ElectrodeLayout& layout, const AnalyticOptions& options = {});

/// Infinite strips in a grounded plane (2-D): sum over (V/pi)[atan((x2-x)/y) - atan((x1-x)/y)].
struct Strip {
    double x1, x2, volts;
};
double analytic_strip_potential(std::span<const Strip> strips, double x, double y);
/// (d/dx, d/dy) of analytic_strip_potential.
Eigen::Vector2d analytic_strip_gradient(std::span<const Strip> strips, double x, double y);

// ---------------------------------------------------------------------------
// Boundary-element solver

struct BemOptions {
    std::size_t max_panels = 8000;
    /// Panel size grows as s0 + growth * distance from the trap center.
    double growth = 0.2;
    /// Near a patch edge the size is capped at s0/2 + edge_grading * (distance to the edge);
    /// 0 disables the refinement.
    double edge_grading = 0.5;
};

/// Collocation BEM with piecewise-constant charge on rectangular panels. Electrodes,
/// grounded gaps and the rest of the bounding box, and the top plate (with its slit)
/// are all meshed as conductors in free space.
BasisPtr solve_bem(const ElectrodeLayout& layout, int panels_per_dimension, const BemOptions& options = {});

// ---------------------------------------------------------------------------
// Spline-sampled basis (fast evaluation for dynamics)

struct SampleBox {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();
};

class SampledBasis final : public PotentialBasis {
public:
    SampledBasis(const PotentialBasis& source, const SampleBox& box, double spacing, int threads = 0);

    BasisMethod method() const override { return BasisMethod::sampled; }
    bool in_region(const Vec3& r) const override;
    void evaluate(const Vec3& r, BasisEval& out, HessianMode mode = HessianMode::none) const override;

    const SplineField& spline(std::size_t i) const { return splines_[i]; }
    /// Sum of w_i * phi_i as a single spline.
    SplineField combine(std::span<const double> weights) const;
    const SampleBox& box() const { return box_; }
    BasisMethod source_method() const { return source_method_; }

private:
    std::vector<SplineField> splines_;
    SampleBox box_;
    BasisMethod source_method_;
};

// ---------------------------------------------------------------------------
// Secular (pseudo)potential

/// Stray field about a reference point: E(r) = E0 - E1 * (r - origin) per axis, i.e. the
/// potential energy Q * (-E0 . d + 1/2 sum_k E1_k d_k^2). Positive E1 stiffens the trap,
/// so the 1-D secular frequency becomes sqrt(w^2 + Q E1 / m).
struct StrayField {
    Vec3 e0 = Vec3::Zero();
    Vec3 e1 = Vec3::Zero();
    Vec3 origin = Vec3::Zero();

    double energy(const Vec3& r, double charge) const;
    Vec3 energy_gradient(const Vec3& r, double charge) const;
    Vec3 field(const Vec3& r) const;
};

/// Phi(r) = Q^2 |grad phi_rf|^2 / (4 m Omega^2) + Q phi_dc(r) (+ stray term), in joules.
class SecularPotential {
public:
    SecularPotential(BasisPtr basis, VoltageSet volts, IonSpecies ion, StrayField stray = {});

    using EnergyFn = std::function<double(const Vec3&)>;
    using GradientFn = std::function<Vec3(const Vec3&)>;
    /// Potential given directly as energy/gradient callables (joules, joules/m).
    static SecularPotential from_functions(EnergyFn energy, GradientFn gradient, IonSpecies ion,
                                           double length_scale);

    struct Terms {
        double rf = 0.0;
        double dc = 0.0;
        double stray = 0.0;
        double total() const { return rf + dc + stray; }
    };

    double energy(const Vec3& r) const;
    double energy_ev(const Vec3& r) const { return units::joule_to_ev(energy(r)); }
    Terms terms(const Vec3& r) const;
    Vec3 gradient(const Vec3& r) const;
    /// Central differences of the analytic gradient.
    Mat3 hessian(const Vec3& r) const;

    bool in_region(const Vec3& r) const;
    const PotentialBasis* basis() const { return basis_.get(); }
    const BasisPtr& basis_ptr() const { return basis_; }
    const VoltageSet& voltages() const { return volts_; }
    const IonSpecies& ion() const { return ion_; }
    const StrayField& stray() const { return stray_; }
    double length_scale() const { return length_scale_; }
    /// Q^2 V_rf^2 / (4 m Omega^2), so that the rf term is this times |grad phi_rf|^2.
    double rf_prefactor() const { return rf_prefactor_; }
    /// Weights of each basis function in phi_dc (volts; zero for rf and ground).
    const std::vector<double>& dc_weights() const { return dc_weights_; }

private:
    SecularPotential() = default;

    BasisPtr basis_;
    VoltageSet volts_;
    IonSpecies ion_;
    StrayField stray_;
    std::vector<double> dc_weights_;
    double rf_prefactor_ = 0.0;
    double length_scale_ = 1e-3;
    EnergyFn energy_fn_;
    GradientFn gradient_fn_;
};

/// Secular potential in eV at a point.
double secular_potential(const BasisPtr& basis, const VoltageSet& volts, const IonSpecies& ion, const Vec3& r);

/// Instantaneous electric field E = -grad phi_dc - cos(phase) V_rf grad phi_rf (V/m).
Vec3 field_at(const PotentialBasis& basis, const VoltageSet& volts, const Vec3& r, double phase);

/// Weights mapping basis functions to phi_dc for a voltage set.
std::vector<double> dc_weights(const PotentialBasis& basis, const VoltageSet& volts);

} // namespace surftrap
