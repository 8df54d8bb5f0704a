#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "surftrap/electrostatics.hpp"

namespace surftrap {

/// Time-dependent force field seen by one ion. Accelerations in m/s^2, energies in J.
class TrapField {
public:
    virtual ~TrapField() = default;

    virtual bool inside(const Vec3& r) const = 0;
    /// Acceleration at time t (rf phase Omega t), without any tickle drive.
    virtual Vec3 acceleration(const Vec3& r, double t) const = 0;
    /// Acceleration per volt on the tickle electrode.
    virtual Vec3 tickle_acceleration(const Vec3& r) const = 0;
    /// Time-averaged (secular) potential energy.
    virtual double secular_energy(const Vec3& r) const = 0;
    /// rf (ponderomotive) part of the secular energy; drives the heating stand-in.
    virtual double rf_energy(const Vec3& r) const = 0;
    virtual double omega_rf() const = 0;
    virtual const IonSpecies& ion() const = 0;
};

/// Field from spline-sampled unit potentials: dc electrodes and stray field folded into one
/// spline, the rf electrode in another. Optional tickle electrode by name.
class SplineTrapField final : public TrapField {
public:
    SplineTrapField(std::shared_ptr<const SampledBasis> basis, const VoltageSet& volts, const IonSpecies& ion,
                    const StrayField& stray = {}, const std::string& tickle_electrode = {});

    bool inside(const Vec3& r) const override;
    Vec3 acceleration(const Vec3& r, double t) const override;
    Vec3 tickle_acceleration(const Vec3& r) const override;
    double secular_energy(const Vec3& r) const override;
    double rf_energy(const Vec3& r) const override;
    double omega_rf() const override { return omega_; }
    const IonSpecies& ion() const override { return ion_; }

private:
    std::shared_ptr<const SampledBasis> basis_;
    IonSpecies ion_;
    StrayField stray_;
    SplineField dc_;     // sum V_i phi_i (volts)
    SplineField rf_;     // phi_rf (unit)
    std::optional<SplineField> tickle_;
    double v_rf_ = 0.0, omega_ = 0.0, rf_prefactor_ = 0.0;
    double y_max_ = 0.0;
};

/// Spline sampling region for dynamics around an rf null at height y0: x within +-2.5 y0,
/// y from 0.1 y0 to 3.2 y0 (clipped below the top plate), z within +-6 y0; spacing y0/16.
SampleBox dynamics_sample_box(const Vec3& rf_null, const ElectrodeLayout& layout);
double dynamics_sample_spacing(const Vec3& rf_null);

/// Ideal quadratic field about the origin: static harmonic confinement omega_static
/// (per axis, rad/s), rf potential V_rf cos(Omega t) * 1/2 r^T H_rf r, stray field and a
/// uniform tickle field (V/m per volt). Used as a closed-form reference.
struct HarmonicFieldParams {
    Vec3 omega_static = Vec3::Zero();
    Mat3 rf_hessian = Mat3::Zero(); // 1/m^2
    double v_rf = 0.0;
    double omega_rf = 2.0 * constants::pi * 7.6e6;
    StrayField stray;
    Vec3 tickle_field = Vec3::UnitX(); // V/m per volt
    double half_size = 1e-2;            // inside() box half-width
};

class HarmonicTrapField final : public TrapField {
public:
    HarmonicTrapField(const HarmonicFieldParams& params, const IonSpecies& ion);

    bool inside(const Vec3& r) const override;
    Vec3 acceleration(const Vec3& r, double t) const override;
    Vec3 tickle_acceleration(const Vec3& r) const override;
    double secular_energy(const Vec3& r) const override;
    double rf_energy(const Vec3& r) const override;
    double omega_rf() const override { return p_.omega_rf; }
    const IonSpecies& ion() const override { return ion_; }

private:
    HarmonicFieldParams p_;
    IonSpecies ion_;
};

// ---------------------------------------------------------------------------
// Collisions

/// Langevin capture rate coefficient q sqrt(pi alpha / (eps0 mu)) (m^3/s); alpha is the
/// volume polarizability.
double langevin_rate_coefficient(double ion_charge, double ion_mass, const BufferGas& gas);
/// k_L * n_gas (1/s).
double collision_rate(const IonSpecies& ion, const BufferGas& gas);

/// Elastic two-body collision: the relative velocity keeps its magnitude and turns to
/// direction n (unit). Returns the new velocity of body 1 (body 2's via momentum).
Vec3 elastic_scatter(double m1, const Vec3& v1, double m2, const Vec3& v2, const Vec3& n, Vec3* v2_out = nullptr);

// ---------------------------------------------------------------------------
// Integration

struct TickleDrive {
    double amplitude = 0.0; // V on the field's tickle electrode
    double omega = 0.0;     // rad/s
};

/// Escape: outside the box around center with secular energy above the depth, or outside
/// the field domain / below the surface.
struct EscapeCriterion {
    Vec3 center = Vec3::Zero();
    double half_x = 0.0, y_max = 0.0, half_z = 0.0; // zero disables the geometric test
    double depth = 0.0;                              // J above reference_energy
    double reference_energy = 0.0;                   // J, secular energy at the minimum
};

struct DynamicsConfig {
    double timestep = 0.0;   // s; 0 selects rf period / 100
    double duration = 0.0;   // s
    std::uint64_t rng_seed = 1;
    std::optional<TickleDrive> tickle;
    EscapeCriterion escape;
    /// rf-heating stand-in: power gamma * rf_energy(r), injected once per rf period by
    /// stretching the velocity (1/s; 0 disables).
    double heating_rate = 0.0;
    int sample_every = 0;    // record a sample every n steps (0: none)
};

struct TrajectorySample {
    double t = 0.0;
    Vec3 r = Vec3::Zero();
    Vec3 v = Vec3::Zero();
    double secular_energy = 0.0; // kinetic + secular potential - reference, J
};

struct CollisionEvent {
    double t = 0.0;
    double speed_before = 0.0;
    double speed_after = 0.0;
};

struct Trajectory {
    std::vector<TrajectorySample> samples;
    std::vector<CollisionEvent> collisions;
    bool escaped = false;
    double escape_time = 0.0; // valid when escaped
    double end_time = 0.0;
    Vec3 final_r = Vec3::Zero();
    Vec3 final_v = Vec3::Zero();
    std::uint64_t steps = 0;
    double mean_response = 0.0; // time-averaged secular energy, J
};

struct IonState {
    Vec3 r = Vec3::Zero();
    Vec3 v = Vec3::Zero();
};

/// Velocity-Verlet integration of m r'' = Q E(r, t) with Poisson buffer-gas collisions
/// (Maxwell-Boltzmann gas, isotropic elastic scattering). Deterministic in rng_seed.
Trajectory integrate(const TrapField& field, const BufferGas& gas, const DynamicsConfig& cfg, const IonState& start);

/// CSV `t,x,y,z,vx,vy,vz,event` (event: sample, collision, escape).
std::string trajectory_csv(const Trajectory& traj);

// ---------------------------------------------------------------------------
// Tickle scan

struct TickleScan {
    double amplitude = 0.25;    // V
    double omega_lo = 0.0;      // rad/s
    double omega_hi = 0.0;
    int points = 41;
    double duration = 0.0;      // per frequency; 0 selects 200 periods of the scan center
    double timestep = 0.0;      // 0: rf period / 100
    int threads = 0;
};

struct TickleResult {
    double omega = 0.0;      // rad/s, interpolated peak
    double half_width = 0.0; // rad/s, half width at half maximum
    std::vector<double> omegas;
    std::vector<double> response; // time-averaged secular energy, J
};

/// Drives the tickle electrode across the range from rest at `start` and returns the
/// frequency of maximum time-averaged energy gain. Throws NumericError if the maximum
/// is at the scan edge.
TickleResult measure_secular_frequency(const TrapField& field, const Vec3& start, const TickleScan& scan);

// ---------------------------------------------------------------------------
// Lifetime scan

struct LifetimeOptions {
    int ensemble = 50;
    double temperature = 1000.0; // K, initial ion velocity distribution
    double position_spread = 0.0; // m, Gaussian sigma of the initial position per axis
    int threads = 0;
};

struct LifetimeRow {
    double pressure = 0.0;        // Pa
    double mean_lifetime = 0.0;   // s, censored at the duration
    double survival_fraction = 0.0;
    int n_traj = 0;
    int failed = 0;               // trajectories that raised numeric errors
};

/// Ensemble per pressure; trajectory i uses seed streams derived from (cfg.rng_seed, i)
/// only, so pressures share initial conditions and heating noise.
std::vector<LifetimeRow> lifetime_scan(const TrapField& field, const BufferGas& gas, const std::vector<double>& pressures,
                                       const DynamicsConfig& cfg, const Vec3& start, const LifetimeOptions& options);

/// Initial state of ensemble member `index` (thermal velocity, Gaussian position spread).
IonState lifetime_initial_state(std::uint64_t seed, std::size_t index, const Vec3& start, const IonSpecies& ion,
                                const LifetimeOptions& options);
/// Trajectory seed of ensemble member `index`.
std::uint64_t lifetime_trajectory_seed(std::uint64_t seed, std::size_t index);

/// CSV `pressure_torr,mean_lifetime_s,survival_frac,n_traj`.
std::string lifetime_csv(const std::vector<LifetimeRow>& rows);

/// Independent stream seed for (seed, index, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t stream);

} // namespace surftrap
