#include "surftrap/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include "surftrap/error.hpp"
#include "surftrap/parallel.hpp"

namespace surftrap {

// ---------------------------------------------------------------------------
// Fields

SplineTrapField::SplineTrapField(std::shared_ptr<const SampledBasis> basis, const VoltageSet& volts,
                                 const IonSpecies& ion, const StrayField& stray, const std::string& tickle_electrode)
    : basis_(std::move(basis)), ion_(ion), stray_(stray)
{
    if (!basis_) throw ConfigError("trap field: no basis");
    if (!(ion_.mass > 0.0)) throw ConfigError("ion mass must be > 0");
    if (!(volts.omega_rf > 0.0)) throw ConfigError("rf frequency must be > 0");
    const auto w = dc_weights(*basis_, volts);
    dc_ = basis_->combine(w);
    rf_ = basis_->spline(basis_->rf_index());
    if (!tickle_electrode.empty()) {
        const auto idx = basis_->index_of(tickle_electrode);
        if (!idx || !basis_->is_dc(*idx)) throw ConfigError("tickle electrode '" + tickle_electrode + "' is not a dc electrode");
        tickle_ = basis_->spline(*idx);
    }
    v_rf_ = volts.v_rf_amplitude;
    omega_ = volts.omega_rf;
    rf_prefactor_ = ion_.charge * ion_.charge * v_rf_ * v_rf_ / (4.0 * ion_.mass * omega_ * omega_);
}

bool SplineTrapField::inside(const Vec3& r) const { return r.y() > 0.0 && basis_->in_region(r); }

Vec3 SplineTrapField::acceleration(const Vec3& r, double t) const
{
    Vec3 gdc, grf;
    dc_.value_gradient(r, gdc);
    rf_.value_gradient(r, grf);
    const Vec3 e = -gdc - std::cos(omega_ * t) * v_rf_ * grf + stray_.field(r);
    return (ion_.charge / ion_.mass) * e;
}

Vec3 SplineTrapField::tickle_acceleration(const Vec3& r) const
{
    if (!tickle_) return Vec3::Zero();
    Vec3 g;
    tickle_->value_gradient(r, g);
    return -(ion_.charge / ion_.mass) * g;
}

double SplineTrapField::rf_energy(const Vec3& r) const
{
    Vec3 g;
    rf_.value_gradient(r, g);
    return rf_prefactor_ * g.squaredNorm();
}

double SplineTrapField::secular_energy(const Vec3& r) const
{
    return rf_energy(r) + ion_.charge * dc_.value(r) + stray_.energy(r, ion_.charge);
}

SampleBox dynamics_sample_box(const Vec3& rf_null, const ElectrodeLayout& layout)
{
    const double y0 = rf_null.y();
    if (!(y0 > 0.0)) throw ConfigError("rf null must lie above the surface");
    double ytop = 3.2 * y0;
    if (layout.top_plate) ytop = std::min(ytop, 0.95 * layout.top_plate->height_m);
    return {Vec3(rf_null.x() - 2.5 * y0, 0.1 * y0, rf_null.z() - 6.0 * y0),
            Vec3(rf_null.x() + 2.5 * y0, ytop, rf_null.z() + 6.0 * y0)};
}

double dynamics_sample_spacing(const Vec3& rf_null) { return rf_null.y() / 16.0; }

HarmonicTrapField::HarmonicTrapField(const HarmonicFieldParams& params, const IonSpecies& ion) : p_(params), ion_(ion)
{
    if (!(ion_.mass > 0.0)) throw ConfigError("ion mass must be > 0");
    if (!(p_.omega_rf > 0.0)) throw ConfigError("rf frequency must be > 0");
}

bool HarmonicTrapField::inside(const Vec3& r) const { return r.cwiseAbs().maxCoeff() < p_.half_size; }

Vec3 HarmonicTrapField::acceleration(const Vec3& r, double t) const
{
    const Vec3 stat = -p_.omega_static.cwiseProduct(p_.omega_static).cwiseProduct(r);
    const Vec3 e = -std::cos(p_.omega_rf * t) * p_.v_rf * (p_.rf_hessian * r) + p_.stray.field(r);
    return stat + (ion_.charge / ion_.mass) * e;
}

Vec3 HarmonicTrapField::tickle_acceleration(const Vec3&) const { return (ion_.charge / ion_.mass) * p_.tickle_field; }

double HarmonicTrapField::rf_energy(const Vec3& r) const
{
    const double q = ion_.charge;
    return q * q * p_.v_rf * p_.v_rf * (p_.rf_hessian * r).squaredNorm() / (4.0 * ion_.mass * p_.omega_rf * p_.omega_rf);
}

double HarmonicTrapField::secular_energy(const Vec3& r) const
{
    const double stat = 0.5 * ion_.mass * p_.omega_static.cwiseProduct(p_.omega_static).dot(r.cwiseProduct(r));
    return stat + rf_energy(r) + p_.stray.energy(r, ion_.charge);
}

// ---------------------------------------------------------------------------
// Collisions

double langevin_rate_coefficient(double ion_charge, double ion_mass, const BufferGas& gas)
{
    const double mu = ion_mass * gas.gas_mass / (ion_mass + gas.gas_mass);
    return std::abs(ion_charge) * std::sqrt(constants::pi * gas.polarizability / (constants::vacuum_permittivity * mu));
}

double collision_rate(const IonSpecies& ion, const BufferGas& gas)
{
    if (gas.pressure <= 0.0 || gas.polarizability <= 0.0 || gas.gas_mass <= 0.0) return 0.0;
    return langevin_rate_coefficient(ion.charge, ion.mass, gas) * gas.number_density();
}

Vec3 elastic_scatter(double m1, const Vec3& v1, double m2, const Vec3& v2, const Vec3& n, Vec3* v2_out)
{
    const double mt = m1 + m2;
    const Vec3 vcm = (m1 * v1 + m2 * v2) / mt;
    const Vec3 g = (v1 - v2).norm() * n.normalized();
    if (v2_out) *v2_out = vcm - (m1 / mt) * g;
    return vcm + (m2 / mt) * g;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t stream)
{
    // splitmix64 over the packed inputs
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(seed) ^ index) ^ (stream * 0xd1b54a32d192ed03ULL));
}

// ---------------------------------------------------------------------------
// Integration

namespace {

Vec3 normal3(std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    const double a = n(rng), b = n(rng), c = n(rng);
    return {a, b, c};
}

Vec3 unit_vector(std::mt19937_64& rng)
{
    Vec3 u;
    do u = normal3(rng);
    while (u.squaredNorm() < 1e-24);
    return u.normalized();
}

bool outside_box(const EscapeCriterion& esc, const Vec3& r)
{
    const Vec3 d = r - esc.center;
    if (esc.half_x > 0.0 && std::abs(d.x()) > esc.half_x) return true;
    if (esc.half_z > 0.0 && std::abs(d.z()) > esc.half_z) return true;
    if (esc.y_max > 0.0 && r.y() > esc.y_max) return true;
    return false;
}

} // namespace

Trajectory integrate(const TrapField& field, const BufferGas& gas, const DynamicsConfig& cfg, const IonState& start)
{
    const double t_rf = 2.0 * constants::pi / field.omega_rf();
    const double dt = cfg.timestep > 0.0 ? cfg.timestep : t_rf / 100.0;
    if (dt > t_rf / 50.0 * (1.0 + 1e-12)) throw ConfigError("timestep must be <= rf period / 50");
    if (!(cfg.duration > 0.0)) throw ConfigError("duration must be > 0");
    if (!field.inside(start.r)) throw NumericError("start position outside the field region");

    const IonSpecies& ion = field.ion();
    std::mt19937_64 coll_rng(derive_seed(cfg.rng_seed, 0, 1));
    std::mt19937_64 heat_rng(derive_seed(cfg.rng_seed, 0, 2));
    const double rate = collision_rate(ion, gas);
    std::exponential_distribution<double> wait(rate > 0.0 ? rate : 1.0);
    double next_collision = rate > 0.0 ? wait(coll_rng) : std::numeric_limits<double>::infinity();
    const double gas_sigma = gas.gas_mass > 0.0 ? std::sqrt(constants::boltzmann * gas.temperature / gas.gas_mass) : 0.0;

    const auto period_steps = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(t_rf / dt)));
    const auto total_steps = static_cast<std::uint64_t>(std::ceil(cfg.duration / dt - 1e-9));
    const double kick_interval = double(period_steps) * dt;
    const double blowup = cfg.escape.depth > 0.0 ? 1e3 * cfg.escape.depth : std::numeric_limits<double>::infinity();

    Trajectory traj;
    Vec3 r = start.r, v = start.v;
    double t = 0.0;
    auto accel = [&](const Vec3& p, double time) {
        Vec3 a = field.acceleration(p, time);
        if (cfg.tickle && cfg.tickle->amplitude != 0.0)
            a += cfg.tickle->amplitude * std::cos(cfg.tickle->omega * time) * field.tickle_acceleration(p);
        return a;
    };
    auto energy = [&](const Vec3& p, const Vec3& vel) {
        return 0.5 * ion.mass * vel.squaredNorm() + field.secular_energy(p) - cfg.escape.reference_energy;
    };
    auto record = [&] {
        traj.samples.push_back({t, r, v, energy(r, v)});
    };
    if (cfg.sample_every > 0) record();

    Vec3 a = accel(r, t);
    double response_sum = 0.0;
    std::uint64_t response_n = 0;
    for (std::uint64_t n = 1; n <= total_steps; ++n) {
        r += v * dt + 0.5 * a * dt * dt;
        t = double(n) * dt;
        if (!field.inside(r)) {
            traj.escaped = true;
            traj.escape_time = t;
            break;
        }
        const Vec3 a_new = accel(r, t);
        v += 0.5 * (a + a_new) * dt;
        a = a_new;

        while (next_collision <= t) {
            const Vec3 vg = gas_sigma * normal3(coll_rng);
            const Vec3 dir = unit_vector(coll_rng);
            const double before = v.norm();
            v = elastic_scatter(ion.mass, v, gas.gas_mass, vg, dir);
            traj.collisions.push_back({next_collision, before, v.norm()});
            next_collision += wait(coll_rng);
        }

        if (n % period_steps == 0) {
            if (cfg.heating_rate > 0.0) {
                // Deterministic energy injection along the current velocity.
                const double gain = cfg.heating_rate * field.rf_energy(r) * kick_interval;
                const double ek = 0.5 * ion.mass * v.squaredNorm();
                if (ek > 0.0) v *= std::sqrt(1.0 + gain / ek);
                else v = std::sqrt(2.0 * gain / ion.mass) * unit_vector(heat_rng);
            }
            const double e = energy(r, v);
            response_sum += e;
            ++response_n;
            if (!(e < blowup) && !outside_box(cfg.escape, r))
                throw NumericError("integration unstable: energy " + std::to_string(units::joule_to_ev(e)) +
                                   " eV exceeds 1000x the depth inside the trap region");
        }
        if (outside_box(cfg.escape, r) && energy(r, v) > cfg.escape.depth) {
            traj.escaped = true;
            traj.escape_time = t;
            break;
        }
        if (cfg.sample_every > 0 && n % std::uint64_t(cfg.sample_every) == 0) record();
        traj.steps = n;
    }
    traj.end_time = t;
    traj.final_r = r;
    traj.final_v = v;
    traj.mean_response = response_n > 0 ? response_sum / double(response_n) : 0.0;
    return traj;
}

std::string trajectory_csv(const Trajectory& traj)
{
    std::ostringstream os;
    os << "t,x,y,z,vx,vy,vz,event\n";
    char buf[256];
    auto row = [&](double t, const Vec3& r, const Vec3& v, const char* ev) {
        std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g,%.12g,%.9g,%.9g,%.9g,%s\n", t, r.x(), r.y(), r.z(), v.x(), v.y(),
                      v.z(), ev);
        os << buf;
    };
    // Merge samples and collisions in time order.
    std::size_t c = 0;
    for (const auto& s : traj.samples) {
        while (c < traj.collisions.size() && traj.collisions[c].t <= s.t) {
            std::snprintf(buf, sizeof buf, "%.12g,,,,%.9g,%.9g,,collision\n", traj.collisions[c].t,
                          traj.collisions[c].speed_before, traj.collisions[c].speed_after);
            os << buf;
            ++c;
        }
        row(s.t, s.r, s.v, "sample");
    }
    for (; c < traj.collisions.size(); ++c) {
        std::snprintf(buf, sizeof buf, "%.12g,,,,%.9g,%.9g,,collision\n", traj.collisions[c].t,
                      traj.collisions[c].speed_before, traj.collisions[c].speed_after);
        os << buf;
    }
    if (traj.escaped) row(traj.escape_time, traj.final_r, traj.final_v, "escape");
    return os.str();
}

// ---------------------------------------------------------------------------

TickleResult measure_secular_frequency(const TrapField& field, const Vec3& start, const TickleScan& scan)
{
    if (!(scan.omega_hi > scan.omega_lo) || !(scan.omega_lo > 0.0)) throw ConfigError("tickle: bad frequency range");
    if (scan.points < 5) throw ConfigError("tickle: need at least 5 scan points");
    const double center = 0.5 * (scan.omega_lo + scan.omega_hi);
    const double duration = scan.duration > 0.0 ? scan.duration : 200.0 * 2.0 * constants::pi / center;

    TickleResult out;
    out.omegas.resize(scan.points);
    out.response.resize(scan.points);
    for (int k = 0; k < scan.points; ++k)
        out.omegas[k] = scan.omega_lo + (scan.omega_hi - scan.omega_lo) * k / (scan.points - 1);
    const double reference = field.secular_energy(start);
    parallel_for(std::size_t(scan.points), scan.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k) {
            DynamicsConfig cfg;
            cfg.timestep = scan.timestep;
            cfg.duration = duration;
            cfg.tickle = TickleDrive{scan.amplitude, out.omegas[k]};
            cfg.escape.reference_energy = reference;
            const auto traj = integrate(field, BufferGas{}, cfg, IonState{start, Vec3::Zero()});
            out.response[k] = traj.escaped ? std::numeric_limits<double>::infinity() : traj.mean_response;
        }
    });
    const auto it = std::max_element(out.response.begin(), out.response.end());
    const auto k = static_cast<std::size_t>(std::distance(out.response.begin(), it));
    if (k == 0 || k + 1 == out.response.size() || !std::isfinite(*it))
        throw NumericError("tickle: no resonance inside the scan range");
    // Parabola through the peak and its neighbours.
    const double y0 = out.response[k - 1], y1 = out.response[k], y2 = out.response[k + 1];
    const double step = out.omegas[1] - out.omegas[0];
    const double denom = y0 - 2.0 * y1 + y2;
    const double shift = denom != 0.0 ? 0.5 * (y0 - y2) / denom : 0.0;
    out.omega = out.omegas[k] + std::clamp(shift, -0.5, 0.5) * step;

    const double floor = *std::min_element(out.response.begin(), out.response.end());
    const double half = floor + 0.5 * (y1 - floor);
    double left = out.omegas.front(), right = out.omegas.back();
    for (std::size_t i = k; i-- > 0;)
        if (out.response[i] < half) {
            const double f = (half - out.response[i]) / (out.response[i + 1] - out.response[i]);
            left = out.omegas[i] + f * step;
            break;
        }
    for (std::size_t i = k + 1; i < out.response.size(); ++i)
        if (out.response[i] < half) {
            const double f = (out.response[i - 1] - half) / (out.response[i - 1] - out.response[i]);
            right = out.omegas[i - 1] + f * step;
            break;
        }
    out.half_width = 0.5 * (right - left);
    return out;
}

// ---------------------------------------------------------------------------

IonState lifetime_initial_state(std::uint64_t seed, std::size_t index, const Vec3& start, const IonSpecies& ion,
                                const LifetimeOptions& options)
{
    std::mt19937_64 init(derive_seed(seed, index, 3));
    const double vsig = std::sqrt(constants::boltzmann * options.temperature / ion.mass);
    IonState s;
    s.v = vsig * normal3(init);
    s.r = start + options.position_spread * normal3(init);
    return s;
}

std::uint64_t lifetime_trajectory_seed(std::uint64_t seed, std::size_t index) { return derive_seed(seed, index, 0); }

std::vector<LifetimeRow> lifetime_scan(const TrapField& field, const BufferGas& gas, const std::vector<double>& pressures,
                                       const DynamicsConfig& cfg, const Vec3& start, const LifetimeOptions& options)
{
    if (options.ensemble < 1) throw ConfigError("lifetime scan: ensemble must be >= 1");
    for (double p : pressures)
        if (!(p >= 0.0)) throw ConfigError("lifetime scan: pressures must be >= 0");
    const std::size_t np = pressures.size(), ne = std::size_t(options.ensemble);
    std::vector<double> lifetime(np * ne, 0.0);
    std::vector<signed char> state(np * ne, 0); // 0 survived, 1 escaped, -1 failed
    const IonSpecies& ion = field.ion();

    parallel_for(np * ne, options.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t job = b; job < e; ++job) {
            const std::size_t ip = job / ne, i = job % ne;
            const IonState s = lifetime_initial_state(cfg.rng_seed, i, start, ion, options);
            DynamicsConfig c = cfg;
            c.rng_seed = lifetime_trajectory_seed(cfg.rng_seed, i);
            c.sample_every = 0;
            BufferGas g = gas;
            g.pressure = pressures[ip];
            try {
                const auto traj = integrate(field, g, c, s);
                lifetime[job] = traj.escaped ? traj.escape_time : cfg.duration;
                state[job] = traj.escaped ? 1 : 0;
            } catch (const NumericError&) {
                state[job] = -1;
            }
        }
    });

    std::vector<LifetimeRow> rows;
    for (std::size_t ip = 0; ip < np; ++ip) {
        LifetimeRow row;
        row.pressure = pressures[ip];
        double sum = 0.0;
        int ok = 0, survived = 0;
        for (std::size_t i = 0; i < ne; ++i) {
            const std::size_t job = ip * ne + i;
            if (state[job] < 0) {
                ++row.failed;
                continue;
            }
            ++ok;
            sum += lifetime[job];
            if (state[job] == 0) ++survived;
        }
        row.n_traj = ok;
        row.mean_lifetime = ok > 0 ? sum / ok : 0.0;
        row.survival_fraction = ok > 0 ? double(survived) / ok : 0.0;
        rows.push_back(row);
    }
    return rows;
}

std::string lifetime_csv(const std::vector<LifetimeRow>& rows)
{
    std::ostringstream os;
    os << "pressure_torr,mean_lifetime_s,survival_frac,n_traj\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6g,%.9g,%.6f,%d\n", units::pa_to_torr(r.pressure), r.mean_lifetime,
                      r.survival_fraction, r.n_traj);
        os << buf;
    }
    return os.str();
}

} // namespace surftrap
