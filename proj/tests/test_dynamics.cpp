#include <doctest.h>

#include <cmath>
#include <random>

#include <boost/math/distributions/chi_squared.hpp>

#include "surftrap/dynamics.hpp"
#include "surftrap/error.hpp"
#include "surftrap/trap_analysis.hpp"

using namespace surftrap;

namespace {

const IonSpecies kSr{units::u_to_kg(88.0), constants::elementary_charge};

BufferGas helium(double torr)
{
    return {units::torr_to_pa(torr), 300.0, units::u_to_kg(4.002602), 0.205 * units::angstrom3};
}

HarmonicFieldParams static_well(double f_hz)
{
    HarmonicFieldParams p;
    p.omega_static = Vec3::Constant(units::hz_to_rad(f_hz));
    return p;
}

} // namespace

TEST_CASE("Langevin rate against the Gaussian-units formula")
{
    // k = 2 pi e sqrt(alpha / mu) in cgs (alpha in cm^3, mu in g) -> cm^3/s
    const double e_esu = 4.80320471e-10;
    const double mu_g = (88.0 * 4.002602 / (88.0 + 4.002602)) * 1.66053906660e-24;
    const double k_cgs = 2.0 * constants::pi * e_esu * std::sqrt(0.205e-24 / mu_g);
    const auto gas = helium(1e-4);
    CHECK(langevin_rate_coefficient(kSr.charge, kSr.mass, gas) == doctest::Approx(k_cgs * 1e-6).epsilon(1e-6));
    CHECK(collision_rate(kSr, gas) == doctest::Approx(k_cgs * 1e-6 * gas.number_density()).epsilon(1e-6));
    CHECK(collision_rate(kSr, helium(0.0)) == 0.0);
}

TEST_CASE("elastic collisions")
{
    SUBCASE("equal masses head-on exchange velocities")
    {
        const Vec3 v1(1.0, 0.0, 0.0), v2(-1.0, 0.0, 0.0);
        Vec3 v2_out;
        const Vec3 v1_out = elastic_scatter(1.0, v1, 1.0, v2, Vec3(-1, 0, 0), &v2_out);
        CHECK(v1_out == v2);
        CHECK(v2_out == v1);
    }
    SUBCASE("energy and momentum are conserved")
    {
        const double m1 = 3.0, m2 = 0.7;
        const Vec3 v1(0.3, -1.2, 2.0), v2(-0.5, 0.1, 0.4);
        Vec3 v2_out;
        const Vec3 v1_out = elastic_scatter(m1, v1, m2, v2, Vec3(1, 2, -2).normalized(), &v2_out);
        CHECK((m1 * v1_out + m2 * v2_out - m1 * v1 - m2 * v2).norm() < 1e-12);
        CHECK(m1 * v1_out.squaredNorm() + m2 * v2_out.squaredNorm() ==
              doctest::Approx(m1 * v1.squaredNorm() + m2 * v2.squaredNorm()).epsilon(1e-12));
    }
    SUBCASE("mean fractional energy loss on a cold light gas")
    {
        const double mi = kSr.mass, mg = units::u_to_kg(4.002602);
        std::mt19937_64 rng(11);
        std::normal_distribution<double> n01;
        double sum = 0.0;
        const int n = 10000;
        for (int k = 0; k < n; ++k) {
            const Vec3 dir = Vec3(n01(rng), n01(rng), n01(rng)).normalized();
            const Vec3 v(300.0, 0.0, 0.0);
            const Vec3 out = elastic_scatter(mi, v, mg, Vec3::Zero(), dir);
            sum += 1.0 - out.squaredNorm() / v.squaredNorm();
        }
        const double expected = 2.0 * mg * mi / ((mg + mi) * (mg + mi));
        CHECK(sum / n == doctest::Approx(expected).epsilon(0.05));
    }
}

TEST_CASE("velocity Verlet is second order")
{
    // static well, no rf: x(t) = x0 cos(w t)
    const double f = 400e3, w = units::hz_to_rad(f);
    const HarmonicTrapField field(static_well(f), kSr);
    const double t_rf = 2.0 * constants::pi / field.omega_rf();
    const double x0 = 10e-6;
    std::vector<double> err;
    for (int div : {50, 100, 200}) {
        DynamicsConfig c;
        c.timestep = t_rf / div;
        c.duration = 2000 * c.timestep * (div / 50); // same physical time
        const auto tr = integrate(field, helium(0.0), c, {Vec3(x0, 0, 0), Vec3::Zero()});
        REQUIRE_FALSE(tr.escaped);
        err.push_back(std::abs(tr.final_r.x() - x0 * std::cos(w * tr.end_time)));
    }
    const double p1 = std::log2(err[0] / err[1]), p2 = std::log2(err[1] / err[2]);
    CHECK(p1 == doctest::Approx(2.0).epsilon(0.1));
    CHECK(p2 == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("collision times are Poisson")
{
    const HarmonicTrapField field(static_well(300e3), kSr);
    const auto gas = helium(0.05);
    const double rate = collision_rate(kSr, gas);
    DynamicsConfig c;
    c.duration = 4000.0 / rate;
    c.rng_seed = 5;
    const auto tr = integrate(field, gas, c, {Vec3(1e-6, 0, 0), Vec3(50.0, 0, 0)});
    REQUIRE(tr.collisions.size() > 3000);
    // inter-arrival times in 20 equiprobable exponential bins
    const int bins = 20;
    std::vector<double> count(bins, 0.0);
    double prev = 0.0;
    for (const auto& ev : tr.collisions) {
        const double u = 1.0 - std::exp(-rate * (ev.t - prev));
        count[std::min(bins - 1, int(u * bins))] += 1.0;
        prev = ev.t;
    }
    const double expected = double(tr.collisions.size()) / bins;
    double chi2 = 0.0;
    for (double n : count) chi2 += (n - expected) * (n - expected) / expected;
    const boost::math::chi_squared dist(bins - 1);
    CHECK(chi2 < boost::math::quantile(dist, 0.99));
    CHECK(double(tr.collisions.size()) == doctest::Approx(4000.0).epsilon(4 * std::sqrt(4000.0) / 4000.0));
}

TEST_CASE("tickle resonance of a harmonic well")
{
    const double f = 100e3;
    auto p = static_well(f);
    TickleScan s;
    s.amplitude = 0.25;
    s.points = 41;
    s.threads = 2;
    SUBCASE("bare well")
    {
        const HarmonicTrapField field(p, kSr);
        s.omega_lo = units::hz_to_rad(90e3);
        s.omega_hi = units::hz_to_rad(110e3);
        const auto r = measure_secular_frequency(field, Vec3::Zero(), s);
        const double step = (s.omega_hi - s.omega_lo) / (s.points - 1);
        CHECK(std::abs(r.omega - units::hz_to_rad(f)) < 0.5 * step);
        CHECK(r.half_width > 0.0);
    }
    SUBCASE("added gradient with Q E1 / m = 3 w^2 doubles the frequency")
    {
        const double w = units::hz_to_rad(f);
        p.stray.e1 = Vec3(3.0 * w * w * kSr.mass / kSr.charge, 0, 0);
        const HarmonicTrapField field(p, kSr);
        s.omega_lo = units::hz_to_rad(190e3);
        s.omega_hi = units::hz_to_rad(210e3);
        const auto r = measure_secular_frequency(field, Vec3::Zero(), s);
        const double step = (s.omega_hi - s.omega_lo) / (s.points - 1);
        CHECK(std::abs(r.omega - 2.0 * w) < 0.5 * step);
    }
    SUBCASE("a peak at the scan edge is an error")
    {
        const HarmonicTrapField field(p, kSr);
        s.omega_lo = units::hz_to_rad(110e3);
        s.omega_hi = units::hz_to_rad(130e3);
        s.points = 9;
        CHECK_THROWS_AS(measure_secular_frequency(field, Vec3::Zero(), s), NumericError);
    }
}

TEST_CASE("lifetime scan on a harmonic well")
{
    auto p = static_well(300e3);
    p.half_size = 2e-3;
    const HarmonicTrapField field(p, kSr);
    DynamicsConfig c;
    c.duration = 2e-4;
    c.rng_seed = 3;
    c.escape = {Vec3::Zero(), 1e-3, 1e-3, 1e-3, units::ev_to_joule(1.0), 0.0};
    LifetimeOptions o;
    o.ensemble = 6;
    o.temperature = 300.0;
    SUBCASE("no gas, no heating: everything survives")
    {
        o.threads = 1;
        const auto rows = lifetime_scan(field, helium(0.0), {0.0}, c, Vec3::Zero(), o);
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].survival_fraction == 1.0);
        CHECK(rows[0].mean_lifetime == doctest::Approx(c.duration));
        CHECK(rows[0].failed == 0);
    }
    SUBCASE("bit-identical across runs and thread counts")
    {
        const std::vector<double> pressures{units::torr_to_pa(1e-3), units::torr_to_pa(1e-2)};
        o.temperature = 1e4; // hot enough that some escape
        o.threads = 1;
        const auto a = lifetime_csv(lifetime_scan(field, helium(0.0), pressures, c, Vec3::Zero(), o));
        const auto b = lifetime_csv(lifetime_scan(field, helium(0.0), pressures, c, Vec3::Zero(), o));
        o.threads = 3;
        const auto d = lifetime_csv(lifetime_scan(field, helium(0.0), pressures, c, Vec3::Zero(), o));
        CHECK(a == b);
        CHECK(a == d);
        CHECK(a.rfind("pressure_torr,mean_lifetime_s,survival_frac,n_traj\n", 0) == 0);
    }
}

TEST_CASE("integration settings are validated")
{
    const HarmonicTrapField field(static_well(300e3), kSr);
    DynamicsConfig c;
    c.duration = 1e-5;
    c.timestep = 2.0 * constants::pi / field.omega_rf() / 20.0;
    CHECK_THROWS_AS(integrate(field, helium(0.0), c, {}), ConfigError);
    c.timestep = 0.0;
    c.duration = 0.0;
    CHECK_THROWS_AS(integrate(field, helium(0.0), c, {}), ConfigError);
    c.duration = 1e-5;
    CHECK_THROWS_AS(integrate(field, helium(0.0), c, {Vec3(1.0, 0, 0), Vec3::Zero()}), NumericError);
}

TEST_CASE("trajectory CSV")
{
    const HarmonicTrapField field(static_well(300e3), kSr);
    DynamicsConfig c;
    c.duration = 2e-6;
    c.sample_every = 100;
    const auto tr = integrate(field, helium(1e-2), c, {Vec3(1e-6, 0, 0), Vec3::Zero()});
    const auto csv = trajectory_csv(tr);
    CHECK(csv.rfind("t,x,y,z,vx,vy,vz,event\n", 0) == 0);
    CHECK(tr.samples.size() == tr.steps / 100 + 1);
}

TEST_CASE("canonical trap: ion at rest at the compensated minimum stays put")
{
    const auto cfg = canonical_config();
    const BasisPtr a = make_analytic_basis(cfg.layout);
    auto volts = cfg.voltages;
    volts.dc["Vtop"] = find_vtop_star(a, volts, cfg.ion, -30.0, 40.0);
    const Vec3 null = find_rf_null(*a);
    const auto sampled = std::make_shared<SampledBasis>(*a, dynamics_sample_box(null, a->layout()), dynamics_sample_spacing(null));
    const SplineTrapField field(sampled, volts, cfg.ion);
    const auto m = locate_minimum(SecularPotential(sampled, volts, cfg.ion), null);
    REQUIRE(m.converged);
    DynamicsConfig c;
    c.duration = 2e-4;
    c.sample_every = 50;
    c.escape = {null, 2 * null.y(), 3 * null.y(), 5 * null.y(), units::ev_to_joule(1.0), field.secular_energy(m.position)};
    const auto tr = integrate(field, helium(0.0), c, {m.position, Vec3::Zero()});
    CHECK_FALSE(tr.escaped);
    double e_max = 0.0, d_max = 0.0;
    for (const auto& s : tr.samples) {
        e_max = std::max(e_max, s.secular_energy);
        d_max = std::max(d_max, (s.r - m.position).norm());
    }
    // far below thermal motion at 1 K
    CHECK(e_max < constants::boltzmann * 1.0);
    CHECK(d_max < 1e-6);
}
