#include <doctest.h>

#include <cmath>
#include <vector>

#include "surftrap/electrostatics.hpp"
#include "surftrap/error.hpp"
#include "surftrap/trap_analysis.hpp"

using namespace surftrap;

namespace {

Polygon rect(double x1, double x2, double z1, double z2) { return {{x1, z1}, {x2, z1}, {x2, z2}, {x1, z2}}; }

// A long 1 mm strip "S" centred on x = 0, plus a distant rf strip (every layout needs one).
ElectrodeLayout strip_layout(double half_box)
{
    ElectrodeLayout l;
    l.bounding_box = {-half_box, half_box, -half_box, half_box};
    l.electrodes.push_back({"rf", ElectrodeRole::rf, {rect(-half_box + 1e-3, -half_box + 2e-3, -half_box + 1e-3, half_box - 1e-3)}});
    l.electrodes.push_back({"S", ElectrodeRole::dc, {rect(-0.5e-3, 0.5e-3, -half_box + 1e-3, half_box - 1e-3)}});
    return l;
}

// Direct Poisson-kernel quadrature for an infinite strip [x1, x2] at 1 V:
// phi = (y / pi) * int dx' / ((x - x')^2 + y^2).
double strip_quadrature(double x1, double x2, double x, double y)
{
    const int n = 20000;
    const double h = (x2 - x1) / n;
    double s = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double xp = x1 + i * h;
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        s += w / ((x - xp) * (x - xp) + y * y);
    }
    return y / constants::pi * s * h / 3.0;
}

} // namespace

TEST_CASE("analytic strip potential")
{
    const double a = 0.4e-3;
    const Strip s{-a, a, 2.0};
    SUBCASE("point (0, a) sees half the voltage")
    {
        CHECK(analytic_strip_potential({&s, 1}, 0.0, a) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("surface limit over the strip")
    {
        CHECK(analytic_strip_potential({&s, 1}, 0.1e-3, 1e-12) == doctest::Approx(2.0).epsilon(1e-8));
        CHECK(std::abs(analytic_strip_potential({&s, 1}, 2e-3, 1e-12)) < 1e-8);
    }
    SUBCASE("far field 2aV/(pi y)")
    {
        const double y = 100.0 * a;
        const double far = 2.0 * a * 2.0 / (constants::pi * y);
        CHECK(std::abs(analytic_strip_potential({&s, 1}, 0.0, y) / far - 1.0) < 0.02);
    }
    SUBCASE("matches direct quadrature")
    {
        for (double x : {-0.7e-3, 0.0, 0.3e-3})
            for (double y : {0.1e-3, 0.5e-3, 2e-3})
                CHECK(analytic_strip_potential({&s, 1}, x, y) ==
                      doctest::Approx(2.0 * strip_quadrature(-a, a, x, y)).epsilon(1e-9));
    }
    SUBCASE("gradient is the derivative")
    {
        const double x = 0.3e-3, y = 0.7e-3, h = 1e-9;
        const auto g = analytic_strip_gradient({&s, 1}, x, y);
        const double gx = (analytic_strip_potential({&s, 1}, x + h, y) - analytic_strip_potential({&s, 1}, x - h, y)) / (2 * h);
        const double gy = (analytic_strip_potential({&s, 1}, x, y + h) - analytic_strip_potential({&s, 1}, x, y - h)) / (2 * h);
        CHECK(g.x() == doctest::Approx(gx).epsilon(1e-6));
        CHECK(g.y() == doctest::Approx(gy).epsilon(1e-6));
    }
}

TEST_CASE("BEM single strip against the Poisson kernel")
{
    const auto layout = strip_layout(20e-3);
    const Strip s{-0.5e-3, 0.5e-3, 1.0};
    BemOptions o;
    o.growth = 0.3;
    o.max_panels = 6000;
    const auto b = solve_bem(layout, 4, o);
    const auto i = *b->index_of("S");
    CHECK(b->info().residual_norm < 1e-8);
    // panel width at the strip is 1 mm / 4; check from one panel width up
    for (double y : {0.25e-3, 0.5e-3, 1e-3, 2e-3})
        for (double x : {0.0, 0.4e-3, 1e-3}) {
            const double exact = analytic_strip_potential({&s, 1}, x, y);
            CHECK(std::abs(b->potential(i, Vec3(x, y, 0.0)) / exact - 1.0) < 0.01);
        }
    // boundary condition on the electrode
    CHECK(b->potential(i, Vec3(0.1e-3, 1e-9, 0.2e-3)) == doctest::Approx(1.0).epsilon(0.01));
    CHECK(std::abs(b->potential(i, Vec3(3e-3, 1e-9, 0.2e-3))) < 0.01);
    // dc field of the strip against the analytic gradient
    const Vec3 r(0.3e-3, 1e-3, 0.0);
    const auto g2 = analytic_strip_gradient({&s, 1}, r.x(), r.y());
    const Vec3 e_exact(-g2.x(), -g2.y(), 0.0);
    VoltageSet v;
    v.omega_rf = 1.0;
    v.dc["S"] = 1.0;
    const Vec3 e = field_at(*b, v, r, 0.0);
    CHECK((e - e_exact).norm() / e_exact.norm() < 0.01);
}

TEST_CASE("analytic basis reproduces the 2-D strip for a long electrode")
{
    // end corrections go as y^2 / 2L^2: 400 mm keeps them near 1e-4 at 3 mm
    const auto b = make_analytic_basis(strip_layout(200e-3));
    const Strip s{-0.5e-3, 0.5e-3, 1.0};
    const auto i = *b->index_of("S");
    for (double y : {0.2e-3, 1e-3, 3e-3}) {
        const double exact = analytic_strip_potential({&s, 1}, 0.2e-3, y);
        CHECK(b->potential(i, Vec3(0.2e-3, y, 0.0)) == doctest::Approx(exact).epsilon(1e-3));
        const auto g = analytic_strip_gradient({&s, 1}, 0.2e-3, y);
        const Vec3 ga = b->gradient(i, Vec3(0.2e-3, y, 0.0));
        CHECK((ga - Vec3(g.x(), g.y(), 0.0)).norm() / g.norm() < 0.01);
    }
}

TEST_CASE("parallel plates: field 1/d per volt")
{
    ElectrodeLayout l;
    const double d = 1e-3;
    l.bounding_box = {-10e-3, 10e-3, -10e-3, 10e-3};
    l.electrodes.push_back({"rf", ElectrodeRole::rf, {rect(-10e-3, 10e-3, -10e-3, 10e-3)}});
    l.top_plate = TopPlate{d, 0.0};
    const auto b = solve_bem(l, 4);
    const auto top = *b->index_of(kTopPlateName);
    const Vec3 g = b->gradient(top, Vec3(0.0, 0.5 * d, 0.0));
    CHECK(g.y() == doctest::Approx(1.0 / d).epsilon(0.01));
    CHECK(std::abs(g.x()) < 0.01 / d);
    const auto a = make_analytic_basis(l);
    CHECK(a->gradient(top, Vec3(0.0, 0.5 * d, 0.0)).y() == doctest::Approx(1.0 / d).epsilon(1e-9));
}

TEST_CASE("secular potential formula")
{
    const auto cfg = canonical_config();
    const auto basis = make_analytic_basis(cfg.layout);
    SUBCASE("uniform rf field of 1e5 V/m gives 1.20 eV for Sr+ at 7.6 MHz")
    {
        // Q^2 E^2 / (4 m Omega^2) with E = 1e5 V/m, by hand: 1.2019 eV
        const SecularPotential p(basis, cfg.voltages, cfg.ion);
        const double grad_per_volt = 1e5 / cfg.voltages.v_rf_amplitude;
        const double ev = units::joule_to_ev(p.rf_prefactor() * grad_per_volt * grad_per_volt);
        CHECK(ev == doctest::Approx(1.2019).epsilon(2e-4));
    }
    SUBCASE("rf off leaves only Q phi_dc")
    {
        VoltageSet v = cfg.voltages;
        v.v_rf_amplitude = 0.0;
        v.dc["Vtop"] = 3.0;
        const SecularPotential p(basis, v, cfg.ion);
        const Vec3 r(0.3e-3, 0.9e-3, 0.2e-3);
        double phi = 0.0;
        for (const auto& [name, volts] : v.dc) phi += volts * basis->potential(*basis->index_of(name), r);
        CHECK(p.energy(r) == cfg.ion.charge * phi);
        CHECK(p.terms(r).rf == 0.0);
    }
    SUBCASE("at the rf null only the dc term remains")
    {
        const Vec3 null = find_rf_null(*basis);
        const SecularPotential p(basis, cfg.voltages, cfg.ion);
        const auto t = p.terms(null);
        CHECK(std::abs(t.rf) < 1e-12 * std::abs(t.dc) + 1e-30);
    }
}

TEST_CASE("instantaneous field")
{
    auto cfg = canonical_config();
    cfg.voltages.dc["Vtop"] = 4.0;
    const auto basis = make_analytic_basis(cfg.layout);
    const Vec3 r(0.2e-3, 1.0e-3, 0.3e-3);
    SUBCASE("quarter period has no rf contribution")
    {
        VoltageSet dc_only = cfg.voltages;
        dc_only.v_rf_amplitude = 0.0;
        const Vec3 e = field_at(*basis, cfg.voltages, r, constants::pi / 2);
        CHECK(e == field_at(*basis, dc_only, r, 0.0));
    }
    SUBCASE("phase 0 is minus the gradient of the instantaneous potential")
    {
        auto phi = [&](const Vec3& p) {
            double s = cfg.voltages.v_rf_amplitude * basis->potential(basis->rf_index(), p);
            for (const auto& [name, v] : cfg.voltages.dc) s += v * basis->potential(*basis->index_of(name), p);
            return s;
        };
        const double h = 1e-8;
        Vec3 fd;
        for (int a = 0; a < 3; ++a) {
            Vec3 p = r, m = r;
            p[a] += h;
            m[a] -= h;
            fd[a] = -(phi(p) - phi(m)) / (2 * h);
        }
        const Vec3 e = field_at(*basis, cfg.voltages, r, 0.0);
        CHECK((e - fd).norm() / fd.norm() < 1e-5);
    }
}

TEST_CASE("finite-difference checks of gradient and Hessian")
{
    auto cfg = canonical_config();
    cfg.voltages.dc["Vtop"] = 10.0;
    const auto basis = make_analytic_basis(cfg.layout);
    const SecularPotential p(basis, cfg.voltages, cfg.ion);
    for (const Vec3& r : {Vec3(0.1e-3, 1.3e-3, 0.05e-3), Vec3(-0.4e-3, 0.8e-3, 0.6e-3), Vec3(0.3e-3, 2.0e-3, -1e-3)}) {
        const double h = 1e-7;
        Vec3 fd;
        for (int a = 0; a < 3; ++a) {
            Vec3 rp = r, rm = r;
            rp[a] += h;
            rm[a] -= h;
            fd[a] = (p.energy(rp) - p.energy(rm)) / (2 * h);
        }
        const Vec3 g = p.gradient(r);
        CHECK((g - fd).norm() / g.norm() < 1e-5);

        const double hh = 2e-6;
        Mat3 fh;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                Vec3 pp = r, pm = r, mp = r, mm = r;
                pp[a] += hh; pp[b] += hh;
                pm[a] += hh; pm[b] -= hh;
                mp[a] -= hh; mp[b] += hh;
                mm[a] -= hh; mm[b] -= hh;
                fh(a, b) = (p.energy(pp) - p.energy(pm) - p.energy(mp) + p.energy(mm)) / (4 * hh * hh);
            }
        const Mat3 H = p.hessian(r);
        CHECK((H - fh).norm() / H.norm() < 1e-3);
    }
}

TEST_CASE("BEM and analytic bases agree on the canonical trap away from the surface")
{
    const auto cfg = canonical_config();
    const auto a = make_analytic_basis(cfg.layout);
    const auto b = solve_bem(cfg.layout, 4);
    const Vec3 null = find_rf_null(*a);
    const double y0 = null.y();
    const SecularPotential pa(a, cfg.voltages, cfg.ion), pb(b, cfg.voltages, cfg.ion);
    double err_rf = 0, max_rf = 0, err_u = 0, max_u = 0;
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j)
            for (int k = 0; k < 5; ++k) {
                const Vec3 r(-2 * y0 + 4 * y0 * i / 6, 0.5 * y0 + 2 * y0 * j / 6, -2 * y0 + 4 * y0 * k / 4);
                const double ga = a->gradient(a->rf_index(), r).norm(), gb = b->gradient(b->rf_index(), r).norm();
                err_rf = std::max(err_rf, std::abs(ga - gb));
                max_rf = std::max(max_rf, ga);
                err_u = std::max(err_u, std::abs(pa.energy_ev(r) - pb.energy_ev(r)));
                max_u = std::max(max_u, std::abs(pa.energy_ev(r)));
            }
    CHECK(err_rf / max_rf < 0.02);
    CHECK(err_u / max_u < 0.02);
    CHECK(find_rf_null(*b).y() == doctest::Approx(y0).epsilon(0.02));
}

TEST_CASE("spline-sampled basis")
{
    const auto cfg = canonical_config();
    const auto a = make_analytic_basis(cfg.layout);
    const Vec3 null = find_rf_null(*a);
    const double y0 = null.y();
    const SampleBox box{null - Vec3(0.5 * y0, 0.5 * y0, 0.5 * y0), null + Vec3(0.5 * y0, 0.5 * y0, 0.5 * y0)};
    const SampledBasis s(*a, box, y0 / 16, 1);
    BasisEval ea, es;
    const Vec3 r = null + Vec3(0.13 * y0, -0.07 * y0, 0.11 * y0);
    a->evaluate(r, ea);
    s.evaluate(r, es);
    for (std::size_t i = 0; i < a->size(); ++i) {
        CHECK(es.phi[i] == doctest::Approx(ea.phi[i]).epsilon(1e-5).scale(1e-3));
        CHECK((es.grad[i] - ea.grad[i]).norm() < 1e-3 * std::max(1.0, ea.grad[i].norm()));
    }
    CHECK_FALSE(s.in_region(null + Vec3(0, y0, 0)));
    CHECK_THROWS_AS(s.evaluate(null + Vec3(0, y0, 0), es), NumericError);

    SUBCASE("cubic polynomial is reproduced in the interior")
    {
        const std::array<std::size_t, 3> n{12, 12, 12};
        std::vector<double> v(n[0] * n[1] * n[2]);
        auto f = [](const Vec3& p) { return 1.0 + p.x() - 2 * p.y() * p.z() + 0.5 * p.x() * p.x() * p.y(); };
        for (std::size_t k = 0; k < n[2]; ++k)
            for (std::size_t j = 0; j < n[1]; ++j)
                for (std::size_t i = 0; i < n[0]; ++i) v[i + n[0] * (j + n[1] * k)] = f(Vec3(double(i), double(j), double(k)) * 0.1);
        const SplineField sp(Vec3::Zero(), 0.1, n, v);
        const Vec3 p(0.55, 0.47, 0.61);
        Vec3 g;
        CHECK(sp.value_gradient(p, g) == doctest::Approx(f(p)).epsilon(1e-3));
        CHECK(g.x() == doctest::Approx(1.0 + p.x() * p.y()).epsilon(1e-2));
    }
}

TEST_CASE("top plate requires a voltage entry that exists")
{
    auto cfg = canonical_config();
    cfg.voltages.dc["V9"] = 1.0;
    const auto a = make_analytic_basis(cfg.layout);
    CHECK_THROWS_AS(SecularPotential(a, cfg.voltages, cfg.ion), ConfigError);
}
