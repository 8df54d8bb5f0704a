#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Geometry>

#include "surftrap/compensation.hpp"
#include "surftrap/error.hpp"
#include "surftrap/trap_analysis.hpp"

using namespace surftrap;

namespace {

const IonSpecies kSr{units::u_to_kg(88.0), constants::elementary_charge};

std::vector<double> linspace(double a, double b, int n)
{
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(a + (b - a) * i / (n - 1));
    return v;
}

struct Canonical {
    TrapConfig cfg = canonical_config();
    BasisPtr basis = make_analytic_basis(cfg.layout);
    Vec3 null = find_rf_null(*basis);
    double v_star = find_vtop_star(basis, cfg.voltages, cfg.ion, -30.0, 40.0);

    CompensationInputs inputs() const
    {
        CompensationInputs in;
        in.basis = basis;
        in.volts = cfg.voltages;
        in.volts.dc["Vtop"] = v_star;
        in.ion = cfg.ion;
        in.stray.origin = null;
        in.v_rf_values = linspace(630.0, 1260.0, 10);
        in.threads = 2;
        return in;
    }
};

const Canonical& canonical()
{
    static const Canonical c;
    return c;
}

} // namespace

TEST_CASE("predict_shift")
{
    const double w = units::hz_to_rad(100e3);
    CHECK(predict_shift(kSr, w, 50.0, 0.0).omega1 == w);
    const double e1 = 3.0 * w * w * kSr.mass / kSr.charge;
    CHECK(predict_shift(kSr, w, 0.0, e1).omega1 == doctest::Approx(2.0 * w).epsilon(1e-14));
    // e E0 / (m w^2) = 1.602e-19 * 50 / (1.4613e-25 * (2 pi 1e5)^2) = 138.85 um
    CHECK(predict_shift(kSr, w, 50.0, 0.0).x0 == doctest::Approx(138.85e-6).epsilon(1e-4));
    CHECK_THROWS_AS(predict_shift(kSr, w, 1.0, -2.0 * w * w * kSr.mass / kSr.charge), NumericError);
    CHECK_THROWS_AS(predict_shift(kSr, 0.0, 1.0, 0.0), ConfigError);

    StrayField s;
    s.e0 = Vec3(1.0, 20.0, 3.0);
    s.e1 = Vec3(0.0, e1, 0.0);
    const auto p = predict_shift(kSr, w, s, 1);
    CHECK(p.omega1 == doctest::Approx(2.0 * w));
    CHECK(p.x0 == doctest::Approx(kSr.charge * 20.0 / (kSr.mass * 4.0 * w * w)));
}

TEST_CASE("fit_gaussian")
{
    const auto x = linspace(-100e-6, 120e-6, 61);
    SUBCASE("exact model recovery")
    {
        std::vector<double> y;
        for (double xi : x) y.push_back(0.8 * std::exp(-0.5 * std::pow((xi - 12.3e-6) / 30e-6, 2)) + 0.05);
        const auto f = fit_gaussian(x, y);
        CHECK(std::abs(f.center / 12.3e-6 - 1.0) < 1e-6);
        CHECK(f.width == doctest::Approx(30e-6).epsilon(1e-6));
        CHECK(f.amplitude == doctest::Approx(0.8).epsilon(1e-6));
        CHECK(f.offset == doctest::Approx(0.05).epsilon(1e-5));
        CHECK_FALSE(f.at_edge);
    }
    SUBCASE("noisy profile: center to half a micron")
    {
        std::mt19937_64 rng(4);
        std::normal_distribution<double> n(0.0, 1.0);
        int within = 0;
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> y;
            for (double xi : x) y.push_back(std::exp(-0.5 * std::pow((xi - 12.3e-6) / 30e-6, 2)) * (1.0 + 0.01 * n(rng)));
            const auto f = fit_gaussian(x, y);
            CHECK(f.center_sigma < 0.5e-6);
            within += std::abs(f.center - 12.3e-6) < 3 * f.center_sigma;
        }
        CHECK(within >= 48);
    }
    SUBCASE("degenerate input")
    {
        CHECK_THROWS_AS(fit_gaussian(x, std::vector<double>(x.size(), 1.0)), NumericError);
        CHECK_THROWS_AS(fit_gaussian({1, 2, 3}, {0, 1, 0}), ConfigError);
    }
}

TEST_CASE("extract_E0")
{
    const double e0 = 50.0;
    std::vector<CenterRecord> rec;
    for (double f : linspace(350e3, 700e3, 10)) {
        const double w = units::hz_to_rad(f);
        const auto p = predict_shift(kSr, w, e0, 0.0);
        rec.push_back({0.0, p.omega1, p.x0 + 3e-6, 0.5e-6});
    }
    SUBCASE("noiseless inversion")
    {
        const auto fit = extract_E0(rec, kSr);
        CHECK(std::abs(fit.e0 / e0 - 1.0) < 1e-6);
        CHECK(fit.intercept == doctest::Approx(3e-6).epsilon(1e-6));
    }
    SUBCASE("null field: unbiased, quoted sigma matches the scatter")
    {
        std::mt19937_64 rng(9);
        std::normal_distribution<double> n(0.0, 0.5e-6);
        const int draws = 2000;
        double sum = 0.0, sum2 = 0.0, sigma = 0.0;
        for (int k = 0; k < draws; ++k) {
            for (auto& r : rec) r.center = 3e-6 + n(rng);
            const auto fit = extract_E0(rec, kSr);
            sum += fit.e0;
            sum2 += fit.e0 * fit.e0;
            sigma = fit.e0_sigma; // depends on the design only
        }
        const double mean = sum / draws;
        CHECK(std::abs(mean) < 4.0 * sigma / std::sqrt(double(draws)));
        CHECK(std::sqrt(sum2 / draws - mean * mean) == doctest::Approx(sigma).epsilon(0.05));
    }
    SUBCASE("needs distinct frequencies")
    {
        auto same = rec;
        for (auto& r : same) r.omega1 = rec[0].omega1;
        CHECK_THROWS_AS(extract_E0(same, kSr), NumericError);
        rec.resize(2);
        CHECK_THROWS_AS(extract_E0(rec, kSr), ConfigError);
    }
}

TEST_CASE("synthetic fluorescence profiles")
{
    const auto& c = canonical();
    auto volts = c.cfg.voltages;
    volts.dc["Vtop"] = c.v_star;
    StrayField stray;
    stray.origin = c.null;
    stray.e0 = Vec3(80.0, 0.0, 0.0);
    const SecularPotential pot(c.basis, volts, c.cfg.ion, stray);
    const auto m = locate_minimum(pot, c.null);
    REQUIRE(m.converged);

    SUBCASE("point-like spot, no noise: peak at the shifted minimum")
    {
        FluorescenceScanConfig s;
        s.spot_fwhm = 1e-9;
        s.noise = 0.0;
        s.temperature = 1e-3;
        s.samples = 201;
        s.center = m.position.x();
        const auto p = synth_profile(pot, s, 1, c.null);
        const auto it = std::max_element(p.intensity.begin(), p.intensity.end());
        const double step = p.position[1] - p.position[0];
        CHECK(std::abs(p.position[std::size_t(it - p.intensity.begin())] - m.position.x()) <= 0.5 * step);
        CHECK(m.position.x() - c.null.x() > 1e-6);
    }
    SUBCASE("fitted width is the quadrature sum of cloud and spot")
    {
        FluorescenceScanConfig s;
        s.noise = 0.0;
        const auto p = synth_profile(pot, s, 1, c.null);
        const auto f = fit_gaussian(p.position, p.intensity);
        const double sc2 = constants::boltzmann * s.temperature * pot.hessian(m.position).inverse()(0, 0);
        const double ss = 60e-6 / 2.3548200450309493;
        CHECK(f.width == doctest::Approx(std::sqrt(sc2 + ss * ss)).epsilon(0.01));
        CHECK(f.center == doctest::Approx(m.position.x()).epsilon(1e-6));
    }
    SUBCASE("no stray field: centered on the unshifted minimum")
    {
        const SecularPotential p0(c.basis, volts, c.cfg.ion);
        const auto m0 = locate_minimum(p0, c.null);
        FluorescenceScanConfig s;
        s.axis = 1;
        const auto p = synth_profile(p0, s, 17, c.null);
        const auto f = fit_gaussian(p.position, p.intensity);
        CHECK(std::abs(f.center - m0.position.y()) < 3.0 * f.center_sigma);
    }
}

TEST_CASE("compensation scans on the canonical trap")
{
    const auto& c = canonical();
    SUBCASE("injected field cancelled by V5 is found at the cancelling voltage")
    {
        // E0 = -dV * E_V5(null): the trap is compensated at V5 = dV.
        const double dv = 2.0;
        auto in = c.inputs();
        const Vec3 e5 = -c.basis->gradient(*c.basis->index_of("V5"), c.null);
        in.stray.e0 = -dv * e5;
        in.scan.axis = 0;
        const auto rep = compensation_scan(in, "V5", linspace(dv - 5.0, dv + 5.0, 7), 1);
        CHECK(std::abs(rep.root - dv) < 3.0 * rep.root_sigma + 0.02);
        CHECK_FALSE(rep.extrapolated);
        // E0(V5) is linear: residuals inside the measurement error
        for (const auto& p : rep.points) {
            REQUIRE(p.valid);
            double model = 0.0;
            for (std::size_t k = 0; k < rep.poly.size(); ++k) model += rep.poly[k] * std::pow(p.value, double(k));
            CHECK(std::abs(p.fit.e0 - model) < 3.0 * p.fit.e0_sigma);
        }
        CHECK(control_csv(rep).rfind("control_V,E_field_V_per_m,sigma\n", 0) == 0);
    }
    SUBCASE("no stray field: the top plate root is the calculated compensation point")
    {
        auto in = c.inputs();
        in.scan.axis = 1;
        const auto rep = compensation_scan(in, "Vtop", linspace(c.v_star - 2.0, c.v_star + 2.0, 7), 3);
        CHECK(std::abs(rep.root - c.v_star) < 3.0 * rep.root_sigma + 0.01);
    }
    SUBCASE("not a dc electrode")
    {
        auto in = c.inputs();
        CHECK_THROWS_AS(compensation_scan(in, "rf", {1.0, 2.0}), ConfigError);
    }
}

TEST_CASE("closed loop removes an injected field")
{
    const auto& c = canonical();
    auto in = c.inputs();
    in.stray.e0 = Vec3(-120.0, 90.0, 0.0);
    const std::vector<CompensationStep> steps{{"Vtop", 1, 2.0, 9, 3}, {"V5", 0, 10.0, 9, 1}};
    const auto res = compensate(in, steps, 3);
    CHECK(res.reports.size() == 6);
    const SecularPotential check(c.basis, res.volts, c.cfg.ion, in.stray);
    const auto m = locate_minimum(check, c.null);
    Vec3 d = m.position - c.null;
    d.z() = 0.0;
    CHECK(d.norm() < 1e-6);
}

TEST_CASE("mode_frequency_along picks the aligned eigenmode")
{
    Mat3 h = Mat3::Zero();
    h(0, 0) = 4.0;
    h(1, 1) = 9.0;
    h(2, 2) = 1.0;
    const Eigen::AngleAxisd rot(0.2, Vec3::UnitZ());
    const Mat3 hr = rot.toRotationMatrix() * h * rot.toRotationMatrix().transpose();
    CHECK(mode_frequency_along(hr, 1.0, 0) == doctest::Approx(2.0));
    CHECK(mode_frequency_along(hr, 1.0, 1) == doctest::Approx(3.0));
    CHECK(mode_frequency_along(hr, 4.0, 2) == doctest::Approx(0.5));
}
