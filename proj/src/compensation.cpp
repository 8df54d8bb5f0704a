#include "surftrap/compensation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>

#include "surftrap/dynamics.hpp"
#include "surftrap/error.hpp"
#include "surftrap/parallel.hpp"
#include "surftrap/trap_analysis.hpp"

namespace surftrap {

ShiftPrediction predict_shift(const IonSpecies& ion, double omega, double e0, double e1)
{
    if (!(omega > 0.0)) throw ConfigError("secular frequency must be > 0");
    if (!(ion.mass > 0.0) || ion.charge == 0.0) throw ConfigError("invalid ion species");
    const double w1sq = omega * omega + ion.charge * e1 / ion.mass;
    if (!(w1sq > 0.0)) throw NumericError("stray gradient is anti-trapping (omega1^2 <= 0)");
    return {std::sqrt(w1sq), ion.charge * e0 / (ion.mass * w1sq)};
}

ShiftPrediction predict_shift(const IonSpecies& ion, double omega, const StrayField& stray, int axis)
{
    if (axis < 0 || axis > 2) throw ConfigError("axis must be 0, 1 or 2");
    return predict_shift(ion, omega, stray.e0[axis], stray.e1[axis]);
}

double FluorescenceScanConfig::spot_sigma() const { return spot_fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0))); }

double mode_frequency_along(const Mat3& hessian, double mass, int axis)
{
    Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (hessian + hessian.transpose()));
    int best = 0;
    for (int k = 1; k < 3; ++k)
        if (std::abs(es.eigenvectors()(axis, k)) > std::abs(es.eigenvectors()(axis, best))) best = k;
    const double lambda = es.eigenvalues()[best];
    if (!(lambda > 0.0)) throw NumericError("no confinement along the scan axis");
    return std::sqrt(lambda / mass);
}

// ---------------------------------------------------------------------------

namespace {

void check_scan(const FluorescenceScanConfig& scan)
{
    if (!(scan.spot_fwhm > 0.0)) throw ConfigError("laser spot width must be > 0");
    if (scan.samples < 8) throw ConfigError("fluorescence scan needs at least 8 samples");
    if (scan.axis < 0 || scan.axis > 2) throw ConfigError("scan axis must be 0, 1 or 2");
    if (!(scan.noise >= 0.0)) throw ConfigError("noise must be >= 0");
    if (!(scan.temperature > 0.0)) throw ConfigError("cloud temperature must be > 0");
}

Profile profile_about(const Vec3& minimum, const Mat3& hessian, const FluorescenceScanConfig& scan, double axis_center,
                      std::uint64_t seed)
{
    check_scan(scan);
    Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (hessian + hessian.transpose()));
    if (!(es.eigenvalues().minCoeff() > 0.0)) throw NumericError("configuration is not trapped (no minimum)");
    const Mat3 cov = constants::boltzmann * scan.temperature * hessian.inverse();
    const double sc2 = cov(scan.axis, scan.axis);
    const double ss = scan.spot_sigma();
    const double sigma = std::sqrt(sc2 + ss * ss);
    const double half = scan.half_range > 0.0 ? scan.half_range : 4.0 * sigma;

    Profile p;
    p.true_center = minimum[scan.axis];
    p.true_sigma = sigma;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    p.position.resize(scan.samples);
    p.intensity.resize(scan.samples);
    for (int i = 0; i < scan.samples; ++i) {
        const double x = axis_center - half + 2.0 * half * i / (scan.samples - 1);
        const double d = (x - p.true_center) / sigma;
        p.position[i] = x;
        p.intensity[i] = std::exp(-0.5 * d * d) * (1.0 + scan.noise * n(rng));
    }
    return p;
}

} // namespace

Profile synth_profile(const SecularPotential& potential, const FluorescenceScanConfig& scan, std::uint64_t seed,
                      const std::optional<Vec3>& rf_null)
{
    check_scan(scan);
    Vec3 start = Vec3::Zero();
    if (rf_null) start = *rf_null;
    else if (potential.basis()) start = find_rf_null(*potential.basis());
    const auto m = locate_minimum(potential, start);
    if (!m.converged) throw NumericError("configuration is not trapped (minimum search failed)");
    const double center = scan.center ? *scan.center : start[scan.axis];
    return profile_about(m.position, m.hessian, scan, center, seed);
}

// ---------------------------------------------------------------------------

GaussianFit fit_gaussian(const std::vector<double>& xs, const std::vector<double>& ys)
{
    const std::size_t n = xs.size();
    if (n != ys.size()) throw ConfigError("fit_gaussian: x and y sizes differ");
    if (n < 5) throw ConfigError("fit_gaussian: need at least 5 samples");
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) throw NumericError("fit_gaussian: non-finite sample");

    const auto [ymin_it, ymax_it] = std::minmax_element(ys.begin(), ys.end());
    const double ymin = *ymin_it, ymax = *ymax_it;
    if (!(ymax - ymin > 1e-12 * std::max(std::abs(ymax), 1e-300))) throw NumericError("fit_gaussian: no peak");
    const auto imax = static_cast<std::size_t>(std::distance(ys.begin(), ymax_it));

    // Work in normalised coordinates: u = (x - x_ref) / scale, v = y / yscale.
    const double xlo = *std::min_element(xs.begin(), xs.end()), xhi = *std::max_element(xs.begin(), xs.end());
    const double xref = 0.5 * (xlo + xhi);
    const double xs_scale = 0.5 * (xhi - xlo);
    if (!(xs_scale > 0.0)) throw ConfigError("fit_gaussian: samples span no range");
    const double ys_scale = ymax - ymin;
    Eigen::VectorXd u(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
        u[i] = (xs[i] - xref) / xs_scale;
        v[i] = ys[i] / ys_scale;
    }

    // Start: peak sample, width from the points above half maximum.
    double above = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (ys[i] - ymin > 0.5 * (ymax - ymin)) above += 1.0;
    const double du = 2.0 / double(n - 1);
    Eigen::Vector4d p(1.0, u[imax], std::max(above * du / 2.3548, du), ymin / ys_scale);

    auto residuals = [&](const Eigen::Vector4d& q, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(n);
        if (jac) jac->resize(n, 4);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = (u[i] - q[1]) / q[2];
            const double e = std::exp(-0.5 * d * d);
            r[i] = q[0] * e + q[3] - v[i];
            if (jac) {
                (*jac)(i, 0) = e;
                (*jac)(i, 1) = q[0] * e * d / q[2];
                (*jac)(i, 2) = q[0] * e * d * d / q[2];
                (*jac)(i, 3) = 1.0;
            }
        }
    };

    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    residuals(p, r, &jac);
    double rss = r.squaredNorm();
    double lambda = 1e-3;
    int it = 0;
    bool converged = false;
    constexpr int kMaxIterations = 500;
    for (; it < kMaxIterations && !converged; ++it) {
        const Eigen::Matrix4d jtj = jac.transpose() * jac;
        const Eigen::Vector4d g = jac.transpose() * r;
        if (g.lpNorm<Eigen::Infinity>() < 1e-15 * std::max(1.0, rss)) {
            converged = true;
            break;
        }
        bool accepted = false;
        while (!accepted) {
            Eigen::Matrix4d a = jtj;
            for (int k = 0; k < 4; ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-12);
            const Eigen::Vector4d step = a.ldlt().solve(-g);
            const Eigen::Vector4d trial = p + step;
            Eigen::VectorXd rt;
            residuals(trial, rt, nullptr);
            const double rss_t = rt.squaredNorm();
            if (std::isfinite(rss_t) && rss_t <= rss && trial[2] != 0.0) {
                const bool small = (step.array().abs() <= 1e-10 * (p.array().abs() + 1e-10)).all();
                p = trial;
                rss = rss_t;
                residuals(p, r, &jac);
                lambda = std::max(lambda * 0.1, 1e-12);
                accepted = true;
                if (small) converged = true;
            } else {
                lambda *= 10.0;
                if (lambda > 1e16) {
                    // No downhill step left: at the minimum to working precision.
                    converged = true;
                    break;
                }
            }
        }
    }
    if (!converged) throw NumericError("fit_gaussian: Levenberg-Marquardt did not converge");

    GaussianFit f;
    f.iterations = it;
    f.amplitude = p[0] * ys_scale;
    f.center = xref + p[1] * xs_scale;
    f.width = std::abs(p[2]) * xs_scale;
    f.offset = p[3] * ys_scale;
    f.rss = rss * ys_scale * ys_scale;
    const double dof = double(n) - 4.0;
    const double s2 = dof > 0.0 ? rss / dof : 0.0;
    const Eigen::Matrix4d cov = (jac.transpose() * jac).ldlt().solve(Eigen::Matrix4d::Identity()) * s2;
    f.center_sigma = std::sqrt(std::max(cov(1, 1), 0.0)) * xs_scale;
    f.width_sigma = std::sqrt(std::max(cov(2, 2), 0.0)) * xs_scale;
    f.at_edge = imax == 0 || imax + 1 == n || f.center < xlo || f.center > xhi;
    if (!std::isfinite(f.center) || !std::isfinite(f.center_sigma))
        throw NumericError("fit_gaussian: singular covariance");
    return f;
}

// ---------------------------------------------------------------------------

E0Fit extract_E0(const std::vector<CenterRecord>& records, const IonSpecies& ion)
{
    const std::size_t n = records.size();
    if (!(ion.mass > 0.0) || ion.charge == 0.0) throw ConfigError("invalid ion species");
    std::vector<double> inv(n);
    std::size_t zero_sigma = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(records[i].omega1 > 0.0)) throw ConfigError("extract_E0: omega1 must be > 0");
        if (records[i].center_sigma < 0.0 || !std::isfinite(records[i].center_sigma))
            throw ConfigError("extract_E0: center sigma must be >= 0");
        if (records[i].center_sigma == 0.0) ++zero_sigma;
        inv[i] = 1.0 / (records[i].omega1 * records[i].omega1);
    }
    if (zero_sigma != 0 && zero_sigma != n)
        throw ConfigError("extract_E0: either all or none of the center sigmas may be zero");
    std::vector<double> sorted = inv;
    std::sort(sorted.begin(), sorted.end());
    int distinct = sorted.empty() ? 0 : 1;
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i] - sorted[i - 1] > 1e-12 * sorted[i]) ++distinct;
    if (distinct < 2) throw NumericError("extract_E0: rank-deficient design (all omega1 equal)");
    if (distinct < 3) throw ConfigError("extract_E0: need at least 3 distinct omega1 values");

    const double uscale = sorted.back();
    Eigen::MatrixXd a(n, 2);
    Eigen::VectorXd b(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
        a(i, 0) = 1.0;
        a(i, 1) = inv[i] / uscale;
        b[i] = records[i].center;
        w[i] = zero_sigma ? 1.0 : 1.0 / (records[i].center_sigma * records[i].center_sigma);
    }
    const Eigen::Matrix2d normal = a.transpose() * w.asDiagonal() * a;
    const Eigen::Vector2d rhs = a.transpose() * w.asDiagonal() * b;
    const Eigen::Matrix2d ninv = normal.inverse();
    const Eigen::Vector2d coef = ninv * rhs;
    const Eigen::VectorXd res = b - a * coef;

    E0Fit f;
    f.dof = int(n) - 2;
    f.chi2 = (res.array().square() * w.array()).sum();
    // Relative weights when no sigmas were given: scale by the residual variance.
    const double scale = zero_sigma ? (f.dof > 0 ? f.chi2 / f.dof : 0.0) : 1.0;
    f.intercept = coef[0];
    f.intercept_sigma = std::sqrt(std::max(ninv(0, 0) * scale, 0.0));
    f.slope = coef[1] / uscale;
    f.slope_sigma = std::sqrt(std::max(ninv(1, 1) * scale, 0.0)) / uscale;
    f.e0 = f.slope * ion.mass / ion.charge;
    f.e0_sigma = f.slope_sigma * ion.mass / std::abs(ion.charge);
    return f;
}

// ---------------------------------------------------------------------------

namespace {

struct CellOut {
    bool ok = false;
    std::string error;
    CenterRecord record;
    Profile profile;
    GaussianFit fit;
};

double tickle_omega(const std::shared_ptr<const SampledBasis>& sampled, const VoltageSet& volts, const IonSpecies& ion,
                    const StrayField& stray, const std::string& electrode, const Vec3& minimum, double guess)
{
    SplineTrapField field(sampled, volts, ion, stray, electrode);
    TickleScan ts;
    ts.omega_lo = 0.92 * guess;
    ts.omega_hi = 1.08 * guess;
    ts.threads = 1;
    return measure_secular_frequency(field, minimum, ts).omega;
}

} // namespace

CompensationReport compensation_scan(const CompensationInputs& in, const std::string& control,
                                     const std::vector<double>& values, int degree)
{
    if (!in.basis) throw ConfigError("compensation: no basis");
    if (values.size() < 2) throw ConfigError("compensation: need at least 2 control values");
    if (degree < 1 || degree > 5) throw ConfigError("compensation: polynomial degree must be 1..5");
    if (in.v_rf_values.size() < 3) throw ConfigError("compensation: need at least 3 rf settings");
    const auto idx = in.basis->index_of(control);
    if (!idx || !in.basis->is_dc(*idx)) throw ConfigError("compensation: '" + control + "' is not a dc electrode");
    check_scan(in.scan);

    const Vec3 null = find_rf_null(*in.basis);
    const double axis_center = in.scan.center ? *in.scan.center : null[in.scan.axis];
    std::shared_ptr<const SampledBasis> sampled;
    if (in.omega_source == OmegaSource::tickle)
        sampled = std::make_shared<SampledBasis>(*in.basis, dynamics_sample_box(null, in.basis->layout()),
                                                 dynamics_sample_spacing(null), in.threads);

    const std::size_t nv = values.size(), nr = in.v_rf_values.size();
    std::vector<CellOut> cells(nv * nr);
    parallel_for(cells.size(), in.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t c = b; c < e; ++c) {
            const std::size_t iv = c / nr, ir = c % nr;
            CellOut& out = cells[c];
            try {
                VoltageSet v = in.volts;
                v.dc[control] = values[iv];
                v.v_rf_amplitude = in.v_rf_values[ir];
                const SecularPotential pot(in.basis, v, in.ion, in.stray);
                const auto m = locate_minimum(pot, null);
                if (!m.converged) throw NumericError("not trapped (minimum search failed)");
                double w1 = mode_frequency_along(m.hessian, in.ion.mass, in.scan.axis);
                if (sampled) w1 = tickle_omega(sampled, v, in.ion, in.stray, in.tickle_electrode, m.position, w1);
                out.profile = profile_about(m.position, m.hessian, in.scan, axis_center, derive_seed(in.seed, c, 7));
                out.fit = fit_gaussian(out.profile.position, out.profile.intensity);
                if (out.fit.at_edge) throw NumericError("profile peak at the scan edge");
                out.record = {in.v_rf_values[ir], w1, out.fit.center, out.fit.center_sigma};
                out.ok = true;
            } catch (const NumericError& err) {
                out.error = err.what();
            }
        }
    });

    CompensationReport rep;
    rep.control = control;
    rep.axis = in.scan.axis;
    rep.degree = degree;
    for (std::size_t iv = 0; iv < nv; ++iv) {
        ControlPoint pt;
        pt.value = values[iv];
        for (std::size_t ir = 0; ir < nr; ++ir) {
            const auto& c = cells[iv * nr + ir];
            if (!c.ok) {
                pt.error = c.error;
                break;
            }
            pt.records.push_back(c.record);
        }
        if (pt.error.empty()) {
            try {
                pt.fit = extract_E0(pt.records, in.ion);
                pt.valid = pt.fit.e0_sigma > 0.0 || pt.fit.dof == 0;
                if (!pt.valid) pt.error = "zero E0 uncertainty";
            } catch (const Error& err) {
                pt.error = err.what();
            }
        }
        rep.points.push_back(std::move(pt));
    }

    std::vector<const ControlPoint*> good;
    for (const auto& p : rep.points)
        if (p.valid) good.push_back(&p);
    if (good.size() < std::max<std::size_t>(2, std::size_t(degree) + 1))
        throw NumericError("compensation: fewer than " + std::to_string(std::max(2, degree + 1)) +
                           " valid control points");

    // Weighted polynomial fit in t = (V - vc) / vs for conditioning.
    const double vlo = good.front()->value, vhi = good.back()->value;
    const double vc = 0.5 * (vlo + vhi), vs = std::max(0.5 * std::abs(vhi - vlo), 1e-12);
    const int k = degree + 1;
    Eigen::MatrixXd a(good.size(), k);
    Eigen::VectorXd b(good.size()), w(good.size());
    for (std::size_t i = 0; i < good.size(); ++i) {
        const double t = (good[i]->value - vc) / vs;
        double tp = 1.0;
        for (int j = 0; j < k; ++j, tp *= t) a(i, j) = tp;
        b[i] = good[i]->fit.e0;
        const double s = good[i]->fit.e0_sigma;
        w[i] = s > 0.0 ? 1.0 / (s * s) : 1.0;
    }
    const Eigen::MatrixXd normal = a.transpose() * w.asDiagonal() * a;
    const Eigen::MatrixXd cov = normal.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
    const Eigen::VectorXd coef = cov * (a.transpose() * w.asDiagonal() * b);

    auto poly_t = [&](double t) {
        double s = 0.0;
        for (int j = k - 1; j >= 0; --j) s = s * t + coef[j];
        return s;
    };
    auto dpoly_t = [&](double t) {
        double s = 0.0;
        for (int j = k - 1; j >= 1; --j) s = s * t + j * coef[j];
        return s;
    };

    // Root: sign changes on a fine grid, preferring the measured range, then an extended one.
    std::optional<double> root_t;
    bool data_sign_change = false;
    for (std::size_t i = 1; i < good.size(); ++i)
        if ((good[i - 1]->fit.e0 < 0.0) != (good[i]->fit.e0 < 0.0)) data_sign_change = true;
    for (double ext : {1.0, 3.0, 10.0}) {
        const int grid = 400 * int(ext);
        double best_dist = std::numeric_limits<double>::infinity();
        for (int i = 0; i < grid; ++i) {
            const double t0 = -ext + 2.0 * ext * i / grid, t1 = -ext + 2.0 * ext * (i + 1) / grid;
            const double f0 = poly_t(t0), f1 = poly_t(t1);
            if (f0 == 0.0 || (f0 < 0.0) != (f1 < 0.0)) {
                boost::uintmax_t iters = 100;
                const auto br = boost::math::tools::toms748_solve(
                    poly_t, t0, t1, f0, f1, boost::math::tools::eps_tolerance<double>(52), iters);
                const double r = 0.5 * (br.first + br.second);
                if (std::abs(r) < best_dist) {
                    best_dist = std::abs(r);
                    root_t = r;
                }
            }
        }
        if (root_t) break;
    }
    if (!root_t) throw NumericError("compensation: fitted field has no zero crossing near the scanned range");

    const double t = *root_t;
    Eigen::VectorXd g(k);
    double tp = 1.0;
    for (int j = 0; j < k; ++j, tp *= t) g[j] = tp;
    const double slope_t = dpoly_t(t);
    rep.root = vc + vs * t;
    rep.root_sigma = slope_t != 0.0 ? std::sqrt(std::max(g.dot(cov * g), 0.0)) / std::abs(slope_t) * vs
                                    : std::numeric_limits<double>::infinity();
    rep.extrapolated = !data_sign_change || rep.root < vlo || rep.root > vhi;

    // Coefficients in raw V: expand sum c_j ((V - vc)/vs)^j.
    rep.poly.assign(k, 0.0);
    for (int j = 0; j < k; ++j) {
        const double cj = coef[j] / std::pow(vs, j);
        double binom = 1.0;
        for (int i = 0; i <= j; ++i) {
            // term C(j,i) V^i (-vc)^(j-i)
            rep.poly[i] += cj * binom * std::pow(-vc, j - i);
            binom = binom * double(j - i) / double(i + 1);
        }
    }

    std::size_t nearest = 0;
    for (std::size_t iv = 1; iv < nv; ++iv)
        if (std::abs(values[iv] - rep.root) < std::abs(values[nearest] - rep.root)) nearest = iv;
    if (cells[nearest * nr].ok) {
        rep.example_profile = cells[nearest * nr].profile;
        rep.example_fit = cells[nearest * nr].fit;
    }
    return rep;
}

CompensationResult compensate(const CompensationInputs& inputs, const std::vector<CompensationStep>& steps, int rounds)
{
    if (steps.empty()) throw ConfigError("compensate: no steps");
    if (rounds < 1) throw ConfigError("compensate: rounds must be >= 1");
    CompensationResult out;
    CompensationInputs in = inputs;
    for (int round = 0; round < rounds; ++round) {
        for (std::size_t s = 0; s < steps.size(); ++s) {
            const auto& st = steps[s];
            if (st.points < 2 || !(st.span > 0.0)) throw ConfigError("compensate: step needs >= 2 points and span > 0");
            in.scan.axis = st.axis;
            in.seed = derive_seed(inputs.seed, std::uint64_t(round), s);
            const double cur = in.volts.dc_voltage(st.control);
            std::vector<double> values(st.points);
            for (int i = 0; i < st.points; ++i) values[i] = cur - st.span + 2.0 * st.span * i / (st.points - 1);
            auto rep = compensation_scan(in, st.control, values, st.degree);
            in.volts.dc[st.control] = rep.root;
            out.reports.push_back(std::move(rep));
        }
    }
    out.volts = in.volts;
    return out;
}

// ---------------------------------------------------------------------------

std::string profile_csv(const Profile& p)
{
    std::ostringstream os;
    os << "pos_um,intensity\n";
    char buf[96];
    for (std::size_t i = 0; i < p.position.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.6f,%.9g\n", p.position[i] / units::um, p.intensity[i]);
        os << buf;
    }
    return os.str();
}

std::string records_csv(const std::vector<CenterRecord>& r)
{
    std::ostringstream os;
    os << "inv_w1sq,center_um,center_sigma_um\n";
    char buf[128];
    for (const auto& c : r) {
        std::snprintf(buf, sizeof buf, "%.9g,%.6f,%.6f\n", 1.0 / (c.omega1 * c.omega1), c.center / units::um,
                      c.center_sigma / units::um);
        os << buf;
    }
    return os.str();
}

std::string control_csv(const CompensationReport& r)
{
    std::ostringstream os;
    os << "control_V,E_field_V_per_m,sigma\n";
    char buf[128];
    for (const auto& p : r.points) {
        if (!p.valid) continue;
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f\n", p.value, p.fit.e0, p.fit.e0_sigma);
        os << buf;
    }
    return os.str();
}

} // namespace surftrap
