#include "surftrap/trap_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <queue>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include "surftrap/error.hpp"
#include "surftrap/parallel.hpp"

namespace surftrap {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::array<std::size_t, 3> unflatten(const GridBox& box, std::size_t idx)
{
    const std::size_t nx = box.counts[0], ny = box.counts[1];
    return {idx % nx, (idx / nx) % ny, idx / (nx * ny)};
}

Vec3 point_of(const GridBox& box, std::size_t idx)
{
    const auto [ix, iy, iz] = unflatten(box, idx);
    return box.point(ix, iy, iz);
}

std::size_t nearest_cell(const GridBox& box, const Vec3& r)
{
    const Vec3 h = box.spacing();
    std::array<std::size_t, 3> i{};
    for (int a = 0; a < 3; ++a) {
        const double u = std::round((r[a] - box.lo[a]) / h[a]);
        i[a] = static_cast<std::size_t>(std::clamp(u, 0.0, double(box.counts[a] - 1)));
    }
    return i[0] + box.counts[0] * (i[1] + box.counts[1] * i[2]);
}

bool inside_box(const GridBox& box, const Vec3& r)
{
    for (int a = 0; a < 3; ++a)
        if (!(r[a] >= box.lo[a] && r[a] <= box.hi[a])) return false;
    return true;
}

double rf_extent(const ElectrodeLayout& layout)
{
    double xmax = 0.0;
    for (const auto& poly : layout.rf_electrode().polygons)
        for (const auto& p : poly) xmax = std::max(xmax, std::abs(p.x()));
    return xmax;
}

} // namespace

Vec3 GridBox::spacing() const
{
    Vec3 h;
    for (int a = 0; a < 3; ++a) h[a] = counts[a] > 1 ? (hi[a] - lo[a]) / (counts[a] - 1) : 0.0;
    return h;
}

Vec3 GridBox::point(std::size_t ix, std::size_t iy, std::size_t iz) const
{
    const Vec3 h = spacing();
    return {lo.x() + double(ix) * h.x(), lo.y() + double(iy) * h.y(), lo.z() + double(iz) * h.z()};
}

GridBox default_grid_box(const Vec3& rf_null, const ElectrodeLayout& layout)
{
    const double y0 = rf_null.y();
    if (!(y0 > 0.0)) throw NumericError("grid box: rf null must lie above the surface");
    GridBox box;
    box.lo = Vec3(rf_null.x() - 4.0 * y0, 0.05 * y0, rf_null.z() - 6.0 * y0);
    box.hi = Vec3(rf_null.x() + 4.0 * y0, 4.0 * y0, rf_null.z() + 6.0 * y0);
    if (layout.top_plate) box.hi.y() = std::min(box.hi.y(), 0.95 * layout.top_plate->height_m);
    // Stay strictly inside the meshed region.
    const auto& bb = layout.bounding_box;
    const double shrink = 1e-6 * (bb.x_max - bb.x_min);
    box.lo.x() = std::max(box.lo.x(), bb.x_min + shrink);
    box.hi.x() = std::min(box.hi.x(), bb.x_max - shrink);
    box.lo.z() = std::max(box.lo.z(), bb.z_min + shrink);
    box.hi.z() = std::min(box.hi.z(), bb.z_max - shrink);
    return box;
}

// ---------------------------------------------------------------------------

FieldSamples::FieldSamples(BasisPtr basis, const GridBox& box, int threads) : basis_(std::move(basis)), box_(box)
{
    if (!basis_) throw ConfigError("field samples: no basis");
    const std::size_t n = box_.size(), nb = basis_->size(), rf = basis_->rf_index();
    phi_.assign(n * nb, 0.0);
    grad_rf_sq_.assign(n, 0.0);
    valid_.assign(n, 0);
    parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
        BasisEval ev;
        for (std::size_t i = begin; i < end; ++i) {
            const Vec3 r = point_of(box_, i);
            if (!basis_->in_region(r)) continue;
            basis_->evaluate(r, ev);
            std::copy(ev.phi.begin(), ev.phi.end(), phi_.begin() + static_cast<std::ptrdiff_t>(i * nb));
            grad_rf_sq_[i] = ev.grad[rf].squaredNorm();
            valid_[i] = 1;
        }
    });
}

std::vector<double> FieldSamples::energies(const SecularPotential& potential) const
{
    if (potential.basis() != basis_.get()) throw ConfigError("field samples: potential uses a different basis");
    const std::size_t n = box_.size(), nb = basis_->size();
    const auto& w = potential.dc_weights();
    const double q = potential.ion().charge, c = potential.rf_prefactor();
    std::vector<double> out(n, kInf);
    for (std::size_t i = 0; i < n; ++i) {
        if (!valid_[i]) continue;
        // Same operation order as SecularPotential::terms, so results are bit-identical.
        const double* phi = &phi_[i * nb];
        double phi_dc = 0.0;
        for (std::size_t k = 0; k < nb; ++k) phi_dc += w[k] * phi[k];
        const double rf = c * grad_rf_sq_[i];
        const double dc = q * phi_dc;
        const double stray = potential.stray().energy(point_of(box_, i), q);
        out[i] = rf + dc + stray;
    }
    return out;
}

std::vector<double> sample_energies(const SecularPotential& potential, const GridBox& box, int threads)
{
    std::vector<double> out(box.size(), kInf);
    parallel_for(box.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const Vec3 r = point_of(box, i);
            if (!potential.in_region(r)) continue;
            const double e = potential.energy(r);
            if (std::isfinite(e)) out[i] = e;
        }
    });
    return out;
}

WatershedResult watershed(const std::vector<double>& energies, const GridBox& box, std::size_t seed_cell)
{
    const std::size_t nx = box.counts[0], ny = box.counts[1], nz = box.counts[2];
    const std::size_t n = nx * ny * nz;
    if (energies.size() != n || seed_cell >= n) throw ConfigError("watershed: grid size mismatch");
    std::vector<double> level(n, kInf);
    std::vector<std::size_t> top(n, n);
    std::vector<unsigned char> done(n, 0), boundary(n, 0);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    for (std::size_t i = 0; i < n; ++i) {
        const auto [ix, iy, iz] = unflatten(box, i);
        if (ix == 0 || iy == 0 || iz == 0 || ix + 1 == nx || iy + 1 == ny || iz + 1 == nz) {
            boundary[i] = 1;
            level[i] = energies[i];
            top[i] = i;
            heap.emplace(level[i], i);
        }
    }
    const std::ptrdiff_t strides[3] = {1, static_cast<std::ptrdiff_t>(nx), static_cast<std::ptrdiff_t>(nx * ny)};
    while (!heap.empty()) {
        const auto [lv, cur] = heap.top();
        heap.pop();
        if (done[cur] || lv > level[cur]) continue;
        done[cur] = 1;
        if (cur == seed_cell) break;
        const auto idx = unflatten(box, cur);
        for (int a = 0; a < 3; ++a) {
            for (int s : {-1, 1}) {
                if (s < 0 && idx[a] == 0) continue;
                if (s > 0 && idx[a] + 1 == std::size_t(box.counts[a])) continue;
                const std::size_t nb = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(cur) + s * strides[a]);
                if (done[nb]) continue;
                const double cand = std::max(level[cur], energies[nb]);
                if (cand < level[nb]) {
                    level[nb] = cand;
                    top[nb] = energies[nb] > level[cur] ? nb : top[cur];
                    heap.emplace(cand, nb);
                }
            }
        }
    }
    WatershedResult out;
    out.level = level[seed_cell];
    out.saddle_cell = top[seed_cell] < n ? top[seed_cell] : seed_cell;
    out.saddle_on_boundary = boundary[out.saddle_cell] != 0;
    return out;
}

// ---------------------------------------------------------------------------

Vec3 find_rf_null(const PotentialBasis& basis, double axial_z)
{
    const auto& layout = basis.layout();
    const double xmax = rf_extent(layout);
    if (!(xmax > 0.0)) throw ConfigError("rf null: rf electrode has no extent");
    double ymax = 3.0 * xmax;
    if (layout.top_plate) ymax = std::min(ymax, 0.95 * layout.top_plate->height_m);
    const double ymin = 0.05 * xmax;
    const std::size_t rf = basis.rf_index();

    // Coarse seed grid.
    constexpr int nxs = 41, nys = 61;
    BasisEval ev;
    double best = kInf, typical = 1.0 / xmax;
    Vec3 r(0.0, 0.0, axial_z);
    for (int i = 0; i < nxs; ++i)
        for (int j = 0; j < nys; ++j) {
            const Vec3 p(-xmax + 2.0 * xmax * i / (nxs - 1), ymin + (ymax - ymin) * j / (nys - 1), axial_z);
            if (!basis.in_region(p)) continue;
            basis.evaluate(p, ev);
            const double g2 = ev.grad[rf].squaredNorm();
            if (g2 < best) {
                best = g2;
                r = p;
            }
        }
    if (!std::isfinite(best)) throw NumericError("rf null: search region outside the field region");

    // Gauss-Newton on the transverse components.
    const double tol = 1e-6 * typical;
    double gnorm = kInf;
    for (int it = 0; it < 100; ++it) {
        basis.evaluate(r, ev, HessianMode::rf_only);
        const Vec3 g = ev.grad[rf];
        gnorm = g.norm();
        if (gnorm < tol) break;
        const Eigen::Matrix<double, 3, 2> j = ev.hess[rf].leftCols<2>();
        Eigen::Vector2d step = -(j.transpose() * j).ldlt().solve(j.transpose() * g);
        const double cap = 0.25 * xmax;
        if (step.norm() > cap) step *= cap / step.norm();
        Vec3 next = r + Vec3(step.x(), step.y(), 0.0);
        int halvings = 0;
        while (!basis.in_region(next) && halvings++ < 30) {
            step *= 0.5;
            next = r + Vec3(step.x(), step.y(), 0.0);
        }
        if (!basis.in_region(next)) break;
        if (step.norm() < 1e-16) {
            r = next;
            break;
        }
        r = next;
    }
    basis.evaluate(r, ev);
    gnorm = ev.grad[rf].norm();
    if (!(gnorm < 1e-3 * typical))
        throw NumericError("rf null: no null found in the search region (min |grad phi_rf| = " +
                           std::to_string(gnorm) + " 1/m)");
    return r;
}

MinimumResult locate_minimum(const SecularPotential& potential, const Vec3& seed, int max_iterations)
{
    if (!potential.in_region(seed)) throw NumericError("minimum search: seed outside the field region");
    const double scale = potential.length_scale();
    const double gtol = units::ev_to_joule(1e-6); // J/m, i.e. 1e-9 eV per mm
    MinimumResult out;
    Vec3 r = seed;
    double e = potential.energy(r);
    Vec3 g = potential.gradient(r);
    for (int it = 0; it < max_iterations; ++it) {
        out.iterations = it + 1;
        if (g.norm() < gtol) {
            out.converged = true;
            break;
        }
        const Mat3 h = potential.hessian(r);
        Eigen::SelfAdjointEigenSolver<Mat3> es(h);
        Vec3 lam = es.eigenvalues();
        const double lmax = lam.cwiseAbs().maxCoeff();
        for (int k = 0; k < 3; ++k) lam[k] = std::max(std::abs(lam[k]), 1e-8 * lmax + 1e-300);
        Vec3 step = -(es.eigenvectors() * (es.eigenvectors().transpose() * g).cwiseQuotient(lam));
        const double cap = 0.05 * scale;
        if (step.norm() > cap) step *= cap / step.norm();
        bool accepted = false;
        for (int k = 0; k < 40; ++k) {
            const Vec3 next = r + step;
            if (potential.in_region(next)) {
                const double en = potential.energy(next);
                const Vec3 gn = potential.gradient(next);
                if (en < e || gn.norm() < g.norm()) {
                    r = next;
                    e = en;
                    g = gn;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if (!accepted || step.norm() < 1e-13 * scale) {
            out.converged = g.norm() < 1e3 * gtol;
            break;
        }
    }
    out.position = r;
    out.energy = e;
    out.hessian = potential.hessian(r);
    return out;
}

namespace {

// Newton on grad Phi = 0 from a grid saddle; accepts an index-1 stationary point nearby.
std::optional<Vec3> refine_saddle(const SecularPotential& potential, const Vec3& start, const Vec3& cell)
{
    const double reach = 3.0 * cell.maxCoeff();
    Vec3 r = start;
    const double gtol = units::ev_to_joule(1e-6);
    for (int it = 0; it < 60; ++it) {
        if (!potential.in_region(r)) return std::nullopt;
        const Vec3 g = potential.gradient(r);
        const Mat3 h = potential.hessian(r);
        if (g.norm() < gtol) {
            Eigen::SelfAdjointEigenSolver<Mat3> es(h);
            const auto lam = es.eigenvalues();
            if (lam[0] < 0.0 && lam[1] > 0.0 && (r - start).cwiseQuotient(cell).cwiseAbs().maxCoeff() < 3.0)
                return r;
            return std::nullopt;
        }
        Vec3 step = -h.fullPivLu().solve(g);
        if (!step.allFinite()) return std::nullopt;
        if (step.norm() > 0.5 * cell.minCoeff()) step *= 0.5 * cell.minCoeff() / step.norm();
        r += step;
        if ((r - start).norm() > reach) return std::nullopt;
    }
    return std::nullopt;
}

} // namespace

TrapCharacterization characterize(const SecularPotential& potential, const CharacterizeOptions& options)
{
    TrapCharacterization out;
    const PotentialBasis* basis = potential.basis();
    if (basis) out.rf_null = find_rf_null(*basis, options.axial_z);
    else out.rf_null = options.seed.value_or(Vec3(0.0, 0.0, options.axial_z));

    const Vec3 seed = options.seed.value_or(out.rf_null);
    MinimumResult mr;
    try {
        mr = locate_minimum(potential, seed);
    } catch (const NumericError& e) {
        out.status = std::string("untrapped: ") + e.what();
        return out;
    }
    out.minimum = mr.position;
    out.min_energy_ev = units::joule_to_ev(mr.energy);
    out.displacement = Vec3(mr.position.x() - out.rf_null.x(), mr.position.y() - out.rf_null.y(), 0.0);
    Eigen::SelfAdjointEigenSolver<Mat3> es(mr.hessian);
    const Vec3 lam = es.eigenvalues();
    out.principal_axes = es.eigenvectors();
    if (!mr.converged || !(lam[0] > 0.0)) {
        out.status = mr.converged ? "untrapped: no minimum (Hessian not positive definite)"
                                  : "untrapped: minimum search did not converge";
        return out;
    }
    for (int k = 0; k < 3; ++k) out.secular_freqs[k] = std::sqrt(lam[k] / potential.ion().mass);
    out.trapped = true;
    out.status = "ok";
    if (!options.compute_depth) return out;

    GridBox box;
    if (options.cache) box = options.cache->box();
    else if (options.box) box = *options.box;
    else if (basis) box = default_grid_box(out.rf_null, basis->layout());
    else throw ConfigError("characterize: a grid box is required for a potential without a basis");
    if (!inside_box(box, mr.position)) {
        out.trapped = false;
        out.status = "untrapped: minimum lies outside the depth-search box";
        return out;
    }
    const auto energies = options.cache ? options.cache->energies(potential)
                                        : sample_energies(potential, box, options.threads);
    const auto ws = watershed(energies, box, nearest_cell(box, mr.position));
    const Vec3 grid_saddle = point_of(box, ws.saddle_cell);
    out.escape_saddle = grid_saddle;
    out.depth_ev = units::joule_to_ev(ws.level - mr.energy);
    out.saddle_on_boundary = ws.saddle_on_boundary;
    if (!ws.saddle_on_boundary) {
        if (auto s = refine_saddle(potential, grid_saddle, box.spacing())) {
            out.escape_saddle = *s;
            out.saddle_refined = true;
            out.depth_ev = units::joule_to_ev(potential.energy(*s) - mr.energy);
        }
    }
    if (!out.saddle_refined) out.status = ws.saddle_on_boundary ? "ok; escape at search-box boundary (depth is a lower bound)"
                                                                : "ok; saddle refinement failed, grid value used";
    out.depth_ev = std::max(out.depth_ev, 0.0);
    return out;
}

// ---------------------------------------------------------------------------

Vec3 displacement_at(const BasisPtr& basis, VoltageSet volts, const IonSpecies& ion, double v_top,
                     const Vec3& rf_null, const StrayField& stray)
{
    volts.dc[std::string(kTopPlateName)] = v_top;
    const SecularPotential sp(basis, volts, ion, stray);
    const auto mr = locate_minimum(sp, rf_null);
    if (!mr.converged) throw NumericError("no secular minimum at V_top = " + std::to_string(v_top) + " V");
    return {mr.position.x() - rf_null.x(), mr.position.y() - rf_null.y(), 0.0};
}

VtopScan scan_vtop(const BasisPtr& basis, const VoltageSet& volts, const IonSpecies& ion,
                   const std::vector<double>& vtop_values, const ScanOptions& options)
{
    if (!basis) throw ConfigError("scan_vtop: no basis");
    if (!basis->index_of(kTopPlateName)) throw ConfigError("scan_vtop: layout has no top plate");
    const Vec3 null = find_rf_null(*basis, options.axial_z);
    const GridBox box = options.box.value_or(default_grid_box(null, basis->layout()));
    const FieldSamples cache(basis, box, options.threads);

    VtopScan scan;
    for (double v : vtop_values) {
        VoltageSet vs = volts;
        vs.dc[std::string(kTopPlateName)] = v;
        VtopRow row;
        row.v_top = v;
        try {
            CharacterizeOptions co;
            co.threads = options.threads;
            co.axial_z = options.axial_z;
            co.cache = &cache;
            row.result = characterize(SecularPotential(basis, vs, ion), co);
        } catch (const Error& e) {
            row.result.trapped = false;
            row.result.status = std::string("error: ") + e.what();
        }
        scan.rows.push_back(std::move(row));
    }

    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < scan.rows.size(); ++i) {
        const auto& r = scan.rows[i].result;
        if (!r.trapped) continue;
        if (!best || r.displacement.norm() < scan.rows[*best].result.displacement.norm()) best = i;
    }
    if (!best) return scan;
    scan.v_top_star = scan.rows[*best].v_top;
    scan.displacement_at_star = scan.rows[*best].result.displacement.norm();
    if (options.refine_star && scan.rows.size() > 1) {
        const std::size_t i = *best;
        double lo = scan.rows[i > 0 ? i - 1 : i].v_top, hi = scan.rows[i + 1 < scan.rows.size() ? i + 1 : i].v_top;
        if (lo > hi) std::swap(lo, hi);
        if (hi > lo) {
            try {
                auto f = [&](double v) { return displacement_at(basis, volts, ion, v, null).squaredNorm(); };
                std::uintmax_t iters = 80;
                const auto [v, d2] = boost::math::tools::brent_find_minima(f, lo, hi, 50, iters);
                if (std::sqrt(d2) < scan.displacement_at_star) {
                    scan.v_top_star = v;
                    scan.displacement_at_star = std::sqrt(d2);
                }
            } catch (const Error&) {
                // keep the grid value
            }
        }
    }
    return scan;
}

double find_vtop_for_displacement(const BasisPtr& basis, const VoltageSet& volts, const IonSpecies& ion,
                                  double target, double lo, double hi)
{
    const Vec3 null = find_rf_null(*basis);
    auto f = [&](double v) { return displacement_at(basis, volts, ion, v, null).norm() - target; };
    const double flo = f(lo), fhi = f(hi);
    if (flo * fhi > 0.0)
        throw NumericError("no V_top in [" + std::to_string(lo) + ", " + std::to_string(hi) +
                           "] V gives the requested displacement");
    std::uintmax_t iters = 100;
    const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, boost::math::tools::eps_tolerance<double>(40), iters);
    return 0.5 * (a + b);
}

double find_vtop_star(const BasisPtr& basis, const VoltageSet& volts, const IonSpecies& ion, double lo, double hi,
                      const StrayField& stray)
{
    if (!(hi > lo)) throw ConfigError("find_vtop_star: empty range");
    const Vec3 null = find_rf_null(*basis);
    auto dy = [&](double v) { return displacement_at(basis, volts, ion, v, null, stray).y(); };
    constexpr int kCoarse = 40;
    std::optional<std::pair<double, double>> prev;
    for (int i = 0; i <= kCoarse; ++i) {
        const double v = lo + (hi - lo) * i / kCoarse;
        double d;
        try {
            d = dy(v);
        } catch (const NumericError&) {
            prev.reset();
            continue;
        }
        if (prev && (prev->second < 0.0) != (d < 0.0)) {
            std::uintmax_t iters = 100;
            const auto [a, b] = boost::math::tools::toms748_solve(dy, prev->first, v, prev->second, d,
                                                                  boost::math::tools::eps_tolerance<double>(44), iters);
            return 0.5 * (a + b);
        }
        if (d == 0.0) return v;
        prev = std::pair{v, d};
    }
    throw NumericError("no compensating V_top in [" + std::to_string(lo) + ", " + std::to_string(hi) + "] V");
}

std::string vtop_scan_csv(const VtopScan& scan)
{
    std::ostringstream os;
    os << "v_top,depth_eV,disp_x_um,disp_y_um,trapped\n";
    char buf[160];
    for (const auto& row : scan.rows) {
        const auto& r = row.result;
        std::snprintf(buf, sizeof buf, "%.6f,%.9g,%.9g,%.9g,%s\n", row.v_top, r.depth_ev, r.displacement.x() / units::um,
                      r.displacement.y() / units::um, r.trapped ? "true" : "false");
        os << buf;
    }
    return os.str();
}

} // namespace surftrap
