#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Dense>

#include "kernels.hpp"
#include "surftrap/electrostatics.hpp"
#include "surftrap/error.hpp"

namespace surftrap {

namespace {

struct Panel {
    double x1, x2, z1, z2, y;
    int basis; // -1: grounded fill
    Vec3 centroid() const { return {0.5 * (x1 + x2), y, 0.5 * (z1 + z2)}; }
    double area() const { return (x2 - x1) * (z2 - z1); }
    double size() const { return std::max(x2 - x1, z2 - z1); }
};

struct Patch {
    Rect rect;
    double y;
    int basis;
};

// Influence of a unit-density panel at r: exact near field, Gauss 2x2 at mid range,
// point charge far away.
double panel_influence(const Panel& p, const Vec3& r, Vec3* grad)
{
    constexpr double inv4pi = 1.0 / (4.0 * constants::pi);
    const Vec3 c = p.centroid();
    const Vec3 d = r - c;
    const double dist2 = d.squaredNorm();
    const double s = p.size();
    if (dist2 > 100.0 * s * s) {
        const double dist = std::sqrt(dist2);
        const double v = p.area() * inv4pi / dist;
        if (grad) *grad = -v * d / dist2;
        return v;
    }
    if (dist2 > 9.0 * s * s) {
        const double gx = 0.5 * (p.x2 - p.x1) / std::sqrt(3.0);
        const double gz = 0.5 * (p.z2 - p.z1) / std::sqrt(3.0);
        const double w = 0.25 * p.area() * inv4pi;
        double v = 0.0;
        Vec3 g = Vec3::Zero();
        for (double sx : {-1.0, 1.0})
            for (double sz : {-1.0, 1.0}) {
                const Vec3 dq = r - Vec3(c.x() + sx * gx, c.y(), c.z() + sz * gz);
                const double q2 = dq.squaredNorm();
                const double q = std::sqrt(q2);
                v += w / q;
                g -= w * dq / (q2 * q);
            }
        if (grad) *grad = g;
        return v;
    }
    return detail::panel_potential(p.x1, p.x2, p.z1, p.z2, p.y, r, grad);
}

// Nodes on [a, b] with local size s0 + growth * sqrt(p^2 + offset^2), capped near the ends at
// s0 / 2 + grading * (distance to the end) to resolve the edge charge.
std::vector<double> subdivide(double a, double b, double offset, double s0, double growth, double grading)
{
    constexpr int fine = 512;
    std::vector<double> cum(fine + 1, 0.0);
    auto inv_size = [&](double p) {
        double s = s0 + growth * std::sqrt(p * p + offset * offset);
        if (grading > 0.0) s = std::min(s, 0.5 * s0 + grading * std::min(p - a, b - p));
        return 1.0 / s;
    };
    const double h = (b - a) / fine;
    for (int i = 0; i < fine; ++i) {
        const double p0 = a + i * h;
        cum[i + 1] = cum[i] + h / 6.0 * (inv_size(p0) + 4.0 * inv_size(p0 + 0.5 * h) + inv_size(p0 + h));
    }
    const int n = std::max(1, static_cast<int>(std::ceil(cum.back() - 1e-9)));
    std::vector<double> nodes{a};
    for (int k = 1; k < n; ++k) {
        const double target = cum.back() * k / n;
        const auto it = std::lower_bound(cum.begin(), cum.end(), target);
        const auto i = static_cast<int>(std::distance(cum.begin(), it));
        const double t = (target - cum[i - 1]) / (cum[i] - cum[i - 1]);
        nodes.push_back(a + (i - 1 + t) * h);
    }
    nodes.push_back(b);
    return nodes;
}

double interval_distance(double a, double b)
{
    if (a <= 0.0 && b >= 0.0) return 0.0;
    return std::min(std::abs(a), std::abs(b));
}

// Uncovered parts of the bounding box, as rectangles.
std::vector<Rect> ground_fill(const std::vector<Rect>& covered, const BoundingBox& bb)
{
    std::set<double> xs{bb.x_min, bb.x_max}, zs{bb.z_min, bb.z_max};
    for (const auto& r : covered) {
        xs.insert(std::clamp(r.x1, bb.x_min, bb.x_max));
        xs.insert(std::clamp(r.x2, bb.x_min, bb.x_max));
        zs.insert(std::clamp(r.z1, bb.z_min, bb.z_max));
        zs.insert(std::clamp(r.z2, bb.z_min, bb.z_max));
    }
    const std::vector<double> xv(xs.begin(), xs.end()), zv(zs.begin(), zs.end());
    std::vector<Rect> out;
    for (std::size_t i = 0; i + 1 < xv.size(); ++i) {
        const double xm = 0.5 * (xv[i] + xv[i + 1]);
        std::size_t j = 0;
        while (j + 1 < zv.size()) {
            auto free_cell = [&](std::size_t jj) {
                const double zm = 0.5 * (zv[jj] + zv[jj + 1]);
                return std::none_of(covered.begin(), covered.end(), [&](const Rect& r) {
                    return xm > r.x1 && xm < r.x2 && zm > r.z1 && zm < r.z2;
                });
            };
            if (!free_cell(j)) {
                ++j;
                continue;
            }
            std::size_t k = j;
            while (k + 1 < zv.size() && free_cell(k)) ++k;
            out.push_back(Rect{xv[i], xv[i + 1], zv[j], zv[k]});
            j = k;
        }
    }
    return out;
}

class BemBasis final : public PotentialBasis {
public:
    BemBasis(const ElectrodeLayout& layout, int panels_per_dimension, const BemOptions& options)
        : PotentialBasis(layout)
    {
        if (panels_per_dimension < 1) throw ConfigError("bem: panels_per_dimension must be >= 1");

        std::vector<Patch> patches;
        std::vector<Rect> covered;
        double feature = std::numeric_limits<double>::infinity();
        for (std::size_t e = 0; e < layout_.electrodes.size(); ++e) {
            const auto& el = layout_.electrodes[e];
            for (std::size_t p = 0; p < el.polygons.size(); ++p) {
                auto rc = as_axis_aligned_rect(el.polygons[p]);
                if (!rc)
                    throw ConfigError("electrode '" + el.name + "': polygon " + std::to_string(p) +
                                      " is not an axis-aligned rectangle (unsupported by the field solvers)");
                patches.push_back({*rc, 0.0, static_cast<int>(e)});
                covered.push_back(*rc);
                feature = std::min({feature, rc->x2 - rc->x1, rc->z2 - rc->z1});
            }
        }
        for (const auto& rc : ground_fill(covered, layout_.bounding_box)) patches.push_back({rc, 0.0, -1});
        const auto& bb = layout_.bounding_box;
        if (layout_.top_plate) {
            const int top = static_cast<int>(size() - 1);
            const double h = layout_.top_plate->height_m;
            const double slit = layout_.top_plate->slit_halfwidth_m;
            if (slit > 0.0) {
                if (-slit > bb.x_min) patches.push_back({Rect{bb.x_min, -slit, bb.z_min, bb.z_max}, h, top});
                if (slit < bb.x_max) patches.push_back({Rect{slit, bb.x_max, bb.z_min, bb.z_max}, h, top});
            } else {
                patches.push_back({Rect{bb.x_min, bb.x_max, bb.z_min, bb.z_max}, h, top});
            }
        }

        const double s0 = feature / panels_per_dimension;
        for (const auto& patch : patches) {
            const auto& rc = patch.rect;
            const double xoff = std::hypot(interval_distance(rc.z1, rc.z2), patch.y);
            const double zoff = std::hypot(interval_distance(rc.x1, rc.x2), patch.y);
            const auto xn = subdivide(rc.x1, rc.x2, xoff, s0, options.growth, options.edge_grading);
            const auto zn = subdivide(rc.z1, rc.z2, zoff, s0, options.growth, options.edge_grading);
            if (panels_.size() + (xn.size() - 1) * (zn.size() - 1) > options.max_panels)
                throw ConfigError("bem: panel budget of " + std::to_string(options.max_panels) +
                                  " exceeded; lower panels_per_dimension");
            for (std::size_t i = 0; i + 1 < xn.size(); ++i)
                for (std::size_t j = 0; j + 1 < zn.size(); ++j)
                    panels_.push_back({xn[i], xn[i + 1], zn[j], zn[j + 1], patch.y, patch.basis});
        }
        solve();
    }

    BasisMethod method() const override { return BasisMethod::bem; }

    bool in_region(const Vec3& r) const override
    {
        const auto& bb = layout_.bounding_box;
        return PotentialBasis::in_region(r) && r.x() > bb.x_min && r.x() < bb.x_max && r.z() > bb.z_min &&
               r.z() < bb.z_max;
    }

    void evaluate(const Vec3& r, BasisEval& out, HessianMode mode) const override
    {
        require_region(r);
        evaluate_unchecked(r, out);
        if (mode != HessianMode::none) finite_difference_hessians(r, out, mode);
        else out.hess.assign(size(), Mat3::Zero());
    }

private:
    void evaluate_unchecked(const Vec3& r, BasisEval& out) const
    {
        const std::size_t nb = size();
        out.phi.assign(nb, 0.0);
        out.grad.assign(nb, Vec3::Zero());
        Vec3 g;
        for (std::size_t p = 0; p < panels_.size(); ++p) {
            const double v = panel_influence(panels_[p], r, &g);
            const double* q = &charges_[p * nb];
            for (std::size_t b = 0; b < nb; ++b) {
                out.phi[b] += q[b] * v;
                out.grad[b] += q[b] * g;
            }
        }
    }

    void solve()
    {
        const auto n = static_cast<Eigen::Index>(panels_.size());
        const auto nb = static_cast<Eigen::Index>(size());
        info_.panel_count = panels_.size();
        auto entry = [&](Eigen::Index i, Eigen::Index j) {
            return panel_influence(panels_[j], panels_[i].centroid(), nullptr);
        };
        Eigen::MatrixXd a(n, n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < n; ++i) a(i, j) = entry(i, j);
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, nb);
        for (Eigen::Index i = 0; i < n; ++i)
            if (panels_[i].basis >= 0) rhs(i, panels_[i].basis) = 1.0;

        Eigen::PartialPivLU<Eigen::Ref<Eigen::MatrixXd>> lu(a);
        const double rcond = lu.rcond();
        info_.condition_estimate = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
        if (!(rcond > 1e-14))
            throw NumericError("bem: collocation matrix is singular or ill-conditioned (condition estimate " +
                               std::to_string(info_.condition_estimate) + ")");
        const Eigen::MatrixXd q = lu.solve(rhs);

        // Residual against a freshly assembled matrix (a holds the factors now).
        Eigen::MatrixXd residual = -rhs;
        Eigen::VectorXd row(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) row(j) = entry(i, j);
            residual.row(i) += row.transpose() * q;
        }
        info_.residual_norm = 0.0;
        for (Eigen::Index b = 0; b < nb; ++b) {
            const double bn = rhs.col(b).norm();
            if (bn > 0.0) info_.residual_norm = std::max(info_.residual_norm, residual.col(b).norm() / bn);
        }
        if (!(info_.residual_norm < 1e-8))
            throw NumericError("bem: residual " + std::to_string(info_.residual_norm) +
                               " exceeds 1e-8 (condition estimate " + std::to_string(info_.condition_estimate) + ")");

        charges_.resize(panels_.size() * size());
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index b = 0; b < nb; ++b) charges_[p * nb + b] = q(p, b);
    }

    std::vector<Panel> panels_;
    std::vector<double> charges_; // [panel][basis], in units of sigma / epsilon0
};

} // namespace

BasisPtr solve_bem(const ElectrodeLayout& layout, int panels_per_dimension, const BemOptions& options)
{
    validate(layout);
    return std::make_shared<BemBasis>(layout, panels_per_dimension, options);
}

} // namespace surftrap
