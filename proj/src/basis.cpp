#include <algorithm>
#include <cmath>

#include "kernels.hpp"
#include "surftrap/electrostatics.hpp"
#include "surftrap/error.hpp"
#include "surftrap/parallel.hpp"

namespace surftrap {

std::string_view to_string(BasisMethod method)
{
    switch (method) {
    case BasisMethod::bem: return "bem";
    case BasisMethod::analytic: return "analytic";
    case BasisMethod::sampled: return "sampled";
    }
    return "analytic";
}

PotentialBasis::PotentialBasis(ElectrodeLayout layout) : layout_(std::move(layout))
{
    for (const auto& e : layout_.electrodes) {
        if (e.role == ElectrodeRole::rf) rf_index_ = names_.size();
        names_.push_back(e.name);
        dc_mask_.push_back(e.role == ElectrodeRole::dc);
    }
    if (layout_.top_plate) {
        names_.emplace_back(kTopPlateName);
        dc_mask_.push_back(true);
    }
}

std::optional<std::size_t> PotentialBasis::index_of(std::string_view name) const
{
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return i;
    return std::nullopt;
}

bool PotentialBasis::in_region(const Vec3& r) const
{
    if (!(r.y() > 0.0) || !r.allFinite()) return false;
    if (layout_.top_plate && !(r.y() < layout_.top_plate->height_m)) return false;
    return true;
}

void PotentialBasis::require_region(const Vec3& r) const
{
    if (!in_region(r))
        throw NumericError("point (" + std::to_string(r.x()) + ", " + std::to_string(r.y()) + ", " +
                           std::to_string(r.z()) + ") m is outside the field region");
}

double PotentialBasis::potential(std::size_t i, const Vec3& r) const
{
    BasisEval ev;
    evaluate(r, ev);
    return ev.phi.at(i);
}

Vec3 PotentialBasis::gradient(std::size_t i, const Vec3& r) const
{
    BasisEval ev;
    evaluate(r, ev);
    return ev.grad.at(i);
}

Mat3 PotentialBasis::hessian(std::size_t i, const Vec3& r) const
{
    BasisEval ev;
    evaluate(r, ev, HessianMode::all);
    return ev.hess.at(i);
}

void PotentialBasis::finite_difference_hessians(const Vec3& r, BasisEval& out, HessianMode mode) const
{
    const std::size_t n = size();
    out.hess.assign(n, Mat3::Zero());
    if (mode == HessianMode::none) return;
    const double scale = layout_.top_plate ? layout_.top_plate->height_m : 1e-3;
    const double h = 1e-5 * std::min(scale, r.y());
    BasisEval plus, minus;
    for (int a = 0; a < 3; ++a) {
        Vec3 rp = r, rm = r;
        rp[a] += h;
        rm[a] -= h;
        evaluate(rp, plus);
        evaluate(rm, minus);
        for (std::size_t i = 0; i < n; ++i) {
            if (mode == HessianMode::rf_only && i != rf_index_) continue;
            out.hess[i].col(a) = (plus.grad[i] - minus.grad[i]) / (2.0 * h);
        }
    }
    for (std::size_t i = 0; i < n; ++i) out.hess[i] = 0.5 * (out.hess[i] + out.hess[i].transpose()).eval();
}

// ---------------------------------------------------------------------------

namespace {

std::vector<Rect> rects_of(const Electrode& e)
{
    std::vector<Rect> out;
    for (std::size_t p = 0; p < e.polygons.size(); ++p) {
        auto r = as_axis_aligned_rect(e.polygons[p]);
        if (!r)
            throw ConfigError("electrode '" + e.name + "': polygon " + std::to_string(p) +
                              " is not an axis-aligned rectangle (unsupported by the field solvers)");
        out.push_back(*r);
    }
    return out;
}

class AnalyticBasis final : public PotentialBasis {
public:
    AnalyticBasis(const ElectrodeLayout& layout, const AnalyticOptions& options)
        : PotentialBasis(layout), options_(options)
    {
        for (const auto& e : layout_.electrodes) rects_.push_back(rects_of(e));
        if (layout_.top_plate) {
            plate_height_ = layout_.top_plate->height_m;
            // Far images: pair (n, -n) contributes -A y / (4 pi n^3 h^3) to leading order.
            double zeta_tail = 1.2020569031595942854; // zeta(3)
            for (int n = 1; n <= options_.image_pairs; ++n) zeta_tail -= 1.0 / (double(n) * n * n);
            tail_coeff_ = -zeta_tail / (4.0 * constants::pi * plate_height_ * plate_height_ * plate_height_);
        }
    }

    BasisMethod method() const override { return BasisMethod::analytic; }

    void evaluate(const Vec3& r, BasisEval& out, HessianMode mode) const override
    {
        require_region(r);
        const std::size_t n = size();
        out.phi.assign(n, 0.0);
        out.grad.assign(n, Vec3::Zero());
        out.hess.assign(n, Mat3::Zero());
        const int pairs = plate_height_ > 0.0 ? options_.image_pairs : 0;
        for (std::size_t i = 0; i < rects_.size(); ++i) {
            const bool hess = mode == HessianMode::all || (mode == HessianMode::rf_only && i == rf_index_);
            detail::KernelResult acc;
            double area = 0.0;
            for (const auto& rc : rects_[i]) {
                area += (rc.x2 - rc.x1) * (rc.z2 - rc.z1);
                for (int m = -pairs; m <= pairs; ++m) {
                    const Vec3 ri(r.x(), r.y() - 2.0 * m * plate_height_, r.z());
                    detail::halfspace_rect(rc.x1, rc.x2, rc.z1, rc.z2, ri, 1.0, hess, acc);
                }
            }
            if (plate_height_ > 0.0) {
                acc.value += tail_coeff_ * area * r.y();
                acc.grad.y() += tail_coeff_ * area;
            }
            out.phi[i] = acc.value;
            out.grad[i] = acc.grad;
            out.hess[i] = acc.hess;
        }
        if (plate_height_ > 0.0) {
            const std::size_t t = n - 1;
            out.phi[t] = r.y() / plate_height_;
            out.grad[t] = Vec3(0.0, 1.0 / plate_height_, 0.0);
        }
    }

private:
    AnalyticOptions options_;
    std::vector<std::vector<Rect>> rects_;
    double plate_height_ = 0.0;
    double tail_coeff_ = 0.0;
};

} // namespace

BasisPtr make_analytic_basis(const ElectrodeLayout& layout, const AnalyticOptions& options)
{
    validate(layout);
    if (options.image_pairs < 0) throw ConfigError("analytic: image_pairs must be >= 0");
    return std::make_shared<AnalyticBasis>(layout, options);
}

double analytic_strip_potential(std::span<const Strip> strips, double x, double y)
{
    if (!(y > 0.0)) throw NumericError("analytic_strip_potential: requires y > 0");
    double v = 0.0;
    for (const auto& s : strips) v += s.volts / constants::pi * (std::atan((s.x2 - x) / y) - std::atan((s.x1 - x) / y));
    return v;
}

Eigen::Vector2d analytic_strip_gradient(std::span<const Strip> strips, double x, double y)
{
    if (!(y > 0.0)) throw NumericError("analytic_strip_gradient: requires y > 0");
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    for (const auto& s : strips) {
        const double a2 = s.x2 - x, a1 = s.x1 - x;
        const double d2 = a2 * a2 + y * y, d1 = a1 * a1 + y * y;
        g.x() += s.volts / constants::pi * (-y / d2 + y / d1);
        g.y() += s.volts / constants::pi * (-a2 / d2 + a1 / d1);
    }
    return g;
}

// ---------------------------------------------------------------------------

SampledBasis::SampledBasis(const PotentialBasis& source, const SampleBox& box, double spacing, int threads)
    : PotentialBasis(source.layout()), box_(box), source_method_(source.method())
{
    info_ = source.info();
    if (!(spacing > 0.0)) throw ConfigError("sampled basis: spacing must be > 0");
    std::array<std::size_t, 3> counts{};
    for (int a = 0; a < 3; ++a) {
        const double span = box.hi[a] - box.lo[a];
        if (!(span > 0.0)) throw ConfigError("sampled basis: empty box");
        counts[a] = static_cast<std::size_t>(std::ceil(span / spacing)) + 1;
    }
    const std::size_t total = counts[0] * counts[1] * counts[2];
    const std::size_t nf = source.size();
    std::vector<std::vector<double>> samples(nf, std::vector<double>(total));
    auto point = [&](std::size_t idx) {
        const std::size_t ix = idx % counts[0];
        const std::size_t iy = (idx / counts[0]) % counts[1];
        const std::size_t iz = idx / (counts[0] * counts[1]);
        return Vec3(box.lo.x() + ix * spacing, box.lo.y() + iy * spacing, box.lo.z() + iz * spacing);
    };
    parallel_for(total, threads, [&](std::size_t begin, std::size_t end) {
        BasisEval ev;
        for (std::size_t idx = begin; idx < end; ++idx) {
            source.evaluate(point(idx), ev);
            for (std::size_t f = 0; f < nf; ++f) samples[f][idx] = ev.phi[f];
        }
    });
    for (std::size_t f = 0; f < nf; ++f) splines_.emplace_back(box.lo, spacing, counts, samples[f]);
    box_.hi = box.lo + Vec3(double(counts[0] - 1), double(counts[1] - 1), double(counts[2] - 1)) * spacing;
}

bool SampledBasis::in_region(const Vec3& r) const
{
    return PotentialBasis::in_region(r) && !splines_.empty() && splines_.front().inside(r);
}

void SampledBasis::evaluate(const Vec3& r, BasisEval& out, HessianMode mode) const
{
    require_region(r);
    const std::size_t n = size();
    out.phi.resize(n);
    out.grad.resize(n);
    out.hess.assign(n, Mat3::Zero());
    for (std::size_t i = 0; i < n; ++i) {
        const bool hess = mode == HessianMode::all || (mode == HessianMode::rf_only && i == rf_index_);
        out.phi[i] = hess ? splines_[i].value_gradient_hessian(r, out.grad[i], out.hess[i])
                          : splines_[i].value_gradient(r, out.grad[i]);
    }
}

SplineField SampledBasis::combine(std::span<const double> weights) const
{
    if (weights.size() != size()) throw ConfigError("sampled basis: weight count mismatch");
    SplineField out = splines_.front();
    out *= weights[0];
    for (std::size_t i = 1; i < size(); ++i)
        if (weights[i] != 0.0) out.add_scaled(splines_[i], weights[i]);
    return out;
}

} // namespace surftrap
