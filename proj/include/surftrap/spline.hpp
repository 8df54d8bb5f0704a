#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "surftrap/units.hpp"

namespace surftrap {

/// Interpolating tricubic B-spline on a uniform grid (natural end conditions).
/// Accurate to O(h^4) away from the outermost few cells.
class SplineField {
public:
    SplineField() = default;
    /// samples indexed [ix + nx * (iy + ny * iz)] at origin + (ix, iy, iz) * spacing.
    SplineField(const Vec3& origin, double spacing, std::array<std::size_t, 3> counts,
                const std::vector<double>& samples);

    double value(const Vec3& r) const;
    /// Value and gradient in one pass.
    double value_gradient(const Vec3& r, Vec3& grad) const;
    double value_gradient_hessian(const Vec3& r, Vec3& grad, Mat3& hess) const;

    bool inside(const Vec3& r) const;
    const Vec3& origin() const { return origin_; }
    double spacing() const { return spacing_; }
    const std::array<std::size_t, 3>& counts() const { return counts_; }

    SplineField& operator+=(const SplineField& other);
    SplineField& operator*=(double s);
    /// this += s * other (same grid).
    void add_scaled(const SplineField& other, double s);

private:
    template <int Order>
    double eval(const Vec3& r, Vec3* grad, Mat3* hess) const;

    Vec3 origin_ = Vec3::Zero();
    double spacing_ = 1.0;
    std::array<std::size_t, 3> counts_{0, 0, 0}; // sample counts
    std::array<std::size_t, 3> dims_{0, 0, 0};   // coefficient counts (samples + 2)
    std::vector<double> coeffs_;
};

} // namespace surftrap
