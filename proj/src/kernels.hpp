#pragma once

// Closed-form kernels for axis-aligned rectangles in horizontal planes.

#include <cmath>

#include "surftrap/units.hpp"

namespace surftrap::detail {

struct KernelResult {
    double value = 0.0;
    Vec3 grad = Vec3::Zero();
    Mat3 hess = Mat3::Zero();
};

/// Potential at (x, y, z) of the rectangle [x1,x2]x[z1,z2] held at 1 V in an otherwise
/// grounded plane y = 0: its solid angle over 2 pi. Odd in y, which the image series uses.
/// Accumulates scale * (value, grad, hess) into out.
inline void halfspace_rect(double x1, double x2, double z1, double z2, const Vec3& r, double scale,
                           bool with_hessian, KernelResult& out)
{
    const double y = r.y();
    const double y2 = y * y;
    const double xs[2] = {x2 - r.x(), x1 - r.x()};
    const double zs[2] = {z2 - r.z(), z1 - r.z()};
    const double k = scale / (2.0 * constants::pi);
    for (int i = 0; i < 2; ++i) {
        const double X = xs[i];
        const double P = X * X + y2;
        for (int j = 0; j < 2; ++j) {
            const double s = ((i + j) % 2 == 0 ? 1.0 : -1.0) * k;
            const double Z = zs[j];
            const double S = Z * Z + y2;
            const double R2 = X * X + Z * Z + y2;
            const double R = std::sqrt(R2);
            out.value += s * std::atan(X * Z / (y * R));
            const double FX = Z * y / (R * P);
            const double FZ = X * y / (R * S);
            const double FY = -X * Z * (R2 + y2) / (R * P * S);
            out.grad.x() -= s * FX;
            out.grad.y() += s * FY;
            out.grad.z() -= s * FZ;
            if (with_hessian) {
                const double R3 = R2 * R;
                const double FXX = -X * Z * y * (1.0 / (R3 * P) + 2.0 / (R * P * P));
                const double FZZ = -X * Z * y * (1.0 / (R3 * S) + 2.0 / (R * S * S));
                const double FXZ = y / R3;
                const double FXY = Z * (1.0 / (R * P) - y2 / (R3 * P) - 2.0 * y2 / (R * P * P));
                const double FZY = X * (1.0 / (R * S) - y2 / (R3 * S) - 2.0 * y2 / (R * S * S));
                const double FYY = -(FXX + FZZ);
                Mat3& h = out.hess;
                h(0, 0) += s * FXX;
                h(1, 1) += s * FYY;
                h(2, 2) += s * FZZ;
                h(0, 1) -= s * FXY;
                h(1, 0) -= s * FXY;
                h(0, 2) += s * FXZ;
                h(2, 0) += s * FXZ;
                h(1, 2) -= s * FZY;
                h(2, 1) -= s * FZY;
            }
        }
    }
}

/// (1/4pi) * integral over a uniformly charged (unit density) rectangle at height yp of
/// 1/|r - r'|, and its gradient with respect to r.
inline double panel_potential(double x1, double x2, double z1, double z2, double yp, const Vec3& r, Vec3* grad)
{
    const double d = yp - r.y();
    const double d2 = d * d;
    const double us[2] = {x2 - r.x(), x1 - r.x()};
    const double vs[2] = {z2 - r.z(), z1 - r.z()};
    const double tiny = 1e-14 * (std::abs(us[0]) + std::abs(us[1]) + std::abs(vs[0]) + std::abs(vs[1]));
    double v = 0.0;
    double gx = 0.0, gy = 0.0, gz = 0.0;
    for (int i = 0; i < 2; ++i) {
        const double u = us[i];
        const double rho_u = std::sqrt(u * u + d2);
        for (int j = 0; j < 2; ++j) {
            const double s = (i + j) % 2 == 0 ? 1.0 : -1.0;
            const double w = vs[j];
            const double rho_v = std::sqrt(w * w + d2);
            const double R = std::sqrt(u * u + w * w + d2);
            const double ash_v = rho_u > tiny ? std::asinh(w / rho_u) : 0.0;
            const double ash_u = rho_v > tiny ? std::asinh(u / rho_v) : 0.0;
            const double at = std::abs(d) > tiny && R > 0.0 ? std::atan(u * w / (d * R)) : 0.0;
            v += s * (u * ash_v + w * ash_u - d * at);
            gx -= s * ash_v;
            gz -= s * ash_u;
            gy += s * at;
        }
    }
    constexpr double inv4pi = 1.0 / (4.0 * constants::pi);
    if (grad) *grad = Vec3(gx, gy, gz) * inv4pi;
    return v * inv4pi;
}

} // namespace surftrap::detail
