#include "surftrap/spline.hpp"

#include <cmath>
#include <stdexcept>

namespace surftrap {

namespace {

// Solves for n + 2 B-spline coefficients interpolating n samples with natural ends
// (zero second derivative). in/out are strided views.
void prefilter_line(const double* in, std::size_t in_stride, double* out, std::size_t out_stride,
                    std::size_t n, std::vector<double>& scratch)
{
    auto o = [&](std::ptrdiff_t k) -> double& { return out[(k + 1) * static_cast<std::ptrdiff_t>(out_stride)]; };
    if (n == 1) {
        o(-1) = o(0) = o(1) = in[0];
        return;
    }
    // Natural ends give c_0 = f_0, c_{n-1} = f_{n-1}; interior is c_{i-1} + 4 c_i + c_{i+1} = 6 f_i.
    o(0) = in[0];
    o(static_cast<std::ptrdiff_t>(n) - 1) = in[(n - 1) * in_stride];
    if (n > 2) {
        const std::size_t m = n - 2;
        scratch.assign(2 * m, 0.0);
        double* cp = scratch.data();
        double* dp = scratch.data() + m;
        for (std::size_t i = 0; i < m; ++i) {
            double rhs = 6.0 * in[(i + 1) * in_stride];
            if (i == 0) rhs -= in[0];
            if (i == m - 1) rhs -= in[(n - 1) * in_stride];
            const double denom = 4.0 - (i > 0 ? cp[i - 1] : 0.0);
            cp[i] = 1.0 / denom;
            dp[i] = (rhs - (i > 0 ? dp[i - 1] : 0.0)) / denom;
        }
        for (std::size_t ii = m; ii-- > 0;) {
            const double next = (ii + 1 < m) ? o(static_cast<std::ptrdiff_t>(ii) + 2) : 0.0;
            o(static_cast<std::ptrdiff_t>(ii) + 1) = dp[ii] - cp[ii] * next;
        }
    }
    o(-1) = 2.0 * o(0) - o(1);
    const auto last = static_cast<std::ptrdiff_t>(n) - 1;
    o(last + 1) = 2.0 * o(last) - o(last - 1);
}

struct Weights {
    double w[4];
    double d[4];
    double dd[4];
};

inline void bspline_weights(double t, Weights& wt, int order)
{
    const double t2 = t * t, t3 = t2 * t, u = 1.0 - t;
    wt.w[0] = u * u * u / 6.0;
    wt.w[1] = (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0;
    wt.w[2] = (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0;
    wt.w[3] = t3 / 6.0;
    if (order >= 1) {
        wt.d[0] = -0.5 * u * u;
        wt.d[1] = 0.5 * (3.0 * t2 - 4.0 * t);
        wt.d[2] = 0.5 * (-3.0 * t2 + 2.0 * t + 1.0);
        wt.d[3] = 0.5 * t2;
    }
    if (order >= 2) {
        wt.dd[0] = u;
        wt.dd[1] = 3.0 * t - 2.0;
        wt.dd[2] = 1.0 - 3.0 * t;
        wt.dd[3] = t;
    }
}

} // namespace

SplineField::SplineField(const Vec3& origin, double spacing, std::array<std::size_t, 3> counts,
                         const std::vector<double>& samples)
    : origin_(origin), spacing_(spacing), counts_(counts)
{
    const auto [nx, ny, nz] = counts;
    if (nx < 2 || ny < 2 || nz < 2) throw std::invalid_argument("SplineField: need >= 2 samples per axis");
    if (samples.size() != nx * ny * nz) throw std::invalid_argument("SplineField: sample count mismatch");
    dims_ = {nx + 2, ny + 2, nz + 2};
    const auto [dx, dy, dz] = dims_;
    std::vector<double> scratch;

    // Pass 1 (x): samples (nx, ny, nz) -> a (dx, ny, nz)
    std::vector<double> a(dx * ny * nz);
    for (std::size_t k = 0; k < nz; ++k)
        for (std::size_t j = 0; j < ny; ++j)
            prefilter_line(&samples[nx * (j + ny * k)], 1, &a[dx * (j + ny * k)], 1, nx, scratch);
    // Pass 2 (y): a -> b (dx, dy, nz)
    std::vector<double> b(dx * dy * nz);
    for (std::size_t k = 0; k < nz; ++k)
        for (std::size_t i = 0; i < dx; ++i)
            prefilter_line(&a[i + dx * ny * k], dx, &b[i + dx * dy * k], dx, ny, scratch);
    a.clear();
    a.shrink_to_fit();
    // Pass 3 (z): b -> coeffs (dx, dy, dz)
    coeffs_.assign(dx * dy * dz, 0.0);
    for (std::size_t j = 0; j < dy; ++j)
        for (std::size_t i = 0; i < dx; ++i)
            prefilter_line(&b[i + dx * j], dx * dy, &coeffs_[i + dx * j], dx * dy, nz, scratch);
}

bool SplineField::inside(const Vec3& r) const
{
    for (int a = 0; a < 3; ++a) {
        const double u = (r[a] - origin_[a]) / spacing_;
        if (!(u >= 0.0) || u > static_cast<double>(counts_[a] - 1)) return false;
    }
    return true;
}

template <int Order>
double SplineField::eval(const Vec3& r, Vec3* grad, Mat3* hess) const
{
    std::size_t cell[3];
    Weights wt[3];
    for (int a = 0; a < 3; ++a) {
        const double u = (r[a] - origin_[a]) / spacing_;
        const double maxcell = static_cast<double>(counts_[a] - 2);
        double fl = std::floor(u);
        if (fl < 0.0) fl = 0.0;
        if (fl > maxcell) fl = maxcell;
        cell[a] = static_cast<std::size_t>(fl);
        bspline_weights(u - fl, wt[a], Order);
    }
    // Coefficient index of sample i is i + 1; cell i uses coefficients i .. i + 3.
    const std::size_t dx = dims_[0], dxy = dims_[0] * dims_[1];
    double v = 0.0;
    double gx = 0.0, gy = 0.0, gz = 0.0;
    double hxx = 0.0, hyy = 0.0, hzz = 0.0, hxy = 0.0, hxz = 0.0, hyz = 0.0;
    for (int k = 0; k < 4; ++k) {
        for (int j = 0; j < 4; ++j) {
            const double* row = &coeffs_[cell[0] + dx * (cell[1] + j) + dxy * (cell[2] + k)];
            double s = 0.0, sx = 0.0, sxx = 0.0;
            for (int i = 0; i < 4; ++i) {
                s += wt[0].w[i] * row[i];
                if constexpr (Order >= 1) sx += wt[0].d[i] * row[i];
                if constexpr (Order >= 2) sxx += wt[0].dd[i] * row[i];
            }
            const double wyz = wt[1].w[j] * wt[2].w[k];
            v += s * wyz;
            if constexpr (Order >= 1) {
                const double dyz = wt[1].d[j] * wt[2].w[k];
                const double ydz = wt[1].w[j] * wt[2].d[k];
                gx += sx * wyz;
                gy += s * dyz;
                gz += s * ydz;
                if constexpr (Order >= 2) {
                    hxx += sxx * wyz;
                    hyy += s * wt[1].dd[j] * wt[2].w[k];
                    hzz += s * wt[1].w[j] * wt[2].dd[k];
                    hxy += sx * dyz;
                    hxz += sx * ydz;
                    hyz += s * wt[1].d[j] * wt[2].d[k];
                }
            }
        }
    }
    if constexpr (Order >= 1) {
        const double ih = 1.0 / spacing_;
        *grad = Vec3(gx, gy, gz) * ih;
        if constexpr (Order >= 2) {
            const double ih2 = ih * ih;
            *hess << hxx, hxy, hxz, hxy, hyy, hyz, hxz, hyz, hzz;
            *hess *= ih2;
        }
    }
    return v;
}

double SplineField::value(const Vec3& r) const { return eval<0>(r, nullptr, nullptr); }

double SplineField::value_gradient(const Vec3& r, Vec3& grad) const { return eval<1>(r, &grad, nullptr); }

double SplineField::value_gradient_hessian(const Vec3& r, Vec3& grad, Mat3& hess) const
{
    return eval<2>(r, &grad, &hess);
}

SplineField& SplineField::operator+=(const SplineField& other)
{
    add_scaled(other, 1.0);
    return *this;
}

SplineField& SplineField::operator*=(double s)
{
    for (auto& c : coeffs_) c *= s;
    return *this;
}

void SplineField::add_scaled(const SplineField& other, double s)
{
    if (other.counts_ != counts_ || other.spacing_ != spacing_ || other.origin_ != origin_)
        throw std::invalid_argument("SplineField: grids differ");
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += s * other.coeffs_[i];
}

} // namespace surftrap
