#include <cmath>

#include "surftrap/electrostatics.hpp"
#include "surftrap/error.hpp"

namespace surftrap {

double StrayField::energy(const Vec3& r, double charge) const
{
    const Vec3 d = r - origin;
    return charge * (-e0.dot(d) + 0.5 * (e1.array() * d.array().square()).sum());
}

Vec3 StrayField::energy_gradient(const Vec3& r, double charge) const
{
    const Vec3 d = r - origin;
    return charge * (-e0 + Vec3(e1.array() * d.array()));
}

Vec3 StrayField::field(const Vec3& r) const
{
    const Vec3 d = r - origin;
    return e0 - Vec3(e1.array() * d.array());
}

std::vector<double> dc_weights(const PotentialBasis& basis, const VoltageSet& volts)
{
    std::vector<double> w(basis.size(), 0.0);
    for (std::size_t i = 0; i < basis.size(); ++i)
        if (basis.is_dc(i)) w[i] = volts.dc_voltage(basis.names()[i]);
    for (const auto& [name, v] : volts.dc)
        if (!basis.index_of(name) && v != 0.0)
            throw ConfigError("voltage given for unknown electrode '" + name + "'");
    return w;
}

SecularPotential::SecularPotential(BasisPtr basis, VoltageSet volts, IonSpecies ion, StrayField stray)
    : basis_(std::move(basis)), volts_(std::move(volts)), ion_(ion), stray_(stray)
{
    if (!basis_) throw ConfigError("secular potential: no basis");
    if (!(ion_.mass > 0.0)) throw ConfigError("ion mass must be > 0");
    if (!(volts_.omega_rf > 0.0)) throw ConfigError("rf frequency must be > 0");
    dc_weights_ = surftrap::dc_weights(*basis_, volts_);
    const double q = ion_.charge, v = volts_.v_rf_amplitude, w = volts_.omega_rf;
    rf_prefactor_ = q * q * v * v / (4.0 * ion_.mass * w * w);
    const auto& plate = basis_->layout().top_plate;
    length_scale_ = plate ? plate->height_m : 1e-3;
}

SecularPotential SecularPotential::from_functions(EnergyFn energy, GradientFn gradient, IonSpecies ion,
                                                  double length_scale)
{
    if (!energy || !gradient) throw ConfigError("secular potential: missing callables");
    SecularPotential p;
    p.ion_ = ion;
    p.length_scale_ = length_scale;
    p.energy_fn_ = std::move(energy);
    p.gradient_fn_ = std::move(gradient);
    return p;
}

bool SecularPotential::in_region(const Vec3& r) const
{
    if (energy_fn_) return r.allFinite();
    return basis_->in_region(r);
}

SecularPotential::Terms SecularPotential::terms(const Vec3& r) const
{
    Terms t;
    if (energy_fn_) {
        t.dc = energy_fn_(r);
        return t;
    }
    BasisEval ev;
    basis_->evaluate(r, ev);
    t.rf = rf_prefactor_ * ev.grad[basis_->rf_index()].squaredNorm();
    double phi_dc = 0.0;
    for (std::size_t i = 0; i < ev.phi.size(); ++i) phi_dc += dc_weights_[i] * ev.phi[i];
    t.dc = ion_.charge * phi_dc;
    t.stray = stray_.energy(r, ion_.charge);
    return t;
}

double SecularPotential::energy(const Vec3& r) const { return terms(r).total(); }

Vec3 SecularPotential::gradient(const Vec3& r) const
{
    if (gradient_fn_) return gradient_fn_(r);
    BasisEval ev;
    basis_->evaluate(r, ev, HessianMode::rf_only);
    const std::size_t rf = basis_->rf_index();
    Vec3 g = 2.0 * rf_prefactor_ * ev.hess[rf] * ev.grad[rf];
    for (std::size_t i = 0; i < ev.grad.size(); ++i)
        if (dc_weights_[i] != 0.0) g += ion_.charge * dc_weights_[i] * ev.grad[i];
    return g + stray_.energy_gradient(r, ion_.charge);
}

Mat3 SecularPotential::hessian(const Vec3& r) const
{
    const double h = 1e-5 * length_scale_;
    Mat3 out;
    for (int a = 0; a < 3; ++a) {
        Vec3 rp = r, rm = r;
        rp[a] += h;
        rm[a] -= h;
        out.col(a) = (gradient(rp) - gradient(rm)) / (2.0 * h);
    }
    return 0.5 * (out + out.transpose());
}

double secular_potential(const BasisPtr& basis, const VoltageSet& volts, const IonSpecies& ion, const Vec3& r)
{
    return SecularPotential(basis, volts, ion).energy_ev(r);
}

Vec3 field_at(const PotentialBasis& basis, const VoltageSet& volts, const Vec3& r, double phase)
{
    BasisEval ev;
    basis.evaluate(r, ev);
    const auto w = dc_weights(basis, volts);
    // cos(pi/2) rounds to 6e-17; snap the rf nodes to an exact zero.
    const double c = std::abs(std::remainder(phase - 0.5 * constants::pi, constants::pi)) < 1e-12 ? 0.0 : std::cos(phase);
    Vec3 e = -c * volts.v_rf_amplitude * ev.grad[basis.rf_index()];
    for (std::size_t i = 0; i < w.size(); ++i) e -= w[i] * ev.grad[i];
    return e;
}

} // namespace surftrap
