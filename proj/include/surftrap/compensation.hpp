#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "surftrap/electrostatics.hpp"

namespace surftrap {

// ---------------------------------------------------------------------------
// Stray-field model

struct ShiftPrediction {
    double omega1 = 0.0; // rad/s
    double x0 = 0.0;     // m, cloud center offset along the axis
};

/// omega1 = sqrt(omega^2 + Q E1 / m), x0 = Q E0 / (m omega1^2). Throws NumericError when
/// the gradient is anti-trapping (omega1^2 <= 0), ConfigError for omega <= 0.
ShiftPrediction predict_shift(const IonSpecies& ion, double omega, double e0, double e1);
ShiftPrediction predict_shift(const IonSpecies& ion, double omega, const StrayField& stray, int axis);

// ---------------------------------------------------------------------------
// Virtual fluorescence scan

struct FluorescenceScanConfig {
    double spot_fwhm = 60e-6;      // m, laser spot full width at half maximum
    int axis = 0;                  // 0 x, 1 y, 2 z
    std::optional<double> center;  // m, scan center along the axis; the rf null when unset
    double half_range = 0.0;       // m; 0 selects 4 sigma of the expected profile
    int samples = 61;
    double noise = 0.01;           // fractional (multiplicative) noise sigma
    double temperature = 1000.0;   // K, cloud temperature

    double spot_sigma() const;
};

struct Profile {
    std::vector<double> position;  // m along the scan axis
    std::vector<double> intensity; // arbitrary units, peak 1 before noise
    double true_center = 0.0;      // m, cloud center along the axis
    double true_sigma = 0.0;       // m, cloud (x) spot width
};

/// Cloud density exp(-U/kT) in the harmonic approximation about the minimum of the
/// potential, marginalised onto the scan axis and convolved with the spot.
/// Throws NumericError when the potential does not trap.
Profile synth_profile(const SecularPotential& potential, const FluorescenceScanConfig& scan, std::uint64_t seed,
                      const std::optional<Vec3>& rf_null = {});

struct GaussianFit {
    double center = 0.0, center_sigma = 0.0;
    double width = 0.0, width_sigma = 0.0;
    double amplitude = 0.0, offset = 0.0;
    double rss = 0.0;
    int iterations = 0;
    bool at_edge = false; // peak at the first/last sample or fitted center outside the scan
};

/// Levenberg-Marquardt fit of A exp(-(x-c)^2 / 2w^2) + B. Uncertainties from the covariance
/// scaled by the residual variance.
GaussianFit fit_gaussian(const std::vector<double>& x, const std::vector<double>& y);

// ---------------------------------------------------------------------------
// E0 extraction

struct CenterRecord {
    double v_rf = 0.0;         // V (informational)
    double omega1 = 0.0;       // rad/s
    double center = 0.0;       // m
    double center_sigma = 0.0; // m
};

struct E0Fit {
    double e0 = 0.0, e0_sigma = 0.0;               // V/m
    double intercept = 0.0, intercept_sigma = 0.0; // m, center as 1/omega1^2 -> 0
    double slope = 0.0, slope_sigma = 0.0;         // m s^-2 ... center vs 1/omega1^2
    double chi2 = 0.0;
    int dof = 0;
};

/// Weighted linear fit of center against 1/omega1^2; E0 = slope m / Q. Weights 1/sigma^2
/// (absolute), so the quoted sigma is from the stated center errors alone.
E0Fit extract_E0(const std::vector<CenterRecord>& records, const IonSpecies& ion);

// ---------------------------------------------------------------------------
// Compensation scan

enum class OmegaSource { hessian, tickle };

struct CompensationInputs {
    BasisPtr basis;
    VoltageSet volts;                 // base voltages (control value overrides its entry)
    IonSpecies ion;
    StrayField stray;                 // injected stray field
    std::vector<double> v_rf_values;  // rf amplitudes for the 1/omega1^2 fit
    FluorescenceScanConfig scan;      // axis selects the field component
    OmegaSource omega_source = OmegaSource::hessian;
    std::string tickle_electrode = "V5"; // drive electrode in tickle mode
    std::uint64_t seed = 1;
    int threads = 0;
};

struct ControlPoint {
    double value = 0.0;           // V on the control electrode
    bool valid = false;
    std::string error;            // why the point was dropped
    std::vector<CenterRecord> records;
    E0Fit fit;
};

struct CompensationReport {
    std::string control;
    int axis = 0;
    int degree = 1;
    std::vector<ControlPoint> points;
    std::vector<double> poly;     // E(V) coefficients, ascending powers
    double root = 0.0, root_sigma = 0.0;
    bool extrapolated = false;    // no sign change across the valid points
    Profile example_profile;      // first rf setting at the control value closest to the root
    GaussianFit example_fit;
};

/// Measures E0 along scan.axis at each control value and fits E0(V) with a polynomial of
/// the given degree; the reported root is the compensating voltage.
CompensationReport compensation_scan(const CompensationInputs& inputs, const std::string& control,
                                     const std::vector<double>& values, int degree = 1);

struct CompensationStep {
    std::string control;
    int axis = 1;
    double span = 2.0; // V, values are current +- span
    int points = 9;
    int degree = 1;
};

struct CompensationResult {
    VoltageSet volts;                        // with the compensating voltages applied
    std::vector<CompensationReport> reports; // in execution order
};

/// Runs the steps in order, applying each root before the next step, repeated `rounds`
/// times (controls couple across axes).
CompensationResult compensate(const CompensationInputs& inputs, const std::vector<CompensationStep>& steps,
                              int rounds = 3);

/// Frequency of the eigenmode most aligned with the axis.
double mode_frequency_along(const Mat3& hessian, double mass, int axis);

std::string profile_csv(const Profile& p);                  // pos_um,intensity
std::string records_csv(const std::vector<CenterRecord>& r); // inv_w1sq,center_um,center_sigma_um
std::string control_csv(const CompensationReport& r);        // control_V,E_field_V_per_m,sigma

} // namespace surftrap
