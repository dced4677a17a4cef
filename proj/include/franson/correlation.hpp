#pragma once

#include <array>
#include <complex>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "franson/compressor.hpp"
#include "franson/spdc.hpp"

namespace franson {

/// Taylor coefficients of a modal phase about omega_d: phi', phi'', phi'''
/// in fs, fs^2, fs^3.
struct PolynomialPhase {
    double gd_fs = 0.0;
    double gdd_fs2 = 0.0;
    double tod_fs3 = 0.0;

    /// sum phi^(n) x^n / n! at detuning x (rad/s).
    double operator()(double detuning) const;
};

/// Spectral phase of one arm, either a short polynomial or a ray-traced
/// compressor phase.
class ArmPhase {
public:
    static ArmPhase polynomial(PolynomialPhase coefficients);
    static ArmPhase polynomial(double gdd_fs2) { return polynomial(PolynomialPhase{0.0, gdd_fs2, 0.0}); }
    static ArmPhase raytraced(std::shared_ptr<const SpectralPhase> phase);

    bool is_polynomial() const { return std::holds_alternative<PolynomialPhase>(repr_); }
    const PolynomialPhase& poly() const { return std::get<PolynomialPhase>(repr_); }
    const SpectralPhase& traced() const { return *std::get<std::shared_ptr<const SpectralPhase>>(repr_); }

    /// phi^(1..3) at omega_d.
    PolynomialPhase coefficients() const;

    /// Phase at omega_d + detuning(j) (sign = +1) or omega_d - detuning(j)
    /// (sign = -1), with the constant phi(omega_d) dropped.
    double at(const SpectralGrid& grid, std::size_t j, int sign) const;

private:
    explicit ArmPhase(std::variant<PolynomialPhase, std::shared_ptr<const SpectralPhase>> r)
        : repr_(std::move(r)) {}
    std::variant<PolynomialPhase, std::shared_ptr<const SpectralPhase>> repr_;
};

/// theta_j sampled on a grid.
struct SampledPhase {
    SpectralGrid grid;
    std::vector<double> values;
};

/// theta(Delta_omega) = phi_s(omega_d + Delta_omega) + phi_i(omega_d - Delta_omega).
/// With two polynomial arms this is sum [phi_s^(n) + (-1)^n phi_i^(n)] x^n / n!.
SampledPhase combined_phase(const ArmPhase& signal, const ArmPhase& idler, const SpectralGrid& grid);

/// Adds a pure delay: theta_j + tau * Delta_omega_j. A stage that advances
/// the idler by tau moves the peak from tau0 to tau0 - tau.
SampledPhase with_delay(SampledPhase theta, double tau_fs);

/// a_j = |Phi_j|^2 exp(i theta_j).
struct BiphotonAmplitude {
    SpectralGrid grid;
    std::vector<std::complex<double>> samples;
};

BiphotonAmplitude assemble_amplitude(const PhaseMatchingFunction& pmf, const SampledPhase& theta);

struct CorrelationTrace {
    std::vector<double> tau_fs;  // uniform, ascending
    std::vector<double> rate;    // R(tau), >= 0
    double step_fs = 0.0;
    std::string normalization = "arbitrary";
};

struct TraceWindow {
    double center_fs = 0.0;
    double span_fs = 800.0;
    /// Requested sample count across the span; the FFT step is the largest
    /// power-of-two padding whose step does not exceed span/(samples-1) or
    /// 0.5 fs.
    std::size_t samples = 1601;
};

/// R(tau) = |sum_j a_j exp(i Delta_omega_j tau) d_omega|^2 on the window,
/// by zero-padded FFT. The exp(i omega_d tau) carrier is dropped.
/// Throws GridError when the window exceeds the alias-free period
/// 2 pi / d_omega.
CorrelationTrace correlation_trace(const BiphotonAmplitude& amplitude, const TraceWindow& window);

/// Whole FFT period, for conservation checks.
CorrelationTrace correlation_period(const BiphotonAmplitude& amplitude, double max_step_fs = 0.5);

/// Scales R so that `reference_height` maps to 1.
CorrelationTrace normalized(CorrelationTrace trace, double reference_height);

struct SecondaryMaximum {
    double tau_fs;
    double rate;
};

struct PeakMetrics {
    double height = 0.0;
    double peak_tau_fs = 0.0;
    double fwhm_fs = 0.0;
    double half_left_fs = 0.0;
    double half_right_fs = 0.0;
    double centroid_fs = 0.0;
    double skewness = 0.0;
    std::vector<SecondaryMaximum> secondary_maxima;
};

struct PeakOptions {
    /// Support for centroid and skewness: contiguous region above this
    /// fraction of the peak.
    double threshold_fraction = 0.1;
    /// Local maxima outside the half-height interval above this fraction of
    /// the peak are reported as secondary maxima.
    double secondary_fraction = 0.005;
};

PeakMetrics peak_metrics(const CorrelationTrace& trace, const PeakOptions& options = {});

/// residual_n = phi_s^(n) + (-1)^n phi_i^(n) for n = 1..3, indexed [n-1].
std::array<double, 3> cancellation_residual(const ArmPhase& signal, const ArmPhase& idler);

}  // namespace franson
