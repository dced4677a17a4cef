#pragma once

#include <optional>
#include <span>
#include <vector>

#include "franson/materials.hpp"
#include "franson/units.hpp"

namespace franson {

/// Monochromatic pump, quasi-phase-matched crystal, collinear type-0.
class SpdcSource {
public:
    struct Params {
        double pump_wavelength_nm = 532.0;
        double pump_power_w = 1.0;
        double crystal_length_mm = 5.0;
        double temperature_c = 50.0;
        std::optional<double> poling_period_um;
    };

    SpdcSource(MaterialModel crystal, Params params);

    const MaterialModel& crystal() const { return crystal_; }
    const Params& params() const { return params_; }

    double pump_omega() const { return omega_p_; }
    /// omega_p / 2, the degenerate frequency.
    double degenerate_omega() const { return omega_d_; }
    double crystal_length_m() const { return params_.crystal_length_mm * 1e-3; }
    double temperature_c() const { return params_.temperature_c; }

    bool calibrated() const { return params_.poling_period_um.has_value(); }
    /// Throws CalibrationError when uncalibrated.
    double poling_period_um() const;

    SpdcSource with_poling_period(double period_um) const;
    SpdcSource with_crystal_length(double length_mm) const;
    SpdcSource with_temperature(double temperature_c) const;

private:
    MaterialModel crystal_;
    Params params_;
    double omega_p_;
    double omega_d_;
};

/// Uniform detuning grid Delta_omega_j symmetric about omega_d.
class SpectralGrid {
public:
    SpectralGrid(double center, double half_span, std::size_t sample_count);

    /// Grid whose half-span covers both signal wavelength bounds.
    static SpectralGrid covering(double center, double min_signal_nm, double max_signal_nm,
                                 std::size_t sample_count);
    /// Default grid for the source: 800-1600 nm signal band, 2^14 samples.
    static SpectralGrid default_for(const SpdcSource& source, std::size_t sample_count = 1u << 14);

    double center() const { return center_; }
    double half_span() const { return half_span_; }
    std::size_t size() const { return detuning_.size(); }
    double spacing() const { return spacing_; }

    /// Detuning Delta_omega_j (rad/s); detuning(N-1-j) == -detuning(j) exactly.
    double detuning(std::size_t j) const { return detuning_[j]; }
    std::span<const double> detunings() const { return detuning_; }
    double signal_omega(std::size_t j) const { return center_ + detuning_[j]; }
    std::size_t mirror(std::size_t j) const { return size() - 1 - j; }

    bool same_as(const SpectralGrid& other) const;

private:
    double center_;
    double half_span_;
    double spacing_;
    std::vector<double> detuning_;
};

/// Phi_j = sinc(Delta_k L / 2) sampled on a grid.
class PhaseMatchingFunction {
public:
    PhaseMatchingFunction(SpectralGrid grid, std::vector<double> amplitude);

    const SpectralGrid& grid() const { return grid_; }
    std::span<const double> amplitude() const { return amplitude_; }
    std::span<const double> squared() const { return squared_; }

private:
    SpectralGrid grid_;
    std::vector<double> amplitude_;
    std::vector<double> squared_;
};

/// sin(x)/x with sinc(0) = 1.
double sinc(double x);

/// Phase mismatch k_p - k_s - k_i - 2 pi / Lambda (rad/m) at signal frequency.
double delta_k(const SpdcSource& source, double signal_omega);

/// Same quantity parameterized by detuning from omega_d; exactly even in
/// the detuning.
double delta_k_detuned(const SpdcSource& source, double detuning);

/// Poling period (um) that zeroes delta_k at degeneracy, by bracketing and
/// bisection. Returns a calibrated copy of the source.
SpdcSource calibrate_poling_period(const SpdcSource& source);
SpdcSource calibrate_poling_period(const SpdcSource& source, double temperature_c);

/// Phase-matching function on the grid. `stretch` > 1 widens |Phi|^2 in
/// detuning by sampling Phi(Delta_omega / stretch).
PhaseMatchingFunction phase_matching(const SpdcSource& source, const SpectralGrid& grid,
                                     double stretch = 1.0);

/// FWHM of |Phi|^2 expressed in signal wavelength (nm).
double spectrum_bandwidth_fwhm(const PhaseMatchingFunction& pmf);

/// Half-maximum detunings (low < 0 < high) located by linear interpolation.
struct HalfCrossings {
    double low;
    double high;
};
HalfCrossings spectrum_half_crossings(const PhaseMatchingFunction& pmf);

/// Photons per spectral mode, flux / (c Delta_lambda / lambda^2).
double photons_per_mode(double flux_per_s, double center_wavelength_nm, double bandwidth_fwhm_nm);

/// Effective crystal length (mm) whose |Phi|^2 bandwidth equals the target.
/// Keeps the poling period calibrated.
SpdcSource fit_crystal_length(const SpdcSource& source, const SpectralGrid& grid,
                              double target_bandwidth_nm);

}  // namespace franson
