#include "franson/spdc.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "franson/error.hpp"

namespace franson {

SpdcSource::SpdcSource(MaterialModel crystal, Params params)
    : crystal_(std::move(crystal)), params_(params) {
    if (!(params_.crystal_length_mm > 0.0)) throw ConfigError("crystal length must be positive");
    if (!(params_.pump_wavelength_nm > 0.0)) throw ConfigError("pump wavelength must be positive");
    if (params_.poling_period_um && !(*params_.poling_period_um > 0.0)) {
        throw ConfigError("poling period must be positive");
    }
    omega_p_ = omega_from_nm(params_.pump_wavelength_nm);
    omega_d_ = 0.5 * omega_p_;
}

double SpdcSource::poling_period_um() const {
    if (!params_.poling_period_um) throw CalibrationError("source has no poling period; calibrate first");
    return *params_.poling_period_um;
}

SpdcSource SpdcSource::with_poling_period(double period_um) const {
    Params p = params_;
    p.poling_period_um = period_um;
    return SpdcSource(crystal_, p);
}

SpdcSource SpdcSource::with_crystal_length(double length_mm) const {
    Params p = params_;
    p.crystal_length_mm = length_mm;
    return SpdcSource(crystal_, p);
}

SpdcSource SpdcSource::with_temperature(double temperature_c) const {
    Params p = params_;
    p.temperature_c = temperature_c;
    return SpdcSource(crystal_, p);
}

SpectralGrid::SpectralGrid(double center, double half_span, std::size_t sample_count)
    : center_(center), half_span_(half_span) {
    if (!(center > 0.0)) throw GridError("grid center must be positive");
    if (!(half_span > 0.0) || half_span >= center) throw GridError("grid half-span must be in (0, center)");
    if (sample_count < 4 || !std::has_single_bit(sample_count)) {
        throw GridError("grid sample count must be a power of two >= 4");
    }
    const auto n = static_cast<double>(sample_count);
    spacing_ = 2.0 * half_span / (n - 1.0);
    detuning_.resize(sample_count);
    for (std::size_t j = 0; j < sample_count; ++j) {
        // (2j - (N-1)) / 2 is an exact half-integer, so mirrored samples are
        // exact negatives of each other.
        const double offset = (2.0 * static_cast<double>(j) - (n - 1.0)) * 0.5;
        detuning_[j] = offset * spacing_;
    }
}

SpectralGrid SpectralGrid::covering(double center, double min_signal_nm, double max_signal_nm,
                                    std::size_t sample_count) {
    const double upper = omega_from_nm(min_signal_nm) - center;
    const double lower = center - omega_from_nm(max_signal_nm);
    if (!(upper > 0.0 && lower > 0.0)) throw GridError("signal band does not straddle degeneracy");
    return SpectralGrid(center, std::max(upper, lower), sample_count);
}

SpectralGrid SpectralGrid::default_for(const SpdcSource& source, std::size_t sample_count) {
    return covering(source.degenerate_omega(), 800.0, 1600.0, sample_count);
}

bool SpectralGrid::same_as(const SpectralGrid& other) const {
    return center_ == other.center_ && half_span_ == other.half_span_ && size() == other.size();
}

PhaseMatchingFunction::PhaseMatchingFunction(SpectralGrid grid, std::vector<double> amplitude)
    : grid_(std::move(grid)), amplitude_(std::move(amplitude)) {
    if (amplitude_.size() != grid_.size()) throw GridError("phase-matching samples do not match grid");
    squared_.resize(amplitude_.size());
    std::transform(amplitude_.begin(), amplitude_.end(), squared_.begin(),
                   [](double a) { return a * a; });
}

double sinc(double x) {
    if (x == 0.0) return 1.0;
    if (std::abs(x) < 1e-4) {
        const double x2 = x * x;
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
    }
    return std::sin(x) / x;
}

namespace {

double mismatch(const SpdcSource& source, double detuning, double period_um) {
    const auto& crystal = source.crystal();
    const double t = source.temperature_c();
    const double a = std::abs(detuning);
    const double kp = wavenumber(crystal, source.pump_omega(), t);
    const double ks = wavenumber(crystal, source.degenerate_omega() + a, t);
    const double ki = wavenumber(crystal, source.degenerate_omega() - a, t);
    return kp - (ks + ki) - kTwoPi / (period_um * 1e-6);
}

}  // namespace

double delta_k_detuned(const SpdcSource& source, double detuning) {
    return mismatch(source, detuning, source.poling_period_um());
}

double delta_k(const SpdcSource& source, double signal_omega) {
    return delta_k_detuned(source, signal_omega - source.degenerate_omega());
}

SpdcSource calibrate_poling_period(const SpdcSource& source) {
    // Delta_k(omega_d) grows monotonically with the period; bracket it.
    double lo = 0.5;
    double hi = 200.0;
    const auto f = [&](double period) { return mismatch(source, 0.0, period); };
    double flo = f(lo);
    const double fhi = f(hi);
    if (!(flo < 0.0 && fhi > 0.0)) {
        throw CalibrationError("no sign change of delta_k in poling-period bracket [0.5, 200] um");
    }
    for (int it = 0; it < 400; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double fm = f(mid);
        if (fm == 0.0) {
            lo = hi = mid;
            break;
        }
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if (hi - lo <= 1e-15 * mid) break;
    }
    // Keep whichever end has the smaller residual.
    const double period = std::abs(f(lo)) <= std::abs(f(hi)) ? lo : hi;
    return source.with_poling_period(period);
}

SpdcSource calibrate_poling_period(const SpdcSource& source, double temperature_c) {
    return calibrate_poling_period(source.with_temperature(temperature_c));
}

PhaseMatchingFunction phase_matching(const SpdcSource& source, const SpectralGrid& grid,
                                     double stretch) {
    if (!(stretch > 0.0)) throw ConfigError("bandwidth stretch must be positive");
    const double half_length = 0.5 * source.crystal_length_m();
    std::vector<double> phi(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) {
        try {
            phi[j] = sinc(delta_k_detuned(source, grid.detuning(j) / stretch) * half_length);
        } catch (const RangeError& e) {
            throw RangeError(std::string("phase-matching grid exceeds crystal model: ") + e.what(),
                             e.value(), e.violated_bound());
        }
    }
    return PhaseMatchingFunction(grid, std::move(phi));
}

HalfCrossings spectrum_half_crossings(const PhaseMatchingFunction& pmf) {
    const auto sq = pmf.squared();
    const auto& grid = pmf.grid();
    const auto peak_it = std::max_element(sq.begin(), sq.end());
    const auto peak = static_cast<std::size_t>(peak_it - sq.begin());
    const double half = 0.5 * *peak_it;

    const auto interp = [&](std::size_t inside, std::size_t outside) {
        const double y0 = sq[inside], y1 = sq[outside];
        const double x0 = grid.detuning(inside), x1 = grid.detuning(outside);
        return x0 + (half - y0) * (x1 - x0) / (y1 - y0);
    };

    std::size_t r = peak;
    while (r + 1 < sq.size() && sq[r + 1] >= half) ++r;
    if (r + 1 >= sq.size()) throw GridError("half maximum of |Phi|^2 not bracketed on the high side");
    std::size_t l = peak;
    while (l > 0 && sq[l - 1] >= half) --l;
    if (l == 0) throw GridError("half maximum of |Phi|^2 not bracketed on the low side");
    return {interp(l, l - 1), interp(r, r + 1)};
}

double spectrum_bandwidth_fwhm(const PhaseMatchingFunction& pmf) {
    const auto [low, high] = spectrum_half_crossings(pmf);
    const double center = pmf.grid().center();
    return nm_from_omega(center + low) - nm_from_omega(center + high);
}

double photons_per_mode(double flux_per_s, double center_wavelength_nm, double bandwidth_fwhm_nm) {
    if (flux_per_s < 0.0 || !(center_wavelength_nm > 0.0) || !(bandwidth_fwhm_nm > 0.0)) {
        throw ConfigError("photons_per_mode: arguments must be positive");
    }
    const double lambda = center_wavelength_nm * 1e-9;
    const double dnu = kSpeedOfLight * bandwidth_fwhm_nm * 1e-9 / (lambda * lambda);
    return flux_per_s / dnu;
}

SpdcSource fit_crystal_length(const SpdcSource& source, const SpectralGrid& grid,
                              double target_bandwidth_nm) {
    const SpdcSource calibrated = source.calibrated() ? source : calibrate_poling_period(source);
    const auto bandwidth = [&](double length_mm) {
        try {
            return spectrum_bandwidth_fwhm(phase_matching(calibrated.with_crystal_length(length_mm), grid));
        } catch (const GridError&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    // Bandwidth falls monotonically with length; bisect in log(length).
    double lo = std::log(calibrated.params().crystal_length_mm / 1000.0);
    double hi = std::log(calibrated.params().crystal_length_mm * 1000.0);
    if (!(bandwidth(std::exp(lo)) > target_bandwidth_nm && bandwidth(std::exp(hi)) < target_bandwidth_nm)) {
        throw CalibrationError("target bandwidth not reachable by scaling the crystal length");
    }
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (bandwidth(std::exp(mid)) > target_bandwidth_nm) lo = mid;
        else hi = mid;
    }
    return calibrated.with_crystal_length(std::exp(0.5 * (lo + hi)));
}

}  // namespace franson
