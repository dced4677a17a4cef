#include <doctest.h>

#include <cmath>

#include "franson/error.hpp"
#include "franson/spdc.hpp"
#include "oracles.hpp"

using namespace franson;

namespace {

const MaterialModel& ln() { return default_library().get("MgO:CLN-e"); }

const SpdcSource& calibrated() {
    static const SpdcSource s = calibrate_poling_period(SpdcSource(ln(), {}));
    return s;
}

// k = n omega / c from an independent index call.
double k_of(double omega, double t) {
    return refractive_index(ln(), Wavelength::from_omega(omega), t) * omega / oracle::c0;
}

}  // namespace

TEST_CASE("source construction keeps omega_d = omega_p / 2 and validates inputs") {
    SpdcSource s(ln(), {});
    CHECK(s.degenerate_omega() == s.pump_omega() / 2.0);
    CHECK_FALSE(s.calibrated());
    CHECK_THROWS_AS((void)s.poling_period_um(), CalibrationError);
    SpdcSource::Params bad;
    bad.crystal_length_mm = 0.0;
    CHECK_THROWS_AS(SpdcSource(ln(), bad), ConfigError);
    bad = {};
    bad.poling_period_um = -1.0;
    CHECK_THROWS_AS(SpdcSource(ln(), bad), ConfigError);
}

TEST_CASE("grid is symmetric and uniform") {
    const auto g = SpectralGrid::default_for(calibrated());
    CHECK(g.size() == (1u << 14));
    for (std::size_t j = 0; j < g.size(); ++j) CHECK(g.detuning(g.mirror(j)) == -g.detuning(j));
    for (std::size_t j = 1; j < g.size(); ++j) {
        CHECK(std::abs(g.detuning(j) - g.detuning(j - 1) - g.spacing()) < 1e-12 * g.half_span());
    }
    CHECK(g.spacing() == doctest::Approx(2.0 * g.half_span() / (g.size() - 1)).epsilon(1e-15));
    CHECK(nm_from_omega(g.signal_omega(0)) >= 1600.0 - 1e-6);
    CHECK(nm_from_omega(g.signal_omega(g.size() - 1)) <= 800.0 + 1e-6);
    CHECK_THROWS_AS(SpectralGrid(1e15, 1e14, 1000), GridError);
}

TEST_CASE("calibration zeroes the mismatch at degeneracy") {
    CHECK(std::abs(delta_k_detuned(calibrated(), 0.0)) < 1e-6);
    CHECK(std::abs(delta_k(calibrated(), calibrated().degenerate_omega())) < 1e-6);
    const double p = calibrated().poling_period_um();
    CHECK(p > 6.0);
    CHECK(p < 7.0);
}

TEST_CASE("poling period matches a coarse scan for the sign change") {
    const SpdcSource s(ln(), {});
    const double wd = s.degenerate_omega();
    const double kp = k_of(s.pump_omega(), 50.0), kd = k_of(wd, 50.0);
    double found = 0.0;
    double prev = kp - 2 * kd - 2 * M_PI / 5e-6;
    for (double lam = 5.0 + 1e-4; lam <= 9.0; lam += 1e-4) {
        const double f = kp - 2 * kd - 2 * M_PI / (lam * 1e-6);
        if ((f > 0) != (prev > 0)) {
            found = lam;
            break;
        }
        prev = f;
    }
    REQUIRE(found > 0.0);
    CHECK(std::abs(calibrated().poling_period_um() - found) < 1e-4);
}

TEST_CASE("calibration is monotone in temperature") {
    const SpdcSource s(ln(), {});
    const double p40 = calibrate_poling_period(s, 40.0).poling_period_um();
    const double p50 = calibrate_poling_period(s, 50.0).poling_period_um();
    const double p60 = calibrate_poling_period(s, 60.0).poling_period_um();
    CHECK(((p40 < p50 && p50 < p60) || (p40 > p50 && p50 > p60)));
}

TEST_CASE("no sign change in the bracket is a calibration error") {
    SpdcSource::Params p;
    p.pump_wavelength_nm = 1064.0;  // degenerate at 2128 nm, but no QPM for vacuum
    CHECK_THROWS_AS(calibrate_poling_period(SpdcSource(vacuum(), p)), CalibrationError);
}

TEST_CASE("mismatch is even in detuning and matches a four-term hand evaluation") {
    const auto& s = calibrated();
    const double wd = s.degenerate_omega();
    for (const double nm : {1034.0, 1094.0}) {
        const double dw = omega_from_nm(nm) - wd;
        CHECK(delta_k_detuned(s, dw) == delta_k_detuned(s, -dw));
        const double hand = k_of(s.pump_omega(), 50.0) - k_of(wd + dw, 50.0) - k_of(wd - dw, 50.0) -
                            2 * M_PI / (s.poling_period_um() * 1e-6);
        CHECK(delta_k(s, wd + dw) == doctest::Approx(hand).epsilon(1e-9));
    }
}

TEST_CASE("phase-matching function is sinc, even and peaks at 1") {
    const auto& s = calibrated();
    const auto g = SpectralGrid::default_for(s);
    const auto pmf = phase_matching(s, g);
    CHECK(sinc(0.0) == 1.0);
    CHECK(sinc(delta_k_detuned(s, 0.0) * s.crystal_length_m() / 2) == 1.0);
    double worst = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        worst = std::max(worst, std::abs(pmf.amplitude()[j] - pmf.amplitude()[g.mirror(j)]));
        CHECK(pmf.squared()[j] <= 1.0);
        CHECK(pmf.squared()[j] >= 0.0);
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("first zero of Phi matches an independent root search") {
    const auto& s = calibrated();
    const auto g = SpectralGrid::default_for(s);
    const auto pmf = phase_matching(s, g);
    const double half_l = s.crystal_length_m() / 2;
    // |dk| L / 2 = pi, bisection on the positive detuning.
    double lo = 0.0, hi = g.half_span();
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (std::abs(delta_k_detuned(s, mid)) * half_l < M_PI ? lo : hi) = mid;
    }
    const double root = 0.5 * (lo + hi);
    // Sign change of the sampled Phi on the positive side.
    std::size_t j = g.size() / 2;
    while (j + 1 < g.size() && pmf.amplitude()[j + 1] > 0.0) ++j;
    REQUIRE(j + 1 < g.size());
    const double a0 = pmf.amplitude()[j], a1 = pmf.amplitude()[j + 1];
    const double zero = g.detuning(j) + a0 / (a0 - a1) * g.spacing();
    CHECK(std::abs(zero - root) < g.spacing());
}

TEST_CASE("bandwidth: symmetric crossings, grid stability, length scaling") {
    const auto& s = calibrated();
    const auto g = SpectralGrid::default_for(s);
    const auto pmf = phase_matching(s, g);
    const auto [low, high] = spectrum_half_crossings(pmf);
    CHECK(std::abs(low + high) < g.spacing());

    const double bw = spectrum_bandwidth_fwhm(pmf);
    const double bw_fine = spectrum_bandwidth_fwhm(phase_matching(s, SpectralGrid::default_for(s, 1u << 15)));
    CHECK(std::abs(bw_fine - bw) / bw < 1e-3);

    // Delta_k ~ Delta_omega^2 near degeneracy, so doubling L narrows by ~1/sqrt(2).
    const double bw2 = spectrum_bandwidth_fwhm(phase_matching(s.with_crystal_length(10.0), g));
    CHECK(bw2 / bw == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.03));
}

TEST_CASE("a grid too narrow for the half maximum is reported") {
    const auto& s = calibrated();
    const SpectralGrid narrow(s.degenerate_omega(), 1e13, 256);
    CHECK_THROWS_AS((void)spectrum_bandwidth_fwhm(phase_matching(s, narrow)), GridError);
}

TEST_CASE("grid beyond the crystal model is a range error") {
    const auto& s = calibrated();
    const SpectralGrid wide(s.degenerate_omega(), 0.95 * s.degenerate_omega(), 256);
    CHECK_THROWS_AS((void)phase_matching(s, wide), RangeError);
}

TEST_CASE("stretch widens the spectrum by the scale factor in frequency") {
    const auto& s = calibrated();
    const auto g = SpectralGrid::default_for(s);
    const auto a = spectrum_half_crossings(phase_matching(s, g));
    const auto b = spectrum_half_crossings(phase_matching(s, g, 1.5));
    CHECK((b.high - b.low) / (a.high - a.low) == doctest::Approx(1.5).epsilon(1e-3));
}

TEST_CASE("fitting the crystal length reaches the target bandwidth") {
    const auto& s = calibrated();
    const auto g = SpectralGrid::default_for(s);
    const auto fit = fit_crystal_length(s, g, 117.0);
    CHECK(spectrum_bandwidth_fwhm(phase_matching(fit, g)) == doctest::Approx(117.0).epsilon(1e-6));
    CHECK(fit.poling_period_um() == s.poling_period_um());
    CHECK(fit.params().crystal_length_mm < 5.0);
}

TEST_CASE("photons per mode") {
    CHECK(std::abs(photons_per_mode(1.7e11, 1064.0, 117.0) - 0.0055) / 0.0055 < 0.10);
    CHECK(photons_per_mode(0.0, 1064.0, 117.0) == 0.0);
    CHECK(photons_per_mode(3.4e11, 1064.0, 117.0) == 2.0 * photons_per_mode(1.7e11, 1064.0, 117.0));
    CHECK_THROWS_AS((void)photons_per_mode(1.0, 1064.0, 0.0), ConfigError);
}
