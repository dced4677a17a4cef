#pragma once

#include <numbers>

namespace franson {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Time and frequency scales used throughout: traces in fs, phases in
// fs^n, angular frequencies in rad/s.
inline constexpr double kFs = 1e-15;
inline constexpr double kFs2 = 1e-30;
inline constexpr double kFs3 = 1e-45;

/// Vacuum wavelength, stored in metres.
class Wavelength {
public:
    constexpr Wavelength() = default;

    static constexpr Wavelength from_m(double m) { return Wavelength(m); }
    static constexpr Wavelength from_nm(double nm) { return Wavelength(nm * 1e-9); }
    static constexpr Wavelength from_um(double um) { return Wavelength(um * 1e-6); }
    static constexpr Wavelength from_omega(double rad_per_s) {
        return Wavelength(kTwoPi * kSpeedOfLight / rad_per_s);
    }

    constexpr double m() const { return m_; }
    constexpr double nm() const { return m_ * 1e9; }
    constexpr double um() const { return m_ * 1e6; }
    constexpr double omega() const { return kTwoPi * kSpeedOfLight / m_; }

    friend constexpr auto operator<=>(const Wavelength&, const Wavelength&) = default;

private:
    explicit constexpr Wavelength(double m) : m_(m) {}
    double m_ = 0.0;
};

constexpr double omega_from_nm(double nm) { return Wavelength::from_nm(nm).omega(); }
constexpr double nm_from_omega(double omega) { return Wavelength::from_omega(omega).nm(); }

constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace franson
