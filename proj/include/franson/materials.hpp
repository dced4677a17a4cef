#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "franson/units.hpp"

namespace franson {

enum class DispersionForm {
    Constant,       // n = coefficients[0]
    Sellmeier,      // n^2 - 1 = sum B l^2 / (l^2 - C), pairs (B, C)
    SchottLaurent,  // n^2 = A0 + A1 l^2 + A2 l^-2 + A3 l^-4 + A4 l^-6 + A5 l^-8
    GayerMgoLn,     // temperature-dependent MgO:LiNbO3 extraordinary index
};

std::string to_string(DispersionForm form);
DispersionForm dispersion_form_from_string(const std::string& name);

struct TemperatureModel {
    double reference_c = 24.5;
    double offset_c = 570.82;
    double valid_min_c = 20.0;
    double valid_max_c = 200.0;
};

/// A named dispersion model n(lambda, T). Wavelengths inside the model are
/// in micrometres, matching the published coefficient conventions.
struct MaterialModel {
    std::string id;
    DispersionForm form = DispersionForm::Constant;
    std::vector<double> coefficients{1.0};
    double valid_min_um = 0.0;
    double valid_max_um = 0.0;
    std::optional<TemperatureModel> temperature_model;
    std::string reference;

    /// True for forms whose index does not depend on wavelength.
    bool dispersionless() const { return form == DispersionForm::Constant; }
};

MaterialModel vacuum();

/// Materials loaded from a JSON data file, keyed by id.
class MaterialLibrary {
public:
    static MaterialLibrary load(const std::filesystem::path& path);
    static MaterialLibrary from_json_text(const std::string& text);

    const MaterialModel& get(const std::string& id) const;
    bool contains(const std::string& id) const { return models_.contains(id); }
    std::vector<std::string> ids() const;

    int version() const { return version_; }

private:
    std::map<std::string, MaterialModel> models_;
    int version_ = 0;
};

/// Path of the shipped coefficient file. FRANSON_MATERIALS overrides the
/// compiled-in location.
std::filesystem::path default_material_file();

/// Library loaded once from default_material_file().
const MaterialLibrary& default_library();

inline constexpr double kRoomTemperatureC = 20.0;

/// Relative frequency step for the finite-difference derivatives below.
inline constexpr double kDerivativeStep = 1e-4;

double refractive_index(const MaterialModel& material, Wavelength wavelength,
                        double temperature_c);

/// Group index N = n + omega dn/domega = n - lambda dn/dlambda.
///
/// Central difference in omega with step kDerivativeStep * omega, combined
/// with the half-step estimate by Richardson extrapolation (fourth order).
double group_index(const MaterialModel& material, Wavelength wavelength,
                   double temperature_c);

/// k = n omega / c in rad/m.
double wavenumber(const MaterialModel& material, double angular_frequency,
                  double temperature_c);

/// Group-velocity dispersion d^2k/domega^2 in fs^2/mm (Richardson-combined
/// second central difference, same step as group_index).
double gvd(const MaterialModel& material, Wavelength wavelength, double temperature_c);

// Single-step estimates without extrapolation; used to check convergence.
double group_index_central(const MaterialModel& material, Wavelength wavelength,
                           double temperature_c, double relative_step);
double gvd_central(const MaterialModel& material, Wavelength wavelength,
                   double temperature_c, double relative_step);

}  // namespace franson
