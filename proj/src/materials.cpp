#include "franson/materials.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "franson/error.hpp"

#ifndef FRANSON_DATA_DIR
#define FRANSON_DATA_DIR "data"
#endif

namespace franson {

namespace {

using nlohmann::json;

void require_coefficients(const MaterialModel& m, std::size_t count) {
    if (m.coefficients.size() != count) {
        throw ConfigError("material '" + m.id + "': form " + to_string(m.form) + " needs " +
                          std::to_string(count) + " coefficients, got " +
                          std::to_string(m.coefficients.size()));
    }
}

void validate(const MaterialModel& m) {
    switch (m.form) {
    case DispersionForm::Constant:
        require_coefficients(m, 1);
        if (m.coefficients[0] < 1.0) {
            throw ConfigError("material '" + m.id + "': constant index below 1");
        }
        break;
    case DispersionForm::Sellmeier:
        if (m.coefficients.empty() || m.coefficients.size() % 2 != 0) {
            throw ConfigError("material '" + m.id + "': Sellmeier needs (B, C) pairs");
        }
        break;
    case DispersionForm::SchottLaurent:
        require_coefficients(m, 6);
        break;
    case DispersionForm::GayerMgoLn:
        require_coefficients(m, 10);
        if (!m.temperature_model) {
            throw ConfigError("material '" + m.id + "': temperature model required");
        }
        break;
    }
    if (!(m.valid_min_um > 0.0 && m.valid_max_um > m.valid_min_um)) {
        throw ConfigError("material '" + m.id + "': invalid wavelength range");
    }
}

MaterialModel model_from_json(const json& j) {
    MaterialModel m;
    m.id = j.at("id").get<std::string>();
    m.form = dispersion_form_from_string(j.at("form").get<std::string>());
    m.coefficients = j.at("coefficients").get<std::vector<double>>();
    const auto range = j.at("valid_range_um").get<std::vector<double>>();
    if (range.size() != 2) throw ConfigError("material '" + m.id + "': valid_range_um needs 2 values");
    m.valid_min_um = range[0];
    m.valid_max_um = range[1];
    if (j.contains("temperature_model")) {
        const auto& t = j.at("temperature_model");
        TemperatureModel tm;
        tm.reference_c = t.value("reference_c", tm.reference_c);
        tm.offset_c = t.value("offset_c", tm.offset_c);
        if (t.contains("valid_c")) {
            const auto v = t.at("valid_c").get<std::vector<double>>();
            if (v.size() != 2) throw ConfigError("material '" + m.id + "': valid_c needs 2 values");
            tm.valid_min_c = v[0];
            tm.valid_max_c = v[1];
        }
        m.temperature_model = tm;
    }
    m.reference = j.value("reference", std::string{});
    validate(m);
    return m;
}

double index_squared(const MaterialModel& m, double lum, double temperature_c) {
    const auto& c = m.coefficients;
    const double l2 = lum * lum;
    switch (m.form) {
    case DispersionForm::Constant:
        return c[0] * c[0];
    case DispersionForm::Sellmeier: {
        double n2 = 1.0;
        for (std::size_t k = 0; k + 1 < c.size(); k += 2) n2 += c[k] * l2 / (l2 - c[k + 1]);
        return n2;
    }
    case DispersionForm::SchottLaurent: {
        const double il2 = 1.0 / l2;
        return c[0] + c[1] * l2 + il2 * (c[2] + il2 * (c[3] + il2 * (c[4] + il2 * c[5])));
    }
    case DispersionForm::GayerMgoLn: {
        const auto& tm = *m.temperature_model;
        const double f = (temperature_c - tm.reference_c) * (temperature_c + tm.offset_c);
        const double a1 = c[0], a2 = c[1], a3 = c[2], a4 = c[3], a5 = c[4], a6 = c[5];
        const double b1 = c[6], b2 = c[7], b3 = c[8], b4 = c[9];
        const double pole = a3 + b3 * f;
        return a1 + b1 * f + (a2 + b2 * f) / (l2 - pole * pole) + (a4 + b4 * f) / (l2 - a5 * a5) -
               a6 * l2;
    }
    }
    return 1.0;
}

void check_range(const MaterialModel& m, double lum, double temperature_c) {
    if (lum < m.valid_min_um) {
        throw RangeError("material '" + m.id + "': wavelength " + std::to_string(lum * 1e3) +
                             " nm below valid range (" + std::to_string(m.valid_min_um * 1e3) + " nm)",
                         lum, m.valid_min_um);
    }
    if (lum > m.valid_max_um) {
        throw RangeError("material '" + m.id + "': wavelength " + std::to_string(lum * 1e3) +
                             " nm above valid range (" + std::to_string(m.valid_max_um * 1e3) + " nm)",
                         lum, m.valid_max_um);
    }
    if (m.temperature_model) {
        const auto& tm = *m.temperature_model;
        if (temperature_c < tm.valid_min_c) {
            throw RangeError("material '" + m.id + "': temperature below model validity",
                             temperature_c, tm.valid_min_c);
        }
        if (temperature_c > tm.valid_max_c) {
            throw RangeError("material '" + m.id + "': temperature above model validity",
                             temperature_c, tm.valid_max_c);
        }
    }
}

double index_at_omega(const MaterialModel& m, double omega, double temperature_c) {
    return refractive_index(m, Wavelength::from_omega(omega), temperature_c);
}

double k_at(const MaterialModel& m, double omega, double temperature_c) {
    return index_at_omega(m, omega, temperature_c) * omega / kSpeedOfLight;
}

}  // namespace

std::string to_string(DispersionForm form) {
    switch (form) {
    case DispersionForm::Constant: return "constant";
    case DispersionForm::Sellmeier: return "sellmeier";
    case DispersionForm::SchottLaurent: return "schott_laurent";
    case DispersionForm::GayerMgoLn: return "gayer_mgo_ln";
    }
    return "unknown";
}

DispersionForm dispersion_form_from_string(const std::string& name) {
    if (name == "constant") return DispersionForm::Constant;
    if (name == "sellmeier") return DispersionForm::Sellmeier;
    if (name == "schott_laurent") return DispersionForm::SchottLaurent;
    if (name == "gayer_mgo_ln") return DispersionForm::GayerMgoLn;
    throw ConfigError("unknown dispersion form '" + name + "'");
}

MaterialModel vacuum() {
    MaterialModel m;
    m.id = "vacuum";
    m.form = DispersionForm::Constant;
    m.coefficients = {1.0};
    m.valid_min_um = 0.1;
    m.valid_max_um = 100.0;
    m.reference = "identity";
    return m;
}

MaterialLibrary MaterialLibrary::from_json_text(const std::string& text) {
    MaterialLibrary lib;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("material file: ") + e.what());
    }
    lib.version_ = doc.value("version", 0);
    for (const auto& entry : doc.at("materials")) {
        MaterialModel m = model_from_json(entry);
        if (lib.models_.contains(m.id)) throw ConfigError("duplicate material id '" + m.id + "'");
        lib.models_.emplace(m.id, std::move(m));
    }
    return lib;
}

MaterialLibrary MaterialLibrary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open material file " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return from_json_text(text.str());
}

const MaterialModel& MaterialLibrary::get(const std::string& id) const {
    auto it = models_.find(id);
    if (it == models_.end()) throw ConfigError("unknown material '" + id + "'");
    return it->second;
}

std::vector<std::string> MaterialLibrary::ids() const {
    std::vector<std::string> out;
    out.reserve(models_.size());
    for (const auto& [id, _] : models_) out.push_back(id);
    return out;
}

std::filesystem::path default_material_file() {
    if (const char* env = std::getenv("FRANSON_MATERIALS"); env && *env) return env;
    return std::filesystem::path(FRANSON_DATA_DIR) / "materials.json";
}

const MaterialLibrary& default_library() {
    static const MaterialLibrary lib = MaterialLibrary::load(default_material_file());
    return lib;
}

double refractive_index(const MaterialModel& material, Wavelength wavelength,
                        double temperature_c) {
    const double lum = wavelength.um();
    check_range(material, lum, temperature_c);
    if (material.form == DispersionForm::Constant) return material.coefficients[0];
    return std::sqrt(index_squared(material, lum, temperature_c));
}

double wavenumber(const MaterialModel& material, double angular_frequency,
                  double temperature_c) {
    return k_at(material, angular_frequency, temperature_c);
}

double group_index_central(const MaterialModel& material, Wavelength wavelength,
                           double temperature_c, double relative_step) {
    const double w = wavelength.omega();
    if (material.dispersionless()) return refractive_index(material, wavelength, temperature_c);
    const double h = relative_step * w;
    const double dk = (k_at(material, w + h, temperature_c) - k_at(material, w - h, temperature_c)) /
                      (2.0 * h);
    return dk * kSpeedOfLight;
}

double group_index(const MaterialModel& material, Wavelength wavelength, double temperature_c) {
    if (material.dispersionless()) return refractive_index(material, wavelength, temperature_c);
    const double coarse = group_index_central(material, wavelength, temperature_c, kDerivativeStep);
    const double fine =
        group_index_central(material, wavelength, temperature_c, 0.5 * kDerivativeStep);
    return (4.0 * fine - coarse) / 3.0;
}

double gvd_central(const MaterialModel& material, Wavelength wavelength, double temperature_c,
                   double relative_step) {
    if (material.dispersionless()) {
        refractive_index(material, wavelength, temperature_c);
        return 0.0;
    }
    const double w = wavelength.omega();
    const double h = relative_step * w;
    const double d2k = (k_at(material, w + h, temperature_c) - 2.0 * k_at(material, w, temperature_c) +
                        k_at(material, w - h, temperature_c)) /
                       (h * h);
    return d2k * 1e27;  // s^2/m -> fs^2/mm
}

double gvd(const MaterialModel& material, Wavelength wavelength, double temperature_c) {
    if (material.dispersionless()) return gvd_central(material, wavelength, temperature_c, 0.0);
    const double coarse = gvd_central(material, wavelength, temperature_c, kDerivativeStep);
    const double fine = gvd_central(material, wavelength, temperature_c, 0.5 * kDerivativeStep);
    return (4.0 * fine - coarse) / 3.0;
}

}  // namespace franson
