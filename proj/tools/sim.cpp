#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "franson/compressor.hpp"
#include "franson/correlation.hpp"
#include "franson/error.hpp"
#include "franson/harness.hpp"
#include "franson/materials.hpp"
#include "franson/spdc.hpp"

using namespace franson;
namespace fs = std::filesystem;

namespace {

struct Globals {
    std::string config;
    std::string out;
    std::size_t grid_samples = 0;
    bool no_noise = false;
    bool svg = false;
};

ScenarioConfig base_config(const Globals& g, ScenarioConfig defaults) {
    ScenarioConfig c = g.config.empty() ? defaults : load_scenario(g.config, defaults);
    if (g.grid_samples) c.grid_samples = g.grid_samples;
    if (g.no_noise) c.noise.reset();
    return c;
}

fs::path out_dir(const Globals& g, const std::string& fallback) { return g.out.empty() ? fs::path("out") / fallback : fs::path(g.out); }

void write_file(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

void print_run(const RunResult& run) {
    std::printf("%s (%s): bandwidth %.2f nm, crystal %.4f mm\n", run.config.name.c_str(),
                run.config.mode == PhaseMode::Polynomial ? "polynomial" : "raytraced", run.source.bandwidth_nm,
                run.source.crystal_length_mm);
    std::printf("%-10s %10s %10s %10s %10s %12s\n", "case", "height", "fwhm_fs", "centroid", "skewness", "residual3");
    for (const auto& c : run.cases) {
        std::printf("%-10s %10.4f %10.3f %10.3f %10.4f %12.1f\n", c.spec.label.c_str(), c.metrics.height,
                    c.metrics.fwhm_fs, c.metrics.centroid_fs, c.metrics.skewness, c.residual[2]);
    }
    if (run.summary.contains("group_index")) {
        std::printf("group index from centroid shifts: %.5f (glass model %.5f)\n",
                    run.summary["group_index"]["mean"].get<double>(), run.group_index);
    }
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) v.push_back(std::stod(item));
    }
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dispersion cancellation simulator for frequency-entangled photon pairs"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "Scenario config (JSON)")->check(CLI::ExistingFile);
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--grid-samples", g.grid_samples, "Spectral grid samples (power of two)");
    app.add_flag("--no-noise", g.no_noise, "Disable count simulation");
    app.add_flag("--svg", g.svg, "Also write SVG plots of each trace");

    std::string mode = "";
    bool fit = false;
    const auto add_run_flags = [&](CLI::App* sub) {
        sub->add_option("--mode", mode, "polynomial or raytraced")->check(CLI::IsMember({"polynomial", "raytraced"}));
        sub->add_flag("--fit-bandwidth", fit, "Scale the crystal length to the target bandwidth");
    };
    auto* fig2 = app.add_subcommand("fig2", "One-arm GDD sweep");
    add_run_flags(fig2);
    auto* fig3 = app.add_subcommand("fig3", "Opposite-arm GDD sweep");
    add_run_flags(fig3);

    auto* bandwidth = app.add_subcommand("bandwidth", "Skewness versus spectral bandwidth for the widest opposite-arm case");
    std::string scales = "1.0,1.25,1.5";
    bandwidth->add_option("--scales", scales, "Comma-separated bandwidth scales");
    add_run_flags(bandwidth);

    auto* counts = app.add_subcommand("counts", "Opposite-arm sweep with Poisson counts and background subtraction");
    std::uint64_t seed = 1;
    int figure = 3;
    counts->add_option("--seed", seed, "Random seed");
    counts->add_option("--figure", figure, "2 or 3")->check(CLI::IsMember({2, 3}));
    add_run_flags(counts);

    auto* materials = app.add_subcommand("materials", "n, N and GVD of a material as a CSV row");
    std::string material = "SF10";
    double wavelength_nm = 1064.0;
    double temperature_c = kRoomTemperatureC;
    bool header = true;
    materials->add_option("--material", material, "Material id");
    materials->add_option("--wavelength-nm", wavelength_nm, "Wavelength");
    materials->add_option("--temperature", temperature_c, "Temperature (C)");
    materials->add_flag("!--no-header", header, "Omit the CSV header");

    auto* spdc = app.add_subcommand("spdc", "Phase-matching spectrum and source metrics");
    double flux = 1.7e11;
    double target_nm = 117.0;
    spdc->add_option("--flux", flux, "Photon flux (1/s) for photons per mode");
    spdc->add_option("--target-bandwidth", target_nm, "Bandwidth used with --fit-bandwidth (nm)");
    spdc->add_flag("--fit-bandwidth", fit, "Scale the crystal length to the target bandwidth");

    auto* comp = app.add_subcommand("compressor", "Ray-traced phase of one four-prism compressor");
    double spacing = 500.0, band_min = 900.0, band_max = 1300.0;
    std::string insertions = "0,0,0,0", baseline = "10,15,15,10";
    std::size_t band_samples = 64;
    comp->add_option("--spacing", spacing, "Apex-to-apex spacing within each pair (mm)");
    comp->add_option("--insertions", insertions, "Stage moves of P1..P4 (mm)");
    comp->add_option("--baseline-glass", baseline, "Design-ray glass path in P1..P4 before moves (mm)");
    comp->add_option("--band-min-nm", band_min, "Shortest wavelength");
    comp->add_option("--band-max-nm", band_max, "Longest wavelength");
    comp->add_option("--band-samples", band_samples, "Number of band samples")->check(CLI::Range(2, 100000));

    CLI11_PARSE(app, argc, argv);

    try {
        const auto apply_run_flags = [&](ScenarioConfig& c) {
            if (!mode.empty()) c.mode = mode == "polynomial" ? PhaseMode::Polynomial : PhaseMode::RayTraced;
            if (fit) c.fit_bandwidth = true;
        };
        if (fig2->parsed() || fig3->parsed()) {
            const bool two = fig2->parsed();
            ScenarioConfig c = base_config(g, two ? ScenarioConfig::fig2() : ScenarioConfig::fig3());
            apply_run_flags(c);
            const RunResult run = two ? run_fig2(c) : run_fig3(c);
            const fs::path dir = out_dir(g, two ? "fig2" : "fig3");
            write_run(run, dir, {g.svg});
            print_run(run);
            std::printf("wrote %s\n", dir.string().c_str());
        } else if (counts->parsed()) {
            ScenarioConfig defaults = figure == 2 ? ScenarioConfig::fig2() : ScenarioConfig::fig3();
            defaults.noise = NoiseModel{};
            ScenarioConfig c = base_config(g, defaults);
            apply_run_flags(c);
            if (c.noise) c.noise->seed = seed;
            const RunResult run = run_scenario(c);
            const fs::path dir = out_dir(g, "counts");
            write_run(run, dir, {g.svg});
            print_run(run);
            std::printf("wrote %s\n", dir.string().c_str());
        } else if (bandwidth->parsed()) {
            ScenarioConfig defaults = ScenarioConfig::fig3();
            defaults.mode = PhaseMode::RayTraced;
            ScenarioConfig c = base_config(g, defaults);
            apply_run_flags(c);
            const auto rows = bandwidth_scaling_study(c, parse_list(scales));
            std::ostringstream csv;
            csv << "scale,bandwidth_nm,fwhm_fs,skewness,residual3_fs3,control_skewness\n";
            for (const auto& r : rows) {
                csv << format_csv_number(r.scale) << ',' << format_csv_number(r.bandwidth_nm) << ','
                    << format_csv_number(r.fwhm_fs) << ',' << format_csv_number(r.skewness) << ','
                    << format_csv_number(r.residual3_fs3) << ',' << format_csv_number(r.control_skewness) << '\n';
            }
            const fs::path dir = out_dir(g, "bandwidth");
            fs::create_directories(dir);
            write_file(dir / "bandwidth_scaling.csv", csv.str());
            write_file(dir / "config.json", to_json(c).dump(2) + "\n");
            const Json manifest = make_manifest("bandwidth", dir, {"bandwidth_scaling.csv", "config.json"}, std::nullopt);
            write_file(dir / "manifest.json", manifest.dump(2) + "\n");
            std::cout << csv.str();
        } else if (materials->parsed()) {
            const auto& m = default_library().get(material);
            const auto w = Wavelength::from_nm(wavelength_nm);
            if (header) std::printf("material,wavelength_nm,temperature_c,n,group_index,gvd_fs2_per_mm\n");
            std::printf("%s,%s,%s,%.8f,%.8f,%.6f\n", m.id.c_str(), format_csv_number(wavelength_nm).c_str(),
                        format_csv_number(temperature_c).c_str(), refractive_index(m, w, temperature_c),
                        group_index(m, w, temperature_c), gvd(m, w, temperature_c));
        } else if (spdc->parsed()) {
            ScenarioConfig c = base_config(g, ScenarioConfig{});
            SpdcSource source(default_library().get(c.crystal), c.source);
            if (!source.calibrated()) source = calibrate_poling_period(source);
            const auto grid = SpectralGrid::covering(source.degenerate_omega(), c.grid_min_nm, c.grid_max_nm,
                                                     c.grid_samples);
            if (fit || c.fit_bandwidth) source = fit_crystal_length(source, grid, target_nm);
            const auto pmf = phase_matching(source, grid, c.bandwidth_scale);
            const double bw = spectrum_bandwidth_fwhm(pmf);
            std::ostringstream csv;
            csv << "signal_wavelength_nm,delta_omega_rad_s,phi,phi_sq\n";
            for (std::size_t j = 0; j < grid.size(); ++j) {
                csv << format_csv_number(nm_from_omega(grid.signal_omega(j))) << ','
                    << format_csv_number(grid.detuning(j)) << ',' << format_csv_number(pmf.amplitude()[j]) << ','
                    << format_csv_number(pmf.squared()[j]) << '\n';
            }
            const Json metrics = {{"poling_period_um", source.poling_period_um()},
                                  {"crystal_length_mm", source.params().crystal_length_mm},
                                  {"temperature_c", source.temperature_c()},
                                  {"bandwidth_nm", bw},
                                  {"photons_per_mode", photons_per_mode(flux, 2.0 * source.params().pump_wavelength_nm, bw)}};
            const fs::path dir = out_dir(g, "spdc");
            fs::create_directories(dir);
            write_file(dir / "spectrum.csv", csv.str());
            write_file(dir / "spdc.json", metrics.dump(2) + "\n");
            const Json manifest = make_manifest("spdc", dir, {"spectrum.csv", "spdc.json"}, std::nullopt);
            write_file(dir / "manifest.json", manifest.dump(2) + "\n");
            std::cout << metrics.dump(2) << '\n';
        } else if (comp->parsed()) {
            const auto ins = parse_list(insertions);
            const auto base = parse_list(baseline);
            if (ins.size() != 4 || base.size() != 4) throw ConfigError("--insertions and --baseline-glass need 4 values");
            ScenarioConfig c = base_config(g, ScenarioConfig{});
            CompressorParams p;
            p.prism = PrismSpec{c.apex_angle_deg, c.side_length_mm, default_library().get(c.glass)};
            p.tip_spacing_mm = spacing;
            p.pair_gap_mm = c.pair_gap_mm;
            p.design_wavelength_nm = c.design_wavelength_nm;
            for (int k = 0; k < 4; ++k) {
                p.baseline_glass_mm[k] = base[k];
                p.insertions_mm[k] = ins[k];
            }
            const auto layout = CompressorLayout::build(p);
            std::ostringstream csv;
            csv << "omega_rad_s,wavelength_nm,opl_m,glass_mm,phase_rad\n";
            const double w_lo = omega_from_nm(band_max), w_hi = omega_from_nm(band_min);
            for (std::size_t k = 0; k < band_samples; ++k) {
                const double w = w_lo + (w_hi - w_lo) * static_cast<double>(k) / static_cast<double>(band_samples - 1);
                const auto t = trace_optical_path(layout, w);
                char phase[40];
                std::snprintf(phase, sizeof phase, "%.15g", w * t.opl_m / kSpeedOfLight);
                csv << format_csv_number(w) << ',' << format_csv_number(nm_from_omega(w)) << ','
                    << format_csv_number(t.opl_m) << ',' << format_csv_number(t.glass_path_mm) << ',' << phase << '\n';
            }
            const auto d = phase_derivatives(layout, layout.design_omega());
            const Json metrics = {
                {"gd_fs", d.gd_fs},
                {"gdd_fs2", d.gdd_fs2},
                {"tod_fs3", d.tod_fs3},
                {"gdd_slope_fs2_per_mm", gdd_slope(layout, 3)},
                {"material_gvd_fs2_per_mm",
                 gvd(p.prism.material, Wavelength::from_nm(p.design_wavelength_nm), kRoomTemperatureC)},
                {"deflection_deg", layout.deflection_deg()},
                {"translator_ratio", translator_to_glass_path(layout, 1.0, 3)},
                {"closure_residual_rad", layout.closure_residual_rad()}};
            const fs::path dir = out_dir(g, "compressor");
            fs::create_directories(dir);
            write_file(dir / "compressor.csv", csv.str());
            write_file(dir / "compressor.json", metrics.dump(2) + "\n");
            const Json manifest = make_manifest("compressor", dir, {"compressor.csv", "compressor.json"}, std::nullopt);
            write_file(dir / "manifest.json", manifest.dump(2) + "\n");
            std::cout << metrics.dump(2) << '\n';
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
