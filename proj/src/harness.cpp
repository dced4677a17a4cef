#include "franson/harness.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <initializer_list>
#include <map>
#include <set>
#include <sstream>

#include "franson/error.hpp"
#include "franson/materials.hpp"

#ifndef FRANSON_VERSION
#define FRANSON_VERSION "0.0.0"
#endif

namespace franson {

// ---------------------------------------------------------------- config

void NoiseModel::validate() const {
    if (peak_rate < 0.0 || dark_rate < 0.0 || stray_rate < 0.0) throw ConfigError("noise rates must be >= 0");
    if (!(dwell_s > 0.0)) throw ConfigError("noise dwell must be positive");
}

std::vector<CaseSpec> fig2_cases() {
    return {{"a", 0, 0}, {"b", -1, 0}, {"c", -2, 0}, {"d", -3, 0}, {"e", 0, 1}, {"f", 0, 2}, {"g", 0, 3}};
}

std::vector<CaseSpec> fig3_cases() { return {{"a", 0, 0}, {"b", -1, 1}, {"c", -2, 2}, {"d", -3, 3}}; }

ScenarioConfig ScenarioConfig::fig2() {
    ScenarioConfig c;
    c.name = "fig2";
    c.cases = fig2_cases();
    return c;
}

ScenarioConfig ScenarioConfig::fig3() {
    ScenarioConfig c;
    c.name = "fig3";
    c.cases = fig3_cases();
    return c;
}

namespace {

const char* mode_name(PhaseMode m) { return m == PhaseMode::Polynomial ? "polynomial" : "raytraced"; }

PhaseMode parse_mode(const std::string& s) {
    if (s == "polynomial") return PhaseMode::Polynomial;
    if (s == "raytraced") return PhaseMode::RayTraced;
    throw ConfigError("mode must be 'polynomial' or 'raytraced', got '" + s + "'");
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items()) {
        if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <class T>
void take(const Json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

Json arm_json(const ArmLayoutConfig& a) {
    return {{"tip_spacing_mm", a.tip_spacing_mm}, {"p2_glass_mm", a.p2_glass_mm}, {"p3_glass_mm", a.p3_glass_mm}};
}

void read_arm(const Json& j, ArmLayoutConfig& a, const std::string& where) {
    check_keys(j, {"tip_spacing_mm", "p2_glass_mm", "p3_glass_mm"}, where);
    take(j, "tip_spacing_mm", a.tip_spacing_mm);
    take(j, "p2_glass_mm", a.p2_glass_mm);
    take(j, "p3_glass_mm", a.p3_glass_mm);
}

Json noise_json(const NoiseModel& n) {
    return {{"peak_rate", n.peak_rate}, {"dark_rate", n.dark_rate}, {"stray_rate", n.stray_rate},
            {"dwell_s", n.dwell_s},     {"seed", n.seed}};
}

}  // namespace

Json to_json(const ScenarioConfig& c) {
    Json cases = Json::array();
    for (const auto& k : c.cases) {
        cases.push_back({{"label", k.label}, {"signal_steps", k.signal_steps}, {"idler_steps", k.idler_steps}});
    }
    Json source = {{"crystal", c.crystal},
                   {"pump_wavelength_nm", c.source.pump_wavelength_nm},
                   {"pump_power_w", c.source.pump_power_w},
                   {"crystal_length_mm", c.source.crystal_length_mm},
                   {"temperature_c", c.source.temperature_c}};
    if (c.source.poling_period_um) source["poling_period_um"] = *c.source.poling_period_um;
    return {
        {"name", c.name},
        {"mode", mode_name(c.mode)},
        {"cases", cases},
        {"delta_fs2", c.delta_fs2},
        {"glass_step_mm", c.glass_step_mm},
        {"bandwidth_scale", c.bandwidth_scale},
        {"fit_bandwidth", c.fit_bandwidth},
        {"target_bandwidth_nm", c.target_bandwidth_nm},
        {"source", source},
        {"grid",
         {{"samples", c.grid_samples},
          {"min_nm", c.grid_min_nm},
          {"max_nm", c.grid_max_nm},
          {"raytraced_min_nm", c.raytraced_min_nm},
          {"raytraced_max_nm", c.raytraced_max_nm}}},
        {"compressor",
         {{"glass", c.glass},
          {"apex_angle_deg", c.apex_angle_deg},
          {"side_length_mm", c.side_length_mm},
          {"pair_gap_mm", c.pair_gap_mm},
          {"design_wavelength_nm", c.design_wavelength_nm},
          {"signal", arm_json(c.signal_arm)},
          {"idler", arm_json(c.idler_arm)}}},
        {"window", {{"center_fs", c.window.center_fs}, {"span_fs", c.window.span_fs}, {"samples", c.window.samples}}},
        {"peak",
         {{"threshold_fraction", c.peak.threshold_fraction}, {"secondary_fraction", c.peak.secondary_fraction}}},
        {"noise", c.noise ? noise_json(*c.noise) : Json(nullptr)},
    };
}

ScenarioConfig scenario_from_json(const Json& j, ScenarioConfig c) {
    check_keys(j,
               {"name", "mode", "cases", "delta_fs2", "glass_step_mm", "bandwidth_scale", "fit_bandwidth",
                "target_bandwidth_nm", "source", "grid", "compressor", "window", "peak", "noise"},
               "scenario");
    take(j, "name", c.name);
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    if (j.contains("cases")) {
        c.cases.clear();
        for (const auto& k : j.at("cases")) {
            check_keys(k, {"label", "signal_steps", "idler_steps"}, "case");
            CaseSpec spec;
            take(k, "label", spec.label);
            take(k, "signal_steps", spec.signal_steps);
            take(k, "idler_steps", spec.idler_steps);
            if (spec.label.empty()) throw ConfigError("every case needs a label");
            c.cases.push_back(spec);
        }
    }
    take(j, "delta_fs2", c.delta_fs2);
    take(j, "glass_step_mm", c.glass_step_mm);
    take(j, "bandwidth_scale", c.bandwidth_scale);
    take(j, "fit_bandwidth", c.fit_bandwidth);
    take(j, "target_bandwidth_nm", c.target_bandwidth_nm);
    if (j.contains("source")) {
        const auto& s = j.at("source");
        check_keys(s, {"crystal", "pump_wavelength_nm", "pump_power_w", "crystal_length_mm", "temperature_c",
                       "poling_period_um"},
                   "source");
        take(s, "crystal", c.crystal);
        take(s, "pump_wavelength_nm", c.source.pump_wavelength_nm);
        take(s, "pump_power_w", c.source.pump_power_w);
        take(s, "crystal_length_mm", c.source.crystal_length_mm);
        take(s, "temperature_c", c.source.temperature_c);
        if (s.contains("poling_period_um") && !s.at("poling_period_um").is_null()) {
            c.source.poling_period_um = s.at("poling_period_um").get<double>();
        }
    }
    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        check_keys(g, {"samples", "min_nm", "max_nm", "raytraced_min_nm", "raytraced_max_nm"}, "grid");
        take(g, "samples", c.grid_samples);
        take(g, "min_nm", c.grid_min_nm);
        take(g, "max_nm", c.grid_max_nm);
        take(g, "raytraced_min_nm", c.raytraced_min_nm);
        take(g, "raytraced_max_nm", c.raytraced_max_nm);
    }
    if (j.contains("compressor")) {
        const auto& p = j.at("compressor");
        check_keys(p, {"glass", "apex_angle_deg", "side_length_mm", "pair_gap_mm", "design_wavelength_nm", "signal",
                       "idler"},
                   "compressor");
        take(p, "glass", c.glass);
        take(p, "apex_angle_deg", c.apex_angle_deg);
        take(p, "side_length_mm", c.side_length_mm);
        take(p, "pair_gap_mm", c.pair_gap_mm);
        take(p, "design_wavelength_nm", c.design_wavelength_nm);
        if (p.contains("signal")) read_arm(p.at("signal"), c.signal_arm, "compressor.signal");
        if (p.contains("idler")) read_arm(p.at("idler"), c.idler_arm, "compressor.idler");
    }
    if (j.contains("window")) {
        const auto& w = j.at("window");
        check_keys(w, {"center_fs", "span_fs", "samples"}, "window");
        take(w, "center_fs", c.window.center_fs);
        take(w, "span_fs", c.window.span_fs);
        take(w, "samples", c.window.samples);
    }
    if (j.contains("peak")) {
        const auto& p = j.at("peak");
        check_keys(p, {"threshold_fraction", "secondary_fraction"}, "peak");
        take(p, "threshold_fraction", c.peak.threshold_fraction);
        take(p, "secondary_fraction", c.peak.secondary_fraction);
    }
    if (j.contains("noise")) {
        const auto& n = j.at("noise");
        if (n.is_null()) {
            c.noise.reset();
        } else {
            check_keys(n, {"peak_rate", "dark_rate", "stray_rate", "dwell_s", "seed"}, "noise");
            NoiseModel m = c.noise.value_or(NoiseModel{});
            take(n, "peak_rate", m.peak_rate);
            take(n, "dark_rate", m.dark_rate);
            take(n, "stray_rate", m.stray_rate);
            take(n, "dwell_s", m.dwell_s);
            take(n, "seed", m.seed);
            m.validate();
            c.noise = m;
        }
    }
    if (!(c.bandwidth_scale > 0.0)) throw ConfigError("bandwidth_scale must be positive");
    if (!(c.glass_step_mm > 0.0)) throw ConfigError("glass_step_mm must be positive");
    return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path, ScenarioConfig defaults) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return scenario_from_json(j, std::move(defaults));
}

// ---------------------------------------------------------------- noise

double BackgroundMeasurement::error() const { return std::sqrt(rate() * dwell_s) / dwell_s; }

NoisyTrace simulate_counts(const CorrelationTrace& trace, const NoiseModel& noise, std::mt19937_64& rng) {
    noise.validate();
    NoisyTrace out;
    out.tau_fs = trace.tau_fs;
    const std::size_t n = trace.rate.size();
    out.expected.resize(n);
    out.rate.resize(n);
    out.error.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double expected = noise.peak_rate * trace.rate[k] + noise.background_rate();
        std::poisson_distribution<long long> draw(expected * noise.dwell_s);
        const auto counts = static_cast<double>(draw(rng));
        out.expected[k] = expected;
        out.rate[k] = counts / noise.dwell_s;
        out.error[k] = std::sqrt(counts) / noise.dwell_s;
    }
    return out;
}

BackgroundMeasurement simulate_background(const NoiseModel& noise, std::mt19937_64& rng) {
    noise.validate();
    std::poisson_distribution<long long> blocked(noise.dark_rate * noise.dwell_s);
    std::poisson_distribution<long long> stray(noise.stray_rate * noise.dwell_s);
    BackgroundMeasurement m;
    m.dwell_s = noise.dwell_s;
    m.blocked_rate = static_cast<double>(blocked(rng)) / noise.dwell_s;
    m.stray_increment = static_cast<double>(stray(rng)) / noise.dwell_s;
    return m;
}

CorrectedTrace subtract_background(const NoisyTrace& noisy, const BackgroundMeasurement& before,
                                   const BackgroundMeasurement& after) {
    const double mean = 0.5 * (before.rate() + after.rate());
    const double mean_err = 0.5 * std::hypot(before.error(), after.error());
    CorrectedTrace out;
    out.tau_fs = noisy.tau_fs;
    out.rate.resize(noisy.rate.size());
    out.error.resize(noisy.rate.size());
    for (std::size_t k = 0; k < noisy.rate.size(); ++k) {
        out.rate[k] = noisy.rate[k] - mean;
        out.error[k] = std::hypot(noisy.error[k], mean_err);
        if (out.rate[k] < 0.0) ++out.negative_points;
    }
    return out;
}

// ---------------------------------------------------------------- scenario

namespace {

struct Arms {
    ArmPhase signal;
    ArmPhase idler;
};

CompressorParams arm_params(const ScenarioConfig& c, const MaterialModel& glass, const ArmLayoutConfig& arm,
                            double outer_glass_mm) {
    CompressorParams p;
    p.prism = PrismSpec{c.apex_angle_deg, c.side_length_mm, glass};
    p.tip_spacing_mm = arm.tip_spacing_mm;
    p.pair_gap_mm = c.pair_gap_mm;
    p.baseline_glass_mm = {outer_glass_mm, arm.p2_glass_mm, arm.p3_glass_mm, outer_glass_mm};
    p.design_wavelength_nm = c.design_wavelength_nm;
    return p;
}

// Equal P1/P4 glass giving zero GDD at the design wavelength.
CompressorLayout zero_gdd_layout(const ScenarioConfig& c, const MaterialModel& glass, const ArmLayoutConfig& arm) {
    const auto gdd = [&](double g) {
        const auto layout = CompressorLayout::build(arm_params(c, glass, arm, g));
        return phase_derivatives(layout, layout.design_omega()).gdd_fs2;
    };
    double lo = 0.05;
    double hi = c.side_length_mm * 0.95;
    if (!(gdd(lo) < 0.0 && gdd(hi) > 0.0)) {
        throw CalibrationError("no zero-GDD P1/P4 glass for tip spacing " + std::to_string(arm.tip_spacing_mm) +
                               " mm with P2/P3 glass " + std::to_string(arm.p2_glass_mm) + "/" +
                               std::to_string(arm.p3_glass_mm) + " mm");
    }
    for (int it = 0; it < 100 && hi - lo > 1e-13; ++it) {
        const double mid = 0.5 * (lo + hi);
        (gdd(mid) < 0.0 ? lo : hi) = mid;
    }
    return CompressorLayout::build(arm_params(c, glass, arm, 0.5 * (lo + hi)));
}

CompressorLayout with_p3_glass_change(const CompressorLayout& reference, double glass_change_mm) {
    if (glass_change_mm == 0.0) return reference;
    const double move = glass_path_to_translator(reference, glass_change_mm, 3);
    return reference.with_insertion(3, reference.params().insertions_mm[2] + move);
}

class Experiment {
public:
    explicit Experiment(const ScenarioConfig& config) : cfg_(config) {
        const auto& lib = default_library();
        SpdcSource source(lib.get(cfg_.crystal), cfg_.source);
        if (!source.calibrated()) source = calibrate_poling_period(source);
        const SpectralGrid full =
            SpectralGrid::covering(source.degenerate_omega(), cfg_.grid_min_nm, cfg_.grid_max_nm, cfg_.grid_samples);
        if (cfg_.fit_bandwidth) source = fit_crystal_length(source, full, cfg_.target_bandwidth_nm);
        source_ = source;
        summary_.poling_period_um = source.poling_period_um();
        summary_.crystal_length_mm = source.params().crystal_length_mm;
        summary_.bandwidth_nm = spectrum_bandwidth_fwhm(phase_matching(source, full, cfg_.bandwidth_scale));

        glass_ = lib.get(cfg_.glass);
        group_index_ = group_index(glass_, Wavelength::from_nm(cfg_.design_wavelength_nm), kRoomTemperatureC);

        if (cfg_.mode == PhaseMode::RayTraced) {
            grid_.emplace(SpectralGrid::covering(source.degenerate_omega(), cfg_.raytraced_min_nm,
                                                 cfg_.raytraced_max_nm, cfg_.grid_samples));
            ref_signal_.emplace(zero_gdd_layout(cfg_, glass_, cfg_.signal_arm));
            ref_idler_.emplace(zero_gdd_layout(cfg_, glass_, cfg_.idler_arm));
            deflection_deg_ = ref_signal_->deflection_deg();
            phase_signal_ = std::make_shared<const SpectralPhase>(spectral_phase(*ref_signal_, *grid_));
            phase_idler_ = std::make_shared<const SpectralPhase>(spectral_phase(*ref_idler_, *grid_));
            reference_r1_ = phase_signal_->derivatives().gd_fs - phase_idler_->derivatives().gd_fs;
        } else {
            grid_.emplace(full);
            deflection_deg_ =
                min_deviation_geometry(refractive_index(glass_, Wavelength::from_nm(cfg_.design_wavelength_nm),
                                                        kRoomTemperatureC),
                                       cfg_.apex_angle_deg)
                    .deflection_deg;
        }
        pmf_.emplace(phase_matching(source, *grid_, cfg_.bandwidth_scale));
    }

    const SourceSummary& source_summary() const { return summary_; }
    double group_index_value() const { return group_index_; }
    double deflection() const { return deflection_deg_; }
    const PhaseMatchingFunction& pmf() const { return *pmf_; }

    CaseResult run(const CaseSpec& spec) const {
        auto [r, raw] = prepare(spec);
        const auto amplitude = assemble_amplitude(*pmf_, with_delay(raw, r.stage_compensation_fs));
        r.trace = correlation_trace(amplitude, cfg_.window);
        if (r.stage_compensation_fs == 0.0 && r.residual[0] == 0.0) {
            const auto m = peak_metrics(r.trace, cfg_.peak);
            r.raw_centroid_fs = m.centroid_fs;
            r.raw_peak_fs = m.peak_tau_fs;
        } else {
            // Look where the traced group delays put the peak.
            TraceWindow w = cfg_.window;
            w.center_fs = cfg_.window.center_fs - r.residual[0];
            const auto m = peak_metrics(correlation_trace(assemble_amplitude(*pmf_, raw), w), cfg_.peak);
            r.raw_centroid_fs = m.centroid_fs;
            r.raw_peak_fs = m.peak_tau_fs;
        }
        return r;
    }

    BiphotonAmplitude compensated_amplitude(const CaseSpec& spec) const {
        auto [r, raw] = prepare(spec);
        return assemble_amplitude(*pmf_, with_delay(raw, r.stage_compensation_fs));
    }

private:
    std::pair<CaseResult, SampledPhase> prepare(const CaseSpec& spec) const {
        CaseResult r;
        r.spec = spec;
        const Arms arms = arms_for(spec, r);
        const auto res = cancellation_residual(arms.signal, arms.idler);
        r.phi2_s_fs2 = arms.signal.coefficients().gdd_fs2;
        r.phi2_i_fs2 = arms.idler.coefficients().gdd_fs2;
        r.residual = {res[0] - reference_r1_, res[1], res[2]};
        if (cfg_.mode == PhaseMode::RayTraced) {
            const double d_signal = insertion_delay(r.glass_change_s_mm, group_index_, deflection_deg_);
            const double d_idler = insertion_delay(r.glass_change_i_mm, group_index_, deflection_deg_);
            r.stage_compensation_fs = d_idler - d_signal;
        }
        // tau = 0 is where the reference pair peaks.
        SampledPhase raw = with_delay(combined_phase(arms.signal, arms.idler, *grid_), -reference_r1_);
        return {std::move(r), std::move(raw)};
    }

    Arms arms_for(const CaseSpec& spec, CaseResult& r) const {
        if (cfg_.mode == PhaseMode::Polynomial) {
            return {ArmPhase::polynomial(spec.signal_steps * cfg_.delta_fs2),
                    ArmPhase::polynomial(spec.idler_steps * cfg_.delta_fs2)};
        }
        r.glass_change_s_mm = spec.signal_steps * cfg_.glass_step_mm;
        r.glass_change_i_mm = spec.idler_steps * cfg_.glass_step_mm;
        const auto traced = [&](const CompressorLayout& ref, double change,
                                const std::shared_ptr<const SpectralPhase>& ref_phase) {
            if (change == 0.0) return ArmPhase::raytraced(ref_phase);
            const auto layout = with_p3_glass_change(ref, change);
            return ArmPhase::raytraced(std::make_shared<const SpectralPhase>(spectral_phase(layout, *grid_)));
        };
        return {traced(*ref_signal_, r.glass_change_s_mm, phase_signal_),
                traced(*ref_idler_, r.glass_change_i_mm, phase_idler_)};
    }

    ScenarioConfig cfg_;
    std::optional<SpdcSource> source_;
    SourceSummary summary_;
    MaterialModel glass_;
    double group_index_ = 0.0;
    double deflection_deg_ = 0.0;
    std::optional<SpectralGrid> grid_;
    std::optional<PhaseMatchingFunction> pmf_;
    std::optional<CompressorLayout> ref_signal_;
    std::optional<CompressorLayout> ref_idler_;
    std::shared_ptr<const SpectralPhase> phase_signal_;
    std::shared_ptr<const SpectralPhase> phase_idler_;
    double reference_r1_ = 0.0;
};

void normalize_case(CaseResult& c, double height, const PeakOptions& options) {
    c.trace = normalized(std::move(c.trace), height);
    c.metrics = peak_metrics(c.trace, options);
}

std::vector<const CaseResult*> one_arm_sequence(const RunResult& run, bool signal) {
    std::vector<const CaseResult*> seq;
    for (const auto& c : run.cases) {
        const double other = signal ? c.spec.idler_steps : c.spec.signal_steps;
        if (other == 0.0) seq.push_back(&c);
    }
    std::stable_sort(seq.begin(), seq.end(), [signal](const CaseResult* a, const CaseResult* b) {
        const double x = signal ? a->spec.signal_steps : a->spec.idler_steps;
        const double y = signal ? b->spec.signal_steps : b->spec.idler_steps;
        return std::abs(x) < std::abs(y);
    });
    return seq;
}

Json summarize(const RunResult& run) {
    Json s;
    Json heights, widths, skew, minima, r3;
    double sum = 0.0, lo = 1e300, hi = -1e300;
    for (const auto& c : run.cases) {
        heights[c.spec.label] = c.metrics.height;
        widths[c.spec.label] = c.metrics.fwhm_fs;
        skew[c.spec.label] = c.metrics.skewness;
        r3[c.spec.label] = c.residual[2];
        const auto m = central_minimum(c.trace, c.metrics);
        minima[c.spec.label] = m ? Json(*m) : Json(nullptr);
        sum += c.metrics.fwhm_fs;
        lo = std::min(lo, c.metrics.fwhm_fs);
        hi = std::max(hi, c.metrics.fwhm_fs);
    }
    s["height"] = heights;
    s["fwhm_fs"] = widths;
    s["skewness"] = skew;
    s["residual3_fs3"] = r3;
    s["central_minimum_fs"] = minima;
    if (!run.cases.empty()) {
        const double mean = sum / static_cast<double>(run.cases.size());
        double worst = 0.0;
        for (const auto& c : run.cases) worst = std::max(worst, std::abs(c.metrics.fwhm_fs - mean));
        s["mean_fwhm_fs"] = mean;
        s["fwhm_range_fs"] = hi - lo;
        s["max_fwhm_deviation_fraction"] = worst / mean;
    }
    // Height ordering along each one-arm sequence, a zero-GDD case first.
    for (const bool signal : {true, false}) {
        const auto seq = one_arm_sequence(run, signal);
        if (seq.size() < 2) continue;
        bool decreasing = true;
        for (std::size_t k = 1; k < seq.size(); ++k) {
            if (!(seq[k]->metrics.height < seq[k - 1]->metrics.height)) decreasing = false;
        }
        s[signal ? "height_decreasing_signal_only" : "height_decreasing_idler_only"] = decreasing;
    }
    return s;
}

}  // namespace

RunResult run_scenario(const ScenarioConfig& config) {
    if (config.cases.empty()) throw ConfigError("scenario has no cases");
    std::set<std::string> labels;
    for (const auto& c : config.cases) {
        if (!labels.insert(c.label).second) throw ConfigError("duplicate case label '" + c.label + "'");
    }
    if (config.noise) config.noise->validate();

    const Experiment exp(config);
    RunResult run;
    run.config = config;
    run.source = exp.source_summary();
    run.group_index = exp.group_index_value();
    run.deflection_deg = exp.deflection();

    CaseResult ref = exp.run({"reference", 0, 0});
    run.reference_height = *std::max_element(ref.trace.rate.begin(), ref.trace.rate.end());
    run.reference_raw_centroid_fs = ref.raw_centroid_fs;
    normalize_case(ref, run.reference_height, config.peak);
    run.reference = ref.trace;

    for (std::size_t k = 0; k < config.cases.size(); ++k) {
        CaseResult c = exp.run(config.cases[k]);
        normalize_case(c, run.reference_height, config.peak);
        if (config.noise) {
            std::seed_seq seq{static_cast<std::uint32_t>(config.noise->seed & 0xffffffffu),
                              static_cast<std::uint32_t>(config.noise->seed >> 32),
                              static_cast<std::uint32_t>(k)};
            std::mt19937_64 rng(seq);
            c.noisy = simulate_counts(c.trace, *config.noise, rng);
            const auto before = simulate_background(*config.noise, rng);
            const auto after = simulate_background(*config.noise, rng);
            c.background = std::make_pair(before, after);
            c.corrected = subtract_background(*c.noisy, before, after);
        }
        run.cases.push_back(std::move(c));
    }
    run.summary = summarize(run);
    if (config.mode == PhaseMode::RayTraced) {
        try {
            const auto g = extract_group_index(run, run.deflection_deg);
            Json est = Json::array();
            for (const auto& e : g.estimates) {
                est.push_back({{"case", e.label},
                               {"glass_change_mm", e.glass_change_mm},
                               {"shift_fs", e.shift_fs},
                               {"group_index", e.group_index}});
            }
            run.summary["group_index"] = {{"estimates", est}, {"mean", g.mean}, {"model", run.group_index}};
        } catch (const MetricsError&) {
            // No case moved any glass.
        }
    }
    return run;
}

BiphotonAmplitude case_amplitude(const ScenarioConfig& config, const CaseSpec& spec) {
    return Experiment(config).compensated_amplitude(spec);
}

RunResult run_fig2(ScenarioConfig config) {
    if (config.cases.empty()) config.cases = fig2_cases();
    if (config.name == "custom") config.name = "fig2";
    return run_scenario(config);
}

RunResult run_fig3(ScenarioConfig config) {
    if (config.cases.empty()) config.cases = fig3_cases();
    if (config.name == "custom") config.name = "fig3";
    return run_scenario(config);
}

// ---------------------------------------------------------------- analysis

namespace {

GroupIndexEstimate estimate(const RunResult& run, const CaseResult& c, double glass_mm, double deflection_deg) {
    const double shift = c.raw_centroid_fs - run.reference_raw_centroid_fs;
    const double n = kSpeedOfLight * shift * kFs / (glass_mm * 1e-3) + 1.0 / std::cos(deg_to_rad(deflection_deg) / 2.0);
    return {c.spec.label, glass_mm, shift, n};
}

GroupIndexResult finish(std::vector<GroupIndexEstimate> est) {
    if (est.empty()) throw MetricsError("group-index extraction is ill-conditioned: no case changes the glass path");
    GroupIndexResult r;
    double sum = 0.0;
    for (const auto& e : est) sum += e.group_index;
    r.mean = sum / static_cast<double>(est.size());
    r.estimates = std::move(est);
    return r;
}

}  // namespace

GroupIndexResult extract_group_index(const RunResult& results, double deflection_deg) {
    std::vector<GroupIndexEstimate> est;
    for (const auto& c : results.cases) {
        const double dl = c.glass_change_i_mm - c.glass_change_s_mm;
        if (std::abs(dl) < 1e-9) continue;
        est.push_back(estimate(results, c, dl, deflection_deg));
    }
    return finish(std::move(est));
}

GroupIndexResult extract_group_index(const RunResult& results, const std::vector<double>& glass_steps_mm,
                                     double deflection_deg) {
    if (glass_steps_mm.size() != results.cases.size()) {
        throw ConfigError("need one glass step per case (" + std::to_string(results.cases.size()) + ")");
    }
    std::vector<GroupIndexEstimate> est;
    for (std::size_t k = 0; k < results.cases.size(); ++k) {
        if (std::abs(glass_steps_mm[k]) < 1e-9) continue;
        est.push_back(estimate(results, results.cases[k], 2.0 * glass_steps_mm[k], deflection_deg));
    }
    return finish(std::move(est));
}

std::vector<ScalingRow> bandwidth_scaling_study(const ScenarioConfig& base, const std::vector<double>& scales) {
    std::vector<ScalingRow> rows;
    const CaseSpec widest = fig3_cases().back();
    for (const double s : scales) {
        if (!(s > 0.0)) throw ConfigError("bandwidth scales must be positive");
        ScenarioConfig cfg = base;
        cfg.bandwidth_scale = s;
        cfg.cases = {widest};
        cfg.noise.reset();
        const RunResult run = run_scenario(cfg);
        const auto& c = run.cases.front();

        // Same amplitude with no phase at all.
        const Experiment exp(cfg);
        const auto& pmf = exp.pmf();
        const SampledPhase flat{pmf.grid(), std::vector<double>(pmf.grid().size(), 0.0)};
        const auto control = peak_metrics(correlation_trace(assemble_amplitude(pmf, flat), cfg.window), cfg.peak);

        rows.push_back({s, run.source.bandwidth_nm, c.metrics.fwhm_fs, c.metrics.skewness, c.residual[2],
                        control.skewness});
    }
    return rows;
}

std::optional<double> central_minimum(const CorrelationTrace& trace, const PeakMetrics& metrics, double depth) {
    const auto& t = trace.tau_fs;
    const auto& r = trace.rate;
    std::optional<double> best;
    double best_depth = depth * metrics.height;
    for (std::size_t k = 1; k + 1 < r.size(); ++k) {
        if (t[k] <= metrics.half_left_fs || t[k] >= metrics.half_right_fs) continue;
        if (!(r[k] < r[k - 1] && r[k] <= r[k + 1])) continue;
        double left = 0.0, right = 0.0;
        for (std::size_t q = 0; q < k; ++q) {
            if (t[q] >= metrics.half_left_fs) left = std::max(left, r[q]);
        }
        for (std::size_t q = k + 1; q < r.size(); ++q) {
            if (t[q] <= metrics.half_right_fs) right = std::max(right, r[q]);
        }
        const double d = std::min(left, right) - r[k];
        if (d >= best_depth) {
            best_depth = d;
            best = t[k];
        }
    }
    return best;
}

// ---------------------------------------------------------------- output

std::string format_csv_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

Json metrics_json(const CaseResult& c) {
    Json sec = Json::array();
    for (const auto& m : c.metrics.secondary_maxima) sec.push_back({{"tau_fs", m.tau_fs}, {"R", m.rate}});
    Json j = {{"case", c.spec.label},
              {"phi2_s_fs2", c.phi2_s_fs2},
              {"phi2_i_fs2", c.phi2_i_fs2},
              {"fwhm_fs", c.metrics.fwhm_fs},
              {"centroid_fs", c.metrics.centroid_fs},
              {"peak_tau_fs", c.metrics.peak_tau_fs},
              {"half_height_fs", {c.metrics.half_left_fs, c.metrics.half_right_fs}},
              {"height", c.metrics.height},
              {"secondary_maxima", sec},
              {"skewness", c.metrics.skewness},
              {"residual1_fs", c.residual[0]},
              {"residual2_fs2", c.residual[1]},
              {"residual3_fs3", c.residual[2]},
              {"glass_change_signal_mm", c.glass_change_s_mm},
              {"glass_change_idler_mm", c.glass_change_i_mm},
              {"stage_compensation_fs", c.stage_compensation_fs},
              {"raw_centroid_fs", c.raw_centroid_fs},
              {"raw_peak_fs", c.raw_peak_fs}};
    if (c.background) {
        j["background"] = {{"before_per_s", c.background->first.rate()},
                           {"after_per_s", c.background->second.rate()}};
    }
    if (c.corrected) j["negative_corrected_points"] = c.corrected->negative_points;
    return j;
}

namespace {

std::string file_label(const std::string& label) {
    std::string s;
    for (const char ch : label) s += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
    return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

std::string trace_csv(const CorrelationTrace& trace, const CaseResult* c) {
    std::ostringstream os;
    const bool noisy = c && c->noisy;
    os << "tau_fs,R_norm";
    if (noisy) os << ",R_counts_per_s,R_err,R_bgsub_per_s,R_bgsub_err";
    os << '\n';
    for (std::size_t k = 0; k < trace.tau_fs.size(); ++k) {
        os << format_csv_number(trace.tau_fs[k]) << ',' << format_csv_number(trace.rate[k]);
        if (noisy) {
            os << ',' << format_csv_number(c->noisy->rate[k]) << ',' << format_csv_number(c->noisy->error[k]) << ','
               << format_csv_number(c->corrected->rate[k]) << ',' << format_csv_number(c->corrected->error[k]);
        }
        os << '\n';
    }
    return os.str();
}

std::string utc_timestamp(bool& from_env) {
    std::time_t t = std::time(nullptr);
    from_env = false;
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env && *env) {
        char* end = nullptr;
        const long long v = std::strtoll(env, &end, 10);
        if (end && *end == '\0' && v >= 0) {
            t = static_cast<std::time_t>(v);
            from_env = true;
        }
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

std::string svg_plot(const CorrelationTrace& trace, const std::string& title) {
    constexpr double W = 640.0, H = 360.0, M = 40.0;
    const double t0 = trace.tau_fs.front(), t1 = trace.tau_fs.back();
    double top = 0.0;
    for (const double r : trace.rate) top = std::max(top, r);
    if (!(top > 0.0)) top = 1.0;
    std::ostringstream os;
    char buf[64];
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << M << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
    os << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M << "\" y2=\"" << H - M
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << M << "\" y=\"" << H - 12 << "\" font-size=\"11\">" << format_csv_number(t0)
       << " fs</text><text x=\"" << W - M - 60 << "\" y=\"" << H - 12 << "\" font-size=\"11\">"
       << format_csv_number(t1) << " fs</text>\n";
    os << "<polyline fill=\"none\" stroke=\"navy\" stroke-width=\"1\" points=\"";
    for (std::size_t k = 0; k < trace.tau_fs.size(); ++k) {
        const double x = M + (trace.tau_fs[k] - t0) / (t1 - t0) * (W - 2 * M);
        const double y = H - M - trace.rate[k] / top * (H - 2 * M);
        std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x, y);
        os << buf;
    }
    os << "\"/>\n</svg>\n";
    return os.str();
}

Json make_manifest(const std::string& command, const std::filesystem::path& dir,
                   const std::vector<std::string>& files, std::optional<std::uint64_t> seed) {
    bool from_env = false;
    const std::string created = utc_timestamp(from_env);
    Json list = Json::array();
    for (const auto& f : files) {
        list.push_back({{"name", f}, {"bytes", std::filesystem::file_size(dir / f)}});
    }
    Json rng = nullptr;
    if (seed) {
        rng = {{"algorithm", "std::mt19937_64"},
               {"distribution", "std::poisson_distribution"},
               {"seeding", "std::seed_seq{seed_lo, seed_hi, case_index}"},
               {"seed", *seed}};
    }
    return {{"schema", "franson-run-manifest"},
            {"schema_version", 1},
            {"tool", "sim"},
            {"tool_version", FRANSON_VERSION},
            {"command", command},
            {"created_utc", created},
            {"timestamp_source", std::string(from_env ? "SOURCE_DATE_EPOCH" : "clock")},
            {"rng", rng},
            {"fft", {{"library", "FFTW"}, {"version", std::string(fftw_version)}}},
            {"materials", {{"file", default_material_file().filename().string()},
                           {"version", default_library().version()}}},
            {"files", list}};
}

std::vector<std::string> validate_manifest(const Json& m) {
    std::vector<std::string> problems;
    if (!m.is_object()) return {"manifest is not an object"};
    const auto need = [&](const char* key, auto predicate, const char* what) {
        if (!m.contains(key)) {
            problems.push_back(std::string("missing '") + key + "'");
        } else if (!predicate(m.at(key))) {
            problems.push_back(std::string("'") + key + "' must be " + what);
        }
    };
    const auto is_string = [](const Json& v) { return v.is_string(); };
    need("schema", [](const Json& v) { return v == "franson-run-manifest"; }, "\"franson-run-manifest\"");
    need("schema_version", [](const Json& v) { return v == 1; }, "1");
    need("tool", is_string, "a string");
    need("tool_version", is_string, "a string");
    need("command", is_string, "a string");
    need("created_utc",
         [](const Json& v) { return v.is_string() && v.get<std::string>().size() == 20 && v.get<std::string>().back() == 'Z'; },
         "an ISO-8601 UTC timestamp");
    need("timestamp_source", [](const Json& v) { return v == "SOURCE_DATE_EPOCH" || v == "clock"; },
         "\"SOURCE_DATE_EPOCH\" or \"clock\"");
    need("rng",
         [](const Json& v) {
             return v.is_null() || (v.is_object() && v.contains("algorithm") && v.contains("seed") &&
                                    v.at("seed").is_number_unsigned());
         },
         "null or {algorithm, seed}");
    need("fft", [](const Json& v) { return v.is_object() && v.contains("library") && v.contains("version"); },
         "{library, version}");
    need("materials", [](const Json& v) { return v.is_object() && v.contains("file") && v.contains("version"); },
         "{file, version}");
    need("files",
         [](const Json& v) {
             if (!v.is_array()) return false;
             for (const auto& f : v) {
                 if (!f.is_object() || !f.contains("name") || !f.at("name").is_string() || !f.contains("bytes") ||
                     !f.at("bytes").is_number_unsigned()) {
                     return false;
                 }
             }
             return true;
         },
         "a list of {name, bytes}");
    return problems;
}

void write_run(const RunResult& run, const std::filesystem::path& dir, const OutputOptions& options) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> files;
    const auto emit = [&](const std::string& name, const std::string& text) {
        write_text(dir / name, text);
        files.push_back(name);
    };

    emit("config.json", to_json(run.config).dump(2) + "\n");
    emit("reference.csv", trace_csv(run.reference, nullptr));
    Json cases = Json::array();
    for (const auto& c : run.cases) {
        const std::string stem = "case_" + file_label(c.spec.label);
        emit(stem + ".csv", trace_csv(c.trace, &c));
        if (options.svg) emit(stem + ".svg", svg_plot(c.trace, run.config.name + " case " + c.spec.label));
        cases.push_back(metrics_json(c));
    }
    const Json metrics = {{"scenario", run.config.name},
                          {"mode", mode_name(run.config.mode)},
                          {"source",
                           {{"poling_period_um", run.source.poling_period_um},
                            {"crystal_length_mm", run.source.crystal_length_mm},
                            {"bandwidth_nm", run.source.bandwidth_nm}}},
                          {"glass_group_index", run.group_index},
                          {"deflection_deg", run.deflection_deg},
                          {"reference_height", run.reference_height},
                          {"reference_raw_centroid_fs", run.reference_raw_centroid_fs},
                          {"cases", cases},
                          {"summary", run.summary}};
    emit("metrics.json", metrics.dump(2) + "\n");

    std::optional<std::uint64_t> seed;
    if (run.config.noise) seed = run.config.noise->seed;
    const Json manifest = make_manifest(run.config.name, dir, files, seed);
    const auto problems = validate_manifest(manifest);
    if (!problems.empty()) throw ConfigError("manifest invalid: " + problems.front());
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace franson
