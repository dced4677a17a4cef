#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "franson/compressor.hpp"
#include "franson/correlation.hpp"
#include "franson/spdc.hpp"

namespace franson {

using Json = nlohmann::json;

enum class PhaseMode { Polynomial, RayTraced };

/// GDD applied to each arm in multiples of the step Delta. In ray-traced
/// mode a step is one glass increment in P3 of that arm (negative =
/// withdraw).
struct CaseSpec {
    std::string label;
    double signal_steps = 0.0;
    double idler_steps = 0.0;
};

struct NoiseModel {
    double peak_rate = 1500.0;  // 1/s at R_norm = 1
    double dark_rate = 165.0;
    double stray_rate = 10.0;
    double dwell_s = 6.0;
    std::uint64_t seed = 1;

    void validate() const;
    double background_rate() const { return dark_rate + stray_rate; }
};

/// One compressor arm. P2/P3 baseline glass is fixed here; P1/P4 glass is
/// solved so the reference arm has zero GDD at the design wavelength.
struct ArmLayoutConfig {
    double tip_spacing_mm = 500.0;
    double p2_glass_mm = 15.0;
    double p3_glass_mm = 20.25;
};

struct ScenarioConfig {
    std::string name = "custom";
    std::vector<CaseSpec> cases;
    PhaseMode mode = PhaseMode::Polynomial;
    double delta_fs2 = 367.0;
    double glass_step_mm = 3.5;

    double bandwidth_scale = 1.0;
    bool fit_bandwidth = false;
    double target_bandwidth_nm = 117.0;

    std::string crystal = "MgO:CLN-e";
    SpdcSource::Params source;

    std::size_t grid_samples = 1u << 14;
    double grid_min_nm = 800.0;
    double grid_max_nm = 1600.0;
    double raytraced_min_nm = 895.0;
    double raytraced_max_nm = 1320.0;

    std::string glass = "SF10";
    double apex_angle_deg = 60.0;
    double side_length_mm = 30.0;
    double pair_gap_mm = 200.0;
    double design_wavelength_nm = 1064.0;
    ArmLayoutConfig signal_arm{500.0, 15.0, 20.25};
    ArmLayoutConfig idler_arm{352.0, 15.0, 9.75};

    TraceWindow window{0.0, 1200.0, 2401};
    PeakOptions peak;
    std::optional<NoiseModel> noise;

    static ScenarioConfig fig2();
    static ScenarioConfig fig3();
};

Json to_json(const ScenarioConfig& config);
/// Overlays the keys present in `j` on `defaults`. Unknown keys are errors.
ScenarioConfig scenario_from_json(const Json& j, ScenarioConfig defaults = {});
ScenarioConfig load_scenario(const std::filesystem::path& path, ScenarioConfig defaults = {});

std::vector<CaseSpec> fig2_cases();
std::vector<CaseSpec> fig3_cases();

/// Poisson-sampled rates with per-point error bars.
struct NoisyTrace {
    std::vector<double> tau_fs;
    std::vector<double> expected;  // 1/s
    std::vector<double> rate;      // counts / dwell
    std::vector<double> error;     // sqrt(counts) / dwell
};

struct BackgroundMeasurement {
    double blocked_rate = 0.0;     // path blocked where the arms reunite
    double stray_increment = 0.0;  // extra rate from stray pump light
    double dwell_s = 1.0;
    double rate() const { return blocked_rate + stray_increment; }
    /// Poisson error of the summed counts.
    double error() const;
};

struct CorrectedTrace {
    std::vector<double> tau_fs;
    std::vector<double> rate;
    std::vector<double> error;
    std::size_t negative_points = 0;  // flagged, not clamped
};

/// Counts ~ Poisson((peak_rate R + dark + stray) dwell). `trace` must be
/// normalized to the reference peak.
NoisyTrace simulate_counts(const CorrelationTrace& trace, const NoiseModel& noise, std::mt19937_64& rng);

BackgroundMeasurement simulate_background(const NoiseModel& noise, std::mt19937_64& rng);

/// Subtracts the mean of the two background measurements; errors add in
/// quadrature.
CorrectedTrace subtract_background(const NoisyTrace& noisy, const BackgroundMeasurement& before,
                                   const BackgroundMeasurement& after);

struct CaseResult {
    CaseSpec spec;
    double phi2_s_fs2 = 0.0;
    double phi2_i_fs2 = 0.0;
    std::array<double, 3> residual{};  // relative to the reference pair for n = 1
    double glass_change_s_mm = 0.0;
    double glass_change_i_mm = 0.0;
    /// Stage delay added to re-center the trace, from the insertion-delay
    /// formula.
    double stage_compensation_fs = 0.0;
    CorrelationTrace trace;  // normalized, compensated
    PeakMetrics metrics;
    double raw_centroid_fs = 0.0;
    double raw_peak_fs = 0.0;
    std::optional<NoisyTrace> noisy;
    std::optional<CorrectedTrace> corrected;
    std::optional<std::pair<BackgroundMeasurement, BackgroundMeasurement>> background;
};

struct SourceSummary {
    double poling_period_um = 0.0;
    double crystal_length_mm = 0.0;
    double bandwidth_nm = 0.0;  // |Phi|^2 FWHM after stretching
};

struct RunResult {
    ScenarioConfig config;
    SourceSummary source;
    double reference_height = 0.0;
    double reference_raw_centroid_fs = 0.0;
    CorrelationTrace reference;  // normalized
    std::vector<CaseResult> cases;
    double group_index = 0.0;      // glass at the design wavelength
    double deflection_deg = 0.0;   // design-ray deflection per prism
    Json summary;
};

/// Runs every case of the config. Cases are independent; results keep the
/// config order.
RunResult run_scenario(const ScenarioConfig& config);
/// Same, with the figure's case list when the config has none.
RunResult run_fig2(ScenarioConfig config);
RunResult run_fig3(ScenarioConfig config);

/// Unnormalized, stage-compensated amplitude of one case, as used for its
/// trace.
BiphotonAmplitude case_amplitude(const ScenarioConfig& config, const CaseSpec& spec);

struct GroupIndexEstimate {
    std::string label;
    double glass_change_mm;  // idler minus signal
    double shift_fs;
    double group_index;
};

struct GroupIndexResult {
    std::vector<GroupIndexEstimate> estimates;
    double mean = 0.0;
};

/// Inverts the insertion-delay formula on raw centroid shifts relative to
/// the reference. Uses the glass changes stored with each case.
GroupIndexResult extract_group_index(const RunResult& results, double deflection_deg);
/// Same with explicit symmetric steps: case k had signal -dL_k, idler +dL_k.
GroupIndexResult extract_group_index(const RunResult& results, const std::vector<double>& glass_steps_mm,
                                     double deflection_deg);

struct ScalingRow {
    double scale;
    double bandwidth_nm;
    double fwhm_fs;
    double skewness;
    double residual3_fs3;
    double control_skewness;  // same amplitude, zero phase
};

/// Widest opposite-arm case rerun with |Phi|^2 stretched by each scale.
std::vector<ScalingRow> bandwidth_scaling_study(const ScenarioConfig& base, const std::vector<double>& scales);

/// Local minimum inside the half-height interval at least `depth` below the
/// smaller neighbouring maximum; returns its delay.
std::optional<double> central_minimum(const CorrelationTrace& trace, const PeakMetrics& metrics,
                                      double depth = 0.01);

Json metrics_json(const CaseResult& c);

struct OutputOptions {
    bool svg = false;
};

/// Writes config.json, one CSV per case, metrics.json and manifest.json.
void write_run(const RunResult& run, const std::filesystem::path& dir, const OutputOptions& options = {});

/// Manifest for a set of written files; timestamps honour SOURCE_DATE_EPOCH.
Json make_manifest(const std::string& command, const std::filesystem::path& dir,
                   const std::vector<std::string>& files, std::optional<std::uint64_t> seed);
/// Problems found in a manifest; empty when it conforms.
std::vector<std::string> validate_manifest(const Json& manifest);

std::string svg_plot(const CorrelationTrace& trace, const std::string& title);

std::string format_csv_number(double v);

}  // namespace franson
