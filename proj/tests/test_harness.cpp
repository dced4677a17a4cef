#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "franson/error.hpp"
#include "franson/harness.hpp"
#include "oracles.hpp"

using namespace franson;
namespace fs = std::filesystem;

namespace {

ScenarioConfig fitted(ScenarioConfig c, PhaseMode mode) {
    c.fit_bandwidth = true;
    c.mode = mode;
    return c;
}

const RunResult& fig2_poly() {
    static const RunResult r = run_fig2(fitted(ScenarioConfig::fig2(), PhaseMode::Polynomial));
    return r;
}

const RunResult& fig3_poly() {
    static const RunResult r = run_fig3(fitted(ScenarioConfig::fig3(), PhaseMode::Polynomial));
    return r;
}

const RunResult& fig3_traced() {
    static const RunResult r = run_fig3(fitted(ScenarioConfig::fig3(), PhaseMode::RayTraced));
    return r;
}

const CaseResult& by_label(const RunResult& r, const std::string& label) {
    for (const auto& c : r.cases) {
        if (c.spec.label == label) return c;
    }
    throw std::runtime_error("no case " + label);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

double sample_sd(const std::vector<double>& v) {
    double m = 0.0;
    for (const double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (const double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_CASE("one-arm GDD lowers the peak as the steps grow") {
    const auto& r = fig2_poly();
    CHECK(std::abs(by_label(r, "b").metrics.height - 0.5) < 0.15);
    CHECK(std::abs(by_label(r, "e").metrics.height - 0.5) < 0.15);
    CHECK(by_label(r, "d").metrics.height <= 0.2);
    CHECK(by_label(r, "g").metrics.height <= 0.2);
    CHECK(r.summary.at("height_decreasing_signal_only").get<bool>());
    CHECK(r.summary.at("height_decreasing_idler_only").get<bool>());
}

TEST_CASE("zero-step case reproduces the reference bit for bit") {
    const auto& r = fig2_poly();
    const auto& a = by_label(r, "a");
    CHECK(a.trace.rate == r.reference.rate);
    CHECK(a.metrics.height == 1.0);
}

TEST_CASE("signal and idler GDD of equal size give mirrored traces") {
    const auto& r = fig2_poly();
    const auto& c = by_label(r, "c").trace;
    const auto& f = by_label(r, "f").trace;
    REQUIRE(c.rate.size() == f.rate.size());
    const std::size_t n = c.rate.size();
    double worst = 0.0;
    for (std::size_t k = 0; k < n; ++k) worst = std::max(worst, std::abs(c.rate[k] - f.rate[n - 1 - k]));
    CHECK(worst < 1e-9);
}

TEST_CASE("opposite GDD leaves polynomial widths identical") {
    const auto& r = fig3_poly();
    const double w0 = r.cases.front().metrics.fwhm_fs;
    for (const auto& c : r.cases) {
        CHECK(std::abs(c.metrics.fwhm_fs - w0) < 1e-6);
        CHECK(c.residual[1] == 0.0);
    }
}

TEST_CASE("ray-traced cancellation keeps widths near the reference") {
    const auto& r = fig3_traced();
    const double mean = r.summary.at("mean_fwhm_fs").get<double>();
    CHECK(std::abs(mean - 24.3) / 24.3 < 0.15);
    for (const auto& c : r.cases) CHECK(std::abs(c.metrics.fwhm_fs - mean) < 1.0);
    CHECK(r.summary.at("max_fwhm_deviation_fraction").get<double>() < 0.05);
}

TEST_CASE("uncancelled third order grows and skews with its sign") {
    const auto& r = fig3_traced();
    for (std::size_t k = 2; k < r.cases.size(); ++k) {
        CHECK(r.cases[k].residual[2] < r.cases[k - 1].residual[2]);
        CHECK(std::abs(r.cases[k].metrics.skewness) > std::abs(r.cases[k - 1].metrics.skewness));
    }
    for (std::size_t k = 1; k < r.cases.size(); ++k) {
        CHECK(std::signbit(r.cases[k].metrics.skewness) == std::signbit(r.cases[k].residual[2]));
    }
}

TEST_CASE("glass steps move the signal and idler P3 glass in opposite directions") {
    const auto& r = fig3_traced();
    for (const auto& c : r.cases) {
        CHECK(c.glass_change_s_mm == doctest::Approx(c.spec.signal_steps * 3.5));
        CHECK(c.glass_change_i_mm == doctest::Approx(c.spec.idler_steps * 3.5));
    }
    const auto& d = by_label(r, "d");
    CHECK(std::abs(d.phi2_s_fs2 + 3 * 367.0) / (3 * 367.0) < 0.05);
    CHECK(std::abs(d.phi2_i_fs2 - 3 * 367.0) / (3 * 367.0) < 0.05);
}

TEST_CASE("group index is recovered from the centroid shifts") {
    const auto& r = fig3_traced();
    const auto g = extract_group_index(r, r.deflection_deg);
    CHECK(g.estimates.size() == 3);  // case a moves no glass
    CHECK(std::abs(g.mean - r.group_index) < 0.001);
    const auto& b = g.estimates[0];
    const auto& c = g.estimates[1];
    CHECK(c.glass_change_mm == doctest::Approx(2 * b.glass_change_mm));
    CHECK(std::abs(c.shift_fs / b.shift_fs - 2.0) < 0.01);
    const auto explicit_steps = extract_group_index(r, {0.0, 3.5, 7.0, 10.5}, r.deflection_deg);
    CHECK(explicit_steps.mean == doctest::Approx(g.mean).epsilon(1e-9));
    CHECK_THROWS_AS(extract_group_index(r, {3.5}, r.deflection_deg), ConfigError);
}

TEST_CASE("group index extraction without glass changes is ill-conditioned") {
    CHECK_THROWS_AS(extract_group_index(fig3_poly(), {0.0, 0.0, 0.0, 0.0}, 56.66), MetricsError);
}

TEST_CASE("bandwidth scaling study") {
    const auto base = fitted(ScenarioConfig::fig3(), PhaseMode::RayTraced);
    const auto rows = bandwidth_scaling_study(base, {1.0, 1.5});
    REQUIRE(rows.size() == 2);
    const auto& d = by_label(fig3_traced(), "d");
    CHECK(rows[0].fwhm_fs == doctest::Approx(d.metrics.fwhm_fs).epsilon(1e-12));
    CHECK(rows[0].skewness == doctest::Approx(d.metrics.skewness).epsilon(1e-12));
    CHECK(std::abs(rows[1].skewness) > std::abs(rows[0].skewness));
    CHECK(rows[1].bandwidth_nm > rows[0].bandwidth_nm);
    for (const auto& row : rows) CHECK(std::abs(row.control_skewness) < 1e-3);
    CHECK_THROWS_AS(bandwidth_scaling_study(base, {0.0}), ConfigError);
}

TEST_CASE("Poisson counts have the expected spread") {
    const NoiseModel noise;
    CorrelationTrace t;
    t.tau_fs = {0.0, 500.0};
    t.rate = {1.0, 0.0};
    t.step_fs = 500.0;
    std::vector<double> peak, base;
    for (std::uint64_t s = 0; s < 2000; ++s) {
        std::mt19937_64 rng(s);
        const auto n = simulate_counts(t, noise, rng);
        peak.push_back(n.rate[0]);
        base.push_back(n.rate[1]);
    }
    const double sp = std::sqrt((1500.0 + 175.0) * 6.0) / 6.0;
    const double sb = std::sqrt(175.0 * 6.0) / 6.0;
    CHECK(std::abs(sample_sd(peak) - sp) / sp < 0.05);
    CHECK(std::abs(sample_sd(base) - sb) / sb < 0.05);

    NoiseModel long_dwell = noise;
    long_dwell.dwell_s = 1e6;
    std::mt19937_64 rng(3);
    const auto n = simulate_counts(t, long_dwell, rng);
    CHECK(std::abs(n.rate[0] - 1675.0) < 0.5);

    std::mt19937_64 r1(42), r2(42);
    CHECK(simulate_counts(t, noise, r1).rate == simulate_counts(t, noise, r2).rate);
}

TEST_CASE("background subtraction is unbiased and flags negative points") {
    const NoiseModel noise;
    CorrelationTrace t;
    t.tau_fs = {0.0};
    t.rate = {0.0};
    t.step_fs = 1.0;
    double sum = 0.0, sum2 = 0.0;
    std::size_t negatives = 0;
    const int runs = 100;
    for (int s = 0; s < runs; ++s) {
        std::mt19937_64 rng(static_cast<std::uint64_t>(s) + 100);
        const auto n = simulate_counts(t, noise, rng);
        const auto before = simulate_background(noise, rng);
        const auto after = simulate_background(noise, rng);
        const auto c = subtract_background(n, before, after);
        sum += c.rate[0];
        sum2 += c.rate[0] * c.rate[0];
        negatives += c.negative_points;
        CHECK(c.error[0] ==
              doctest::Approx(std::sqrt(n.error[0] * n.error[0] +
                                        0.25 * (before.error() * before.error() + after.error() * after.error()))));
    }
    const double mean = sum / runs;
    const double sd = std::sqrt(sum2 / runs - mean * mean);
    CHECK(std::abs(mean) < 2.0 * sd / std::sqrt(static_cast<double>(runs)));
    CHECK(negatives > 0);

    NoisyTrace exact{{0.0, 1.0}, {200.0, 175.0}, {200.0, 175.0}, {0.0, 0.0}};
    const BackgroundMeasurement b{165.0, 10.0, 6.0};
    const auto c = subtract_background(exact, b, b);
    CHECK(c.rate[0] == 25.0);
    CHECK(c.rate[1] == 0.0);
    const BackgroundMeasurement drifted{169.0, 10.0, 6.0};
    CHECK(subtract_background(exact, b, drifted).rate[1] == doctest::Approx(-2.0));
}

TEST_CASE("noise model validation") {
    NoiseModel n;
    n.dwell_s = 0.0;
    CHECK_THROWS_AS(n.validate(), ConfigError);
    n = {};
    n.dark_rate = -1.0;
    CHECK_THROWS_AS(n.validate(), ConfigError);
}

TEST_CASE("noisy run is deterministic per seed and case") {
    auto cfg = fitted(ScenarioConfig::fig3(), PhaseMode::Polynomial);
    cfg.noise = NoiseModel{};
    const auto a = run_scenario(cfg);
    const auto b = run_scenario(cfg);
    for (std::size_t k = 0; k < a.cases.size(); ++k) {
        CHECK(a.cases[k].noisy->rate == b.cases[k].noisy->rate);
        CHECK(a.cases[k].corrected->rate == b.cases[k].corrected->rate);
    }
    CHECK(a.cases[0].noisy->rate != a.cases[1].noisy->rate);
}

TEST_CASE("written runs are byte-reproducible and carry a valid manifest") {
    ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
    auto cfg = fitted(ScenarioConfig::fig3(), PhaseMode::Polynomial);
    cfg.noise = NoiseModel{};
    const fs::path root = fs::temp_directory_path() / "franson_repro";
    fs::remove_all(root);
    write_run(run_scenario(cfg), root / "one", {true});
    write_run(run_scenario(cfg), root / "two", {true});
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(root / "one")) {
        ++files;
        CHECK(slurp(e.path()) == slurp(root / "two" / e.path().filename()));
    }
    CHECK(files == 1 + 1 + 4 * 2 + 1 + 1);
    const auto manifest = Json::parse(slurp(root / "one" / "manifest.json"));
    CHECK(validate_manifest(manifest).empty());
    CHECK(manifest.at("created_utc") == "2023-11-14T22:13:20Z");
    CHECK(manifest.at("rng").at("seed") == 1);
    for (const auto& f : manifest.at("files")) {
        CHECK(fs::file_size(root / "one" / f.at("name").get<std::string>()) == f.at("bytes").get<std::uintmax_t>());
    }
    ::unsetenv("SOURCE_DATE_EPOCH");
    fs::remove_all(root);
}

TEST_CASE("broken manifests are reported") {
    Json m = {{"schema", "franson-run-manifest"}, {"schema_version", 2}, {"files", "x"}};
    const auto problems = validate_manifest(m);
    CHECK(problems.size() >= 3);
    CHECK(validate_manifest(Json::array()).size() == 1);
}

TEST_CASE("config round trip and strict keys") {
    auto cfg = ScenarioConfig::fig3();
    cfg.mode = PhaseMode::RayTraced;
    cfg.noise = NoiseModel{};
    cfg.noise->seed = 99;
    cfg.signal_arm.p3_glass_mm = 21.0;
    const auto back = scenario_from_json(to_json(cfg));
    CHECK(to_json(back) == to_json(cfg));
    CHECK(back.noise->seed == 99);

    CHECK_THROWS_AS(scenario_from_json(Json{{"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(scenario_from_json(Json{{"mode", "quantum"}}), ConfigError);
    auto dup = ScenarioConfig::fig3();
    dup.cases.push_back({"a", 1, 1});
    CHECK_THROWS_AS(run_scenario(dup), ConfigError);
}

TEST_CASE("case amplitude reproduces the case trace") {
    const auto cfg = fitted(ScenarioConfig::fig3(), PhaseMode::RayTraced);
    const auto& r = fig3_traced();
    const auto& d = by_label(r, "d");
    const auto a = case_amplitude(cfg, d.spec);
    for (std::size_t k = 0; k < d.trace.tau_fs.size(); k += 301) {
        const double direct = oracle::quadrature(a, d.trace.tau_fs[k]) / r.reference_height;
        CHECK(std::abs(direct - d.trace.rate[k]) < 1e-6 * std::max(1.0, d.trace.rate[k]) + 1e-9);
    }
}
