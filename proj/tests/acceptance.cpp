// End-to-end acceptance checks. One PASS/FAIL line per criterion; the exit
// status is nonzero when any criterion fails.

#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "franson/compressor.hpp"
#include "franson/correlation.hpp"
#include "franson/harness.hpp"
#include "oracles.hpp"

using namespace franson;

namespace {

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
    std::printf("%s  %-2d %-28s %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
    if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

bool within(double v, double target, double rel) { return std::abs(v - target) <= rel * std::abs(target); }

ScenarioConfig fitted(ScenarioConfig c, PhaseMode mode) {
    c.fit_bandwidth = true;
    c.mode = mode;
    return c;
}

const CaseResult& by_label(const RunResult& r, const std::string& label) {
    for (const auto& c : r.cases) {
        if (c.spec.label == label) return c;
    }
    throw std::runtime_error("no case " + label);
}

CompressorLayout signal_layout() {
    CompressorParams p;
    p.prism.material = default_library().get("SF10");
    p.tip_spacing_mm = 500.0;
    p.baseline_glass_mm = {5.0, 15.0, 20.25, 5.0};
    return CompressorLayout::build(p);
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (const double x : v) m = std::max(m, std::abs(x));
    return m;
}

// Worst relative FFT-vs-quadrature error over 20 random delays of one case.
double fft_vs_quadrature(const ScenarioConfig& cfg, const CaseSpec& spec, std::mt19937_64& rng) {
    const auto a = case_amplitude(cfg, spec);
    const auto t = correlation_trace(a, cfg.window);
    const double peak = max_abs(t.rate);
    std::uniform_int_distribution<std::size_t> pick(0, t.tau_fs.size() - 1);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const std::size_t k = pick(rng);
        const double direct = oracle::quadrature(a, t.tau_fs[k]);
        worst = std::max(worst, std::abs(t.rate[k] - direct) / std::max(direct, 1e-6 * peak));
    }
    return worst;
}

}  // namespace

int main() {
    const auto& sf10 = default_library().get("SF10");
    const auto w1064 = Wavelength::from_nm(1064.0);

    // 1. Geometry.
    {
        const auto g = min_deviation_geometry(1.7022, 60.0);
        const auto layout = signal_layout();
        double worst = 0.0, ratio = 0.0;
        for (int k = 1; k <= 4; ++k) {
            ratio = translator_to_glass_path(layout, 2.08763, k) / 2.08763;
            worst = std::max(worst, std::abs(ratio - 1.67655));
        }
        report(1, "geometry", std::abs(g.deflection_deg - 56.66) <= 0.05 && worst <= 0.001,
               fmt("deflection %.4f deg, translator ratio %.5f (worst dev %.2g)", g.deflection_deg, ratio, worst));
    }

    // 2. Materials.
    {
        const double n = refractive_index(sf10, w1064, 20.0);
        const double ng = group_index(sf10, w1064, 20.0);
        report(2, "SF10 indices",
               std::abs(n - 1.7022) <= 5e-4 && std::abs(ng - 1.7281) <= 5e-4 && std::abs(ng - n - 0.0259) <= 5e-4,
               fmt("n %.6f, N %.6f, N-n %.6f", n, ng, ng - n));
    }

    const RunResult fig3_traced = run_fig3(fitted(ScenarioConfig::fig3(), PhaseMode::RayTraced));

    // 3. GDD slope and step.
    {
        const auto layout = signal_layout();
        const double slope = gdd_slope(layout, 3);
        const auto& b = by_label(fig3_traced, "b");
        const double step = 0.5 * (b.phi2_i_fs2 - b.phi2_s_fs2);
        report(3, "GDD slope and step", within(slope, 105.0, 0.05) && within(step, 367.0, 0.05),
               fmt("slope %.2f fs^2/mm (material GVD %.2f), 3.5 mm step %.1f fs^2", slope, gvd(sf10, w1064, 20.0),
                   step));
    }

    // 4. Source.
    {
        const auto& ln = default_library().get("MgO:CLN-e");
        const auto src = calibrate_poling_period(SpdcSource(ln, {}));
        const double bw = spectrum_bandwidth_fwhm(phase_matching(src, SpectralGrid::default_for(src)));
        const double n = photons_per_mode(1.7e11, 1064.0, 117.0);
        report(4, "source bandwidth, occupancy", within(bw, 117.0, 0.20) && within(n, 0.0055, 0.10),
               fmt("unfitted 5 mm crystal bandwidth %.2f nm (target 117 +-20%%), photons per mode %.5f", bw, n));
    }

    // 5. Zero-GDD correlation.
    {
        const auto& a = by_label(fig3_traced, "a");
        const auto& m = a.metrics;
        double left = 0.0, right = 0.0;
        for (const auto& s : m.secondary_maxima) {
            if (s.tau_fs < m.peak_tau_fs && (left == 0.0 || s.tau_fs > left)) left = s.tau_fs;
            if (s.tau_fs > m.peak_tau_fs && (right == 0.0 || s.tau_fs < right)) right = s.tau_fs;
        }
        const double period_fs = 2 * M_PI / Wavelength::from_nm(1064.0).omega() * 1e15;
        const double ratio = m.fwhm_fs / period_fs;
        const bool ok = within(m.fwhm_fs, 24.3, 0.15) && within(-left, 41.0, 0.15) && within(right, 41.0, 0.15) &&
                        within(ratio, 6.8, 0.15);
        report(5, "zero-GDD trace", ok,
               fmt("FWHM %.2f fs, side maxima %.1f / %.1f fs, FWHM/period %.2f", m.fwhm_fs, left, right, ratio));
    }

    // 6. Cancellation and one-arm contrast.
    const RunResult fig3_poly = run_fig3(fitted(ScenarioConfig::fig3(), PhaseMode::Polynomial));
    const RunResult fig2_traced = run_fig2(fitted(ScenarioConfig::fig2(), PhaseMode::RayTraced));
    {
        const double dev = fig3_traced.summary.at("max_fwhm_deviation_fraction").get<double>();
        double spread = 0.0;
        const double w0 = fig3_poly.cases.front().metrics.fwhm_fs;
        for (const auto& c : fig3_poly.cases) spread = std::max(spread, std::abs(c.metrics.fwhm_fs - w0));
        const auto& d = by_label(fig2_traced, "d");
        const auto& g = by_label(fig2_traced, "g");
        const bool low = d.metrics.height <= 0.20 && g.metrics.height <= 0.20;
        const auto md = central_minimum(d.trace, d.metrics);
        const auto mg = central_minimum(g.trace, g.metrics);
        const bool minima = md.has_value() && mg.has_value();
        report(6, "dispersion cancellation", dev < 0.05 && spread < 1e-6 && low && minima,
               fmt("ray-traced max width deviation %.4f, polynomial spread %.2g fs, one-arm heights %.3f / %.3f",
                   dev, spread, d.metrics.height, g.metrics.height) +
                   ", central minima " + (md ? "yes" : "none") + " / " + (mg ? "yes" : "none"));
    }

    // 7. Group index.
    {
        const auto g = extract_group_index(fig3_traced, fig3_traced.deflection_deg);
        report(7, "group index recovery", std::abs(g.mean - fig3_traced.group_index) < 0.001,
               fmt("recovered %.5f vs model %.5f", g.mean, fig3_traced.group_index));
    }

    // 8. Third order and bandwidth scaling.
    {
        const auto& cs = fig3_traced.cases;
        bool decreasing = true;
        for (std::size_t k = 2; k < cs.size(); ++k) decreasing = decreasing && cs[k].residual[2] < cs[k - 1].residual[2];
        const auto rows = bandwidth_scaling_study(fitted(ScenarioConfig::fig3(), PhaseMode::RayTraced), {1.0, 1.5});
        const bool wider = std::abs(rows[1].skewness) > std::abs(rows[0].skewness);
        report(8, "third order and skewness", decreasing && wider,
               fmt("residual3 b/c/d %.0f / %.0f / %.0f fs^3", cs[1].residual[2], cs[2].residual[2], cs[3].residual[2]) +
                   fmt(", |skewness| scale 1.0 %.4f, 1.5 %.4f", std::abs(rows[0].skewness), std::abs(rows[1].skewness)));
    }

    // 9. Counting noise, 100 seeds through the full scenario.
    {
        auto cfg = fitted(ScenarioConfig::fig3(), PhaseMode::Polynomial);
        cfg.cases = {{"a", 0, 0}};
        std::vector<double> peak, base;
        std::size_t ip = 0, ib = 0;
        for (std::uint64_t seed = 1; seed <= 100; ++seed) {
            cfg.noise = NoiseModel{};
            cfg.noise->seed = seed;
            const auto run = run_scenario(cfg);
            const auto& n = *run.cases.front().noisy;
            if (seed == 1) {
                for (std::size_t k = 0; k < n.expected.size(); ++k) {
                    if (n.expected[k] > n.expected[ip]) ip = k;
                    if (n.expected[k] < n.expected[ib]) ib = k;
                }
            }
            peak.push_back(n.rate[ip]);
            base.push_back(n.rate[ib]);
        }
        const auto sd = [](const std::vector<double>& v) {
            double m = 0.0, s = 0.0;
            for (const double x : v) m += x;
            m /= static_cast<double>(v.size());
            for (const double x : v) s += (x - m) * (x - m);
            return std::sqrt(s / static_cast<double>(v.size() - 1));
        };
        const double sp = sd(peak), sb = sd(base);
        report(9, "counting noise", std::abs(sp - 16.7) <= 3.0 && std::abs(sb - 5.4) <= 1.5,
               fmt("sd at peak %.2f 1/s, at baseline %.2f 1/s", sp, sb));
    }

    // 10. Property suites.
    {
        std::mt19937_64 rng(2024);
        double fft_worst = 0.0;
        for (const RunResult* r : {&fig3_traced, &fig3_poly, &fig2_traced}) {
            for (const auto& c : r->cases) fft_worst = std::max(fft_worst, fft_vs_quadrature(r->config, c.spec, rng));
        }
        auto poly2 = fitted(ScenarioConfig::fig2(), PhaseMode::Polynomial);
        for (const auto& c : poly2.cases) fft_worst = std::max(fft_worst, fft_vs_quadrature(poly2, c, rng));

        // Parseval across every case amplitude of the ray-traced one-arm suite.
        const auto total = [](const CorrelationTrace& t) {
            long double s = 0.0L;
            for (const double x : t.rate) s += x;
            return static_cast<double>(s * t.step_fs);
        };
        const auto& cfg3 = fig3_traced.config;
        const double ref_total = total(correlation_period(case_amplitude(cfg3, {"a", 0, 0})));
        double parseval = 0.0;
        for (const auto& c : fig2_traced.cases) {
            parseval = std::max(parseval,
                                std::abs(total(correlation_period(case_amplitude(cfg3, c.spec))) - ref_total) / ref_total);
        }

        // Mirror symmetry under a GDD sign flip.
        const auto run2 = run_fig2(poly2);
        const auto& c = by_label(run2, "c").trace.rate;
        const auto& f = by_label(run2, "f").trace.rate;
        double mirror = 0.0;
        for (std::size_t k = 0; k < c.size(); ++k) mirror = std::max(mirror, std::abs(c[k] - f[c.size() - 1 - k]));

        // Reversibility and insertion delay on the signal compressor.
        const auto layout = signal_layout();
        double rev_nm = 0.0, rev_rad = 0.0;
        for (const double nm : {900.0, 1000.0, 1064.0, 1150.0, 1300.0}) {
            const double w = omega_from_nm(nm);
            const auto t = trace_optical_path(layout, w);
            const Point2 back{-t.ray.exit_direction.x, -t.ray.exit_direction.y};
            const auto hit = trace_reverse(layout, w, t.ray.points.back(), back);
            rev_nm = std::max(rev_nm, std::hypot(static_cast<double>(hit.point.x), static_cast<double>(hit.point.y)) * 1e6);
            rev_rad = std::max(rev_rad, std::abs(std::atan2(static_cast<double>(hit.direction.y),
                                                            -static_cast<double>(hit.direction.x))));
        }
        const double ng = group_index(sf10, w1064, 20.0);
        double delay = 0.0;
        for (int k = 1; k <= 4; ++k) {
            const auto moved = layout.with_insertion(k, glass_path_to_translator(layout, 3.5, k));
            const double dgd = phase_derivatives(moved, moved.design_omega()).gd_fs -
                               phase_derivatives(layout, layout.design_omega()).gd_fs;
            const double formula = insertion_delay(3.5, ng, layout.deflection_deg());
            delay = std::max(delay, std::abs(dgd - formula) / formula);
        }
        const bool ok = parseval < 1e-9 && fft_worst < 1e-6 && mirror < 1e-9 && rev_nm < 1.0 && rev_rad < 1e-9 &&
                        delay < 0.005;
        report(10, "property suites", ok,
               fmt("Parseval %.2g, FFT vs quadrature %.2g, mirror %.2g, ", parseval, fft_worst, mirror) +
                   fmt("reverse %.2g nm / %.2g rad, insertion delay %.2g", rev_nm, rev_rad, delay));
    }

    std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
