#include "franson/correlation.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>

#include "franson/error.hpp"

namespace franson {

namespace {

// Rad/s to rad/fs.
constexpr double kPerFs = 1e-15;

// Nonlinear part (orders >= 2) of an arm's phase at signed detuning.
double higher_order(const ArmPhase& arm, const SpectralGrid& grid, std::size_t j, int sign) {
    if (arm.is_polynomial()) {
        const auto& p = arm.poly();
        const double x = sign * grid.detuning(j) * kPerFs;
        return p.gdd_fs2 * x * x / 2.0 + p.tod_fs3 * x * x * x / 6.0;
    }
    const auto& traced = arm.traced();
    if (!traced.grid().same_as(grid)) throw GridError("ray-traced phase sampled on a different grid");
    return traced.reduced()[sign > 0 ? j : grid.mirror(j)];
}

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftPlan {
    fftw_complex* buffer = nullptr;
    fftw_plan plan = nullptr;
    explicit FftPlan(std::size_t n) {
        std::lock_guard lock(planner_mutex());
        buffer = fftw_alloc_complex(n);
        if (!buffer) throw GridError("FFT buffer allocation failed");
        plan = fftw_plan_dft_1d(static_cast<int>(n), buffer, buffer, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    ~FftPlan() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
        fftw_free(buffer);
    }
    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;
};

// |sum_j a_j e^{i j d_omega tau_m}|^2 d_omega^2 for every FFT bin m.
std::vector<double> padded_power(const BiphotonAmplitude& amplitude, std::size_t n_fft) {
    FftPlan fft(n_fft);
    const double dw = amplitude.grid.spacing();
    for (std::size_t j = 0; j < n_fft; ++j) {
        if (j < amplitude.samples.size()) {
            fft.buffer[j][0] = amplitude.samples[j].real() * dw;
            fft.buffer[j][1] = amplitude.samples[j].imag() * dw;
        } else {
            fft.buffer[j][0] = 0.0;
            fft.buffer[j][1] = 0.0;
        }
    }
    fftw_execute(fft.plan);
    std::vector<double> power(n_fft);
    for (std::size_t m = 0; m < n_fft; ++m) {
        power[m] = fft.buffer[m][0] * fft.buffer[m][0] + fft.buffer[m][1] * fft.buffer[m][1];
    }
    return power;
}

double period_fs(const SpectralGrid& grid) { return kTwoPi / grid.spacing() / kFs; }

std::size_t padding_for(const SpectralGrid& grid, double max_step_fs) {
    if (!(max_step_fs > 0.0)) throw GridError("trace step must be positive");
    const double needed = std::ceil(period_fs(grid) / max_step_fs);
    if (needed > static_cast<double>(std::size_t{1} << 26)) {
        throw GridError("requested trace step needs more than 2^26 FFT points");
    }
    return std::max(std::bit_ceil(static_cast<std::size_t>(needed)), grid.size());
}

}  // namespace

double PolynomialPhase::operator()(double detuning) const {
    const double x = detuning * kPerFs;
    return gd_fs * x + gdd_fs2 * x * x / 2.0 + tod_fs3 * x * x * x / 6.0;
}

ArmPhase ArmPhase::polynomial(PolynomialPhase coefficients) { return ArmPhase(coefficients); }

ArmPhase ArmPhase::raytraced(std::shared_ptr<const SpectralPhase> phase) {
    if (!phase) throw ConfigError("ray-traced arm needs a phase");
    return ArmPhase(std::move(phase));
}

PolynomialPhase ArmPhase::coefficients() const {
    if (is_polynomial()) return poly();
    const auto& d = traced().derivatives();
    return {d.gd_fs, d.gdd_fs2, d.tod_fs3};
}

double ArmPhase::at(const SpectralGrid& grid, std::size_t j, int sign) const {
    return coefficients().gd_fs * sign * grid.detuning(j) * kPerFs + higher_order(*this, grid, j, sign);
}

SampledPhase combined_phase(const ArmPhase& signal, const ArmPhase& idler, const SpectralGrid& grid) {
    SampledPhase out{grid, std::vector<double>(grid.size())};
    if (signal.is_polynomial() && idler.is_polynomial()) {
        const auto r = cancellation_residual(signal, idler);
        const PolynomialPhase combined{r[0], r[1], r[2]};
        for (std::size_t j = 0; j < grid.size(); ++j) out.values[j] = combined(grid.detuning(j));
        return out;
    }
    // The linear terms are large and nearly cancel; combine them first.
    const double linear = signal.coefficients().gd_fs - idler.coefficients().gd_fs;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        out.values[j] = linear * grid.detuning(j) * kPerFs + higher_order(signal, grid, j, +1) +
                        higher_order(idler, grid, j, -1);
    }
    return out;
}

SampledPhase with_delay(SampledPhase theta, double tau_fs) {
    for (std::size_t j = 0; j < theta.values.size(); ++j) {
        theta.values[j] += tau_fs * theta.grid.detuning(j) * kPerFs;
    }
    return theta;
}

BiphotonAmplitude assemble_amplitude(const PhaseMatchingFunction& pmf, const SampledPhase& theta) {
    if (!pmf.grid().same_as(theta.grid) || theta.values.size() != pmf.grid().size()) {
        throw GridError("phase and phase-matching function are on different grids");
    }
    BiphotonAmplitude a{pmf.grid(), std::vector<std::complex<double>>(pmf.grid().size())};
    const auto sq = pmf.squared();
    for (std::size_t j = 0; j < sq.size(); ++j) a.samples[j] = std::polar(sq[j], theta.values[j]);
    return a;
}

CorrelationTrace correlation_trace(const BiphotonAmplitude& amplitude, const TraceWindow& window) {
    if (!(window.span_fs > 0.0) || window.samples < 2) throw GridError("trace window needs a positive span");
    const double period = period_fs(amplitude.grid);
    if (std::abs(window.center_fs) + window.span_fs / 2.0 >= period / 2.0) {
        throw GridError("trace window [" + std::to_string(window.center_fs - window.span_fs / 2.0) + ", " +
                        std::to_string(window.center_fs + window.span_fs / 2.0) +
                        "] fs exceeds the alias-free range +-" + std::to_string(period / 2.0) +
                        " fs; use a finer spectral grid");
    }
    const double wanted = std::min(0.5, window.span_fs / static_cast<double>(window.samples - 1));
    const std::size_t n_fft = padding_for(amplitude.grid, wanted);
    const auto power = padded_power(amplitude, n_fft);
    const double step = period / static_cast<double>(n_fft);

    const auto first = static_cast<long long>(std::ceil((window.center_fs - window.span_fs / 2.0) / step));
    const auto last = static_cast<long long>(std::floor((window.center_fs + window.span_fs / 2.0) / step));
    CorrelationTrace trace;
    trace.step_fs = step;
    const auto n = static_cast<long long>(n_fft);
    for (long long m = first; m <= last; ++m) {
        trace.tau_fs.push_back(static_cast<double>(m) * step);
        trace.rate.push_back(power[static_cast<std::size_t>(((m % n) + n) % n)]);
    }
    return trace;
}

CorrelationTrace correlation_period(const BiphotonAmplitude& amplitude, double max_step_fs) {
    const std::size_t n_fft = padding_for(amplitude.grid, max_step_fs);
    const auto power = padded_power(amplitude, n_fft);
    const double step = period_fs(amplitude.grid) / static_cast<double>(n_fft);
    CorrelationTrace trace;
    trace.step_fs = step;
    const auto half = static_cast<long long>(n_fft / 2);
    for (long long m = -half; m < half; ++m) {
        trace.tau_fs.push_back(static_cast<double>(m) * step);
        trace.rate.push_back(power[static_cast<std::size_t>(m < 0 ? m + 2 * half : m)]);
    }
    return trace;
}

CorrelationTrace normalized(CorrelationTrace trace, double reference_height) {
    if (!(reference_height > 0.0)) throw MetricsError("normalization height must be positive");
    for (auto& r : trace.rate) r /= reference_height;
    trace.normalization = "peak of reference";
    return trace;
}

PeakMetrics peak_metrics(const CorrelationTrace& trace, const PeakOptions& options) {
    const auto& r = trace.rate;
    const auto& t = trace.tau_fs;
    if (r.size() < 3 || t.size() != r.size()) throw MetricsError("trace too short for peak metrics");
    const auto peak = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
    const double h = r[peak];
    if (!(h > 0.0)) throw MetricsError("trace has no positive peak");
    if (peak == 0 || peak + 1 == r.size()) {
        throw MetricsError("peak at the window edge (tau = " + std::to_string(t[peak]) + " fs); widen the window");
    }

    PeakMetrics m;
    m.height = h;
    m.peak_tau_fs = t[peak];

    const double half = h / 2.0;
    std::size_t right = peak;
    while (right + 1 < r.size() && r[right + 1] >= half) ++right;
    std::size_t left = peak;
    while (left > 0 && r[left - 1] >= half) --left;
    if (right + 1 == r.size() || left == 0) throw MetricsError("half maximum not reached inside the window");
    const auto cross = [&](std::size_t in, std::size_t out) {
        return t[in] + (half - r[in]) * (t[out] - t[in]) / (r[out] - r[in]);
    };
    m.half_left_fs = cross(left, left - 1);
    m.half_right_fs = cross(right, right + 1);
    m.fwhm_fs = m.half_right_fs - m.half_left_fs;

    const double floor = options.threshold_fraction * h;
    std::size_t hi = peak;
    while (hi + 1 < r.size() && r[hi + 1] >= floor) ++hi;
    std::size_t lo = peak;
    while (lo > 0 && r[lo - 1] >= floor) --lo;
    if (hi + 1 == r.size() || lo == 0) throw MetricsError("peak support runs into the window edge");

    double w = 0.0, s1 = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) {
        w += r[k];
        s1 += r[k] * t[k];
    }
    m.centroid_fs = s1 / w;
    double s2 = 0.0, s3 = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) {
        const double d = t[k] - m.centroid_fs;
        s2 += r[k] * d * d;
        s3 += r[k] * d * d * d;
    }
    const double var = s2 / w;
    m.skewness = var > 0.0 ? (s3 / w) / std::pow(var, 1.5) : 0.0;

    const double secondary = options.secondary_fraction * h;
    for (std::size_t k = 1; k + 1 < r.size(); ++k) {
        if (t[k] >= m.half_left_fs && t[k] <= m.half_right_fs) continue;
        if (r[k] > r[k - 1] && r[k] >= r[k + 1] && r[k] >= secondary) m.secondary_maxima.push_back({t[k], r[k]});
    }
    return m;
}

std::array<double, 3> cancellation_residual(const ArmPhase& signal, const ArmPhase& idler) {
    const auto s = signal.coefficients();
    const auto i = idler.coefficients();
    return {s.gd_fs - i.gd_fs, s.gdd_fs2 + i.gdd_fs2, s.tod_fs3 - i.tod_fs3};
}

}  // namespace franson
