#pragma once

#include <array>
#include <vector>

#include "franson/materials.hpp"
#include "franson/spdc.hpp"

namespace franson {

/// Minimum-deviation angles of a single prism.
struct MinDeviation {
    double incidence_deg;
    double deflection_deg;
};

/// incidence = asin(n sin(apex/2)), deflection = 2 incidence - apex.
/// Throws GeometryError when n sin(apex/2) > 1.
MinDeviation min_deviation_geometry(double index, double apex_angle_deg);

struct PrismSpec {
    double apex_angle_deg = 60.0;
    double side_length_mm = 30.0;
    MaterialModel material;
};

/// Inputs for a four-prism, symmetric, minimum-deviation compressor.
///
/// Prisms are numbered 1..4 along the beam. P1/P2 form the first pair with
/// apex-to-apex distance `tip_spacing_mm`; P3/P4 mirror them across a plane
/// `pair_gap_mm` beyond P2. Each prism is first placed so the design ray
/// crosses `baseline_glass_mm` of glass, then moved `insertions_mm` along
/// its stage axis (perpendicular to the base, positive into the beam).
struct CompressorParams {
    PrismSpec prism;
    double tip_spacing_mm = 500.0;
    double pair_gap_mm = 200.0;
    std::array<double, 4> baseline_glass_mm{1.0, 1.0, 1.0, 1.0};
    std::array<double, 4> insertions_mm{0.0, 0.0, 0.0, 0.0};
    double design_wavelength_nm = 1064.0;
    double temperature_c = kRoomTemperatureC;
};

struct Point2 {
    long double x = 0.0L;
    long double y = 0.0L;
};

/// Triangle of a placed prism. `axis` is the unit vector from base to apex.
struct PlacedPrism {
    Point2 apex;
    Point2 axis;
    Point2 entry_vertex;  // base corner of the face the design ray enters
    Point2 exit_vertex;
};

struct RayPath {
    std::vector<Point2> points;    // origin, 8 face hits, end on output plane
    std::vector<double> indices;   // refractive index of each segment
    Point2 exit_direction;
};

struct TraceResult {
    double opl_m;          // sum of index * length, input plane to output plane
    double glass_path_mm;  // total in-glass length
    std::array<double, 4> prism_glass_mm;
    RayPath ray;
};

class CompressorLayout {
public:
    static CompressorLayout build(const CompressorParams& params);

    const CompressorParams& params() const { return params_; }
    const std::array<PlacedPrism, 4>& prisms() const { return prisms_; }

    double design_omega() const { return design_omega_; }
    double design_index() const { return design_index_; }
    double deflection_deg() const { return deflection_deg_; }
    double input_plane_x_mm() const { return 0.0; }
    double output_plane_x_mm() const { return static_cast<double>(output_x_); }

    /// Same geometry with different stage positions; planes stay fixed.
    CompressorLayout with_insertions(const std::array<double, 4>& insertions_mm) const;
    /// prism_index is 1-based.
    CompressorLayout with_insertion(int prism_index, double insertion_mm) const;

    /// Angle (rad) between the design ray's exit and entrance directions.
    double closure_residual_rad() const;

private:
    CompressorParams params_;
    std::array<PlacedPrism, 4> baseline_{};
    std::array<PlacedPrism, 4> prisms_{};
    double design_omega_ = 0.0;
    double design_index_ = 1.0;
    double deflection_deg_ = 0.0;
    long double output_x_ = 0.0L;
};

/// Sequential 2D trace of the input ray (x = 0, y = 0, along +x) through the
/// four prisms to the output plane. Throws TraceError when the ray misses a
/// face or leaves through a base.
TraceResult trace_optical_path(const CompressorLayout& layout, double angular_frequency);

/// Ray reaching a plane x = const.
struct PlaneHit {
    Point2 point;
    Point2 direction;
};

/// Traces a ray backwards from the output plane (reversed exit ray) through
/// P4..P1 to the input plane.
PlaneHit trace_reverse(const CompressorLayout& layout, double angular_frequency,
                       Point2 start, Point2 direction);

/// Phase derivatives at a frequency, from 5-point central stencils with step
/// kDerivativeStep * omega.
struct PhaseDerivatives {
    double gd_fs;
    double gdd_fs2;
    double tod_fs3;
};
PhaseDerivatives phase_derivatives(const CompressorLayout& layout, double angular_frequency);

/// phi(omega) = omega * opl(omega) / c sampled at omega_d + Delta_omega_j.
class SpectralPhase {
public:
    SpectralPhase(SpectralGrid grid, std::vector<double> phase, std::vector<double> reduced,
                  PhaseDerivatives at_center);

    const SpectralGrid& grid() const { return grid_; }
    /// Full phase (rad); large, dominated by the linear term.
    std::span<const double> phase() const { return phase_; }
    /// phase - phi(omega_d) - phi'(omega_d) Delta_omega, evaluated in
    /// extended precision before rounding.
    std::span<const double> reduced() const { return reduced_; }
    const PhaseDerivatives& derivatives() const { return derivs_; }

private:
    SpectralGrid grid_;
    std::vector<double> phase_;
    std::vector<double> reduced_;
    PhaseDerivatives derivs_;
};

/// Throws TraceError annotated with the failing grid sample.
SpectralPhase spectral_phase(const CompressorLayout& layout, const SpectralGrid& grid);

/// Glass-path change (mm) of the design ray when prism `prism_index` (1..4)
/// moves `translator_move_mm` along its stage axis.
double translator_to_glass_path(const CompressorLayout& layout, double translator_move_mm,
                                int prism_index);

/// Inverse of translator_to_glass_path: stage move giving a glass change.
double glass_path_to_translator(const CompressorLayout& layout, double glass_change_mm,
                                int prism_index);

/// Delay (fs) for extra glass path dL: (dL / c) [N - 1 / cos(deflection / 2)].
double insertion_delay(double glass_path_mm, double group_index, double deflection_deg);

/// Ray-traced d(phi'')/d(glass path) for the given prism, fs^2/mm.
double gdd_slope(const CompressorLayout& layout, int prism_index, double glass_step_mm = 1.0);

}  // namespace franson
