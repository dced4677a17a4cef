#include "franson/compressor.hpp"

#include <cmath>
#include <string>

#include "franson/error.hpp"

namespace franson {

namespace {

using Real = long double;

constexpr Real kEntryOffsetMm = 50.0L;   // input plane to first face
constexpr Real kExitOffsetMm = 50.0L;    // last face to output plane
constexpr Real kCmm = static_cast<Real>(kSpeedOfLight) * 1e3L;  // mm/s

Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
Point2 operator*(Real s, Point2 a) { return {s * a.x, s * a.y}; }
Real dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
Real cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
Real norm(Point2 a) { return std::sqrt(dot(a, a)); }
Point2 unit(Point2 a) { return (1.0L / norm(a)) * a; }
Point2 rotate(Point2 a, Real angle) {
    const Real c = std::cos(angle), s = std::sin(angle);
    return {c * a.x - s * a.y, s * a.x + c * a.y};
}

PlacedPrism translated(const PlacedPrism& p, Point2 shift) {
    return {p.apex + shift, p.axis, p.entry_vertex + shift, p.exit_vertex + shift};
}

PlacedPrism mirrored(const PlacedPrism& p, Real plane_x) {
    const auto m = [plane_x](Point2 q) { return Point2{2.0L * plane_x - q.x, q.y}; };
    // The mirrored prism is traversed in the opposite sense, so its entry
    // and exit faces swap.
    return {m(p.apex), {-p.axis.x, p.axis.y}, m(p.exit_vertex), m(p.entry_vertex)};
}

struct Built {
    PlacedPrism prism;
    Point2 exit_point;
    Point2 exit_direction;
};

// Places a prism at minimum deviation for a design ray entering at `entry`
// along `dir`, with the ray crossing `glass` of glass. sense = +1 bends the
// ray clockwise, -1 counter-clockwise.
Built place_prism(Point2 entry, Point2 dir, Real glass, int sense, Real apex_rad, Real deflection_rad,
                  Real side) {
    const Point2 inside = rotate(dir, -sense * deflection_rad / 2.0L);
    const Point2 middle = entry + (glass / 2.0L) * inside;
    const Point2 axis = rotate(inside, sense * static_cast<Real>(kPi) / 2.0L);
    const Real depth = glass / (2.0L * std::tan(apex_rad / 2.0L));
    const Point2 apex = middle + depth * axis;
    const Point2 exit = middle + (glass / 2.0L) * inside;
    PlacedPrism p{apex, axis, apex + side * unit(entry - apex), apex + side * unit(exit - apex)};
    return {p, exit, rotate(inside, -sense * deflection_rad / 2.0L)};
}

struct Pair {
    PlacedPrism first;
    PlacedPrism second;
    Point2 exit_point;
};

// First pair of the compressor: input along +x through (entry_x, 0).
Pair place_pair(Real first_glass, Real second_glass, Real tip_spacing, Real apex_rad,
                Real deflection_rad, Real side, Real entry_x) {
    const Built p1 = place_prism({entry_x, 0.0L}, {1.0L, 0.0L}, first_glass, +1, apex_rad,
                                 deflection_rad, side);
    // The second apex moves linearly with the free-flight distance s; solve
    // |apex2(s) - apex1| = tip_spacing.
    const Built at_zero = place_prism(p1.exit_point, p1.exit_direction, second_glass, -1, apex_rad,
                                      deflection_rad, side);
    const Point2 offset = at_zero.prism.apex - p1.prism.apex;
    const Real b = dot(offset, p1.exit_direction);
    const Real disc = b * b - (dot(offset, offset) - tip_spacing * tip_spacing);
    if (disc < 0.0L) throw TraceError("tip spacing too small for the prism pair", 2, 0.0);
    const Real s = -b + std::sqrt(disc);
    if (s <= 0.0L) throw TraceError("tip spacing too small for the prism pair", 2, 0.0);
    const Built p2 = place_prism(p1.exit_point + s * p1.exit_direction, p1.exit_direction,
                                 second_glass, -1, apex_rad, deflection_rad, side);
    return {p1.prism, p2.prism, p2.exit_point};
}

struct SegmentHit {
    Real t;  // along ray
    Real s;  // along segment, 0..1 inside
};

SegmentHit intersect(Point2 origin, Point2 dir, Point2 a, Point2 b) {
    const Point2 e = b - a;
    const Real denom = cross(dir, e);
    if (denom == 0.0L) return {-1.0L, -1.0L};
    const Point2 w = a - origin;
    return {cross(w, e) / denom, cross(w, dir) / denom};
}

Real miss_distance(const SegmentHit& h, Point2 a, Point2 b) {
    const Real len = norm(b - a);
    if (h.s < 0.0L) return -h.s * len;
    if (h.s > 1.0L) return (h.s - 1.0L) * len;
    return 0.0L;
}

// Vector Snell's law; `normal` is any normal of the face.
Point2 refract(Point2 dir, Point2 normal, Real n1, Real n2, int prism) {
    Point2 nrm = unit(normal);
    if (dot(nrm, dir) > 0.0L) nrm = -1.0L * nrm;
    const Real cosi = -dot(nrm, dir);
    const Real eta = n1 / n2;
    const Real k = 1.0L - eta * eta * (1.0L - cosi * cosi);
    if (k < 0.0L) throw TraceError("total internal reflection in prism " + std::to_string(prism), prism, 0.0);
    return unit(eta * dir + (eta * cosi - std::sqrt(k)) * nrm);
}

Point2 face_normal(Point2 a, Point2 b) {
    const Point2 e = b - a;
    return {-e.y, e.x};
}

struct Walk {
    Point2 point;
    Point2 dir;
    Real opl = 0.0L;  // mm
    Real glass = 0.0L;
    std::array<Real, 4> prism_glass{};
    RayPath path;
};

// Sends the ray through one prism; prism_number is 1-based for messages.
void pass_prism(Walk& w, const PlacedPrism& p, Real n, int prism_number) {
    const Point2 base_a = p.entry_vertex, base_b = p.exit_vertex;
    const std::array<std::pair<Point2, Point2>, 2> faces{{{p.apex, p.entry_vertex}, {p.apex, p.exit_vertex}}};

    int entry = -1;
    SegmentHit best{-1.0L, -1.0L};
    Real nearest_miss = -1.0L;
    for (int f = 0; f < 2; ++f) {
        const SegmentHit h = intersect(w.point, w.dir, faces[f].first, faces[f].second);
        if (h.t <= 0.0L) continue;
        if (h.s >= 0.0L && h.s <= 1.0L) {
            if (entry < 0 || h.t < best.t) {
                entry = f;
                best = h;
            }
        } else {
            const Real miss = miss_distance(h, faces[f].first, faces[f].second);
            if (nearest_miss < 0.0L || miss < nearest_miss) nearest_miss = miss;
        }
    }
    if (entry < 0) {
        throw TraceError("ray misses prism " + std::to_string(prism_number) + " by " +
                             std::to_string(static_cast<double>(nearest_miss)) + " mm",
                         prism_number, static_cast<double>(nearest_miss));
    }
    const Point2 in_point = w.point + best.t * w.dir;
    w.opl += best.t;
    w.path.points.push_back(in_point);
    w.path.indices.push_back(1.0);
    Point2 dir = refract(w.dir, face_normal(faces[entry].first, faces[entry].second), 1.0L, n, prism_number);

    const auto& out_face = faces[1 - entry];
    const SegmentHit out = intersect(in_point, dir, out_face.first, out_face.second);
    const SegmentHit through_base = intersect(in_point, dir, base_a, base_b);
    if (through_base.t > 0.0L && through_base.s >= 0.0L && through_base.s <= 1.0L &&
        (out.t <= 0.0L || through_base.t < out.t)) {
        throw TraceError("ray leaves prism " + std::to_string(prism_number) + " through its base",
                         prism_number, 0.0);
    }
    if (out.t <= 0.0L || out.s < 0.0L || out.s > 1.0L) {
        const Real miss = miss_distance(out, out_face.first, out_face.second);
        throw TraceError("ray walks off the exit face of prism " + std::to_string(prism_number) +
                             " by " + std::to_string(static_cast<double>(miss)) + " mm",
                         prism_number, static_cast<double>(miss));
    }
    const Point2 out_point = in_point + out.t * dir;
    w.opl += n * out.t;
    w.glass += out.t;
    w.prism_glass[prism_number - 1] += out.t;
    w.path.points.push_back(out_point);
    w.path.indices.push_back(static_cast<double>(n));
    w.dir = refract(dir, face_normal(out_face.first, out_face.second), n, 1.0L, prism_number);
    w.point = out_point;
}

Real glass_index(const CompressorLayout& layout, double omega) {
    return static_cast<Real>(refractive_index(layout.params().prism.material, Wavelength::from_omega(omega),
                                              layout.params().temperature_c));
}

Walk walk_forward(const CompressorLayout& layout, double omega) {
    const Real n = glass_index(layout, omega);
    Walk w;
    w.point = {static_cast<Real>(layout.input_plane_x_mm()), 0.0L};
    w.dir = {1.0L, 0.0L};
    w.path.points.push_back(w.point);
    for (int k = 0; k < 4; ++k) pass_prism(w, layout.prisms()[k], n, k + 1);
    if (w.dir.x <= 0.0L) throw TraceError("exit ray does not reach the output plane", 4, 0.0);
    const Real t = (static_cast<Real>(layout.output_plane_x_mm()) - w.point.x) / w.dir.x;
    if (t < 0.0L) throw TraceError("output plane lies inside the compressor", 4, 0.0);
    w.opl += t;
    w.point = w.point + t * w.dir;
    w.path.points.push_back(w.point);
    w.path.indices.push_back(1.0);
    w.path.exit_direction = w.dir;
    return w;
}

// omega * opl / c in extended precision.
Real phase_at(const CompressorLayout& layout, Real omega) {
    const Walk w = walk_forward(layout, static_cast<double>(omega));
    return omega * w.opl / kCmm;
}

int checked_prism(int prism_index) {
    if (prism_index < 1 || prism_index > 4) throw ConfigError("prism index must be 1..4");
    return prism_index;
}

}  // namespace

MinDeviation min_deviation_geometry(double index, double apex_angle_deg) {
    if (!(apex_angle_deg > 0.0 && apex_angle_deg < 180.0)) throw GeometryError("apex angle must be in (0, 180) deg");
    const double s = index * std::sin(deg_to_rad(apex_angle_deg) / 2.0);
    if (s > 1.0) throw GeometryError("n sin(apex/2) > 1: no transmitted minimum-deviation ray");
    const double incidence = rad_to_deg(std::asin(s));
    return {incidence, 2.0 * incidence - apex_angle_deg};
}

CompressorLayout CompressorLayout::build(const CompressorParams& params) {
    CompressorLayout layout;
    layout.params_ = params;
    const auto& spec = params.prism;
    if (!(spec.side_length_mm > 0.0)) throw ConfigError("prism side length must be positive");
    if (!(params.tip_spacing_mm > 0.0)) throw ConfigError("tip spacing must be positive");
    if (!(params.pair_gap_mm >= 0.0)) throw ConfigError("pair gap must be non-negative");
    layout.design_omega_ = omega_from_nm(params.design_wavelength_nm);
    layout.design_index_ = refractive_index(spec.material, Wavelength::from_nm(params.design_wavelength_nm),
                                            params.temperature_c);
    const MinDeviation md = min_deviation_geometry(layout.design_index_, spec.apex_angle_deg);
    layout.deflection_deg_ = md.deflection_deg;

    const Real apex = static_cast<Real>(deg_to_rad(spec.apex_angle_deg));
    const Real deflection =
        2.0L * std::asin(static_cast<Real>(layout.design_index_) * std::sin(apex / 2.0L)) - apex;
    const Real side = spec.side_length_mm;
    const Real max_glass = 2.0L * side * std::sin(apex / 2.0L);
    for (int k = 0; k < 4; ++k) {
        const Real g = params.baseline_glass_mm[k];
        if (!(g > 0.0L && g < max_glass)) {
            throw TraceError("baseline glass path of prism " + std::to_string(k + 1) + " is off the faces", k + 1,
                             static_cast<double>(g));
        }
    }

    const auto g = [&](int k) { return static_cast<Real>(params.baseline_glass_mm[k]); };
    const Pair first = place_pair(g(0), g(1), params.tip_spacing_mm, apex, deflection, side, kEntryOffsetMm);
    // Second pair: build the mirror source with P4's and P3's glass, align
    // its horizontal ray with the first pair's output, then reflect.
    Pair second = place_pair(g(3), g(2), params.tip_spacing_mm, apex, deflection, side, kEntryOffsetMm);
    const Point2 align{first.second.apex.x - second.second.apex.x, first.exit_point.y - second.exit_point.y};
    const Real plane = first.second.apex.x + static_cast<Real>(params.pair_gap_mm) / 2.0L;
    const PlacedPrism p3 = mirrored(translated(second.second, align), plane);
    const PlacedPrism p4 = mirrored(translated(second.first, align), plane);
    const Point2 p4_exit{2.0L * plane - (kEntryOffsetMm + align.x), align.y};

    layout.baseline_ = {first.first, first.second, p3, p4};
    layout.output_x_ = p4_exit.x + kExitOffsetMm;
    layout.prisms_ = layout.baseline_;
    for (int k = 0; k < 4; ++k) {
        const Real move = params.insertions_mm[k];
        layout.prisms_[k] = translated(layout.baseline_[k], move * layout.baseline_[k].axis);
    }
    // Traces the design ray once so broken geometry fails at construction.
    trace_optical_path(layout, layout.design_omega_);
    return layout;
}

CompressorLayout CompressorLayout::with_insertions(const std::array<double, 4>& insertions_mm) const {
    CompressorLayout out = *this;
    out.params_.insertions_mm = insertions_mm;
    for (int k = 0; k < 4; ++k) {
        const Real move = insertions_mm[k];
        out.prisms_[k] = translated(baseline_[k], move * baseline_[k].axis);
    }
    trace_optical_path(out, design_omega_);
    return out;
}

CompressorLayout CompressorLayout::with_insertion(int prism_index, double insertion_mm) const {
    auto ins = params_.insertions_mm;
    ins[checked_prism(prism_index) - 1] = insertion_mm;
    return with_insertions(ins);
}

double CompressorLayout::closure_residual_rad() const {
    const TraceResult r = trace_optical_path(*this, design_omega_);
    const Point2 d = r.ray.exit_direction;
    return static_cast<double>(std::abs(std::atan2(d.y, d.x)));
}

TraceResult trace_optical_path(const CompressorLayout& layout, double angular_frequency) {
    Walk w = walk_forward(layout, angular_frequency);
    TraceResult r;
    r.opl_m = static_cast<double>(w.opl * 1e-3L);
    r.glass_path_mm = static_cast<double>(w.glass);
    for (int k = 0; k < 4; ++k) r.prism_glass_mm[k] = static_cast<double>(w.prism_glass[k]);
    r.ray = std::move(w.path);
    return r;
}

PlaneHit trace_reverse(const CompressorLayout& layout, double angular_frequency, Point2 start,
                       Point2 direction) {
    const Real n = glass_index(layout, angular_frequency);
    Walk w;
    w.point = start;
    w.dir = unit(direction);
    for (int k = 3; k >= 0; --k) pass_prism(w, layout.prisms()[k], n, k + 1);
    if (w.dir.x >= 0.0L) throw TraceError("reversed ray does not return to the input plane", 1, 0.0);
    const Real t = (static_cast<Real>(layout.input_plane_x_mm()) - w.point.x) / w.dir.x;
    return {w.point + t * w.dir, w.dir};
}

PhaseDerivatives phase_derivatives(const CompressorLayout& layout, double angular_frequency) {
    const Real w0 = angular_frequency;
    const Real h = static_cast<Real>(kDerivativeStep) * w0;
    const Real fm2 = phase_at(layout, w0 - 2.0L * h);
    const Real fm1 = phase_at(layout, w0 - h);
    const Real f0 = phase_at(layout, w0);
    const Real fp1 = phase_at(layout, w0 + h);
    const Real fp2 = phase_at(layout, w0 + 2.0L * h);
    const Real d1 = (-fp2 + 8.0L * fp1 - 8.0L * fm1 + fm2) / (12.0L * h);
    const Real d2 = (-fp2 + 16.0L * fp1 - 30.0L * f0 + 16.0L * fm1 - fm2) / (12.0L * h * h);
    const Real d3 = (fp2 - 2.0L * fp1 + 2.0L * fm1 - fm2) / (2.0L * h * h * h);
    return {static_cast<double>(d1 * 1e15L), static_cast<double>(d2 * 1e30L), static_cast<double>(d3 * 1e45L)};
}

SpectralPhase::SpectralPhase(SpectralGrid grid, std::vector<double> phase, std::vector<double> reduced,
                             PhaseDerivatives at_center)
    : grid_(std::move(grid)), phase_(std::move(phase)), reduced_(std::move(reduced)), derivs_(at_center) {
    if (phase_.size() != grid_.size() || reduced_.size() != grid_.size()) {
        throw GridError("spectral phase samples do not match grid");
    }
}

SpectralPhase spectral_phase(const CompressorLayout& layout, const SpectralGrid& grid) {
    const PhaseDerivatives derivs = phase_derivatives(layout, grid.center());
    const Real center = grid.center();
    const Real phi0 = phase_at(layout, center);
    const Real slope = static_cast<Real>(derivs.gd_fs) * 1e-15L;
    std::vector<double> phase(grid.size()), reduced(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const Real dw = grid.detuning(j);
        Real phi;
        try {
            phi = phase_at(layout, center + dw);
        } catch (const TraceError& e) {
            throw TraceError(std::string(e.what()) + " at grid sample " + std::to_string(j) + " (" +
                                 std::to_string(nm_from_omega(grid.signal_omega(j))) + " nm)",
                             e.prism(), e.miss_mm());
        } catch (const RangeError& e) {
            throw RangeError(std::string(e.what()) + " at grid sample " + std::to_string(j), e.value(),
                             e.violated_bound());
        }
        phase[j] = static_cast<double>(phi);
        reduced[j] = static_cast<double>(phi - phi0 - slope * dw);
    }
    return SpectralPhase(grid, std::move(phase), std::move(reduced), derivs);
}

double translator_to_glass_path(const CompressorLayout& layout, double translator_move_mm, int prism_index) {
    const int k = checked_prism(prism_index);
    const double before = trace_optical_path(layout, layout.design_omega()).glass_path_mm;
    const double current = layout.params().insertions_mm[k - 1];
    const CompressorLayout moved = layout.with_insertion(k, current + translator_move_mm);
    return trace_optical_path(moved, moved.design_omega()).glass_path_mm - before;
}

double glass_path_to_translator(const CompressorLayout& layout, double glass_change_mm, int prism_index) {
    if (glass_change_mm == 0.0) return 0.0;
    // Plane faces make the map linear; one secant step from a unit probe,
    // then a correction pass.
    const double ratio = translator_to_glass_path(layout, 1.0, prism_index);
    double move = glass_change_mm / ratio;
    const double achieved = translator_to_glass_path(layout, move, prism_index);
    move += (glass_change_mm - achieved) / ratio;
    return move;
}

double insertion_delay(double glass_path_mm, double group_index, double deflection_deg) {
    const double half = deg_to_rad(deflection_deg) / 2.0;
    return glass_path_mm * 1e-3 / kSpeedOfLight * (group_index - 1.0 / std::cos(half)) / kFs;
}

double gdd_slope(const CompressorLayout& layout, int prism_index, double glass_step_mm) {
    const int k = checked_prism(prism_index);
    const double move = glass_path_to_translator(layout, glass_step_mm, k);
    const CompressorLayout moved = layout.with_insertion(k, layout.params().insertions_mm[k - 1] + move);
    const double dl = trace_optical_path(moved, moved.design_omega()).glass_path_mm -
                      trace_optical_path(layout, layout.design_omega()).glass_path_mm;
    const double before = phase_derivatives(layout, layout.design_omega()).gdd_fs2;
    const double after = phase_derivatives(moved, moved.design_omega()).gdd_fs2;
    return (after - before) / dl;
}

}  // namespace franson
