#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geom.hpp"

namespace mst {

// ---------------------------------------------------------------------------
// Spherical diagram on the radius-3 sphere S: marked point pairs (x_k^-, x_k^+)
// and the curve systems alpha_l with geodesic end segments of spherical
// length R = 3*atan(eps/delta).
// ---------------------------------------------------------------------------

struct PointRef {
    int k = 0;
    int sign = +1;  // +1 or -1

    bool operator==(const PointRef& o) const { return k == o.k && sign == o.sign; }
    bool operator!=(const PointRef& o) const { return !(*this == o); }
    PointRef opposite() const { return {k, -sign}; }
};

std::string to_string(const PointRef& p);

struct BoundaryPoint {
    int k = 0;
    int sign = +1;
    Vec3 dir;  // unit; the marked point itself is 3*dir

    PointRef ref() const { return {k, sign}; }
};

struct Arc {
    PointRef start, end;
    std::vector<Vec3> control;  // unit directions; mid-part spline knots
};

struct Curve {
    int label = 0;
    bool closed = false;
    std::vector<Arc> arcs;      // open curve: s_l = arcs.size() >= 1
    std::vector<Vec3> control;  // closed curve: circle spline knots (unit)

    int sl() const { return closed ? 0 : static_cast<int>(arcs.size()); }
};

struct SphericalDiagram {
    double delta = 0.5;
    double epsilon = 0.05;
    double t0 = 0.1;
    bool closed_manifold = true;
    std::uint64_t seed = 0;

    std::vector<BoundaryPoint> points;
    std::vector<Curve> curves;

    // b_j label -> anchor directions, one per connected component of
    // S minus the closure of the singular set that maps to b_j.
    // Label 0 stands for the boundary of M (closed_manifold == false).
    std::map<int, std::vector<Vec3>> component_labels;

    int K() const;
    int L() const { return static_cast<int>(curves.size()); }
    double R() const { return 3.0 * std::atan(epsilon / delta); }

    const BoundaryPoint* find_point(const PointRef& r) const;
    const BoundaryPoint& point(const PointRef& r) const;
    const Curve& curve(int label) const;

    /// Distinct b_j labels (label 0, the boundary marker, not counted).
    int J() const;
};

/// (k, +) <-> (k, -). Throws on an unknown reference.
PointRef opposite_point(const SphericalDiagram& d, const PointRef& p);

// ---------------------------------------------------------------------------
// Curve geometry. Arcs are parametrized over (0,1): geodesic end segments of
// spherical length R over (0,t0) and (1-t0,1), a C^1 spherical Hermite spline
// through the control knots in between. alpha_l(t) = alpha_l^i(t-i+1).
// ---------------------------------------------------------------------------

struct ArcGeometry {
    Vec3 start_dir, end_dir;    // unit marked-point directions
    Vec3 tan_start, tan_end;    // unit departure tangents of the end segments
    std::vector<Vec3> knots;    // points of norm 3, incl. both junctions
    std::vector<Vec3> tangents; // dP/du at the knots
    std::vector<double> params; // knot parameters in [t0, 1-t0]
};

class CurveGeometry {
  public:
    explicit CurveGeometry(const SphericalDiagram& d);

    /// alpha_l(t); norm 3. Open curves: t in (0,s_l) minus integers.
    /// Closed curves: any t, period 1.
    Vec3 curve_point(int label, double t) const;

    /// d(alpha_l)/dt, analytic on end segments, spline derivative otherwise.
    Vec3 curve_velocity(int label, double t) const;

    /// Point on arc i (1-based) of curve `label` at local parameter u in (0,1).
    Vec3 arc_point(int label, int i, double u) const;
    Vec3 arc_velocity(int label, int i, double u) const;

    struct Nearest {
        int label = 0;
        double t = 0.0;
        double dist = 0.0;  // spherical distance on S (length units, radius 3)
    };

    /// Closest curve point to a unit direction, over all curves.
    std::optional<Nearest> nearest(const Vec3& unit_dir) const;
    /// Closest point of one curve.
    Nearest nearest_on_curve(int label, const Vec3& unit_dir) const;

    const ArcGeometry& arc_geometry(int label, int i) const;
    const SphericalDiagram& diagram() const { return *d_; }

  private:
    const SphericalDiagram* d_;
    // arcs_[curve index][arc index]; closed curves use closed_ instead.
    std::vector<std::vector<ArcGeometry>> arcs_;
    struct ClosedGeom {
        std::vector<Vec3> knots;
        std::vector<Vec3> tangents;
    };
    std::vector<ClosedGeom> closed_;
    // dense samples for nearest(): (t, point) per curve
    std::vector<std::vector<std::pair<double, Vec3>>> samples_;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string witness;  // empty when passed
};

struct ValidationReport {
    std::vector<CheckResult> checks;
    std::vector<std::string> warnings;
    bool all_passed() const;
    const CheckResult* find(const std::string& name) const;
};

ValidationReport validate_diagram(const SphericalDiagram& d);

// ---------------------------------------------------------------------------
// CW summary (closed manifolds)
// ---------------------------------------------------------------------------

struct CwSummary {
    int cells3 = 1;
    int cells2 = 0;  // K
    int cells1 = 0;  // L
    int cells0 = 0;  // J
    int euler = 0;   // J - L + K - 1
    bool consistent = false;  // euler == 0
};

CwSummary cw_summary(const SphericalDiagram& d);

// ---------------------------------------------------------------------------
// Instance synthesis. Deterministic in (K, L, seed); the result passes
// validate_diagram or the call throws.
// ---------------------------------------------------------------------------

SphericalDiagram synthesize_diagram(int K, int L, std::uint64_t seed);

// JSON instance I/O (schema in README).
SphericalDiagram diagram_from_json(const std::string& json_text);
std::string diagram_to_json(const SphericalDiagram& d);
SphericalDiagram load_diagram(const std::string& path);

}  // namespace mst
