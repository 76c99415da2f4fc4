#include "diagram.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mst {

std::string to_string(const PointRef& p) {
    std::ostringstream os;
    os << "x_" << p.k << (p.sign > 0 ? "^+" : "^-");
    return os.str();
}

int SphericalDiagram::K() const {
    int k_max = 0;
    for (const auto& p : points) k_max = std::max(k_max, p.k);
    return k_max;
}

const BoundaryPoint* SphericalDiagram::find_point(const PointRef& r) const {
    for (const auto& p : points)
        if (p.k == r.k && p.sign == r.sign) return &p;
    return nullptr;
}

const BoundaryPoint& SphericalDiagram::point(const PointRef& r) const {
    const BoundaryPoint* p = find_point(r);
    if (!p) throw std::domain_error("unknown marked point " + to_string(r));
    return *p;
}

const Curve& SphericalDiagram::curve(int label) const {
    for (const auto& c : curves)
        if (c.label == label) return c;
    throw std::domain_error("unknown curve label " + std::to_string(label));
}

int SphericalDiagram::J() const {
    int j = 0;
    for (const auto& [label, anchors] : component_labels)
        if (label > 0 && !anchors.empty()) ++j;
    return j;
}

PointRef opposite_point(const SphericalDiagram& d, const PointRef& p) {
    d.point(p);  // throws on unknown ref
    PointRef q = p.opposite();
    d.point(q);
    return q;
}

// ---------------------------------------------------------------------------
// Curve geometry
// ---------------------------------------------------------------------------

namespace {

/// Cubic Hermite on [0,1] for endpoint values/derivatives, then radially
/// renormalized to the sphere of radius 3. Derivatives at the knots survive
/// the renormalization because knot tangents are tangent to the sphere.
Vec3 hermite_sphere(const Vec3& p0, const Vec3& m0, const Vec3& p1, const Vec3& m1,
                    double s, double h) {
    double s2 = s * s, s3 = s2 * s;
    Vec3 c = (2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * h * m0 +
             (-2 * s3 + 3 * s2) * p1 + (s3 - s2) * h * m1;
    return 3.0 * normalized(c);
}

Vec3 hermite_sphere_vel(const Vec3& p0, const Vec3& m0, const Vec3& p1, const Vec3& m1,
                        double s, double h) {
    double s2 = s * s, s3 = s2 * s;
    Vec3 c = (2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * h * m0 +
             (-2 * s3 + 3 * s2) * p1 + (s3 - s2) * h * m1;
    Vec3 dc = (6 * s2 - 6 * s) * p0 + (3 * s2 - 4 * s + 1) * h * m0 +
              (-6 * s2 + 6 * s) * p1 + (3 * s2 - 2 * s) * h * m1;
    dc = dc * (1.0 / h);  // d/du with u = knot-interval * s
    double n = norm(c);
    Vec3 chat = c / n;
    return (3.0 / n) * (dc - dot(dc, chat) * chat);
}

}  // namespace

CurveGeometry::CurveGeometry(const SphericalDiagram& d) : d_(&d) {
    const double R = d.R();
    const double t0 = d.t0;
    arcs_.resize(d.curves.size());
    closed_.resize(d.curves.size());

    for (size_t ci = 0; ci < d.curves.size(); ++ci) {
        const Curve& c = d.curves[ci];
        if (c.closed) {
            ClosedGeom g;
            if (c.control.size() < 3)
                throw std::domain_error("closed curve needs >= 3 control points");
            for (const auto& v : c.control) g.knots.push_back(3.0 * normalized(v));
            size_t m = g.knots.size();
            g.tangents.resize(m);
            for (size_t i = 0; i < m; ++i) {
                const Vec3& prev = g.knots[(i + m - 1) % m];
                const Vec3& next = g.knots[(i + 1) % m];
                Vec3 t = (next - prev) * (0.5 * double(m));  // d/dt, period 1
                Vec3 u = g.knots[i] / 3.0;
                g.tangents[i] = t - dot(t, u) * u;
            }
            closed_[ci] = std::move(g);
            continue;
        }
        for (size_t ai = 0; ai < c.arcs.size(); ++ai) {
            const Arc& a = c.arcs[ai];
            ArcGeometry g;
            g.start_dir = d.point(a.start).dir;
            g.end_dir = d.point(a.end).dir;

            Vec3 first_target = a.control.empty() ? g.end_dir : normalized(a.control.front());
            Vec3 last_target = a.control.empty() ? g.start_dir : normalized(a.control.back());
            g.tan_start = unit_tangent(g.start_dir, first_target);
            g.tan_end = unit_tangent(g.end_dir, last_target);

            const double th = R / 3.0;  // angular length of the end segments
            Vec3 A = 3.0 * rotate_toward(g.start_dir, g.tan_start, th);
            Vec3 B = 3.0 * rotate_toward(g.end_dir, g.tan_end, th);
            // dP/du at the junctions of the geodesic pieces
            Vec3 mA = (R / t0) * (std::cos(th) * g.tan_start - std::sin(th) * g.start_dir);
            Vec3 mB = -(R / t0) * (std::cos(th) * g.tan_end - std::sin(th) * g.end_dir);

            g.knots.push_back(A);
            for (const auto& v : a.control) g.knots.push_back(3.0 * normalized(v));
            g.knots.push_back(B);
            size_t m = g.knots.size();
            // Chord-length parameterization keeps the per-segment speed in step
            // with the knot spacing; uniform spacing makes the Hermite pieces
            // overshoot (and even cusp) where knots crowd near the junctions.
            std::vector<double> cum(m, 0.0);
            for (size_t i = 1; i < m; ++i)
                cum[i] = cum[i - 1] + std::max(norm(g.knots[i] - g.knots[i - 1]), 1e-9);
            g.params.resize(m);
            for (size_t i = 0; i < m; ++i)
                g.params[i] = t0 + (1.0 - 2.0 * t0) * cum[i] / cum[m - 1];
            g.tangents.resize(m);
            g.tangents.front() = mA;
            g.tangents.back() = mB;
            for (size_t i = 1; i + 1 < m; ++i) {
                Vec3 t = (g.knots[i + 1] - g.knots[i - 1]) / (g.params[i + 1] - g.params[i - 1]);
                Vec3 u = g.knots[i] / 3.0;
                g.tangents[i] = t - dot(t, u) * u;
            }
            arcs_[ci].push_back(std::move(g));
        }
    }

    // Dense samples for nearest-point queries.
    samples_.resize(d.curves.size());
    const int per_arc = 256;
    for (size_t ci = 0; ci < d.curves.size(); ++ci) {
        const Curve& c = d.curves[ci];
        if (c.closed) {
            for (int j = 0; j < per_arc; ++j) {
                double t = (j + 0.5) / per_arc;
                samples_[ci].push_back({t, curve_point(c.label, t)});
            }
        } else {
            for (int i = 1; i <= c.sl(); ++i)
                for (int j = 0; j < per_arc; ++j) {
                    double t = (i - 1) + (j + 0.5) / per_arc;
                    samples_[ci].push_back({t, curve_point(c.label, t)});
                }
        }
    }
}

const ArcGeometry& CurveGeometry::arc_geometry(int label, int i) const {
    for (size_t ci = 0; ci < d_->curves.size(); ++ci)
        if (d_->curves[ci].label == label) {
            if (d_->curves[ci].closed || i < 1 || i > d_->curves[ci].sl())
                throw std::domain_error("arc_geometry: bad arc index");
            return arcs_[ci][i - 1];
        }
    throw std::domain_error("arc_geometry: unknown curve");
}

Vec3 CurveGeometry::arc_point(int label, int i, double u) const {
    const ArcGeometry& g = arc_geometry(label, i);
    const double R = d_->R(), t0 = d_->t0, th = R / 3.0;
    if (u <= 0.0 || u >= 1.0) throw std::domain_error("arc_point: u out of (0,1)");
    if (u <= t0) return 3.0 * rotate_toward(g.start_dir, g.tan_start, (u / t0) * th);
    if (u >= 1.0 - t0) return 3.0 * rotate_toward(g.end_dir, g.tan_end, ((1.0 - u) / t0) * th);
    size_t seg = 0;
    while (seg + 2 < g.params.size() && u > g.params[seg + 1]) ++seg;
    double h = g.params[seg + 1] - g.params[seg];
    double s = (u - g.params[seg]) / h;
    return hermite_sphere(g.knots[seg], g.tangents[seg], g.knots[seg + 1], g.tangents[seg + 1], s, h);
}

Vec3 CurveGeometry::arc_velocity(int label, int i, double u) const {
    const ArcGeometry& g = arc_geometry(label, i);
    const double R = d_->R(), t0 = d_->t0, th = R / 3.0;
    if (u <= 0.0 || u >= 1.0) throw std::domain_error("arc_velocity: u out of (0,1)");
    if (u <= t0) {
        double ang = (u / t0) * th;
        return (R / t0) * (std::cos(ang) * g.tan_start - std::sin(ang) * g.start_dir);
    }
    if (u >= 1.0 - t0) {
        double ang = ((1.0 - u) / t0) * th;
        return -(R / t0) * (std::cos(ang) * g.tan_end - std::sin(ang) * g.end_dir);
    }
    size_t seg = 0;
    while (seg + 2 < g.params.size() && u > g.params[seg + 1]) ++seg;
    double h = g.params[seg + 1] - g.params[seg];
    double s = (u - g.params[seg]) / h;
    return hermite_sphere_vel(g.knots[seg], g.tangents[seg], g.knots[seg + 1], g.tangents[seg + 1], s, h);
}

Vec3 CurveGeometry::curve_point(int label, double t) const {
    const Curve& c = d_->curve(label);
    if (c.closed) {
        const ClosedGeom* g = nullptr;
        for (size_t ci = 0; ci < d_->curves.size(); ++ci)
            if (d_->curves[ci].label == label) g = &closed_[ci];
        double tt = t - std::floor(t);
        size_t m = g->knots.size();
        double x = tt * double(m);
        size_t i = std::min(static_cast<size_t>(x), m - 1);
        double s = x - double(i);
        double h = 1.0 / double(m);
        return hermite_sphere(g->knots[i], g->tangents[i], g->knots[(i + 1) % m],
                              g->tangents[(i + 1) % m], s, h);
    }
    double fi = std::floor(t);
    int i = static_cast<int>(fi) + 1;
    double u = t - fi;
    if (t <= 0.0 || t >= c.sl() || u == 0.0)
        throw std::domain_error("curve_point: t at an integer or out of range");
    return arc_point(label, i, u);
}

Vec3 CurveGeometry::curve_velocity(int label, double t) const {
    const Curve& c = d_->curve(label);
    if (c.closed) {
        double h = 1e-6;
        return (curve_point(label, t + h) - curve_point(label, t - h)) * (0.5 / h);
    }
    double fi = std::floor(t);
    int i = static_cast<int>(fi) + 1;
    double u = t - fi;
    if (t <= 0.0 || t >= c.sl() || u == 0.0)
        throw std::domain_error("curve_velocity: t at an integer or out of range");
    return arc_velocity(label, i, u);
}

CurveGeometry::Nearest CurveGeometry::nearest_on_curve(int label, const Vec3& unit_dir) const {
    size_t ci = 0;
    for (; ci < d_->curves.size(); ++ci)
        if (d_->curves[ci].label == label) break;
    if (ci == d_->curves.size()) throw std::domain_error("nearest_on_curve: unknown curve");
    const Vec3 p = 3.0 * unit_dir;

    double best = 1e300, best_t = 0.0;
    for (const auto& [t, q] : samples_[ci]) {
        double d2 = norm2(p - q);
        if (d2 < best) { best = d2; best_t = t; }
    }
    // Local refinement by golden-section on chord distance.
    const Curve& c = d_->curves[ci];
    double span = c.closed ? 1.0 / 256.0 : 1.0 / 256.0;
    double lo = best_t - span, hi = best_t + span;
    if (!c.closed) {
        lo = std::max(lo, 1e-9);
        hi = std::min(hi, double(c.sl()) - 1e-9);
    }
    auto f = [&](double t) {
        double tt = t;
        if (!c.closed) {
            // keep off integer parameters
            double fr = tt - std::floor(tt);
            if (fr < 1e-12) tt += 1e-12;
            if (fr > 1.0 - 1e-12) tt -= 1e-12;
        }
        return norm2(p - curve_point(c.label, tt));
    };
    const double gr = 0.6180339887498949;
    double a = lo, b = hi, x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 80; ++it) {
        if (f1 < f2) { b = x2; x2 = x1; f2 = f1; x1 = b - gr * (b - a); f1 = f(x1); }
        else { a = x1; x1 = x2; f1 = f2; x2 = a + gr * (b - a); f2 = f(x2); }
    }
    double t_best = 0.5 * (a + b);
    Vec3 q = curve_point(c.label, t_best);
    Nearest n;
    n.label = label;
    n.t = t_best;
    n.dist = 3.0 * angle_between(unit_dir, q / 3.0);
    return n;
}

std::optional<CurveGeometry::Nearest> CurveGeometry::nearest(const Vec3& unit_dir) const {
    std::optional<Nearest> best;
    for (const auto& c : d_->curves) {
        Nearest n = nearest_on_curve(c.label, unit_dir);
        if (!best || n.dist < best->dist) best = n;
    }
    return best;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

bool ValidationReport::all_passed() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const CheckResult& c) { return c.passed; });
}

const CheckResult* ValidationReport::find(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name) return &c;
    return nullptr;
}

namespace {

struct DisjointSet {
    std::vector<int> parent;
    explicit DisjointSet(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int a) { return parent[a] == a ? a : parent[a] = find(parent[a]); }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

ValidationReport validate_diagram(const SphericalDiagram& d) {
    ValidationReport rep;
    auto add = [&](const std::string& name, bool ok, const std::string& witness = "") {
        rep.checks.push_back({name, ok, ok ? "" : witness});
    };

    // --- well-formed geometry ------------------------------------------------
    {
        std::string w;
        bool ok = true;
        if (!(d.delta > 0)) { ok = false; w = "delta must be > 0"; }
        else if (!(d.epsilon > 0 && d.epsilon < d.delta)) { ok = false; w = "epsilon must lie in (0, delta)"; }
        else if (!(d.t0 > 0 && d.t0 < 0.5)) { ok = false; w = "t0 must lie in (0, 1/2)"; }
        for (const auto& p : d.points) {
            if (!finite(p.dir) || std::fabs(norm(p.dir) - 1.0) > 1e-9) {
                ok = false;
                w = "non-unit or non-finite direction at " + to_string(p.ref());
                break;
            }
            if (p.sign != 1 && p.sign != -1) { ok = false; w = "bad sign at k=" + std::to_string(p.k); break; }
        }
        for (const auto& c : d.curves)
            for (const auto& v : c.control)
                if (!finite(v)) { ok = false; w = "non-finite control point on curve " + std::to_string(c.label); }
        add("well_formed_geometry", ok, w);
        if (!ok) return rep;  // geometry below would throw
    }

    // --- pair completeness ---------------------------------------------------
    {
        bool ok = true;
        std::string w;
        std::set<int> ks;
        for (const auto& p : d.points) ks.insert(p.k);
        for (int k : ks) {
            int np = 0, nm = 0;
            for (const auto& p : d.points) {
                if (p.k == k && p.sign > 0) ++np;
                if (p.k == k && p.sign < 0) ++nm;
            }
            if (np != 1 || nm != 1) {
                ok = false;
                w = "k=" + std::to_string(k) + " has " + std::to_string(np) + " plus and " +
                    std::to_string(nm) + " minus points";
                break;
            }
            const Vec3& a = d.point({k, +1}).dir;
            const Vec3& b = d.point({k, -1}).dir;
            if (angle_between(a, b) < 1e-9) {
                ok = false;
                w = "pair k=" + std::to_string(k) + " has coincident directions";
                break;
            }
        }
        if (ok && static_cast<int>(ks.size()) != d.K()) { ok = false; w = "k labels not contiguous"; }
        add("pair_completeness", ok, w);
    }

    // --- disc separation: geodesic discs of radius R pairwise disjoint -------
    {
        bool ok = true;
        std::string w;
        const double R = d.R();
        for (size_t i = 0; i < d.points.size() && ok; ++i)
            for (size_t j = i + 1; j < d.points.size(); ++j) {
                double sep = 3.0 * angle_between(d.points[i].dir, d.points[j].dir);
                if (sep <= 2.0 * R) {
                    ok = false;
                    w = to_string(d.points[i].ref()) + " and " + to_string(d.points[j].ref()) +
                        " at spherical distance " + std::to_string(sep) + " <= 2R=" +
                        std::to_string(2.0 * R);
                    break;
                }
            }
        add("disc_separation", ok, w);
    }

    // --- per-curve structural checks -----------------------------------------
    {
        bool ok = true;
        std::string w;
        for (const auto& c : d.curves) {
            if (c.closed) {
                if (c.control.size() < 3) { ok = false; w = "closed curve " + std::to_string(c.label) + " needs >= 3 controls"; }
                continue;
            }
            if (c.arcs.empty()) { ok = false; w = "open curve " + std::to_string(c.label) + " has no arcs"; break; }
            for (const auto& a : c.arcs) {
                if (!d.find_point(a.start) || !d.find_point(a.end)) {
                    ok = false;
                    w = "curve " + std::to_string(c.label) + " references an unknown marked point";
                    break;
                }
                if (a.start == a.end)
                    rep.warnings.push_back("curve " + std::to_string(c.label) +
                                           " has an arc starting and ending at " + to_string(a.start) +
                                           " with the same sign");
            }
        }
        add("curve_references", ok, w);
        if (!ok) return rep;
    }

    // --- alternation (cyclic): arc i-1 ends at the opposite of arc i's start -
    {
        bool ok = true;
        std::string w;
        for (const auto& c : d.curves) {
            if (c.closed) continue;
            int s = c.sl();
            for (int i = 0; i < s; ++i) {
                const Arc& prev = c.arcs[(i + s - 1) % s];
                const Arc& cur = c.arcs[i];
                if (prev.end != cur.start.opposite()) {
                    ok = false;
                    w = "curve " + std::to_string(c.label) + ": arc " + std::to_string((i + s - 1) % s + 1) +
                        " ends at " + to_string(prev.end) + ", expected " + to_string(cur.start.opposite());
                    break;
                }
            }
            if (!ok) break;
        }
        add("alternation", ok, w);
    }

    // --- closure of each open curve is disconnected --------------------------
    {
        bool ok = true;
        std::string w;
        for (const auto& c : d.curves) {
            if (c.closed || c.arcs.empty()) continue;
            // Nodes: marked points used by the curve; arcs join their endpoints.
            std::vector<PointRef> nodes;
            auto node_id = [&](const PointRef& r) {
                for (size_t i = 0; i < nodes.size(); ++i)
                    if (nodes[i] == r) return static_cast<int>(i);
                nodes.push_back(r);
                return static_cast<int>(nodes.size() - 1);
            };
            for (const auto& a : c.arcs) { node_id(a.start); node_id(a.end); }
            DisjointSet ds(static_cast<int>(nodes.size()));
            for (const auto& a : c.arcs) ds.unite(node_id(a.start), node_id(a.end));
            std::set<int> roots;
            for (size_t i = 0; i < nodes.size(); ++i) roots.insert(ds.find(static_cast<int>(i)));
            if (roots.size() < 2) {
                ok = false;
                w = "closure of curve " + std::to_string(c.label) + " is connected";
                break;
            }
        }
        add("closure_disconnected", ok, w);
    }

    CurveGeometry geom(d);
    const double R = d.R();

    // --- geodesic end segments of length R -----------------------------------
    {
        bool ok = true;
        std::string w;
        for (const auto& c : d.curves) {
            if (c.closed) continue;
            for (int i = 1; i <= c.sl() && ok; ++i) {
                const ArcGeometry& g = geom.arc_geometry(c.label, i);
                for (int j = 1; j <= 8 && ok; ++j) {
                    double u = d.t0 * j / 8.0 * 0.999;
                    Vec3 p = geom.arc_point(c.label, i, u) / 3.0;
                    double along = 3.0 * angle_between(p, g.start_dir);
                    double want = (u / d.t0) * R;
                    double off_plane = std::fabs(dot(p, cross(g.start_dir, g.tan_start)));
                    if (std::fabs(along - want) > 1e-9 || off_plane > 1e-9) {
                        ok = false;
                        w = "curve " + std::to_string(c.label) + " arc " + std::to_string(i) +
                            " initial segment off geodesic at u=" + std::to_string(u);
                    }
                    Vec3 q = geom.arc_point(c.label, i, 1.0 - u) / 3.0;
                    double along_e = 3.0 * angle_between(q, g.end_dir);
                    double off_e = std::fabs(dot(q, cross(g.end_dir, g.tan_end)));
                    if (std::fabs(along_e - want) > 1e-9 || off_e > 1e-9) {
                        ok = false;
                        w = "curve " + std::to_string(c.label) + " arc " + std::to_string(i) +
                            " terminal segment off geodesic at u=" + std::to_string(1.0 - u);
                    }
                }
            }
        }
        add("geodesic_end_segments", ok, w);
    }

    // --- arcs pairwise disjoint, avoiding marked points -----------------------
    {
        bool ok = true;
        std::string w;
        const int n_samp = 96;
        const double sep_tol = R / 4.0;

        struct Samp { Vec3 p; size_t curve; int arc; double u; };
        std::vector<Samp> samp;
        for (size_t ci = 0; ci < d.curves.size(); ++ci) {
            const Curve& c = d.curves[ci];
            if (c.closed) {
                for (int j = 0; j < n_samp; ++j)
                    samp.push_back({geom.curve_point(c.label, (j + 0.5) / n_samp), ci, 0, (j + 0.5) / n_samp});
            } else {
                for (int i = 1; i <= c.sl(); ++i)
                    for (int j = 0; j < n_samp; ++j) {
                        double u = (j + 0.5) / n_samp;
                        samp.push_back({geom.arc_point(c.label, i, u), ci, i, u});
                    }
            }
        }
        auto shares_endpoint_near = [&](const Samp& a, const Samp& b) {
            // Tolerate proximity of two end segments that emanate from the
            // same marked point; the open arcs only meet at that point.
            if (a.arc == 0 || b.arc == 0) return false;
            const Arc& aa = d.curves[a.curve].arcs[a.arc - 1];
            const Arc& bb = d.curves[b.curve].arcs[b.arc - 1];
            std::vector<PointRef> common;
            for (PointRef r : {aa.start, aa.end})
                for (PointRef r2 : {bb.start, bb.end})
                    if (r == r2) common.push_back(r);
            for (const auto& r : common) {
                Vec3 m = d.point(r).dir;
                if (angle_between(a.p / 3.0, m) * 3.0 < 1.3 * R &&
                    angle_between(b.p / 3.0, m) * 3.0 < 1.3 * R)
                    return true;
            }
            return false;
        };
        for (size_t i = 0; i < samp.size() && ok; ++i)
            for (size_t j = i + 1; j < samp.size(); ++j) {
                if (samp[i].curve == samp[j].curve && samp[i].arc == samp[j].arc) continue;
                if (shares_endpoint_near(samp[i], samp[j])) continue;
                double sep = 3.0 * angle_between(samp[i].p / 3.0, samp[j].p / 3.0);
                if (sep < sep_tol) {
                    ok = false;
                    w = "curves " + std::to_string(d.curves[samp[i].curve].label) + " and " +
                        std::to_string(d.curves[samp[j].curve].label) + " within " +
                        std::to_string(sep) + " < " + std::to_string(sep_tol);
                    break;
                }
            }
        // foreign marked points
        for (size_t i = 0; i < samp.size() && ok; ++i) {
            const Samp& s = samp[i];
            for (const auto& p : d.points) {
                bool own = false;
                if (s.arc > 0) {
                    const Arc& a = d.curves[s.curve].arcs[s.arc - 1];
                    own = (a.start == p.ref()) || (a.end == p.ref());
                }
                double sep = 3.0 * angle_between(s.p / 3.0, p.dir);
                if (!own && sep < R) {
                    ok = false;
                    w = "curve " + std::to_string(d.curves[s.curve].label) + " enters disc of " +
                        to_string(p.ref());
                    break;
                }
            }
        }
        add("arc_disjointness", ok, w);
    }

    return rep;
}

// ---------------------------------------------------------------------------
// CW summary
// ---------------------------------------------------------------------------

CwSummary cw_summary(const SphericalDiagram& d) {
    if (!d.closed_manifold)
        throw std::domain_error("cw_summary: manifold has boundary");
    if (d.component_labels.empty())
        throw std::domain_error("cw_summary: component labels missing");
    CwSummary s;
    s.cells2 = d.K();
    s.cells1 = d.L();
    s.cells0 = d.J();
    s.euler = s.cells0 - s.cells1 + s.cells2 - 1;
    s.consistent = (s.euler == 0);
    return s;
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

namespace {

Vec3 on_sphere(const Vec3& pole, const Vec3& e1, const Vec3& e2, double colat, double azim) {
    Vec3 t = std::cos(azim) * e1 + std::sin(azim) * e2;
    return rotate_toward(pole, t, colat);
}

}  // namespace

SphericalDiagram synthesize_diagram(int K, int L, std::uint64_t seed) {
    if (K < 0 || L < 0) throw std::domain_error("synthesize_diagram: K, L must be >= 0");
    SphericalDiagram d;
    d.seed = seed;
    d.closed_manifold = true;
    d.t0 = 0.1;

    std::mt19937_64 rng(mix64(seed ^ 0x5d1a2b3c4d5e6f70ULL));
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // Random rotation applied to a fixed axis layout.
    double ax = unif(rng) * 2 * kPi, ay = unif(rng) * kPi, az = unif(rng) * 2 * kPi;
    auto rot = [&](Vec3 v) {
        auto rz = [](Vec3 u, double a) {
            return Vec3{u.x * std::cos(a) - u.y * std::sin(a),
                        u.x * std::sin(a) + u.y * std::cos(a), u.z};
        };
        auto ry = [](Vec3 u, double a) {
            return Vec3{u.x * std::cos(a) + u.z * std::sin(a), u.y,
                        -u.x * std::sin(a) + u.z * std::cos(a)};
        };
        return rz(ry(rz(v, ax), ay), az);
    };

    // Marked pairs: antipodal along well-separated axes.
    std::vector<Vec3> axes;
    if (K >= 1) axes.push_back({0, 0, 1});
    if (K >= 2) axes.push_back({1, 0, 0});
    if (K >= 3) axes.push_back({0, 1, 0});
    for (int k = 4; k <= K; ++k) {
        // deterministic spread: golden-angle spiral restricted to a band
        double phi = 2.399963229728653 * k;
        double z = 0.35 + 0.3 * std::fmod(0.618033988749895 * k, 1.0);
        double r = std::sqrt(1.0 - z * z);
        axes.push_back(normalized(Vec3{r * std::cos(phi), r * std::sin(phi), z}));
    }
    double min_sep = kPi;  // angular separation between any two marked dirs
    for (size_t i = 0; i < axes.size(); ++i)
        for (size_t j = 0; j < axes.size(); ++j)
            for (int si = -1; si <= 1; si += 2)
                for (int sj = -1; sj <= 1; sj += 2) {
                    if (i == j && si == sj) continue;
                    min_sep = std::min(min_sep, angle_between(axes[i] * double(si), axes[j] * double(sj)));
                }

    double R = (K >= 1) ? std::min(0.45, 3.0 * min_sep / 5.0) : 0.3;
    d.delta = 0.5;
    d.epsilon = d.delta * std::tan(R / 3.0);

    for (int k = 1; k <= K; ++k) {
        d.points.push_back({k, +1, rot(axes[k - 1])});
        d.points.push_back({k, -1, rot(-axes[k - 1])});
    }

    std::vector<Vec3> petal_anchors;

    if (K == 0) {
        // closed latitude circles of a rotated axis
        Vec3 pole = rot(Vec3{0, 0, 1});
        auto [e1, e2] = tangent_frame(pole);
        for (int l = 1; l <= L; ++l) {
            double colat = kPi * (l) / double(L + 1);
            Curve c;
            c.label = l;
            c.closed = true;
            for (int j = 0; j < 8; ++j)
                c.control.push_back(on_sphere(pole, e1, e2, colat, 2 * kPi * j / 8.0));
            d.curves.push_back(std::move(c));
        }
        // bands between circles all map to b_1
        std::vector<Vec3> anchors;
        for (int b = 0; b <= L; ++b) {
            double colat = kPi * (b + 0.5) / double(L + 1);
            anchors.push_back(on_sphere(pole, e1, e2, colat, 0.3));
        }
        d.component_labels[1] = anchors;
        ValidationReport rep = validate_diagram(d);
        if (!rep.all_passed()) throw std::runtime_error("synthesize_diagram: self-check failed");
        return d;
    }

    // Open curves: curve l hangs a petal loop off each point of pair k(l).
    std::vector<int> per_pair(K, 0);
    for (int l = 1; l <= L; ++l) per_pair[(l - 1) % K]++;
    for (int l = 1; l <= L; ++l) {
        int k = (l - 1) % K + 1;
        int j = (l - 1) / K;                // index among this pair's curves
        int n = per_pair[k - 1];
        Curve c;
        c.label = l;
        for (int sign : {+1, -1}) {
            Vec3 pole = d.point({k, sign}).dir;
            auto [e1, e2] = tangent_frame(pole);
            double wedge = 2 * kPi / n;
            double base = wedge * j + 0.08 * wedge;
            double phi_a = base, phi_b = base + 0.5 * wedge;
            double theta_out = min_sep * (0.28 + 0.12 * j);
            double phi_mid = 0.5 * (phi_a + phi_b);
            Arc a;
            a.start = {k, sign};
            a.end = {k, sign};
            double th_in = 1.4 * R / 3.0;
            a.control = {
                on_sphere(pole, e1, e2, th_in, phi_a),
                on_sphere(pole, e1, e2, 0.75 * theta_out, phi_a + 0.1 * wedge),
                on_sphere(pole, e1, e2, theta_out, phi_mid),
                on_sphere(pole, e1, e2, 0.75 * theta_out, phi_b - 0.1 * wedge),
                on_sphere(pole, e1, e2, th_in, phi_b),
            };
            c.arcs.push_back(std::move(a));
            petal_anchors.push_back(on_sphere(pole, e1, e2, 0.55 * theta_out, phi_mid));
        }
        // alternation: arc 1 must end opposite of arc 2's start; with two
        // same-point loops at (k,+) and (k,-) this holds cyclically.
        d.curves.push_back(std::move(c));
    }

    // Everything maps to the single index-0 point b_1: petal interiors and
    // the big outside component.
    {
        std::vector<Vec3> anchors = petal_anchors;
        // outside anchor: farthest from all marked points and curve poles
        Vec3 best{1, 0, 0};
        double best_d = -1;
        for (int i = 0; i < 4096; ++i) {
            double z = 2.0 * ((i * 0.618033988749895) - std::floor(i * 0.618033988749895)) - 1.0;
            double phi = 2.399963229728653 * i;
            double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            Vec3 cand{r * std::cos(phi), r * std::sin(phi), z};
            double dmin = kPi;
            for (const auto& p : d.points) dmin = std::min(dmin, angle_between(cand, p.dir));
            if (dmin > best_d) { best_d = dmin; best = cand; }
        }
        anchors.push_back(best);
        d.component_labels[1] = anchors;
    }

    ValidationReport rep = validate_diagram(d);
    if (!rep.all_passed()) {
        std::string why;
        for (const auto& c : rep.checks)
            if (!c.passed) why += c.name + ": " + c.witness + "; ";
        throw std::runtime_error("synthesize_diagram: self-check failed: " + why);
    }
    return d;
}

}  // namespace mst
