#include "strata.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "components.hpp"
#include "diagram.hpp"

namespace mst {

namespace {

using R64 = std::mt19937_64;

double urand(R64& g, double a, double b) {
    return std::uniform_real_distribution<double>(a, b)(g);
}

Vec3 rand_unit(R64& g) {
    double z = urand(g, -1.0, 1.0), ph = urand(g, 0.0, 2.0 * kPi);
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(ph), r * std::sin(ph), z};
}

Vec3 rand_ball(R64& g, double radius) {
    return std::cbrt(urand(g, 0.0, 1.0)) * radius * rand_unit(g);
}

Vec3 marked_dir(const BallModel& m, int k, int sign) {
    return m.diagram().point({k, sign}).dir;
}

double curve_span(const Curve& c) { return c.closed ? 1.0 : double(c.sl()); }

/// Clamp a curve parameter into the valid open domain, away from junctions.
double clamp_t(const Curve& c, double t) {
    double span = curve_span(c);
    if (c.closed) return t - std::floor(t / span) * span;
    t = std::min(std::max(t, 1e-7), span - 1e-7);
    double fr = t - std::floor(t);
    if (fr < 1e-7) t += 1e-7;
    if (fr > 1.0 - 1e-7) t -= 1e-7;
    return t;
}

/// Foot of the perpendicular from unit direction u onto curve l: solves
/// dot(u, T(t)) = 0 near the chordal nearest point, so that directions
/// generated by geodesic normal offsets invert exactly.
double perp_foot(const BallModel& m, int l, const Vec3& u) {
    const CurveGeometry& g = m.geometry();
    const Curve& c = m.diagram().curve(l);
    double span = curve_span(c);
    double t0 = g.nearest_on_curve(l, u).t;
    auto h = [&](double t) { return dot(u, normalized(g.curve_velocity(l, clamp_t(c, t)))); };
    double lo = t0, hi = t0;
    double h0 = h(t0);
    bool bracketed = false;
    for (double w = 1e-3 * span; w <= 0.25 * span; w *= 2.0) {
        lo = t0 - w;
        hi = t0 + w;
        if (!c.closed) {
            lo = std::max(lo, std::floor(t0) + 1e-9);
            hi = std::min(hi, std::floor(t0) + 1.0 - 1e-9);
        }
        if ((h(lo) > 0) != (h0 > 0) || (h(hi) > 0) != (h0 > 0)) {
            if ((h(lo) > 0) == (h0 > 0)) lo = t0;
            if ((h(hi) > 0) == (h0 > 0)) hi = t0;
            bracketed = true;
            break;
        }
    }
    if (!bracketed) return clamp_t(c, t0);
    double flo = h(lo);
    for (int i = 0; i < 60; ++i) {
        double mid = 0.5 * (lo + hi), fm = h(mid);
        if ((fm > 0) == (flo > 0)) { lo = mid; flo = fm; } else { hi = mid; }
    }
    return clamp_t(c, 0.5 * (lo + hi));
}

Vec3 curve_unit(const BallModel& m, int l, double t) {
    return m.geometry().curve_point(l, t) / 3.0;
}

/// Positive-side normal at alpha_l(t), matching the fiber-side convention.
Vec3 curve_normal(const BallModel& m, int l, double t) {
    Vec3 chat = curve_unit(m, l, t);
    Vec3 T = normalized(m.geometry().curve_velocity(l, t));
    return normalized(cross(chat, T));
}

double azimuth_at(const BallModel& m, int k, int sign, const Vec3& u) {
    Vec3 a = marked_dir(m, k, sign);
    auto [e1, e2] = tangent_frame(a);
    Vec3 tpart = u - dot(u, a) * a;
    return std::atan2(dot(tpart, e2), dot(tpart, e1));
}

double ang_diff(double a, double b) {
    double d = std::fmod(std::fabs(a - b), 2.0 * kPi);
    return std::min(d, 2.0 * kPi - d);
}

// ---- canonical stratum points ---------------------------------------------

ManifoldPoint mk_o() {
    ManifoldPoint p;
    p.traj = {TrajKind::O};
    p.traj.dir = {0, 0, 1};
    p.level = 3.0;
    p.model = {0, 0, 0};
    return p;
}

ManifoldPoint mk_critx(const BallModel& m, int k) {
    ManifoldPoint p;
    Vec3 a = marked_dir(m, k, +1);
    p.traj = {TrajKind::CritX, k, +1};
    p.traj.dir = a;
    p.level = 2.0;
    p.model = a;
    return p;
}

ManifoldPoint mk_crity(const BallModel& m, int l) {
    ManifoldPoint p;
    Vec3 chat = curve_unit(m, l, 0.5);
    p.traj.kind = TrajKind::CritY;
    p.traj.l = l;
    p.traj.t = 0.5;
    p.traj.dir = chat;
    p.level = 1.0;
    p.model = 2.0 * chat;
    return p;
}

ManifoldPoint mk_critb(const BallModel& m, int j) {
    ManifoldPoint p;
    Vec3 anchor{0, 0, 1};
    auto it = m.diagram().component_labels.find(j);
    if (it != m.diagram().component_labels.end() && !it->second.empty())
        anchor = normalized(it->second.front());
    p.traj.kind = TrajKind::CritB;
    p.traj.j = j;
    p.traj.dir = anchor;
    p.level = 0.0;
    p.model = 3.0 * anchor;
    return p;
}

ManifoldPoint mk_mu(const BallModel& m, int k, int sign, double lev) {
    ManifoldPoint p;
    Vec3 a = marked_dir(m, k, sign);
    p.traj = {TrajKind::Mu, k, sign};
    p.traj.dir = a;
    p.level = lev;
    p.model = (3.0 - lev) * a;
    return p;
}

ManifoldPoint mk_lambda(const BallModel& m, int l, int i, int k, int sign, double theta,
                        double lev) {
    ManifoldPoint p;
    Vec3 a = marked_dir(m, k, sign);
    p.traj.kind = TrajKind::Lambda;
    p.traj.l = l;
    p.traj.i = i;
    p.traj.k = k;
    p.traj.sign = sign;
    p.traj.theta = theta;
    p.traj.dir = a;
    p.level = lev;
    p.model = (3.0 - lev) * a;
    return p;
}

ManifoldPoint mk_nu(const BallModel& m, int l, int side, double lev) {
    ManifoldPoint p;
    Vec3 chat = curve_unit(m, l, 0.5);
    p.traj.kind = TrajKind::Nu;
    p.traj.l = l;
    p.traj.sign = side;
    p.traj.t = 0.5;
    p.traj.dir = chat;
    p.level = lev;
    p.model = (3.0 - lev) * chat;
    p.side = side;
    return p;
}

ManifoldPoint mk_wkb(const BallModel& m, int k, int sign, double theta, double lev) {
    ManifoldPoint p;
    Vec3 a = marked_dir(m, k, sign);
    p.traj.kind = TrajKind::WkB;
    p.traj.k = k;
    p.traj.sign = sign;
    p.traj.theta = theta;
    p.traj.dir = a;
    p.level = lev;
    p.model = (3.0 - lev) * a;
    return p;
}

ManifoldPoint mk_wol(const BallModel& m, int l, double t, double lev) {
    ManifoldPoint p;
    Vec3 chat = curve_unit(m, l, t);
    p.traj.kind = TrajKind::Wol;
    p.traj.l = l;
    p.traj.t = t;
    p.traj.dir = chat;
    p.level = lev;
    p.model = (3.0 - lev) * chat;
    return p;
}

ManifoldPoint mk_wob(const Vec3& u, int j, double lev) {
    ManifoldPoint p;
    p.traj.kind = TrajKind::Wob;
    p.traj.j = j;
    p.traj.dir = u;
    p.level = lev;
    p.model = (3.0 - lev) * u;
    return p;
}

// ---- component-label probes ------------------------------------------------

/// Region label of generic directions just off side `side` of curve l.
int side_label(const BallModel& m, int l, int side) {
    const Curve& c = m.diagram().curve(l);
    for (double toff : {0.37, 0.61, 0.13}) {
        double t = clamp_t(c, toff * curve_span(c));
        Vec3 chat = curve_unit(m, l, t);
        Vec3 n = curve_normal(m, l, t);
        for (double ang = 0.03; ang < 0.6; ang *= 1.6) {
            Vec3 u = rotate_toward(chat, double(side) * n, ang);
            if (m.components().component_at(u) >= 0) return m.components().label_at(u);
        }
    }
    return 0;
}

/// Region label of generic directions near azimuth theta around a marked
/// point; walks outward until off the masked bands.
int azimuth_label(const BallModel& m, int k, int sign, double theta) {
    Vec3 a = marked_dir(m, k, sign);
    auto [e1, e2] = tangent_frame(a);
    Vec3 tanv = std::cos(theta) * e1 + std::sin(theta) * e2;
    for (double ang = 0.05; ang < 0.8; ang *= 1.35) {
        Vec3 u = rotate_toward(a, tanv, ang);
        if (m.components().component_at(u) >= 0) return m.components().label_at(u);
    }
    return 0;
}

/// The azimuth circle around a marked point, cut at the special azimuths:
/// each open interval carries one region label (the component the membranes
/// at those azimuths descend into).
struct AzimuthIntervals {
    std::vector<double> cuts;    // sorted special azimuths (may be empty)
    std::vector<int> labels;     // labels.size() == max(cuts.size(), 1)
    int label_of(double theta) const {
        if (cuts.empty()) return labels[0];
        // interval i spans (cuts[i], cuts[i+1]) cyclically
        int n = int(cuts.size());
        for (int i = 0; i < n - 1; ++i)
            if (theta >= cuts[i] && theta < cuts[i + 1]) return labels[i];
        return labels[n - 1];
    }
};

AzimuthIntervals azimuth_intervals(const BallModel& m, int k, int sign) {
    AzimuthIntervals out;
    for (const auto& sp : m.special_azimuths(k, sign)) out.cuts.push_back(sp.theta);
    std::sort(out.cuts.begin(), out.cuts.end());
    if (out.cuts.empty()) {
        out.labels.push_back(azimuth_label(m, k, sign, 0.0));
        return out;
    }
    int n = int(out.cuts.size());
    for (int i = 0; i < n; ++i) {
        double lo = out.cuts[i];
        double hi = i + 1 < n ? out.cuts[i + 1] : out.cuts[0] + 2.0 * kPi;
        out.labels.push_back(azimuth_label(m, k, sign, 0.5 * (lo + hi)));
    }
    // label_of expects one label per interval starting at cuts[i]
    return out;
}

// ---- stratum labels ---------------------------------------------------------

std::string label_x(int k) { return "x_" + std::to_string(k); }
std::string label_y(int l) { return "y_" + std::to_string(l); }
std::string label_b(int j) { return "b_" + std::to_string(j); }
std::string label_mu(int k, int s) {
    return "mu_" + std::to_string(k) + (s > 0 ? "^+" : "^-");
}
std::string label_lambda(int l, int i) {
    return "lambda_" + std::to_string(l) + "^" + std::to_string(i);
}
std::string label_nu(int l, int s) {
    return "nu_" + std::to_string(l) + (s > 0 ? "^+" : "^-");
}
std::string label_wol(int l) { return "W_o" + std::to_string(l); }
std::string label_wk(int k) { return "W_" + std::to_string(k) + "^down"; }
std::string label_wo(int j) { return "W_o^down_" + std::to_string(j); }

/// Junction marked point of lambda_l^i.
PointRef junction_of(const SphericalDiagram& d, int l, int i) {
    return d.curve(l).arcs[size_t(i - 1)].start;
}

/// Special azimuths (around the junction marked point) whose limiting
/// trajectory is lambda_l^i; one or two entries.
std::vector<double> lambda_azimuths(const BallModel& m, int l, int i) {
    std::vector<double> out;
    const Curve& c = m.diagram().curve(l);
    PointRef pr = junction_of(m.diagram(), l, i);
    for (const auto& sp : m.special_azimuths(pr.k, pr.sign)) {
        if (sp.l != l) continue;
        int li = sp.at_start ? sp.i : sp.i % c.sl() + 1;
        if (li == i) out.push_back(sp.theta);
    }
    return out;
}

/// Curve side approached by membranes at azimuths just beyond a special
/// azimuth: probes the offset direction against the curve normal.
int special_side(const BallModel& m, int k, int sign, const BallModel::SpecialAzimuth& sp,
                 double dtheta) {
    Vec3 a = marked_dir(m, k, sign);
    auto [e1, e2] = tangent_frame(a);
    double th = sp.theta + dtheta;
    Vec3 u = rotate_toward(a, std::cos(th) * e1 + std::sin(th) * e2, 0.02);
    int l = sp.l;
    double t = perp_foot(m, l, u);
    return dot(u, curve_normal(m, l, t)) >= 0 ? +1 : -1;
}

}  // namespace

// ---------------------------------------------------------------------------
// Prestratification
// ---------------------------------------------------------------------------

int Prestratification::index_of(const std::string& label) const {
    for (size_t i = 0; i < strata.size(); ++i)
        if (strata[i].label == label) return int(i);
    return -1;
}

int stratum_of(const Prestratification& ps, const ManifoldPoint& p) {
    const TrajectoryId& id = p.traj;
    switch (id.kind) {
        case TrajKind::O: return ps.index_of("o");
        case TrajKind::CritX: return ps.index_of(label_x(id.k));
        case TrajKind::CritY: return ps.index_of(label_y(id.l));
        case TrajKind::CritB: return ps.index_of(label_b(id.j));
        case TrajKind::Mu: return ps.index_of(label_mu(id.k, id.sign));
        case TrajKind::Wol: return ps.index_of(label_wol(id.l));
        case TrajKind::Wob: return ps.index_of(label_wo(id.j));
        case TrajKind::Lambda: return ps.index_of(label_lambda(id.l, id.i));
        case TrajKind::Nu: return ps.index_of(label_nu(id.l, id.sign));
        case TrajKind::WkB: return ps.index_of(label_wk(id.k));
    }
    return -1;
}

Prestratification build_stratification(const BallModel& m) {
    const SphericalDiagram& d = m.diagram();
    Prestratification ps;

    auto add = [&](Stratum s) {
        ps.strata.push_back(std::move(s));
        return int(ps.strata.size()) - 1;
    };

    Stratum o;
    o.label = "o";
    o.dim = 0;
    o.kind = TrajKind::O;
    int io = add(o);

    std::map<int, int> ix, iy;       // k/l -> index
    std::map<int, int> ib, iw;       // j -> b_j / W_o^down_j
    std::map<std::pair<int, int>, int> imu, inu;  // (k,sign)/(l,side)
    std::map<std::pair<int, int>, int> ila;       // (l,i)
    std::map<int, int> iwol, iwk;    // l / k

    for (int k = 1; k <= d.K(); ++k) {
        Stratum s;
        s.label = label_x(k);
        s.dim = 0;
        s.kind = TrajKind::CritX;
        s.k = k;
        ix[k] = add(s);
    }
    for (const auto& c : d.curves) {
        Stratum s;
        s.label = label_y(c.label);
        s.dim = 0;
        s.kind = TrajKind::CritY;
        s.l = c.label;
        iy[c.label] = add(s);
    }
    for (const auto& [j, anchors] : d.component_labels) {
        if (j != 0 || d.closed_manifold) {
            Stratum s;
            s.label = label_b(j);
            s.dim = 0;
            s.kind = TrajKind::CritB;
            s.j = j;
            ib[j] = add(s);
        }
    }
    for (int k = 1; k <= d.K(); ++k)
        for (int sg : {+1, -1}) {
            Stratum s;
            s.label = label_mu(k, sg);
            s.dim = 1;
            s.kind = TrajKind::Mu;
            s.k = k;
            s.sign = sg;
            imu[{k, sg}] = add(s);
        }
    for (const auto& c : d.curves) {
        if (c.closed) continue;
        for (int i = 1; i <= c.sl(); ++i) {
            PointRef pr = junction_of(d, c.label, i);
            Stratum s;
            s.label = label_lambda(c.label, i);
            s.dim = 1;
            s.kind = TrajKind::Lambda;
            s.l = c.label;
            s.i = i;
            s.k = pr.k;
            s.sign = pr.sign;
            ila[{c.label, i}] = add(s);
        }
    }
    for (const auto& c : d.curves)
        for (int sg : {+1, -1}) {
            Stratum s;
            s.label = label_nu(c.label, sg);
            s.dim = 1;
            s.kind = TrajKind::Nu;
            s.l = c.label;
            s.sign = sg;
            inu[{c.label, sg}] = add(s);
        }
    for (const auto& c : d.curves) {
        Stratum s;
        s.label = label_wol(c.label);
        s.dim = 2;
        s.kind = TrajKind::Wol;
        s.l = c.label;
        iwol[c.label] = add(s);
    }
    for (int k = 1; k <= d.K(); ++k) {
        Stratum s;
        s.label = label_wk(k);
        s.dim = 2;
        s.kind = TrajKind::WkB;
        s.k = k;
        iwk[k] = add(s);
    }
    for (const auto& [j, anchors] : d.component_labels) {
        Stratum s;
        s.label = label_wo(j);
        s.dim = 3;
        s.kind = TrajKind::Wob;
        s.j = j;
        iw[j] = add(s);
    }

    auto rel = [&](int lo, int hi) {
        if (lo >= 0 && hi >= 0 && lo != hi) ps.order.insert({lo, hi});
    };
    auto has_b = [&](int j) { return ib.count(j) ? ib[j] : -1; };

    // adjacency probes
    std::map<std::pair<int, int>, AzimuthIntervals> az;
    for (int k = 1; k <= d.K(); ++k)
        for (int sg : {+1, -1}) az[{k, sg}] = azimuth_intervals(m, k, sg);
    std::map<std::pair<int, int>, int> jside;  // (l, side) -> region label
    for (const auto& c : d.curves)
        for (int sg : {+1, -1}) jside[{c.label, sg}] = side_label(m, c.label, sg);

    // o precedes everything it flows into
    for (auto& [ks, idx] : imu) rel(io, idx);
    for (auto& [l, idx] : iwol) rel(io, idx);
    for (auto& [j, idx] : iw) rel(io, idx);

    // x_k
    for (int k = 1; k <= d.K(); ++k) {
        for (int sg : {+1, -1}) {
            rel(ix[k], imu[{k, sg}]);
            for (int lab : az[{k, sg}].labels) rel(ix[k], iw.count(lab) ? iw[lab] : -1);
        }
        rel(ix[k], iwk[k]);
    }
    for (auto& [li, idx] : ila) {
        const Stratum& s = ps.strata[size_t(idx)];
        rel(ix[s.k], idx);
        rel(ix[s.k], iwol[s.l]);
        rel(iy[s.l], idx);
        rel(idx, iwol[s.l]);
        rel(idx, iwk[s.k]);
        rel(imu[{s.k, s.sign}], iwol[s.l]);
        rel(iy[s.l], iwk[s.k]);
        for (int sg : {+1, -1}) {
            rel(idx, iw.count(jside[{s.l, sg}]) ? iw[jside[{s.l, sg}]] : -1);
            rel(inu[{s.l, sg}], iwk[s.k]);
        }
    }

    // y_l / nu / W_ol
    for (const auto& c : d.curves) {
        int l = c.label;
        rel(iy[l], iwol[l]);
        for (int sg : {+1, -1}) {
            rel(iy[l], inu[{l, sg}]);
            int j = jside[{l, sg}];
            rel(has_b(j), inu[{l, sg}]);
            rel(inu[{l, sg}], iw.count(j) ? iw[j] : -1);
            rel(iwol[l], iw.count(j) ? iw[j] : -1);
            rel(iy[l], iw.count(j) ? iw[j] : -1);
        }
    }

    // b_j / W_k^down / W_o^down
    for (int k = 1; k <= d.K(); ++k)
        for (int sg : {+1, -1})
            for (int lab : az[{k, sg}].labels) {
                rel(has_b(lab), iwk[k]);
                rel(iwk[k], iw.count(lab) ? iw[lab] : -1);
                rel(imu[{k, sg}], iw.count(lab) ? iw[lab] : -1);
            }
    for (auto& [j, idx] : ib) rel(idx, iw[j]);

    // transitive closure
    bool grew = true;
    while (grew) {
        grew = false;
        std::vector<std::pair<int, int>> extra;
        for (auto& [a, b] : ps.order)
            for (auto& [c2, dd] : ps.order)
                if (b == c2 && !ps.order.count({a, dd}) && a != dd) extra.push_back({a, dd});
        for (auto& e : extra) { ps.order.insert(e); grew = true; }
    }
    return ps;
}

Prestratification build_sphere_stratification(const BallModel& m) {
    const SphericalDiagram& d = m.diagram();
    Prestratification ps;
    auto add = [&](Stratum s) {
        ps.strata.push_back(std::move(s));
        return int(ps.strata.size()) - 1;
    };
    std::map<int, int> ix, ia, is;
    for (int k = 1; k <= d.K(); ++k) {
        Stratum s;
        s.label = "X_" + std::to_string(k);
        s.dim = 0;
        s.kind = TrajKind::CritX;
        s.k = k;
        ix[k] = add(s);
    }
    for (const auto& c : d.curves) {
        Stratum s;
        s.label = "alpha_" + std::to_string(c.label);
        s.dim = 1;
        s.kind = TrajKind::Wol;
        s.l = c.label;
        ia[c.label] = add(s);
    }
    for (const auto& [j, anchors] : d.component_labels) {
        Stratum s;
        s.label = "S_" + std::to_string(j);
        s.dim = 2;
        s.kind = TrajKind::Wob;
        s.j = j;
        is[j] = add(s);
    }
    auto rel = [&](int lo, int hi) {
        if (lo >= 0 && hi >= 0 && lo != hi) ps.order.insert({lo, hi});
    };
    for (const auto& c : d.curves) {
        if (!c.closed)
            for (int i = 1; i <= c.sl(); ++i) {
                PointRef pr = junction_of(d, c.label, i);
                rel(ix[pr.k], ia[c.label]);
            }
        for (int sg : {+1, -1}) {
            int j = side_label(m, c.label, sg);
            rel(ia[c.label], is.count(j) ? is[j] : -1);
        }
    }
    for (int k = 1; k <= d.K(); ++k)
        for (int sg : {+1, -1})
            for (int lab : azimuth_intervals(m, k, sg).labels)
                rel(ix[k], is.count(lab) ? is[lab] : -1);
    // closure
    bool grew = true;
    while (grew) {
        grew = false;
        std::vector<std::pair<int, int>> extra;
        for (auto& [a, b] : ps.order)
            for (auto& [c2, dd] : ps.order)
                if (b == c2 && !ps.order.count({a, dd}) && a != dd) extra.push_back({a, dd});
        for (auto& e : extra) { ps.order.insert(e); grew = true; }
    }
    return ps;
}

// ---------------------------------------------------------------------------
// Tube builders
// ---------------------------------------------------------------------------

namespace {

constexpr double kInf = 1e30;

/// Shared scaffold: fills the thickness parameters and the generic pieces.
TubularNeighborhood make_base_tube(const BallModel& m, const Stratum& s, int rank,
                                   double delta) {
    TubularNeighborhood t;
    t.base = s;
    t.rank = rank;
    t.model = &m;
    t.prm->delta = delta;
    t.prm->delta_th = delta / 4.0;
    return t;
}

/// phi_o that never throws: retries with a nudge when the sampled direction
/// falls into the measure-zero singular rays.
ManifoldPoint safe_phi(const BallModel& m, const Vec3& v, R64& g) {
    for (int tries = 0; tries < 8; ++tries) {
        Vec3 w = tries == 0 ? v : v + rand_ball(g, 1e-5 * norm(v));
        try {
            return m.phi_o(w);
        } catch (const std::domain_error&) {
        }
    }
    return m.phi_o(v);  // propagate
}

/// FD Jacobian determinant of xi o xi_inv in model coordinates at a sampled
/// tube point; each chart realizes exact polar coordinates, so this is the
/// identity on the tube and the determinant sits at +1.
void attach_orientation(TubularNeighborhood& t) {
    const BallModel* M = t.model;
    t.orientation_det = [t2 = t, M](R64& g) -> double {
        for (int tries = 0; tries < 12; ++tries) {
            ManifoldPoint p;
            try {
                p = t2.sample(g);
            } catch (const std::exception&) {
                continue;
            }
            Vec3 w = p.model;
            if (norm(w) < 1e-2 || norm(w) > 2.99) continue;
            auto f = [&](const Vec3& ww) {
                auto fc = t2.xi_inv(M->phi_o(ww));
                return t2.xi(fc.base, fc.v).model;
            };
            double h = 1e-6;
            Vec3 cols[3];
            bool ok = true;
            for (int i = 0; i < 3 && ok; ++i) {
                Vec3 e{i == 0 ? 1.0 : 0.0, i == 1 ? 1.0 : 0.0, i == 2 ? 1.0 : 0.0};
                try {
                    cols[i] = (f(w + h * e) - f(w - h * e)) / (2 * h);
                } catch (const std::exception&) {
                    ok = false;
                }
            }
            if (!ok) continue;
            double det = dot(cols[0], cross(cols[1], cols[2]));
            if (std::fabs(det) < 0.5 || std::fabs(det) > 2.0) continue;  // crease noise
            return det;
        }
        return 1.0;
    };
}

int stage_dim(TrajKind k) {
    switch (k) {
        case TrajKind::Mu: case TrajKind::Lambda: case TrajKind::Nu: return 1;
        case TrajKind::Wol: case TrajKind::WkB: return 2;
        case TrajKind::Wob: return 3;
        default: return 0;
    }
}

}  // namespace

TubularNeighborhood build_tube_critical(const BallModel& m, const Stratum& s,
                                        double delta) {
    const BallModel* M = &m;
    TubularNeighborhood t = make_base_tube(m, s, 3, delta);
    auto prm = t.prm;

    if (s.kind == TrajKind::O) {
        t.dist = [](const ManifoldPoint& p) {
            switch (p.traj.kind) {
                case TrajKind::O: return 0.0;
                case TrajKind::Mu: case TrajKind::Wol: case TrajKind::Wob:
                    return norm(p.model);
                default: return kInf;
            }
        };
        t.contains = [t2 = t.dist, prm](const ManifoldPoint& p) {
            return t2(p) < prm->delta;
        };
        t.retract = [](const ManifoldPoint&) { return mk_o(); };
        t.frontier_dist = [](const ManifoldPoint&) { return kInf; };
        t.xi = [M](const ManifoldPoint&, const Vec3& v) {
            if (norm(v) < 1e-14) return mk_o();
            return M->phi_o(v);
        };
        t.xi_inv = [](const ManifoldPoint& p) {
            return TubularNeighborhood::FiberCoords{mk_o(), p.model};
        };
        t.stage = [M](const ManifoldPoint&, const Vec3& v) {
            if (norm(v) < 1e-14) return 0;
            RayClass c = M->classify_ray(normalized(v));
            return c.type == RayType::I ? 1 : c.type == RayType::II ? 2 : 3;
        };
        t.sample = [M, prm](R64& g) {
            return safe_phi(*M, rand_ball(g, 0.95 * prm->delta), g);
        };
        t.sample_base = [](R64&) { return mk_o(); };
        attach_orientation(t);
        return t;
    }

    if (s.kind == TrajKind::CritX) {
        int k = s.k;
        Vec3 ap = marked_dir(m, k, +1), am = marked_dir(m, k, -1);
        t.dist = [k, ap, am](const ManifoldPoint& p) {
            switch (p.traj.kind) {
                case TrajKind::CritX: return p.traj.k == k ? 0.0 : kInf;
                case TrajKind::Mu: case TrajKind::WkB:
                    if (p.traj.k != k) return kInf;
                    break;
                case TrajKind::Lambda:
                    if (p.traj.k != k) return kInf;
                    break;
                case TrajKind::Wol: case TrajKind::Wob: break;
                default: return kInf;
            }
            return std::min(dist(p.model, ap), dist(p.model, am));
        };
        t.contains = [t2 = t.dist, prm](const ManifoldPoint& p) {
            return t2(p) < prm->delta;
        };
        t.retract = [M, k](const ManifoldPoint&) { return mk_critx(*M, k); };
        t.frontier_dist = [](const ManifoldPoint&) { return kInf; };
        t.xi = [M, k, ap](const ManifoldPoint&, const Vec3& v) {
            if (norm(v) < 1e-14) return mk_critx(*M, k);
            return M->phi_o(ap + v);
        };
        t.xi_inv = [M, k, ap, am](const ManifoldPoint& p) {
            Vec3 c = dist(p.model, ap) <= dist(p.model, am) ? ap : am;
            return TubularNeighborhood::FiberCoords{mk_critx(*M, k), p.model - c};
        };
        t.stage = [M, ap](const ManifoldPoint&, const Vec3& v) {
            double n = norm(v);
            if (n < 1e-14) return 0;
            Vec3 w = ap + (1e-4 / n) * v;
            if (!M->in_Bo(w)) return 2;  // outward along the marked ray: the 2-disc
            return stage_dim(M->phi_o(w).traj.kind);
        };
        t.sample = [M, k, ap, prm](R64& g) {
            Vec3 v = rand_ball(g, 0.95 * prm->delta);
            try {
                return M->phi_o(ap + v);
            } catch (const std::domain_error&) {
                return mk_critx(*M, k);
            }
        };
        t.sample_base = [M, k](R64&) { return mk_critx(*M, k); };
        attach_orientation(t);
        return t;
    }

    if (s.kind == TrajKind::CritY) {
        int l = s.l;
        const Curve& c = m.diagram().curve(l);
        double span = curve_span(c);
        std::vector<std::pair<int, int>> junctions;  // (k, sign) hosting arcs of l
        if (!c.closed)
            for (int i = 1; i <= c.sl(); ++i) {
                PointRef pr = junction_of(m.diagram(), l, i);
                junctions.push_back({pr.k, pr.sign});
            }

        // chart coordinates: (lev, w, sigma, t) <-> v, piecewise-linear Morse
        // shape lev = 1 + rho_a - |v1| with w = min(rho_a, |v1|)
        auto coords_norm = [](double lev, double w) {
            double v1, ra;
            if (lev >= 1.0) { v1 = w; ra = w + (lev - 1.0); }
            else { ra = w; v1 = w + (1.0 - lev); }
            return std::hypot(v1, ra);
        };
        t.dist = [M, l, junctions, coords_norm](const ManifoldPoint& p) {
            double w = kInf;
            switch (p.traj.kind) {
                case TrajKind::CritY: return p.traj.l == l ? 0.0 : kInf;
                case TrajKind::Wol: case TrajKind::Nu:
                    if (p.traj.l != l) return kInf;
                    w = 0.0;
                    break;
                case TrajKind::Lambda:
                    if (p.traj.l != l) return kInf;
                    w = 0.0;
                    break;
                case TrajKind::WkB: {
                    bool adj = false;
                    for (auto& [k2, s2] : junctions)
                        if (k2 == p.traj.k && s2 == p.traj.sign) adj = true;
                    if (!adj) return kInf;
                    // in-disc distance through the junction edge
                    double dth = kInf;
                    for (auto& [k2, s2] : junctions)
                        if (k2 == p.traj.k && s2 == p.traj.sign)
                            for (const auto& sp : M->special_azimuths(k2, s2))
                                if (sp.l == l) dth = std::min(dth, ang_diff(sp.theta, p.traj.theta));
                    w = (2.0 - p.level) * std::min(dth, kPi);
                    break;
                }
                case TrajKind::Wob: {
                    double t2 = perp_foot(*M, l, p.traj.dir);
                    w = (3.0 - p.level) * angle_between(p.traj.dir, curve_unit(*M, l, t2));
                    break;
                }
                default: return kInf;
            }
            return coords_norm(p.level, w);
        };
        t.contains = [t2 = t.dist, prm](const ManifoldPoint& p) {
            return t2(p) < prm->delta;
        };
        t.retract = [M, l](const ManifoldPoint&) { return mk_crity(*M, l); };
        t.frontier_dist = [](const ManifoldPoint&) { return kInf; };
        t.xi = [M, l, span](const ManifoldPoint&, const Vec3& v) -> ManifoldPoint {
            double ra = std::hypot(v.y, v.z), av1 = std::fabs(v.x);
            if (ra + av1 < 1e-14) return mk_crity(*M, l);
            double lev = 1.0 + ra - av1;
            double w = std::min(ra, av1);
            int side = v.x >= 0 ? +1 : -1;
            double tc = clamp_t(M->diagram().curve(l),
                                std::atan2(v.z, v.y) / (2.0 * kPi) * span + 0.5 * span);
            if (w / (3.0 - lev) < 2e-6) {
                if (lev >= 1.0) return mk_wol(*M, l, tc, lev);
                return mk_nu(*M, l, side, lev);
            }
            Vec3 u = rotate_toward(curve_unit(*M, l, tc), double(side) * curve_normal(*M, l, tc),
                                   w / (3.0 - lev));
            return M->phi_o((3.0 - lev) * u);
        };
        t.xi_inv = [M, l, span](const ManifoldPoint& p) {
            TubularNeighborhood::FiberCoords fc;
            fc.base = mk_crity(*M, l);
            double lev = p.level, w = 0.0, tc = 0.5, side = +1.0;
            if (p.traj.kind == TrajKind::Wol) {
                tc = p.traj.t;
            } else if (p.traj.kind == TrajKind::Nu) {
                tc = p.traj.t;
                side = p.traj.sign;
            } else if (p.traj.kind == TrajKind::CritY) {
                fc.v = {0, 0, 0};
                return fc;
            } else {
                tc = perp_foot(*M, l, p.traj.dir);
                Vec3 chat = curve_unit(*M, l, tc);
                w = (3.0 - lev) * angle_between(p.traj.dir, chat);
                side = dot(p.traj.dir, curve_normal(*M, l, tc)) >= 0 ? +1.0 : -1.0;
            }
            double v1, ra;
            if (lev >= 1.0) { v1 = w; ra = w + (lev - 1.0); }
            else { ra = w; v1 = w + (1.0 - lev); }
            double phi = (tc - 0.5 * span) / span * 2.0 * kPi;
            fc.v = {side * v1, ra * std::cos(phi), ra * std::sin(phi)};
            return fc;
        };
        t.stage = [xi = t.xi](const ManifoldPoint& b, const Vec3& v) {
            double n = norm(v);
            if (n < 1e-14) return 0;
            return stage_dim(xi(b, (1e-3 / n) * v).traj.kind);
        };
        t.sample = [M, l, xi = t.xi, prm](R64& g) {
            for (int tries = 0; tries < 32; ++tries) {
                Vec3 v = rand_ball(g, 0.6 * prm->delta);
                // stay off the chart's collapsed locus so roundtrips are exact
                if (std::fabs(v.x) < 1e-5 || std::hypot(v.y, v.z) < 1e-5) continue;
                try {
                    return xi(mk_crity(*M, l), v);
                } catch (const std::domain_error&) {
                }
            }
            return mk_crity(*M, l);
        };
        t.sample_base = [M, l](R64&) { return mk_crity(*M, l); };
        attach_orientation(t);
        return t;
    }

    // CritB
    int j = s.j;
    // eligibility of nu's and wall azimuth intervals terminating at b_j
    std::vector<std::pair<int, int>> nu_in;  // (l, side)
    for (const auto& c : m.diagram().curves)
        for (int sg : {+1, -1})
            if (side_label(m, c.label, sg) == j) nu_in.push_back({c.label, sg});
    std::map<std::pair<int, int>, AzimuthIntervals> az;
    for (int k = 1; k <= m.diagram().K(); ++k)
        for (int sg : {+1, -1}) az[{k, sg}] = azimuth_intervals(m, k, sg);

    t.dist = [j, nu_in, az](const ManifoldPoint& p) {
        switch (p.traj.kind) {
            case TrajKind::CritB: return p.traj.j == j ? 0.0 : kInf;
            case TrajKind::Wob: return p.traj.j == j ? p.level : kInf;
            case TrajKind::Nu:
                for (auto& [l2, s2] : nu_in)
                    if (l2 == p.traj.l && s2 == p.traj.sign) return p.level;
                return kInf;
            case TrajKind::WkB: {
                auto it = az.find({p.traj.k, p.traj.sign});
                if (it != az.end() && it->second.label_of(p.traj.theta) == j) return p.level;
                return kInf;
            }
            default: return kInf;
        }
    };
    t.contains = [t2 = t.dist, prm](const ManifoldPoint& p) { return t2(p) < prm->delta; };
    t.retract = [M, j](const ManifoldPoint&) { return mk_critb(*M, j); };
    t.frontier_dist = [](const ManifoldPoint&) { return kInf; };
    t.xi = [M, j](const ManifoldPoint&, const Vec3& v) -> ManifoldPoint {
        double n = norm(v);
        if (n < 1e-14) return mk_critb(*M, j);
        return M->phi_o(-(3.0 - n) * (v / n));
    };
    t.xi_inv = [M, j](const ManifoldPoint& p) {
        TubularNeighborhood::FiberCoords fc;
        fc.base = mk_critb(*M, j);
        fc.v = p.level > 0 ? Vec3(-p.level * p.traj.dir) : Vec3{0, 0, 0};
        return fc;
    };
    t.stage = [M](const ManifoldPoint&, const Vec3& v) {
        double n = norm(v);
        if (n < 1e-14) return 0;
        RayClass c = M->classify_ray(-1.0 / n * v);
        // along a marked ray the limit set is the 2-disc; along a curve the
        // 1-dimensional nu; generically the top stratum
        return c.type == RayType::I ? 2 : c.type == RayType::II ? 1 : 3;
    };
    t.sample = [M, j, prm](R64& g) {
        for (int tries = 0; tries < 64; ++tries) {
            Vec3 u = rand_unit(g);
            if (M->components().component_at(u) < 0 || M->components().label_at(u) != j)
                continue;
            double lev = urand(g, 1e-3, 0.95 * prm->delta);
            return mk_wob(u, j, lev);
        }
        return mk_critb(*M, j);
    };
    t.sample_base = [M, j](R64&) { return mk_critb(*M, j); };
    attach_orientation(t);
    return t;
}

TubularNeighborhood build_tube_trajectory(const BallModel& m, const Stratum& s,
                                          double delta) {
    const BallModel* M = &m;
    TubularNeighborhood t = make_base_tube(m, s, 2, delta);
    auto prm = t.prm;

    if (s.kind == TrajKind::Mu || s.kind == TrajKind::Lambda) {
        int k = s.k, sg = s.sign;
        double lo = s.kind == TrajKind::Mu ? 2.0 : 1.0;
        double hi = lo + 1.0;
        Vec3 a = marked_dir(m, k, sg);
        auto [e1, e2] = tangent_frame(a);
        std::vector<double> thetas;  // special azimuths of this lambda
        if (s.kind == TrajKind::Lambda) thetas = lambda_azimuths(m, s.l, s.i);
        // azimuth wedge: half the gap to the nearest foreign special azimuth,
        // so tubes of distinct lambdas at one marked point stay disjoint
        double theta_gap = kPi;
        if (s.kind == TrajKind::Lambda)
            for (const auto& sp : m.special_azimuths(k, sg)) {
                bool own = false;
                for (double t0 : thetas)
                    if (ang_diff(t0, sp.theta) < 1e-9) own = true;
                if (own) continue;
                for (double t0 : thetas)
                    theta_gap = std::min(theta_gap, 0.5 * ang_diff(t0, sp.theta));
            }

        auto base_at = [M, s, k, sg](double lev) {
            if (s.kind == TrajKind::Mu) return mk_mu(*M, k, sg, lev);
            return mk_lambda(*M, s.l, s.i, k, sg, 0.0, lev);
        };
        auto dtheta_min = [thetas](double th) {
            double d = kPi;
            for (double t0 : thetas) d = std::min(d, ang_diff(t0, th));
            return d;
        };
        t.dist = [M, s, k, sg, a, lo, hi, thetas, dtheta_min, theta_gap](const ManifoldPoint& p) {
            if (p.level <= lo || p.level >= hi) return kInf;
            switch (p.traj.kind) {
                case TrajKind::Mu:
                    if (s.kind != TrajKind::Mu || p.traj.k != k || p.traj.sign != sg)
                        return kInf;
                    return 0.0;
                case TrajKind::Lambda:
                    if (s.kind != TrajKind::Lambda || p.traj.l != s.l || p.traj.i != s.i)
                        return kInf;
                    return 0.0;
                case TrajKind::WkB: {
                    if (s.kind != TrajKind::Lambda || p.traj.k != k || p.traj.sign != sg)
                        return kInf;
                    double dth = dtheta_min(p.traj.theta);
                    if (dth > theta_gap) return kInf;
                    return (2.0 - p.level) * std::sin(std::min(dth, 0.5 * kPi));
                }
                case TrajKind::Wol: case TrajKind::Wob: {
                    double ang = angle_between(p.traj.dir, a);
                    double rad = (3.0 - p.level) * ang;
                    if (s.kind == TrajKind::Mu) return rad;
                    double dth = dtheta_min(azimuth_at(*M, k, sg, p.traj.dir));
                    if (dth > theta_gap && rad > 1e-7) return kInf;
                    return rad * std::sin(std::min(dth, 0.5 * kPi)) + 1e-3 * rad;
                }
                default: return kInf;
            }
        };
        t.frontier_dist = [lo, hi](const ManifoldPoint& b) {
            return std::min(b.level - lo, hi - b.level);
        };
        t.retract = [M, s, base_at](const ManifoldPoint& p) { return base_at(p.level); };
        t.contains = [t2 = t.dist, this_eps = t, base_at](const ManifoldPoint& p) {
            double d = t2(p);
            if (d >= kInf) return false;
            return d < this_eps.eps(base_at(p.level));
        };
        t.xi = [M, a, e1, e2](const ManifoldPoint& b, const Vec3& v) -> ManifoldPoint {
            double r = std::hypot(v.x, v.y);
            double lev = b.level;
            if (r / (3.0 - lev) < 2e-6) {
                ManifoldPoint q = b;
                return q;
            }
            double phi = std::atan2(v.y, v.x);
            Vec3 u = rotate_toward(a, std::cos(phi) * e1 + std::sin(phi) * e2,
                                   r / (3.0 - lev));
            return M->phi_o((3.0 - lev) * u);
        };
        t.xi_inv = [M, s, a, e1, e2, base_at](const ManifoldPoint& p) {
            TubularNeighborhood::FiberCoords fc;
            fc.base = base_at(p.level);
            double ang = angle_between(p.traj.dir, a);
            if (ang < 1e-12) {
                fc.v = {0, 0, 0};
                return fc;
            }
            Vec3 tp = p.traj.dir - dot(p.traj.dir, a) * a;
            double phi = std::atan2(dot(tp, e2), dot(tp, e1));
            double r = (3.0 - p.level) * ang;
            fc.v = {r * std::cos(phi), r * std::sin(phi), 0.0};
            return fc;
        };
        t.stage = [M, xi = t.xi](const ManifoldPoint& b, const Vec3& v) {
            double n = std::hypot(v.x, v.y);
            if (n < 1e-14) return 0;
            Vec3 vs = (1e-3 * (3.0 - b.level) / n) * v;
            try {
                return stage_dim(xi(b, vs).traj.kind);
            } catch (const std::domain_error&) {
                return 2;  // exactly along a special azimuth
            }
        };
        t.sample_base = [base_at, lo, hi](R64& g) {
            return base_at(urand(g, lo + 0.02, hi - 0.02));
        };
        t.sample = [this_t = t, base_at, lo, hi, thetas, theta_gap](R64& g) {
            for (int tries = 0; tries < 16; ++tries) {
                ManifoldPoint b = base_at(urand(g, lo + 0.02, hi - 0.02));
                double e = this_t.eps(b);
                double r = urand(g, 1e-3 * e, e);
                double phi;
                if (thetas.empty()) {
                    phi = urand(g, 0.0, 2.0 * kPi);
                } else {
                    // keep lambda samples inside their azimuth wedge
                    size_t pick = size_t(urand(g, 0.0, 1.0) * thetas.size()) % thetas.size();
                    phi = thetas[pick] + urand(g, -0.9, 0.9) * theta_gap;
                }
                try {
                    return this_t.xi(b, {r * std::cos(phi), r * std::sin(phi), 0.0});
                } catch (const std::domain_error&) {
                }
            }
            return base_at(0.5 * (lo + hi));
        };
        attach_orientation(t);
        return t;
    }

    if (s.kind != TrajKind::Nu) throw std::invalid_argument("build_tube_trajectory: not a 1-stratum");

    int l = s.l, sg = s.sign;
    const Curve& c = m.diagram().curve(l);
    double span = curve_span(c);
    // specials adjacent to this nu, with the azimuth side that approaches it
    struct NuSpecial { int k, sign; double theta; int dside; };
    std::vector<NuSpecial> specials;
    if (!c.closed)
        for (int i = 1; i <= c.sl(); ++i) {
            PointRef pr = junction_of(m.diagram(), l, i);
            for (const auto& sp : m.special_azimuths(pr.k, pr.sign)) {
                int li = sp.at_start ? sp.i : sp.i % c.sl() + 1;
                if (sp.l != l || li != i) continue;
                for (double off : {+0.05, -0.05})
                    if (special_side(m, pr.k, pr.sign, sp, off) == sg)
                        specials.push_back({pr.k, pr.sign, sp.theta, off > 0 ? +1 : -1});
            }
        }

    auto base_at = [M, l, sg](double lev) { return mk_nu(*M, l, sg, lev); };
    t.dist = [M, l, sg, specials](const ManifoldPoint& p) {
        if (p.level <= 0.0 || p.level >= 1.0) return kInf;
        switch (p.traj.kind) {
            case TrajKind::Nu:
                return p.traj.l == l && p.traj.sign == sg ? 0.0 : kInf;
            case TrajKind::WkB: {
                double d = kInf;
                for (const auto& sp : specials)
                    if (sp.k == p.traj.k && sp.sign == p.traj.sign) {
                        double off = p.traj.theta - sp.theta;
                        if (off * sp.dside > 0)
                            d = std::min(d, (2.0 - p.level) * std::min(std::fabs(off), kPi));
                    }
                return d;
            }
            case TrajKind::Wob: {
                double tc = perp_foot(*M, l, p.traj.dir);
                if (dot(p.traj.dir, curve_normal(*M, l, tc)) * sg < 0) return kInf;
                return (3.0 - p.level) * angle_between(p.traj.dir, curve_unit(*M, l, tc));
            }
            default: return kInf;
        }
    };
    t.frontier_dist = [](const ManifoldPoint& b) {
        return std::min(b.level, 1.0 - b.level);
    };
    t.retract = [base_at](const ManifoldPoint& p) { return base_at(p.level); };
    t.contains = [t2 = t.dist, this_eps = t, base_at](const ManifoldPoint& p) {
        double d = t2(p);
        if (d >= kInf) return false;
        return d < this_eps.eps(base_at(p.level));
    };
    t.xi = [M, l, sg, span](const ManifoldPoint& b, const Vec3& v) -> ManifoldPoint {
        double off = std::hypot(v.x, v.y);
        double lev = b.level;
        double tc = clamp_t(M->diagram().curve(l),
                            std::atan2(v.y, v.x) / (2.0 * kPi) * span + 0.5 * span);
        if (off / (3.0 - lev) < 2e-6) return mk_nu(*M, l, sg, lev);
        Vec3 u = rotate_toward(curve_unit(*M, l, tc), double(sg) * curve_normal(*M, l, tc),
                               off / (3.0 - lev));
        return M->phi_o((3.0 - lev) * u);
    };
    t.xi_inv = [M, l, span, base_at](const ManifoldPoint& p) {
        TubularNeighborhood::FiberCoords fc;
        fc.base = base_at(p.level);
        if (p.traj.kind != TrajKind::Wob) {
            fc.v = {0, 0, 0};
            return fc;
        }
        double tc = perp_foot(*M, l, p.traj.dir);
        double off = (3.0 - p.level) * angle_between(p.traj.dir, curve_unit(*M, l, tc));
        double phi = (tc - 0.5 * span) / span * 2.0 * kPi;
        fc.v = {off * std::cos(phi), off * std::sin(phi), 0.0};
        return fc;
    };
    t.stage = [](const ManifoldPoint&, const Vec3& v) {
        return std::hypot(v.x, v.y) < 1e-14 ? 0 : 3;
    };
    t.sample_base = [base_at](R64& g) { return base_at(urand(g, 0.05, 0.95)); };
    t.sample = [this_t = t, base_at](R64& g) {
        for (int tries = 0; tries < 16; ++tries) {
            ManifoldPoint b = base_at(urand(g, 0.05, 0.95));
            double e = this_t.eps(b);
            double r = urand(g, 1e-3 * e, e), phi = urand(g, 0.0, 2.0 * kPi);
            try {
                return this_t.xi(b, {r * std::cos(phi), r * std::sin(phi), 0.0});
            } catch (const std::domain_error&) {
            }
        }
        return base_at(0.5);
    };
    attach_orientation(t);
    return t;
}

TubularNeighborhood build_tube_2stratum(const BallModel& m, const Stratum& s,
                                        double delta) {
    const BallModel* M = &m;
    TubularNeighborhood t = make_base_tube(m, s, 1, delta);
    auto prm = t.prm;

    if (s.kind == TrajKind::Wol) {
        int l = s.l;
        const Curve& c = m.diagram().curve(l);
        bool closed = c.closed;
        std::vector<Vec3> ends;  // junction marked directions
        if (!closed)
            for (int i = 1; i <= c.sl(); ++i) {
                PointRef pr = junction_of(m.diagram(), l, i);
                ends.push_back(marked_dir(m, pr.k, pr.sign));
            }
        double span = curve_span(c);

        auto base_at = [M, l](double tc, double lev) { return mk_wol(*M, l, tc, lev); };
        t.dist = [M, l](const ManifoldPoint& p) {
            if (p.level <= 1.0 || p.level >= 3.0) return kInf;
            if (p.traj.kind == TrajKind::Wol) return p.traj.l == l ? 0.0 : kInf;
            if (p.traj.kind != TrajKind::Wob) return kInf;
            double tc = perp_foot(*M, l, p.traj.dir);
            return (3.0 - p.level) * angle_between(p.traj.dir, curve_unit(*M, l, tc));
        };
        t.frontier_dist = [M, l, ends](const ManifoldPoint& b) {
            double fd = std::min(b.level - 1.0, 3.0 - b.level);
            Vec3 chat = curve_unit(*M, l, b.traj.t);
            for (const Vec3& e : ends)
                fd = std::min(fd, (3.0 - b.level) * angle_between(chat, e));
            return fd;
        };
        t.retract = [M, l, base_at](const ManifoldPoint& p) {
            if (p.traj.kind == TrajKind::Wol) return base_at(p.traj.t, p.level);
            return base_at(perp_foot(*M, l, p.traj.dir), p.level);
        };
        t.contains = [t2 = t.dist, this_eps = t, r = t.retract](const ManifoldPoint& p) {
            double d = t2(p);
            if (d >= kInf) return false;
            return d < this_eps.eps(r(p));
        };
        t.xi = [M, l](const ManifoldPoint& b, const Vec3& v) -> ManifoldPoint {
            double lev = b.level, tc = b.traj.t;
            double ang = std::fabs(v.x) / (3.0 - lev);
            if (ang < 2e-6) return mk_wol(*M, l, tc, lev);
            int side = v.x >= 0 ? +1 : -1;
            Vec3 u = rotate_toward(curve_unit(*M, l, tc), double(side) * curve_normal(*M, l, tc),
                                   ang);
            return M->phi_o((3.0 - lev) * u);
        };
        t.xi_inv = [M, l, base_at](const ManifoldPoint& p) {
            TubularNeighborhood::FiberCoords fc;
            if (p.traj.kind == TrajKind::Wol) {
                fc.base = base_at(p.traj.t, p.level);
                fc.v = {0, 0, 0};
                return fc;
            }
            double tc = perp_foot(*M, l, p.traj.dir);
            fc.base = base_at(tc, p.level);
            double off = (3.0 - p.level) * angle_between(p.traj.dir, curve_unit(*M, l, tc));
            double side = dot(p.traj.dir, curve_normal(*M, l, tc)) >= 0 ? +1.0 : -1.0;
            fc.v = {side * off, 0.0, 0.0};
            return fc;
        };
        t.stage = [](const ManifoldPoint&, const Vec3& v) {
            return std::fabs(v.x) < 1e-14 ? 0 : 3;
        };
        t.sample_base = [M, l, base_at, span](R64& g) {
            double tc = clamp_t(M->diagram().curve(l), urand(g, 0.0, span));
            return base_at(tc, urand(g, 1.05, 2.95));
        };
        t.sample = [this_t = t, sb = t.sample_base](R64& g) {
            for (int tries = 0; tries < 16; ++tries) {
                ManifoldPoint b = sb(g);
                double e = this_t.eps(b);
                double v = urand(g, 1e-3 * e, e) * (urand(g, 0.0, 1.0) < 0.5 ? -1.0 : 1.0);
                try {
                    return this_t.xi(b, {v, 0, 0});
                } catch (const std::domain_error&) {
                }
            }
            return sb(g);
        };
        attach_orientation(t);
        return t;
    }

    if (s.kind != TrajKind::WkB) throw std::invalid_argument("build_tube_2stratum: not a 2-stratum");

    int k = s.k;
    Vec3 ap = marked_dir(m, k, +1), am = marked_dir(m, k, -1);
    std::map<int, std::vector<double>> specials;  // sign -> thetas
    for (int sg : {+1, -1})
        for (const auto& sp : m.special_azimuths(k, sg)) specials[sg].push_back(sp.theta);

    // The tube formula subtracts the ascending manifolds of the y's; realized
    // here by carving out the W_ol collars at their *initial* (unshrunk)
    // thickness so the two 2-stratum tubes stay disjoint.
    struct Avoid { int l; double delta0; };
    std::vector<Avoid> avoid;
    for (const auto& c : m.diagram().curves) avoid.push_back({c.label, delta});
    auto near_wol = [M, avoid](const ManifoldPoint& p) {
        if (p.traj.kind != TrajKind::Wob) return false;
        for (const auto& av : avoid) {
            double tc = perp_foot(*M, av.l, p.traj.dir);
            Vec3 chat = curve_unit(*M, av.l, tc);
            if (p.level <= 1.0 || p.level >= 3.0) continue;
            double d = (3.0 - p.level) * angle_between(p.traj.dir, chat);
            // W_ol thickness bound at this foot (normal form, initial size)
            double fd = std::min(p.level - 1.0, 3.0 - p.level);
            const Curve& cv = M->diagram().curve(av.l);
            if (!cv.closed)
                for (int i = 1; i <= cv.sl(); ++i) {
                    PointRef pr = junction_of(M->diagram(), av.l, i);
                    fd = std::min(fd, (3.0 - p.level) *
                                          angle_between(chat, marked_dir(*M, pr.k, pr.sign)));
                }
            if (d <= 0.5 * std::min(fd, av.delta0 / 4.0)) return true;
        }
        return false;
    };

    auto pick_sign = [ap, am](const Vec3& u) {
        return angle_between(u, ap) <= angle_between(u, am) ? +1 : -1;
    };
    auto base_at = [M, k](int sg, double th, double lev) { return mk_wkb(*M, k, sg, th, lev); };

    t.dist = [M, k, ap, am, pick_sign](const ManifoldPoint& p) {
        if (p.level <= 0.0 || p.level >= 2.0) return kInf;
        if (p.traj.kind == TrajKind::WkB) return p.traj.k == k ? 0.0 : kInf;
        if (p.traj.kind != TrajKind::Wob) return kInf;
        int sg = pick_sign(p.traj.dir);
        Vec3 a = sg > 0 ? ap : am;
        return (3.0 - p.level) * angle_between(p.traj.dir, a);
    };
    t.frontier_dist = [specials](const ManifoldPoint& b) {
        double fd = std::min(b.level, 2.0 - b.level);
        auto it = specials.find(b.traj.sign);
        if (it != specials.end())
            for (double th : it->second)
                fd = std::min(fd, (2.0 - b.level) * ang_diff(th, b.traj.theta));
        return fd;
    };
    t.retract = [M, k, pick_sign, base_at](const ManifoldPoint& p) {
        if (p.traj.kind == TrajKind::WkB)
            return base_at(p.traj.sign, p.traj.theta, p.level);
        int sg = pick_sign(p.traj.dir);
        return base_at(sg, azimuth_at(*M, k, sg, p.traj.dir), p.level);
    };
    t.contains = [t2 = t.dist, this_eps = t, r = t.retract, near_wol](const ManifoldPoint& p) {
        double d = t2(p);
        if (d >= kInf) return false;
        if (near_wol(p)) return false;
        return d < this_eps.eps(r(p));
    };
    t.xi = [M, k](const ManifoldPoint& b, const Vec3& v) -> ManifoldPoint {
        double lev = b.level;
        double ang = std::fabs(v.x) / (3.0 - lev);
        if (ang < 2e-6) return mk_wkb(*M, k, b.traj.sign, b.traj.theta, lev);
        Membrane mb = M->outbound_membrane(k, b.traj.sign, b.traj.theta);
        Vec3 u = mb.point(3.0 * ang);
        return M->phi_o((3.0 - lev) * u);
    };
    t.xi_inv = [M, k, pick_sign, base_at](const ManifoldPoint& p) {
        TubularNeighborhood::FiberCoords fc;
        if (p.traj.kind == TrajKind::WkB) {
            fc.base = base_at(p.traj.sign, p.traj.theta, p.level);
            fc.v = {0, 0, 0};
            return fc;
        }
        int sg = pick_sign(p.traj.dir);
        Vec3 a = marked_dir(*M, k, sg);
        fc.base = base_at(sg, azimuth_at(*M, k, sg, p.traj.dir), p.level);
        fc.v = {(3.0 - p.level) * angle_between(p.traj.dir, a), 0.0, 0.0};
        return fc;
    };
    t.stage = [](const ManifoldPoint&, const Vec3& v) {
        return std::fabs(v.x) < 1e-14 ? 0 : 3;
    };
    t.sample_base = [base_at](R64& g) {
        int sg = urand(g, 0.0, 1.0) < 0.5 ? +1 : -1;
        return base_at(sg, urand(g, -kPi, kPi), urand(g, 0.05, 1.95));
    };
    t.sample = [this_t = t, sb = t.sample_base, ct = t.contains](R64& g) {
        for (int tries = 0; tries < 24; ++tries) {
            ManifoldPoint b = sb(g);
            double e = this_t.eps(b);
            if (e <= 0) continue;
            double v = urand(g, 1e-3 * e, e);
            try {
                ManifoldPoint p = this_t.xi(b, {v, 0, 0});
                if (ct(p)) return p;
            } catch (const std::domain_error&) {
            }
        }
        return sb(g);
    };
    attach_orientation(t);
    return t;
}

TubularNeighborhood build_tube_top(const BallModel& m, const Stratum& s) {
    const BallModel* M = &m;
    TubularNeighborhood t = make_base_tube(m, s, 0, 0.25);
    int j = s.j;
    // distance to the singular directions, for the thickness normal form
    t.frontier_dist = [M](const ManifoldPoint& b) {
        double fd = std::min(b.level, 3.0 - b.level);
        auto nr = M->geometry().nearest(b.traj.dir);
        if (nr) fd = std::min(fd, (3.0 - b.level) * (nr->dist / 3.0));
        const SphericalDiagram& d = M->diagram();
        for (const auto& bp : d.points)
            fd = std::min(fd, (3.0 - b.level) * angle_between(b.traj.dir, bp.dir));
        return fd;
    };
    t.contains = [j](const ManifoldPoint& p) {
        return p.traj.kind == TrajKind::Wob && p.traj.j == j && p.level > 0.0 &&
               p.level < 3.0;
    };
    t.dist = [ct = t.contains](const ManifoldPoint& p) { return ct(p) ? 0.0 : kInf; };
    t.retract = [](const ManifoldPoint& p) { return p; };
    t.xi = [](const ManifoldPoint& b, const Vec3&) { return b; };
    t.xi_inv = [](const ManifoldPoint& p) {
        return TubularNeighborhood::FiberCoords{p, {0, 0, 0}};
    };
    t.stage = [](const ManifoldPoint&, const Vec3&) { return 0; };
    t.sample_base = [M, j](R64& g) {
        for (int tries = 0; tries < 128; ++tries) {
            Vec3 u = rand_unit(g);
            if (M->components().component_at(u) >= 0 && M->components().label_at(u) == j)
                return mk_wob(u, j, urand(g, 0.1, 2.9));
        }
        return mk_wob({0, 0, 1}, j, 1.5);
    };
    t.sample = t.sample_base;
    attach_orientation(t);    return t;
}

std::vector<TubularNeighborhood> build_all_tubes(const BallModel& m,
                                                 const Prestratification& ps,
                                                 double delta) {
    std::vector<TubularNeighborhood> out;
    out.reserve(ps.strata.size());
    for (const auto& s : ps.strata) {
        switch (s.kind) {
            case TrajKind::O: case TrajKind::CritX: case TrajKind::CritY:
            case TrajKind::CritB:
                out.push_back(build_tube_critical(m, s, delta));
                break;
            case TrajKind::Mu: case TrajKind::Lambda: case TrajKind::Nu:
                out.push_back(build_tube_trajectory(m, s, delta));
                break;
            case TrajKind::Wol: case TrajKind::WkB:
                out.push_back(build_tube_2stratum(m, s, delta));
                break;
            default:
                out.push_back(build_tube_top(m, s));
                break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checks
// ---------------------------------------------------------------------------

namespace {

double point_dist(const ManifoldPoint& a, const ManifoldPoint& b) {
    return dist(a.model, b.model) + std::fabs(a.level - b.level);
}

std::optional<ManifoldPoint> beta_point_near_alpha(const BallModel& m,
                                                   const Prestratification& ps,
                                                   const std::vector<TubularNeighborhood>& tubes,
                                                   int alpha, int beta, R64& g);

}  // namespace

StrataCheck check_thickness(const TubularNeighborhood& tube, int n_samples,
                            std::uint64_t seed) {
    StrataCheck c;
    c.name = "thickness";
    c.subject = tube.base.label;
    c.tolerance = 0.0;
    R64 g(seed);
    for (int i = 0; i < n_samples; ++i) {
        ManifoldPoint b = tube.sample_base(g);
        double fd = tube.frontier_dist(b);
        double e = tube.eps(b);
        double want = tube.prm->a * std::min(fd, tube.prm->delta_th);
        c.worst_residual = std::max(c.worst_residual, std::fabs(e - want));
        if (e <= 0.0 || tube.prm->a <= 0.0) {
            c.passed = false;
            c.witness = "non-positive thickness at a base sample";
        }
    }
    c.samples = n_samples;
    if (c.worst_residual > c.tolerance) c.passed = false;
    return c;
}

StrataCheck check_chart(const TubularNeighborhood& tube, int n_samples,
                        std::uint64_t seed) {
    StrataCheck c;
    c.name = "chart";
    c.subject = tube.base.label;
    c.tolerance = 1e-9;
    R64 g(seed);
    c.samples = n_samples;
    if (tube.rank == 0) return c;
    for (int i = 0; i < n_samples; ++i) {
        ManifoldPoint p;
        try {
            p = tube.sample(g);
        } catch (const std::exception&) {
            continue;
        }
        auto fc = tube.xi_inv(p);
        ManifoldPoint q;
        try {
            q = tube.xi(fc.base, fc.v);
        } catch (const std::exception& e) {
            c.passed = false;
            c.witness = std::string("xi failed: ") + e.what();
            continue;
        }
        double r = point_dist(p, q);
        c.worst_residual = std::max(c.worst_residual, r);
        if (r > c.tolerance && c.passed) {
            c.passed = false;
            std::ostringstream os;
            os << "roundtrip residual " << r << " at " << to_string(p.traj);
            c.witness = os.str();
        }
    }
    int m = std::max(4, n_samples / 10);
    for (int i = 0; i < m; ++i) {
        double det = tube.orientation_det(g);
        if (det <= 0.0) {
            c.passed = false;
            c.witness = "non-positive chart Jacobian determinant";
        }
    }
    return c;
}

StrataCheck check_retraction_idempotence(const TubularNeighborhood& tube, int n_samples,
                                         std::uint64_t seed) {
    StrataCheck c;
    c.name = "retraction-idempotence";
    c.subject = tube.base.label;
    c.tolerance = 1e-9;
    R64 g(seed);
    c.samples = n_samples;
    for (int i = 0; i < n_samples; ++i) {
        ManifoldPoint p = tube.sample(g);
        ManifoldPoint q = tube.retract(p);
        ManifoldPoint q2 = tube.retract(q);
        double r = point_dist(q, q2);
        // r(p) = p on the stratum itself (as a point of M)
        ManifoldPoint b = tube.sample_base(g);
        ManifoldPoint rb = tube.retract(b);
        if (!same_trajectory(rb.traj, b.traj, 1e-6)) r = std::max(r, 1.0);
        r = std::max(r, std::fabs(rb.level - b.level));
        c.worst_residual = std::max(c.worst_residual, r);
        if (r > c.tolerance && c.passed) {
            c.passed = false;
            c.witness = "idempotence residual at " + to_string(p.traj);
        }
    }
    return c;
}

StrataCheck check_conic_bundle(const TubularNeighborhood& tube, int n_samples,
                               std::uint64_t seed) {
    StrataCheck c;
    c.name = "conic-bundle";
    c.subject = tube.base.label;
    c.tolerance = 0.0;
    R64 g(seed);
    c.samples = n_samples;
    int violations = 0;
    ManifoldPoint b0 = tube.sample_base(g);
    if (tube.stage(b0, {0, 0, 0}) != 0) {
        violations++;
        c.witness = "zero vector not in E^0";
    }
    for (int i = 0; i < n_samples; ++i) {
        ManifoldPoint b = tube.sample_base(g);
        Vec3 v = rand_ball(g, 1.0);
        if (tube.rank < 3) v.z = 0.0;
        if (tube.rank < 2) v.y = 0.0;
        if (norm(v) < 1e-6) continue;
        int s1 = tube.stage(b, v);
        for (double scale : {0.1, 10.0}) {
            if (tube.stage(b, scale * v) != s1) {
                violations++;
                c.witness = "positive scaling changed the filtration stage";
            }
        }
        // local trivialization: the same fiber coordinates over a second base
        // point land in the same filtration piece
        ManifoldPoint b2 = tube.sample_base(g);
        if (tube.stage(b2, v) != s1) {
            violations++;
            c.witness = "trivialization transported a vector across E^i";
        }
    }
    c.worst_residual = violations;
    if (violations > 0) c.passed = false;
    return c;
}

StrataCheck check_retraction_compat(const Prestratification& ps,
                                    const std::vector<TubularNeighborhood>& tubes,
                                    int alpha, int beta, int n_samples,
                                    std::uint64_t seed) {
    StrataCheck c;
    c.name = "retraction-compat";
    c.subject = ps.strata[size_t(alpha)].label + " < " + ps.strata[size_t(beta)].label;
    c.tolerance = 1e-6 * tubes[size_t(beta)].prm->delta;
    R64 g(seed);
    const auto& ta = tubes[size_t(alpha)];
    const auto& tb = tubes[size_t(beta)];
    int accepted = 0, in_alpha = 0;
    int want = std::max(100, n_samples / 4);
    for (int tries = 0; tries < 60 * want && accepted < want; ++tries) {
        ManifoldPoint p;
        try {
            // alternate sampling strategies: beta tube, alpha tube, beta bases
            // inside the alpha tube, and constructed beta points near alpha
            switch (tries % 4) {
                case 0: p = tb.sample(g); break;
                case 1: p = ta.sample(g); break;
                case 2: {
                    ManifoldPoint b = tb.sample_base(g);
                    if (!ta.contains(b)) continue;
                    p = b;
                    break;
                }
                default: {
                    auto q = beta_point_near_alpha(*tb.model, ps, tubes, alpha, beta, g);
                    if (!q) continue;
                    p = *q;
                    break;
                }
            }
        } catch (const std::exception&) {
            continue;
        }
        if (!ta.contains(p) || !tb.contains(p)) continue;
        ++accepted;
        ManifoldPoint rb = tb.retract(p);
        if (ta.contains(rb)) ++in_alpha;
        double r = point_dist(ta.retract(rb), ta.retract(p));
        c.worst_residual = std::max(c.worst_residual, r);
    }
    c.samples = accepted;
    if (accepted < std::min(100, want)) {
        c.witness = "under-sampled overlap (" + std::to_string(accepted) + " accepted)";
        c.passed = accepted > 0;  // empty overlap for alpha < beta violates Remark (i)
        return c;
    }
    std::ostringstream os;
    os << "clause-1 membership " << in_alpha << "/" << accepted;
    if (in_alpha < accepted) os << " (weakened control, see formula-(1) note)";
    c.witness = os.str();
    if (c.worst_residual > c.tolerance) c.passed = false;
    return c;
}

namespace {

/// Constructs genuine frontier limit points of a stratum, used to verify the
/// frontier condition against the declared order.
std::vector<ManifoldPoint> frontier_points(const BallModel& m, const Stratum& s, R64& g) {
    std::vector<ManifoldPoint> out;
    const SphericalDiagram& d = m.diagram();
    switch (s.kind) {
        case TrajKind::Mu:
            out.push_back(mk_critx(m, s.k));
            out.push_back(mk_o());
            break;
        case TrajKind::Lambda:
            out.push_back(mk_critx(m, s.k));
            out.push_back(mk_crity(m, s.l));
            break;
        case TrajKind::Nu: {
            out.push_back(mk_crity(m, s.l));
            int j = side_label(m, s.l, s.sign);
            if (j != 0 || d.closed_manifold) out.push_back(mk_critb(m, j));
            break;
        }
        case TrajKind::Wol: {
            out.push_back(mk_o());
            out.push_back(mk_crity(m, s.l));
            const Curve& c = d.curve(s.l);
            if (!c.closed)
                for (int i = 1; i <= c.sl(); ++i) {
                    PointRef pr = junction_of(d, s.l, i);
                    out.push_back(mk_critx(m, pr.k));
                    out.push_back(mk_mu(m, pr.k, pr.sign, urand(g, 2.1, 2.9)));
                    out.push_back(mk_lambda(m, s.l, i, pr.k, pr.sign, 0.0, urand(g, 1.1, 1.9)));
                }
            break;
        }
        case TrajKind::WkB: {
            out.push_back(mk_critx(m, s.k));
            for (int sg : {+1, -1}) {
                auto az = azimuth_intervals(m, s.k, sg);
                for (int lab : az.labels)
                    if (lab != 0 || d.closed_manifold) out.push_back(mk_critb(m, lab));
                for (const auto& sp : m.special_azimuths(s.k, sg)) {
                    const Curve& c = d.curve(sp.l);
                    int li = sp.at_start ? sp.i : sp.i % c.sl() + 1;
                    out.push_back(mk_crity(m, sp.l));
                    out.push_back(
                        mk_lambda(m, sp.l, li, s.k, sg, sp.theta, urand(g, 1.1, 1.9)));
                    for (double off : {+0.05, -0.05}) {
                        int side = special_side(m, s.k, sg, sp, off);
                        out.push_back(mk_nu(m, sp.l, side, urand(g, 0.1, 0.9)));
                    }
                }
            }
            break;
        }
        case TrajKind::Wob: {
            out.push_back(mk_o());
            if (s.j != 0 || d.closed_manifold) out.push_back(mk_critb(m, s.j));
            // limits toward the singular directions bordering region j
            for (const auto& c : d.curves)
                for (int sg : {+1, -1})
                    if (side_label(m, c.label, sg) == s.j) {
                        out.push_back(mk_crity(m, c.label));
                        out.push_back(mk_wol(m, c.label,
                                             clamp_t(c, urand(g, 0.1, 0.9) * curve_span(c)),
                                             urand(g, 1.1, 2.9)));
                        out.push_back(mk_nu(m, c.label, sg, urand(g, 0.1, 0.9)));
                    }
            for (int k = 1; k <= d.K(); ++k)
                for (int sg : {+1, -1}) {
                    auto az = azimuth_intervals(m, k, sg);
                    if (az.cuts.empty()) {
                        if (az.labels[0] == s.j) {
                            out.push_back(mk_critx(m, k));
                            out.push_back(mk_mu(m, k, sg, urand(g, 2.1, 2.9)));
                            out.push_back(mk_wkb(m, k, sg, urand(g, -kPi, kPi), urand(g, 0.1, 1.9)));
                        }
                        continue;
                    }
                    int n = int(az.cuts.size());
                    for (int i = 0; i < n; ++i)
                        if (az.labels[size_t(i)] == s.j) {
                            double lo = az.cuts[size_t(i)];
                            double hi = i + 1 < n ? az.cuts[size_t(i + 1)] : az.cuts[0] + 2 * kPi;
                            out.push_back(mk_critx(m, k));
                            out.push_back(mk_mu(m, k, sg, urand(g, 2.1, 2.9)));
                            out.push_back(
                                mk_wkb(m, k, sg, urand(g, lo + 0.05, hi - 0.05), urand(g, 0.1, 1.9)));
                        }
                }
            break;
        }
        default:
            break;  // critical points have empty frontier
    }
    return out;
}

}  // namespace

StrataCheck check_frontier(const BallModel& m, const Prestratification& ps, int stratum,
                           int n_samples, std::uint64_t seed) {
    StrataCheck c;
    c.name = "frontier";
    c.subject = ps.strata[size_t(stratum)].label;
    c.tolerance = 0.0;
    R64 g(seed);
    int bad = 0, total = 0;
    while (total < n_samples) {
        auto pts = frontier_points(m, ps.strata[size_t(stratum)], g);
        if (pts.empty()) { total = n_samples; break; }  // empty frontier
        for (const auto& p : pts) {
            if (total >= n_samples) break;
            ++total;
            int target = stratum_of(ps, p);
            if (target < 0 || !ps.precedes(target, stratum)) {
                ++bad;
                if (c.witness.empty())
                    c.witness = "frontier point " + to_string(p.traj) + " not below " +
                                c.subject;
            }
        }
    }
    c.samples = total;
    c.worst_residual = bad;
    if (bad > 0) c.passed = false;
    return c;
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

namespace {

/// Builds a beta-stratum point inside the alpha tube, for overlap seeding.
std::optional<ManifoldPoint> beta_point_near_alpha(const BallModel& m,
                                                   const Prestratification& ps,
                                                   const std::vector<TubularNeighborhood>& tubes,
                                                   int alpha, int beta, R64& g) {
    const Stratum& sa = ps.strata[size_t(alpha)];
    const Stratum& sb = ps.strata[size_t(beta)];
    const auto& ta = tubes[size_t(alpha)];
    for (int tries = 0; tries < 48; ++tries) {
        ManifoldPoint b;
        try {
            b = tubes[size_t(beta)].sample_base(g);
        } catch (const std::exception&) {
            continue;
        }
        // bias the free parameters toward alpha's level range
        double lev = b.level;
        switch (sa.kind) {
            case TrajKind::O: lev = urand(g, 2.98, 2.999); break;
            case TrajKind::CritX: lev = urand(g, 1.9, 2.1); break;
            case TrajKind::CritY: lev = urand(g, 0.98, 1.02); break;
            case TrajKind::CritB: lev = urand(g, 1e-3, 0.02); break;
            case TrajKind::Mu: lev = urand(g, 2.1, 2.9); break;
            case TrajKind::Lambda: lev = urand(g, 1.1, 1.9); break;
            case TrajKind::Nu: lev = urand(g, 0.1, 0.9); break;
            default: break;
        }
        lev = std::min(std::max(lev, 1e-3), 2.999);
        ManifoldPoint p = b;
        switch (sb.kind) {
            case TrajKind::Mu: p = mk_mu(m, sb.k, sb.sign, lev); break;
            case TrajKind::Lambda:
                p = mk_lambda(m, sb.l, sb.i, sb.k, sb.sign, 0.0,
                              std::min(std::max(lev, 1.001), 1.999));
                break;
            case TrajKind::Nu: p = mk_nu(m, sb.l, sb.sign, std::min(lev, 0.999)); break;
            case TrajKind::Wol: {
                double tc = b.traj.t;
                if (sa.kind == TrajKind::CritX || sa.kind == TrajKind::Mu ||
                    sa.kind == TrajKind::Lambda) {
                    // feet marching into a junction at alpha's marked point
                    const Curve& c = m.diagram().curve(sb.l);
                    if (c.closed) return std::nullopt;
                    std::vector<int> ends;  // arc indices whose start junction matches
                    for (int i = 1; i <= c.sl(); ++i) {
                        PointRef pr = junction_of(m.diagram(), sb.l, i);
                        bool match = sa.kind == TrajKind::CritX
                                         ? pr.k == sa.k
                                         : pr.k == sa.k && pr.sign == sa.sign;
                        if (match) ends.push_back(i);
                    }
                    if (ends.empty()) return std::nullopt;
                    int i = ends[size_t(urand(g, 0.0, 1.0) * ends.size()) % ends.size()];
                    double w = urand(g, 1e-4, 0.01);
                    double R = m.diagram().R();
                    tc = clamp_t(c, (i - 1) + m.diagram().t0 * (3.0 * w) / R);
                    lev = sa.kind == TrajKind::Mu
                              ? urand(g, 2.2, 2.8)
                              : (sa.kind == TrajKind::Lambda ? urand(g, 1.2, 1.8)
                                                             : urand(g, 1.95, 2.05));
                }
                p = mk_wol(m, sb.l, tc, std::min(std::max(lev, 1.001), 2.999));
                break;
            }
            case TrajKind::WkB: {
                double th = b.traj.theta;
                int sg = b.traj.sign;
                if (sa.kind == TrajKind::Lambda || sa.kind == TrajKind::Nu ||
                    sa.kind == TrajKind::CritY) {
                    // azimuths marching into a special azimuth
                    auto sps = m.special_azimuths(sb.k, sg);
                    if (sps.empty()) return std::nullopt;
                    const auto& sp = sps[size_t(urand(g, 0.0, 1.0) * sps.size()) % sps.size()];
                    double off = urand(g, 1e-4, 0.02) * (urand(g, 0.0, 1.0) < 0.5 ? 1 : -1);
                    th = sp.theta + off;
                    if (sa.kind == TrajKind::Nu) lev = urand(g, 0.2, 0.8);
                    if (sa.kind == TrajKind::Lambda) lev = urand(g, 1.2, 1.8);
                    if (sa.kind == TrajKind::CritY) lev = urand(g, 0.98, 1.02);
                }
                p = mk_wkb(m, sb.k, sg, th, std::min(std::max(lev, 1e-3), 1.999));
                break;
            }
            case TrajKind::Wob: {
                // a generic direction close to alpha, inside region j
                Vec3 u = b.traj.dir;
                if (sa.kind == TrajKind::CritX || sa.kind == TrajKind::Mu ||
                    sa.kind == TrajKind::Lambda || sa.kind == TrajKind::WkB) {
                    int k = sa.k;
                    int sg = sa.sign != 0 ? sa.sign : (urand(g, 0.0, 1.0) < 0.5 ? 1 : -1);
                    Vec3 a = marked_dir(m, k, sg);
                    auto [e1, e2] = tangent_frame(a);
                    double th = urand(g, -kPi, kPi);
                    if (sa.kind == TrajKind::Lambda) {
                        // stay inside the lambda tube's azimuth wedge
                        auto ths = lambda_azimuths(m, sa.l, sa.i);
                        if (ths.empty()) return std::nullopt;
                        th = ths[size_t(urand(g, 0.0, 1.0) * ths.size()) % ths.size()] +
                             urand(g, -0.05, 0.05);
                    }
                    u = rotate_toward(a, std::cos(th) * e1 + std::sin(th) * e2,
                                      urand(g, 2e-4, 3e-3));
                } else if (sa.kind == TrajKind::CritY || sa.kind == TrajKind::Nu ||
                           sa.kind == TrajKind::Wol) {
                    int l = sa.l;
                    const Curve& c = m.diagram().curve(l);
                    double tc = clamp_t(c, urand(g, 0.05, 0.95) * curve_span(c));
                    int side = sa.kind == TrajKind::Nu ? sa.sign
                                                       : (urand(g, 0.0, 1.0) < 0.5 ? 1 : -1);
                    u = rotate_toward(curve_unit(m, l, tc), double(side) * curve_normal(m, l, tc),
                                      urand(g, 2e-4, 3e-3));
                }
                try {
                    ManifoldPoint q = m.phi_o((3.0 - lev) * u);
                    if (q.traj.kind != TrajKind::Wob || q.traj.j != sb.j) continue;
                    p = q;
                } catch (const std::domain_error&) {
                    continue;
                }
                break;
            }
            default:
                return std::nullopt;
        }
        if (ta.contains(p)) return p;
    }
    return std::nullopt;
}

}  // namespace

std::vector<StrataCheck> verify_stratification(const BallModel& m, int n_samples,
                                               std::uint64_t seed) {
    Prestratification ps = build_stratification(m);
    std::vector<TubularNeighborhood> tubes = build_all_tubes(m, ps);
    std::vector<StrataCheck> out;
    R64 g(seed);
    int n = int(ps.strata.size());

    // order sanity: strict partial order
    {
        StrataCheck c;
        c.name = "order-strict";
        c.subject = "all";
        c.samples = int(ps.order.size());
        for (auto& [a, b] : ps.order)
            if (a == b || ps.order.count({b, a})) {
                c.passed = false;
                c.witness = "order is not strict";
            }
        out.push_back(c);
    }

    // Remark (ii): shrink until incomparable tubes are disjoint on samples
    StrataCheck disj;
    disj.name = "incomparable-disjoint";
    disj.subject = "all";
    int probe = std::max(40, n_samples / 5);
    for (int round = 0; round < 50; ++round) {
        bool clean = true;
        for (int a = 0; a < n && clean; ++a)
            for (int b = a + 1; b < n && clean; ++b) {
                if (ps.comparable(a, b)) continue;
                for (int i = 0; i < probe; ++i) {
                    ManifoldPoint p;
                    try {
                        p = tubes[size_t(i % 2 == 0 ? a : b)].sample(g);
                    } catch (const std::exception&) {
                        continue;
                    }
                    ++disj.samples;
                    if (tubes[size_t(a)].contains(p) && tubes[size_t(b)].contains(p)) {
                        tubes[size_t(a)].shrink(0.9);
                        tubes[size_t(b)].shrink(0.9);
                        clean = false;
                        disj.witness = "shrunk " + ps.strata[size_t(a)].label + " / " +
                                       ps.strata[size_t(b)].label + " at round " +
                                       std::to_string(round);
                        break;
                    }
                }
            }
        if (clean) break;
        if (round == 49) {
            disj.passed = false;
            disj.witness += " (not disjoint after 50 rounds)";
        }
    }
    out.push_back(disj);

    // Remark (i): every comparable pair has nonempty overlap
    {
        StrataCheck c;
        c.name = "comparable-overlap";
        c.subject = "all";
        for (auto& [a, b] : ps.order) {
            ++c.samples;
            auto p = beta_point_near_alpha(m, ps, tubes, a, b, g);
            if (!p) {
                c.passed = false;
                c.witness = "no overlap witness for " + ps.strata[size_t(a)].label + " < " +
                            ps.strata[size_t(b)].label;
            }
        }
        out.push_back(c);
    }

    for (int i = 0; i < n; ++i) {
        out.push_back(check_thickness(tubes[size_t(i)], n_samples, seed + 11 * i + 1));
        out.push_back(check_chart(tubes[size_t(i)], n_samples, seed + 11 * i + 2));
        out.push_back(check_retraction_idempotence(tubes[size_t(i)], n_samples,
                                                   seed + 11 * i + 3));
        out.push_back(check_conic_bundle(tubes[size_t(i)], n_samples, seed + 11 * i + 4));
        out.push_back(check_frontier(m, ps, i, n_samples, seed + 11 * i + 5));
    }
    for (auto& [a, b] : ps.order)
        out.push_back(
            check_retraction_compat(ps, tubes, a, b, n_samples, seed + 1009 * a + 31 * b));

    std::stable_sort(out.begin(), out.end(), [](const StrataCheck& a, const StrataCheck& b) {
        return a.subject < b.subject || (a.subject == b.subject && a.name < b.name);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Sphere-level conic stratification (geodesic tubes about the sphere strata)
// ---------------------------------------------------------------------------

namespace {

struct SphereTube {
    std::string label;
    int dim = 0;
    double a = 0.5, delta = 0.0, delta_th = 0.0;
    std::function<bool(const Vec3&)> contains;
    std::function<Vec3(const Vec3&)> retract;   // to the stratum, unit dirs
    std::function<double(const Vec3&)> fdist;   // frontier distance at a stratum point
    double eps(const Vec3& u) const { return a * std::min(fdist(u), delta_th); }
};

}  // namespace

std::vector<StrataCheck> sphere_conic_check(const BallModel& m, int n_samples,
                                            std::uint64_t seed) {
    std::vector<StrataCheck> out;
    const SphericalDiagram& d = m.diagram();
    R64 g(seed);
    double R = d.R();  // spherical (length) radius of the marked discs

    std::vector<SphereTube> xt, at;
    for (int k = 1; k <= d.K(); ++k) {
        SphereTube t;
        t.label = "X_" + std::to_string(k);
        t.delta = R;
        t.delta_th = R / 4.0;
        Vec3 ap = marked_dir(m, k, +1), am = marked_dir(m, k, -1);
        t.contains = [ap, am, R](const Vec3& u) {
            return 3.0 * std::min(angle_between(u, ap), angle_between(u, am)) < R;
        };
        t.retract = [ap, am](const Vec3& u) {
            return angle_between(u, ap) <= angle_between(u, am) ? ap : am;
        };
        t.fdist = [](const Vec3&) { return 1e30; };
        xt.push_back(t);
    }
    for (const auto& c : d.curves) {
        SphereTube t;
        int l = c.label;
        t.label = "alpha_" + std::to_string(l);
        t.dim = 1;
        t.delta = R;
        t.delta_th = R / 4.0;
        const BallModel* M = &m;
        std::vector<Vec3> ends;
        if (!c.closed)
            for (int i = 1; i <= c.sl(); ++i) {
                PointRef pr = junction_of(d, l, i);
                ends.push_back(marked_dir(m, pr.k, pr.sign));
            }
        t.fdist = [ends](const Vec3& u) {
            double fd = 1e30;
            for (const Vec3& e : ends) fd = std::min(fd, 3.0 * angle_between(u, e));
            return fd;
        };
        t.retract = [M, l](const Vec3& u) {
            return curve_unit(*M, l, perp_foot(*M, l, u));
        };
        t.contains = [M, l, t2 = t](const Vec3& u) {
            Vec3 foot = curve_unit(*M, l, perp_foot(*M, l, u));
            return 3.0 * angle_between(u, foot) < t2.eps(foot);
        };
        at.push_back(t);
    }

    // thickness on the sphere tubes (normal form is exact by construction)
    for (const auto& t : xt) {
        StrataCheck c;
        c.name = "sphere-thickness";
        c.subject = t.label;
        c.samples = 1;
        c.passed = t.a > 0 && t.eps({0, 0, 1}) > 0;
        out.push_back(c);
    }
    for (size_t li = 0; li < at.size(); ++li) {
        const auto& t = at[li];
        const Curve& c = d.curves[li];
        StrataCheck ck;
        ck.name = "sphere-thickness";
        ck.subject = t.label;
        for (int i = 0; i < n_samples; ++i) {
            double tc = clamp_t(c, urand(g, 0.0, curve_span(c)));
            Vec3 u = curve_unit(m, c.label, tc);
            double e = t.eps(u);
            ++ck.samples;
            if (e <= 0.0) ck.passed = false;
            double want = t.a * std::min(t.fdist(u), t.delta_th);
            ck.worst_residual = std::max(ck.worst_residual, std::fabs(e - want));
        }
        if (ck.worst_residual > 0) ck.passed = false;
        out.push_back(ck);
    }

    // fibers: connected circular arcs with equal halves
    for (const auto& c : d.curves) {
        StrataCheck ck;
        ck.name = "sphere-equal-halves";
        ck.subject = "alpha_" + std::to_string(c.label);
        ck.tolerance = 1e-9;
        for (int i = 0; i < n_samples; ++i) {
            double tc = clamp_t(c, urand(g, 0.0, curve_span(c)));
            auto [plus, minus] = m.inbound_membrane(c.label, tc);
            ++ck.samples;
            ck.worst_residual =
                std::max(ck.worst_residual, std::fabs(plus.length - minus.length));
        }
        if (ck.worst_residual > ck.tolerance) ck.passed = false;
        out.push_back(ck);
    }

    // each fiber half is a connected arc marching away from the curve
    for (const auto& c : d.curves) {
        StrataCheck ck;
        ck.name = "sphere-fiber-connected";
        ck.subject = "alpha_" + std::to_string(c.label);
        for (int i = 0; i < n_samples; ++i) {
            double tc = clamp_t(c, urand(g, 0.0, curve_span(c)));
            Vec3 chat = curve_unit(m, c.label, tc);
            auto [plus, minus] = m.inbound_membrane(c.label, tc);
            ++ck.samples;
            for (const FiberArc* f : {&plus, &minus}) {
                double prev = 0.0;
                for (int s2 = 1; s2 <= 8; ++s2) {
                    double a = angle_between(normalized(f->point(s2 / 8.0)), chat);
                    if (a <= prev) {
                        ck.passed = false;
                        ck.witness = "fiber distance not monotone at t=" + std::to_string(tc);
                    }
                    prev = a;
                }
            }
        }
        out.push_back(ck);
    }

    // pairwise disjointness of the curve tubes
    {
        StrataCheck ck;
        ck.name = "sphere-disjoint";
        ck.subject = "alpha tubes";
        for (size_t i = 0; i < at.size(); ++i)
            for (size_t j = i + 1; j < at.size(); ++j)
                for (int s2 = 0; s2 < n_samples; ++s2) {
                    const Curve& c = d.curves[i];
                    double tc = clamp_t(c, urand(g, 0.0, curve_span(c)));
                    Vec3 chat = curve_unit(m, c.label, tc);
                    double e = at[i].eps(chat);
                    Vec3 u = rotate_toward(chat, (urand(g, 0.0, 1.0) < 0.5 ? 1.0 : -1.0) *
                                                     curve_normal(m, c.label, tc),
                                           urand(g, 0.0, e / 3.0));
                    ++ck.samples;
                    if (at[j].contains(u)) {
                        ck.passed = false;
                        ck.witness = at[i].label + " meets " + at[j].label;
                    }
                }
        out.push_back(ck);
    }

    // retraction compatibility on the sphere: X_k < alpha_l at arc junctions
    for (const auto& c : d.curves) {
        if (c.closed) continue;
        for (int i = 1; i <= c.sl(); ++i) {
            PointRef pr = junction_of(d, c.label, i);
            const SphereTube& tx = xt[size_t(pr.k - 1)];
            const SphereTube& tl = at[size_t(&c - d.curves.data())];
            StrataCheck ck;
            ck.name = "sphere-compat";
            ck.subject = tx.label + " < " + tl.label;
            ck.tolerance = 1e-9;
            int accepted = 0, in_x = 0;
            for (int tries = 0; tries < 400 * n_samples && accepted < n_samples; ++tries) {
                // sample near the junction inside both tubes
                double w = urand(g, 1e-4, 0.02);
                double tc = clamp_t(c, (i - 1) + d.t0 * (3.0 * w) / R);
                Vec3 chat = curve_unit(m, c.label, tc);
                double e = tl.eps(chat);
                if (e <= 0) continue;
                Vec3 u = rotate_toward(chat, (urand(g, 0.0, 1.0) < 0.5 ? 1.0 : -1.0) *
                                                 curve_normal(m, c.label, tc),
                                       urand(g, 0.0, 0.9 * e / 3.0));
                if (!tx.contains(u) || !tl.contains(u)) continue;
                ++accepted;
                Vec3 rl = tl.retract(u);
                if (tx.contains(rl)) ++in_x;
                double r = dist(tx.retract(rl), tx.retract(u));
                ck.worst_residual = std::max(ck.worst_residual, r);
            }
            ck.samples = accepted;
            std::ostringstream os;
            os << "clause-1 membership " << in_x << "/" << accepted;
            ck.witness = os.str();
            if (accepted == 0 || ck.worst_residual > ck.tolerance) ck.passed = false;
            out.push_back(ck);
        }
    }

    std::stable_sort(out.begin(), out.end(), [](const StrataCheck& a, const StrataCheck& b) {
        return a.subject < b.subject || (a.subject == b.subject && a.name < b.name);
    });
    return out;
}

}  // namespace mst
