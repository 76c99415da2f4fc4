#include "pushin.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "icosphere.hpp"

namespace mst {

// ---------------------------------------------------------------------------
// Warp profile
// ---------------------------------------------------------------------------

double WarpProfile::eval(double tau) const {
    if (tau < 0.0 || tau > 1.0) throw std::domain_error("WarpProfile: tau out of [0,1]");
    if (tau < 1.0 / 8.0) return tau + 0.25;
    if (tau > 7.0 / 8.0) return tau;
    // monotone blend between the two affine pieces; g' >= 3/8 throughout
    double u = (7.0 / 8.0 - tau) / (3.0 / 4.0);
    return tau + 0.25 * smoothstep5(u);
}

double WarpProfile::deriv(double tau) const {
    if (tau < 1.0 / 8.0 || tau > 7.0 / 8.0) return 1.0;
    double u = (7.0 / 8.0 - tau) / (3.0 / 4.0);
    double ds = 30.0 * u * u * (1.0 - u) * (1.0 - u);  // d/du of u^3(10-15u+6u^2)
    return 1.0 - 0.25 * ds / (3.0 / 4.0);
}

double WarpProfile::eval_inv(double y) const {
    if (y <= 0.25 || y > 1.0) throw std::domain_error("WarpProfile: value out of (1/4,1]");
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 100; ++it) {
        double mid = 0.5 * (lo + hi);
        (eval(mid) < y ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double WarpProfile::hR(double tau, double t, double R) const {
    if (R <= 0.0) throw std::domain_error("WarpProfile: R must be positive");
    return t * R * eval(tau / R) + (1.0 - t) * tau;
}

double WarpProfile::hR_inv(double taup, double R) const {
    return R * eval_inv(taup / R);
}

// ---------------------------------------------------------------------------
// PushInTransform
// ---------------------------------------------------------------------------

std::string to_string(Piece p) {
    switch (p) {
        case Piece::Interior: return "interior";
        case Piece::SSstar: return "S_cap_Sstar";
        case Piece::Vertex: return "vertex";
        case Piece::Sigma1: return "Sigma1";
        case Piece::Sigma2Cp1: return "Sigma2_Cp1";
        case Piece::Sigma2Cp2: return "Sigma2_Cp2";
        case Piece::Sigma2Alpha: return "Sigma2_alpha";
    }
    return "?";
}

PushInTransform::PushInTransform(const BallModel& m) : m_(&m), R_(m.diagram().R()) {}

// ---- stage 1: disc cones ---------------------------------------------------

PushInTransform::ConeCoord PushInTransform::cone_coords(const Vec3& z) const {
    ConeCoord cc;
    cc.rho = norm(z);
    const SphericalDiagram& d = m_->diagram();
    for (const auto& p : d.points) {
        Vec3 a = p.dir;
        Vec3 dirv = z - a;
        double dd = norm(dirv);
        if (dd < 1e-14) {  // the vertex itself
            cc.inside = true;
            cc.k = p.k;
            cc.sign = p.sign;
            cc.tau = 0.0;
            cc.theta = 0.0;
            return cc;
        }
        double beta;
        try {
            beta = ray_sphere_param(a, dirv, 3.0);
        } catch (const std::domain_error&) {
            continue;
        }
        if (beta < 1.0 - 1e-12) continue;  // z beyond the sphere along this ray
        Vec3 xhat = normalized(a + beta * dirv);
        double tau = 3.0 * angle_between(xhat, a);
        if (tau >= R_) continue;
        auto [e1, e2] = tangent_frame(a);
        Vec3 tan = xhat - dot(xhat, a) * a;
        cc.inside = true;
        cc.k = p.k;
        cc.sign = p.sign;
        cc.tau = tau;
        cc.theta = std::atan2(dot(tan, e2), dot(tan, e1));
        return cc;
    }
    return cc;
}

namespace {

/// Point on the segment a -> x with the given norm; root nearest s_hint.
Vec3 segment_at_norm(const Vec3& a, const Vec3& x, double rho, double s_hint) {
    Vec3 d = x - a;
    double q2 = norm2(d), q1 = 2.0 * dot(a, d), q0 = norm2(a) - rho * rho;
    double disc = q1 * q1 - 4.0 * q2 * q0;
    if (disc < 0.0) disc = 0.0;
    double r1 = (-q1 + std::sqrt(disc)) / (2.0 * q2);
    double r2 = (-q1 - std::sqrt(disc)) / (2.0 * q2);
    double s = (std::fabs(r1 - s_hint) <= std::fabs(r2 - s_hint)) ? r1 : r2;
    return a + s * d;
}

}  // namespace

Vec3 PushInTransform::apply_H(const Vec3& z, double t) const {
    ConeCoord cc = cone_coords(z);
    if (!cc.inside || cc.tau < 1e-15) return z;
    const Vec3 a = m_->diagram().point({cc.k, cc.sign}).dir;
    auto [e1, e2] = tangent_frame(a);
    Vec3 tan = std::cos(cc.theta) * e1 + std::sin(cc.theta) * e2;
    double taup = g_.hR(cc.tau, t, R_);
    Vec3 xp = 3.0 * rotate_toward(a, tan, taup / 3.0);
    Vec3 x = 3.0 * rotate_toward(a, tan, cc.tau / 3.0);
    double s_hint = norm(z - a) / norm(x - a);
    return segment_at_norm(a, xp, cc.rho, s_hint);
}

std::optional<Vec3> PushInTransform::invert_H1(const Vec3& z) const {
    ConeCoord cc = cone_coords(z);
    if (!cc.inside || cc.tau < 1e-15) return z;
    double y = cc.tau / R_;
    if (y <= 0.25 + 1e-13) return std::nullopt;  // vacated by the stage-1 warp
    double tau0 = g_.hR_inv(cc.tau, R_);
    const Vec3 a = m_->diagram().point({cc.k, cc.sign}).dir;
    auto [e1, e2] = tangent_frame(a);
    Vec3 tan = std::cos(cc.theta) * e1 + std::sin(cc.theta) * e2;
    Vec3 x0 = 3.0 * rotate_toward(a, tan, tau0 / 3.0);
    Vec3 x = 3.0 * rotate_toward(a, tan, cc.tau / 3.0);
    double s_hint = norm(z - a) / norm(x - a);
    return segment_at_norm(a, x0, cc.rho, s_hint);
}

// ---- stage 2: warped cones over the fibers ----------------------------------

Vec3 PushInTransform::fiber_dir(int l, double t, double tau) const {
    double hw = m_->fiber_halfwidth(l, t);
    if (std::fabs(tau) < 1e-15) return m_->geometry().curve_point(l, t) / 3.0;
    auto [plus, minus] = m_->inbound_membrane(l, t);
    double s = std::fabs(tau) / hw;
    return tau > 0 ? plus.point(s) : minus.point(s);
}

Vec3 PushInTransform::fan_point(int l, double t, double tau_p, double sigma) const {
    Vec3 chat = m_->geometry().curve_point(l, t) / 3.0;
    Vec3 A = 2.0 * chat;  // the cone vertex alpha~_l(t)
    double side = tau_p >= 0 ? 1.0 : -1.0;
    Vec3 p = 3.0 * fiber_dir(l, t, tau_p);
    Vec3 e = normalized(p - A);
    double hw = m_->fiber_halfwidth(l, t);
    double h = std::max(1e-7, 1e-4 * hw);
    Vec3 Tf = (fiber_dir(l, t, tau_p + side * h) - fiber_dir(l, t, tau_p - side * h)) *
              (0.5 / h);
    Vec3 n = Tf - dot(Tf, e) * e;
    double nn = norm(n);
    if (nn < 1e-12)
        throw std::domain_error("fan_point: degenerate plane (fiber tangent along the section)");
    n = n / nn;
    Vec3 x = 3.0 * fiber_dir(l, t, side * sigma);
    double s = dot(A, n) / dot(x, n);
    return s * x;
}

double PushInTransform::fan_norm(int l, double t, double tau_p, double sigma) const {
    return norm(fan_point(l, t, tau_p, sigma));
}

std::optional<PushInTransform::FanCoord> PushInTransform::fan_coords(const Vec3& z) const {
    double rho = norm(z);
    if (rho <= 2.0 + 1e-12 || rho >= 3.0 - 1e-13) return std::nullopt;
    Vec3 zhat = z / rho;
    auto near = m_->geometry().nearest(zhat);
    if (!near) return std::nullopt;
    // coarse rejection: fibers are never wider than eps_fiber
    if (near->dist > 2.0 * m_->eps_fiber()) return std::nullopt;

    const SphericalDiagram& d = m_->diagram();
    int l = near->label;
    const Curve& c = d.curve(l);

    double that;
    double sigma;
    double fr = near->t - std::floor(near->t);
    bool end_regime = false;
    Vec3 center{};
    if (!c.closed) {
        int i = static_cast<int>(std::floor(near->t)) + 1;
        const Arc& a = c.arcs[i - 1];
        Vec3 sd = d.point(a.start).dir, ed = d.point(a.end).dir;
        double as = 3.0 * angle_between(zhat, sd), ae = 3.0 * angle_between(zhat, ed);
        if (as < R_ && fr < 0.5) {
            end_regime = true;
            center = sd;
            that = (i - 1) + d.t0 * as / R_;
        } else if (ae < R_ && fr > 0.5) {
            end_regime = true;
            center = ed;
            that = i - d.t0 * ae / R_;
        } else {
            that = near->t;
        }
    } else {
        that = near->t;
    }
    double fr2 = that - std::floor(that);
    if (!c.closed && (fr2 < 1e-9 || fr2 > 1.0 - 1e-9)) return std::nullopt;

    Vec3 chat = m_->geometry().curve_point(l, that) / 3.0;
    Vec3 T = normalized(m_->geometry().curve_velocity(l, that));
    Vec3 n = normalized(cross(chat, T));
    if (end_regime) {
        double alpha = angle_between(center, chat);
        double circ_r = 3.0 * std::sin(alpha);
        double sgn = dot(cross(center, chat), n) >= 0 ? 1.0 : -1.0;
        Vec3 cp = normalized(chat - dot(chat, center) * center);
        Vec3 zp = normalized(zhat - dot(zhat, center) * center);
        double phi = std::atan2(dot(center, cross(cp, zp)), dot(cp, zp));
        sigma = sgn * circ_r * phi;
    } else {
        sigma = 3.0 * angle_between(zhat, chat) * (dot(zhat, n) >= 0 ? 1.0 : -1.0);
    }

    double Rl = m_->fiber_halfwidth(l, that);
    if (Rl < 1e-10) return std::nullopt;
    double amag = std::fabs(sigma);
    if (amag >= Rl * (1.0 - 1e-12)) return std::nullopt;
    double side = sigma >= 0 ? 1.0 : -1.0;

    // carrying curve: tau_p in [|sigma|, Rl] with |c_p(sigma)| = rho;
    // the norm decreases from 3 at tau_p=|sigma|
    double lo = std::max(amag, 1e-14 * Rl), hi = Rl;
    double f_hi = fan_norm(l, that, side * hi, amag) - rho;
    if (f_hi > 0.0) return std::nullopt;  // below the fan surface
    for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo + hi);
        double f = fan_norm(l, that, side * mid, amag) - rho;
        (f > 0.0 ? lo : hi) = mid;
    }
    FanCoord fc;
    fc.l = l;
    fc.t = that;
    fc.sigma = sigma;
    fc.tau_p = side * 0.5 * (lo + hi);
    fc.Rl = Rl;
    fc.rho = rho;
    return fc;
}

namespace {

/// sigma in [0, |tau_p|] with the fan-point norm equal to rho (monotone
/// increasing from 2 at sigma=0 to 3 at sigma=|tau_p|).
double solve_sigma(const PushInTransform& tf, int l, double t, double tau_p, double rho) {
    double lo = 0.0, hi = std::fabs(tau_p);
    for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo + hi);
        double f = tf.fan_norm(l, t, tau_p, mid) - rho;
        (f < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

Vec3 PushInTransform::apply_Hstar(const Vec3& z, double t) const {
    auto fc = fan_coords(z);
    if (!fc) return z;
    double side = fc->tau_p >= 0 ? 1.0 : -1.0;
    double taup = g_.hR(std::fabs(fc->tau_p), t, fc->Rl);
    double sig = solve_sigma(*this, fc->l, fc->t, side * taup, fc->rho);
    return fan_point(fc->l, fc->t, side * taup, sig);
}

std::optional<Vec3> PushInTransform::invert_Hstar1(const Vec3& z) const {
    auto fc = fan_coords(z);
    if (!fc) return z;
    double side = fc->tau_p >= 0 ? 1.0 : -1.0;
    double y = std::fabs(fc->tau_p) / fc->Rl;
    if (y <= 0.25 + 1e-13) return std::nullopt;  // vacated by the stage-2 warp
    double tau0 = fc->Rl * g_.eval_inv(y);
    double sig = solve_sigma(*this, fc->l, fc->t, side * tau0, fc->rho);
    return fan_point(fc->l, fc->t, side * tau0, sig);
}

// ---- composition ------------------------------------------------------------

Vec3 PushInTransform::apply_H2(const Vec3& z) const {
    return apply_Hstar(apply_H(z, 1.0), 1.0);
}

Vec3 PushInTransform::apply_Ht(const Vec3& z, double t) const {
    if (t < 0.0 || t > 2.0) throw std::domain_error("apply_Ht: t out of [0,2]");
    if (t <= 1.0) return apply_H(z, t);
    return apply_Hstar(apply_H(z, 1.0), t - 1.0);
}

std::optional<Vec3> PushInTransform::invert_H2(const Vec3& z) const {
    auto w1 = invert_Hstar1(z);
    if (!w1) return std::nullopt;
    return invert_H1(*w1);
}

bool PushInTransform::in_Bstar(const Vec3& z) const {
    if (norm(z) >= 3.0) return false;
    auto w = invert_H2(z);
    return w && m_->in_Bo(*w);
}

bool PushInTransform::in_H1Bo(const Vec3& z) const {
    if (norm(z) >= 3.0) return false;
    auto w = invert_H1(z);
    return w && m_->in_Bo(*w);
}

// ---- boundary ----------------------------------------------------------------

bool PushInTransform::star_shaped_along(const Vec3& unit_dir, int samples) const {
    bool out_seen = false;
    for (int j = 1; j <= samples; ++j) {
        double rho = 3.0 * j / (samples + 0.5);
        if (!in_Bstar(rho * unit_dir))
            out_seen = true;
        else if (out_seen)
            return false;
    }
    return true;
}

PushInTransform::BoundaryHit PushInTransform::boundary_radius(const Vec3& unit_dir) const {
    BoundaryHit hit;
    RayClass rc = m_->classify_ray(unit_dir, 1e-9);
    if (rc.type == RayType::I) {
        hit.rho = 1.0;
        hit.piece = Piece::Vertex;
        hit.k = rc.k;
        hit.sign = rc.sign;
        return hit;
    }

    // the pushed-in ball stays star-shaped, so membership flips exactly once
    // along the ray (star_shaped_along spot-checks this) and a plain
    // bisection brackets the wall
    if (in_Bstar((3.0 - 1e-9) * unit_dir)) {
        hit.rho = 3.0;
        hit.piece = Piece::SSstar;
        return hit;
    }
    double lo = 0.0, hi = 3.0;
    while (hi - lo > 1e-10) {
        double mid = 0.5 * (lo + hi);
        (in_Bstar(mid * unit_dir) ? lo : hi) = mid;
    }
    hit.rho = 0.5 * (lo + hi);

    // classify the failing stage just beyond the boundary
    Vec3 probe = (hit.rho + 1e-7) * unit_dir;
    if (hit.rho >= 3.0 - 1e-6) {
        hit.rho = 3.0;  // S cap S* lies exactly on the outer sphere
        hit.piece = Piece::SSstar;
        return hit;
    }
    auto fc = fan_coords(probe);
    auto sigma2 = [&]() {
        double sigma = 0.0;
        if (fc) {
            hit.l = fc->l;
            hit.t = fc->t;
            sigma = fc->sigma;
        } else if (auto nr = m_->geometry().nearest(unit_dir)) {
            hit.l = nr->label;
            hit.t = nr->t;
            Vec3 chat = m_->geometry().curve_point(nr->label, nr->t) / 3.0;
            Vec3 T = normalized(m_->geometry().curve_velocity(nr->label, nr->t));
            sigma = dot(unit_dir, cross(chat, T)) >= 0 ? nr->dist : -nr->dist;
        }
        if (std::fabs(sigma) < 1e-6) {
            hit.piece = Piece::Sigma2Alpha;
            hit.rho = 2.0;  // the alpha~ vertex set lies exactly at norm 2
        } else {
            hit.piece = sigma > 0 ? Piece::Sigma2Cp1 : Piece::Sigma2Cp2;
        }
        return hit;
    };
    auto sigma1 = [&](const Vec3& w1v) {
        ConeCoord cc = cone_coords(w1v);
        hit.piece = Piece::Sigma1;
        hit.k = cc.k;
        hit.sign = cc.sign;
        return hit;
    };
    // a probe right on the fan rim can slip past the stage-2 inversion and be
    // swallowed by the stage-1 cone test near the arc ends; catch it by rim
    // proximity first
    if (fc && std::fabs(fc->tau_p) / fc->Rl < 0.25 + 1e-3) return sigma2();
    auto w1 = invert_Hstar1(probe);
    if (!w1) return sigma2();
    auto w0 = invert_H1(*w1);
    if (!w0) return sigma1(*w1);
    if (!m_->in_Bo(*w0)) {
        // just past the wall the inversion still formally succeeds but the
        // pullback hugs the singular ray it was coned from (within a few 1e-6
        // of it); the nearest singular set names the wall, marked points
        // taking precedence since the curves run through them
        RayClass wrc = m_->classify_ray(normalized(*w0), 1e-4);
        if (wrc.type == RayType::I) return sigma1(*w1);
        if (wrc.type == RayType::II) return sigma2();
    }
    hit.piece = Piece::SSstar;
    return hit;
}

PushInTransform::QRSections PushInTransform::q_and_r_sections(int l, int i) const {
    const SphericalDiagram& d = m_->diagram();
    const Curve& c = d.curve(l);
    if (c.closed || i < 1 || i > c.sl())
        throw std::domain_error("q_and_r_sections: bad arc index");
    QRSections qr;
    // the end segments are radial geodesics from the marked points, so the
    // circle of radius R/4 is crossed exactly at a quarter of t0
    qr.u_star = d.t0 / 4.0;
    qr.u_starstar = 1.0 - d.t0 / 4.0;
    qr.q_star = m_->geometry().arc_point(l, i, qr.u_star);
    qr.q_starstar = m_->geometry().arc_point(l, i, qr.u_starstar);
    qr.vertex_star = d.point(c.arcs[i - 1].start).dir;
    qr.vertex_starstar = d.point(c.arcs[i - 1].end).dir;
    return qr;
}

Vec3 PushInTransform::normalize_to_unit_ball(const Vec3& z) const {
    double r = norm(z);
    if (r < 1e-15) return {0, 0, 0};
    BoundaryHit hit = boundary_radius(z / r);
    return z * (1.0 / hit.rho);
}

std::vector<std::vector<Vec3>> PushInTransform::edge_chains(int l, int i, bool at_start) const {
    const SphericalDiagram& d = m_->diagram();
    const Curve& c = d.curve(l);
    const Arc& a = c.arcs[i - 1];
    PointRef endref = at_start ? a.start : a.end;
    Vec3 center = d.point(endref).dir;
    const ArcGeometry& g = m_->geometry().arc_geometry(l, i);
    Vec3 tan = at_start ? g.tan_start : g.tan_end;
    auto [e1, e2] = tangent_frame(center);
    double theta0 = std::atan2(dot(tan, e2), dot(tan, e1));

    // direction grid around the end segment at resolution ~R/64
    const double h = R_ / 64.0;
    const int n_tau = 24, n_psi = 48;
    std::vector<std::vector<Piece>> tag(n_tau, std::vector<Piece>(n_psi));
    std::vector<std::vector<Vec3>> bpt(n_tau, std::vector<Vec3>(n_psi));
    for (int it = 0; it < n_tau; ++it)
        for (int ip = 0; ip < n_psi; ++ip) {
            double tau = R_ / 8.0 + it * h;
            double psi = theta0 + (ip - n_psi / 2) * (h / std::max(tau, 1e-9));
            Vec3 dir = std::cos(psi) * e1 + std::sin(psi) * e2;
            Vec3 u = rotate_toward(center, dir, tau / 3.0);
            BoundaryHit bh = boundary_radius(u);
            tag[it][ip] = bh.piece;
            bpt[it][ip] = bh.rho * u;
        }
    auto is_s1 = [](Piece p) { return p == Piece::Sigma1; };
    auto is_s2 = [](Piece p) {
        return p == Piece::Sigma2Cp1 || p == Piece::Sigma2Cp2 || p == Piece::Sigma2Alpha;
    };
    std::map<std::pair<int, int>, Vec3> edge_cells;
    for (int it = 0; it < n_tau; ++it)
        for (int ip = 0; ip < n_psi; ++ip) {
            for (auto [dt, dp] : {std::pair{1, 0}, {0, 1}}) {
                int jt = it + dt, jp = ip + dp;
                if (jt >= n_tau || jp >= n_psi) continue;
                if ((is_s1(tag[it][ip]) && is_s2(tag[jt][jp])) ||
                    (is_s2(tag[it][ip]) && is_s1(tag[jt][jp])))
                    edge_cells[{it, ip}] = 0.5 * (bpt[it][ip] + bpt[jt][jp]);
            }
        }
    // group into chains by grid adjacency
    std::vector<std::vector<Vec3>> chains;
    std::set<std::pair<int, int>> seen;
    for (const auto& [cell, pt] : edge_cells) {
        if (seen.count(cell)) continue;
        std::vector<std::pair<int, int>> stack{cell};
        std::vector<Vec3> chain;
        seen.insert(cell);
        while (!stack.empty()) {
            auto cur = stack.back();
            stack.pop_back();
            chain.push_back(edge_cells.at(cur));
            for (int dt = -1; dt <= 1; ++dt)
                for (int dp = -1; dp <= 1; ++dp) {
                    std::pair<int, int> nb{cur.first + dt, cur.second + dp};
                    if (edge_cells.count(nb) && !seen.count(nb)) {
                        seen.insert(nb);
                        stack.push_back(nb);
                    }
                }
        }
        chains.push_back(std::move(chain));
    }
    return chains;
}

// ---- exports ------------------------------------------------------------------

std::string PushInTransform::export_surface_obj(int subdivisions) const {
    IcoMesh mesh = icosphere_mesh(subdivisions);
    std::ostringstream os;
    os << "# pushed-in boundary sphere S*\n";
    os.precision(12);
    for (const auto& v : mesh.verts) {
        Vec3 p = boundary_radius(v).rho * v;
        os << "v " << p.x << " " << p.y << " " << p.z << "\n";
    }
    for (const auto& f : mesh.faces)
        os << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
    return os.str();
}

std::string PushInTransform::export_surface_tags_json(int subdivisions) const {
    IcoMesh mesh = icosphere_mesh(subdivisions);
    nlohmann::json j;
    j["tags"] = nlohmann::json::array();
    for (const auto& v : mesh.verts) j["tags"].push_back(to_string(boundary_radius(v).piece));
    return j.dump(2);
}

std::string PushInTransform::export_polylines_json(int samples_per_line) const {
    nlohmann::json j;
    const SphericalDiagram& d = m_->diagram();
    auto line = [&](auto&& f, int n) {
        nlohmann::json arr = nlohmann::json::array();
        for (int s = 0; s < n; ++s) {
            Vec3 p = f(double(s) / (n - 1));
            arr.push_back({p.x, p.y, p.z});
        }
        return arr;
    };
    j["circles"] = nlohmann::json::object();
    for (const auto& p : d.points) {
        auto [e1, e2] = tangent_frame(p.dir);
        std::string key = "C_" + std::to_string(p.k) + (p.sign > 0 ? "+" : "-");
        j["circles"][key] = line(
            [&](double s) {
                Vec3 tan = std::cos(2 * kPi * s) * e1 + std::sin(2 * kPi * s) * e2;
                return 3.0 * rotate_toward(p.dir, tan, (R_ / 4.0) / 3.0);
            },
            samples_per_line);
    }
    j["alpha_tilde"] = nlohmann::json::object();
    for (const auto& c : d.curves) {
        double span = c.closed ? 1.0 : double(c.sl());
        j["alpha_tilde"][std::to_string(c.label)] = line(
            [&](double s) {
                double t = std::clamp(s * span, 1e-6, span - 1e-6);
                double fr = t - std::floor(t);
                if (!c.closed && (fr < 1e-6 || fr > 1 - 1e-6))
                    t = (t + 2e-6 < span) ? t + 2e-6 : t - 2e-6;
                return (2.0 / 3.0) * m_->geometry().curve_point(c.label, t);
            },
            samples_per_line);
    }
    j["edges"] = nlohmann::json::array();
    for (const auto& c : d.curves) {
        if (c.closed) continue;
        for (int i = 1; i <= c.sl(); ++i)
            for (bool at_start : {true, false}) {
                for (const auto& chain : edge_chains(c.label, i, at_start)) {
                    nlohmann::json arr = nlohmann::json::array();
                    for (const auto& p : chain) arr.push_back({p.x, p.y, p.z});
                    j["edges"].push_back({{"l", c.label},
                                          {"i", i},
                                          {"end", at_start ? "start" : "end"},
                                          {"points", arr}});
                }
            }
    }
    return j.dump(2);
}

}  // namespace mst
