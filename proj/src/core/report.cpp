#include "report.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "charmap.hpp"

namespace mst {

namespace {

using R64 = std::mt19937_64;

double urand(R64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec3 rand_unit(R64& rng) {
    std::normal_distribution<double> g;
    for (;;) {
        Vec3 v{g(rng), g(rng), g(rng)};
        double n = norm(v);
        if (n > 1e-6) return v / n;
    }
}

StrataCheck mk_check(std::string name, std::string subject, int samples,
                     double worst, double tol, bool passed, std::string witness = {}) {
    StrataCheck c;
    c.name = std::move(name);
    c.subject = std::move(subject);
    c.samples = samples;
    c.worst_residual = worst;
    c.tolerance = tol;
    c.passed = passed;
    c.witness = std::move(witness);
    return c;
}

// -- diagram suite ----------------------------------------------------------

std::vector<StrataCheck> suite_diagram(const SphericalDiagram& d) {
    std::vector<StrataCheck> out;
    ValidationReport vr = validate_diagram(d);
    for (const auto& c : vr.checks)
        out.push_back(mk_check(c.name, "diagram", 0, c.passed ? 0.0 : 1.0, 0.0,
                               c.passed, c.witness));
    if (d.closed_manifold && !d.component_labels.empty()) {
        CwSummary cw = cw_summary(d);
        bool ok = cw.consistent && cw.euler == 0;
        out.push_back(mk_check("cw-euler", "diagram", 0, std::fabs((double)cw.euler),
                               0.0, ok,
                               ok ? "" : "chi = " + std::to_string(cw.euler)));
    }
    return out;
}

// -- flow suite -------------------------------------------------------------

FlowMapSpec random_flow_spec(R64& rng) {
    FlowMapSpec spec;
    // J = (90-degree rotation) * (near-identity M): the aligned linear part
    // is that rotation, and the blend segment from it to J stays nonsingular
    // because M has no spectrum on the negative real axis.
    Mat2 A{0.0, -1.0, 1.0, 0.0};
    Mat2 M{1.0 + urand(rng, -0.15, 0.15), urand(rng, -0.15, 0.15),
           urand(rng, -0.15, 0.15), 1.0 + urand(rng, -0.15, 0.15)};
    spec.J = A * M;
    // Nonlinear tail vanishing to second order at the origin, so J stays the
    // derivative of zeta there.
    double a = urand(rng, -0.02, 0.02), b = urand(rng, -0.02, 0.02);
    Mat2 J = spec.J;
    spec.zeta = [J, a, b](Vec2 v) {
        Vec2 w = J * v;
        return Vec2{w.x + a * v.x * v.x, w.y + b * v.x * v.y};
    };
    return spec;
}

double ortho_residual(const Mat2& m) {
    // max |m^T m - I|
    double g11 = m.a * m.a + m.c * m.c;
    double g12 = m.a * m.b + m.c * m.d;
    double g22 = m.b * m.b + m.d * m.d;
    return std::max({std::fabs(g11 - 1.0), std::fabs(g12), std::fabs(g22 - 1.0)});
}

std::vector<StrataCheck> suite_flow(int samples, std::uint64_t seed) {
    R64 rng(mix64(seed));
    int n_specs = std::max(8, samples / 25);
    double worst_iso = 0.0, worst_core = 0.0, worst_supp = 0.0;
    bool injective = true;
    std::string wit_inj;
    for (int s = 0; s < n_specs; ++s) {
        FlowMapSpec spec = random_flow_spec(rng);
        AlignedFlowMap am = align_flow_map(spec, 0.5);
        worst_iso = std::max(worst_iso, ortho_residual(am.sigmaJ));
        if (!am.injective && injective) {
            injective = false;
            wit_inj = "spec " + std::to_string(s) + ": " + am.witness;
        }
        for (int i = 0; i < 24; ++i) {
            double ang = urand(rng, 0.0, 2 * kPi);
            Vec2 u{std::cos(ang), std::sin(ang)};
            Vec2 inner = u * urand(rng, 0.0, 0.95 * am.Qstar_radius);
            Vec2 outer = u * urand(rng, am.support_radius, spec.Q_radius);
            worst_core = std::max(worst_core, norm(am.zeta_prime(inner) - am.sigmaJ * inner));
            worst_supp = std::max(worst_supp, norm(am.zeta_prime(outer) - spec.apply(outer)));
        }
    }
    return {
        mk_check("flow-align-isometry", "flow", n_specs, worst_iso, 1e-9,
                 worst_iso <= 1e-9),
        mk_check("flow-align-core", "flow", n_specs, worst_core, 1e-12,
                 worst_core <= 1e-12),
        mk_check("flow-align-support", "flow", n_specs, worst_supp, 1e-12,
                 worst_supp <= 1e-12),
        mk_check("flow-align-injective", "flow", n_specs, injective ? 0.0 : 1.0, 0.0,
                 injective, wit_inj),
    };
}

// -- push-in suite ----------------------------------------------------------

std::vector<StrataCheck> suite_pushin(const PushInTransform& tf, int samples,
                                      std::uint64_t seed) {
    std::vector<StrataCheck> out;
    const WarpProfile& g = tf.profile();

    double worst_inv = 0.0;
    bool shape_ok = true;
    std::string wit;
    for (int i = 1; i < 400; ++i) {
        double tau = i / 400.0;
        double y = g.eval(tau);
        bool ok = y > 0.25 && y < 1.0 && y >= tau && g.deriv(tau) > 0.0;
        if (tau < 0.125) ok = ok && std::fabs(y - (tau + 0.25)) <= 1e-12;
        if (tau > 0.875) ok = ok && std::fabs(y - tau) <= 1e-12;
        if (tau > 0.125 && tau < 0.875) ok = ok && y > tau;
        if (!ok && shape_ok) {
            shape_ok = false;
            wit = "tau = " + std::to_string(tau);
        }
        worst_inv = std::max(worst_inv, std::fabs(g.eval_inv(y) - tau));
    }
    out.push_back(mk_check("warp-profile", "pushin", 399, worst_inv, 1e-9,
                           shape_ok && worst_inv <= 1e-9, wit));

    R64 rng(mix64(seed ^ 0x5150));
    double worst_id = 0.0, worst_rt = 0.0;
    int rt_checked = 0;
    for (int i = 0; i < samples; ++i) {
        Vec3 z = rand_unit(rng) * urand(rng, 1e-3, 2.999);
        worst_id = std::max(worst_id, norm(tf.apply_Ht(z, 0.0) - z));
        Vec3 w = tf.apply_H2(z);
        if (auto back = tf.invert_H2(w)) {
            worst_rt = std::max(worst_rt, norm(*back - z));
            ++rt_checked;
        }
    }
    out.push_back(mk_check("homotopy-start", "pushin", samples, worst_id, 1e-12,
                           worst_id <= 1e-12));
    out.push_back(mk_check("pushin-roundtrip", "pushin", rt_checked, worst_rt, 1e-6,
                           rt_checked > 0 && worst_rt <= 1e-6));

    int bad = 0;
    std::string wit_star;
    for (int i = 0; i < samples; ++i) {
        Vec3 u = rand_unit(rng);
        if (!tf.star_shaped_along(u)) {
            if (bad == 0)
                wit_star = "dir (" + std::to_string(u.x) + ", " + std::to_string(u.y) +
                           ", " + std::to_string(u.z) + ")";
            ++bad;
        }
    }
    out.push_back(mk_check("star-shaped", "pushin", samples, (double)bad, 0.0,
                           bad == 0, wit_star));
    return out;
}

// -- characteristic-map suite -----------------------------------------------

std::vector<StrataCheck> suite_continuity(const PushInTransform& tf, int samples,
                                          double tol, std::uint64_t seed) {
    std::vector<StrataCheck> out;
    CharacteristicMap cm(tf);

    double lev = cm.level_identity_residual(samples, seed);
    out.push_back(mk_check("level-identity", "charmap", samples, lev, 1e-12,
                           lev <= 1e-12));

    int n_seq = std::max(10, samples / 10);
    for (const CaseReport& cr : cm.continuity_suite(n_seq, tol, seed)) {
        std::string name = "continuity-case-" + std::to_string(cr.case_id);
        if (!cr.instantiable) {
            out.push_back(
                mk_check(name, "charmap", 0, 0.0, tol, true, "skipped: " + cr.notice));
            continue;
        }
        std::string wit = cr.passed || cr.witnesses.empty() ? "" : cr.witnesses.front();
        out.push_back(mk_check(name, "charmap", cr.n_sequences, cr.worst_residual, tol,
                               cr.passed, wit));
    }

    CellCheckReport cc = cm.characteristic_cell_check(samples, seed);
    out.push_back(mk_check("cell-check", "charmap", cc.n_interior + cc.n_cone_samples,
                           (double)(cc.n_collisions + cc.n_cone_bad), 0.0, cc.passed,
                           cc.witness));
    return out;
}

// -- strata suite -----------------------------------------------------------

std::vector<StrataCheck> suite_strata(const BallModel& m, int samples,
                                      std::uint64_t seed) {
    std::vector<StrataCheck> out = verify_stratification(m, samples, seed);
    std::vector<StrataCheck> sph = sphere_conic_check(m, samples, seed + 7);
    out.insert(out.end(), sph.begin(), sph.end());
    return out;
}

}  // namespace

bool Report::all_passed() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const StrataCheck& c) { return c.passed; });
}

std::string instance_hash_of(const SphericalDiagram& d) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : diagram_to_json(d)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    return buf;
}

Report run_suite(const SphericalDiagram& d, const std::string& suite, int samples,
                 double tol, std::uint64_t seed) {
    Report r;
    r.instance_hash = instance_hash_of(d);
    r.suite = suite;

    auto run = [&](const std::string& name) {
        if (name == "diagram") return suite_diagram(d);
        if (name == "flow") return suite_flow(samples, seed);
        BallModel m(d);
        if (name == "strata") return suite_strata(m, samples, seed);
        PushInTransform tf(m);
        if (name == "pushin") return suite_pushin(tf, samples, seed);
        if (name == "continuity") return suite_continuity(tf, samples, tol, seed);
        throw std::invalid_argument("unknown suite: " + name);
    };

    if (suite == "all") {
        for (const char* name : {"diagram", "flow", "pushin", "continuity", "strata"}) {
            auto cs = run(name);
            r.checks.insert(r.checks.end(), cs.begin(), cs.end());
        }
    } else {
        r.checks = run(suite);
    }
    return r;
}

std::string report_to_json(const Report& r) {
    nlohmann::ordered_json j;
    j["version"] = r.version;
    j["instance_hash"] = r.instance_hash;
    j["suite"] = r.suite;
    j["passed"] = r.all_passed();
    j["checks"] = nlohmann::ordered_json::array();
    for (const StrataCheck& c : r.checks) {
        nlohmann::ordered_json jc;
        jc["name"] = c.name;
        jc["subject"] = c.subject;
        jc["samples"] = c.samples;
        jc["worst_residual"] = c.worst_residual;
        jc["tolerance"] = c.tolerance;
        jc["passed"] = c.passed;
        if (!c.witness.empty()) jc["witness"] = c.witness;
        j["checks"].push_back(std::move(jc));
    }
    return j.dump(2) + "\n";
}

}  // namespace mst
