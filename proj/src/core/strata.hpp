#pragma once

#include <functional>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "flowmodel.hpp"

namespace mst {

// ---------------------------------------------------------------------------
// Prestratification of M by critical points and trajectory spaces, and the
// tubular-neighborhood data used to verify the conic-stratification axioms.
// ---------------------------------------------------------------------------

struct Stratum {
    std::string label;
    int dim = 0;
    TrajKind kind = TrajKind::O;
    int k = 0, sign = 0;  // mu / lambda / W_k^down
    int l = 0, i = 0;     // W_ol / lambda / nu
    int j = 0;            // b_j / W_o^down_j
};

struct Prestratification {
    std::vector<Stratum> strata;
    // (lo, hi): strata[lo] lies in the frontier of strata[hi]
    std::set<std::pair<int, int>> order;

    int index_of(const std::string& label) const;
    bool precedes(int lo, int hi) const { return order.count({lo, hi}) > 0; }
    bool comparable(int a, int b) const {
        return a == b || precedes(a, b) || precedes(b, a);
    }
};

/// Stratum index of a manifold point; -1 when the point matches no stratum
/// (only possible for malformed input).
int stratum_of(const Prestratification& ps, const ManifoldPoint& p);

Prestratification build_stratification(const BallModel& m);

/// The sphere-level prestratification: marked point pairs X_k, curves
/// alpha_l, and the complementary open regions S_j.
Prestratification build_sphere_stratification(const BallModel& m);

// ---------------------------------------------------------------------------
// Tubular neighborhood (E, rho, N, O, eps, xi) of one stratum, realized on
// manifold points in model coordinates. The thickness function follows the
// normal form eps(x) = a * min(d(x, Bd N), delta_th).
// ---------------------------------------------------------------------------

struct TubularNeighborhood {
    Stratum base;
    int rank = 0;
    const BallModel* model = nullptr;

    struct Params {
        double delta = 0.25;     // tube size; also the Morse-section length
        double a = 0.5;          // thickness slope
        double delta_th = 0.0625;  // = delta / 4
    };
    std::shared_ptr<Params> prm = std::make_shared<Params>();

    std::function<bool(const ManifoldPoint&)> contains;
    std::function<ManifoldPoint(const ManifoldPoint&)> retract;  // r = rho o xi^-1
    std::function<double(const ManifoldPoint&)> dist;            // d_N
    // d(x, Bd N) in the chart metric, for x on the stratum
    std::function<double(const ManifoldPoint&)> frontier_dist;

    struct FiberCoords {
        ManifoldPoint base;
        Vec3 v{};  // first `rank` components meaningful
    };
    std::function<FiberCoords(const ManifoldPoint&)> xi_inv;
    std::function<ManifoldPoint(const ManifoldPoint&, const Vec3&)> xi;

    /// Conic filtration stage of a fiber vector: 0 for the zero vector,
    /// otherwise the dimension of the stratum the xi-ray enters.
    /// v in E^i  <=>  stage(v) <= i.
    std::function<int(const ManifoldPoint&, const Vec3&)> stage;

    std::function<ManifoldPoint(std::mt19937_64&)> sample;       // of the tube O
    std::function<ManifoldPoint(std::mt19937_64&)> sample_base;  // of the stratum N

    /// Finite-difference Jacobian determinant of the chart embedding at a
    /// random point near the zero section; positive iff xi is orientation
    /// preserving there.
    std::function<double(std::mt19937_64&)> orientation_det;

    double eps(const ManifoldPoint& x) const {
        return prm->a * std::min(frontier_dist(x), prm->delta_th);
    }
    void shrink(double f) {
        prm->delta *= f;
        prm->delta_th = prm->delta / 4.0;
    }
};

TubularNeighborhood build_tube_critical(const BallModel& m, const Stratum& s,
                                        double delta = 0.25);
TubularNeighborhood build_tube_trajectory(const BallModel& m, const Stratum& s,
                                          double delta = 0.25);
TubularNeighborhood build_tube_2stratum(const BallModel& m, const Stratum& s,
                                        double delta = 0.25);
TubularNeighborhood build_tube_top(const BallModel& m, const Stratum& s);

/// One tube per stratum, in the prestratification's order.
std::vector<TubularNeighborhood> build_all_tubes(const BallModel& m,
                                                 const Prestratification& ps,
                                                 double delta = 0.25);

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

struct StrataCheck {
    std::string name;
    std::string subject;  // stratum label or "a < b" pair
    int samples = 0;
    double worst_residual = 0.0;
    double tolerance = 0.0;
    bool passed = true;
    std::string witness;
};

StrataCheck check_thickness(const TubularNeighborhood& tube, int n_samples,
                            std::uint64_t seed);
StrataCheck check_chart(const TubularNeighborhood& tube, int n_samples,
                        std::uint64_t seed);
StrataCheck check_retraction_idempotence(const TubularNeighborhood& tube, int n_samples,
                                         std::uint64_t seed);
StrataCheck check_conic_bundle(const TubularNeighborhood& tube, int n_samples,
                               std::uint64_t seed);
StrataCheck check_retraction_compat(const Prestratification& ps,
                                    const std::vector<TubularNeighborhood>& tubes,
                                    int alpha, int beta, int n_samples,
                                    std::uint64_t seed);
StrataCheck check_frontier(const BallModel& m, const Prestratification& ps, int stratum,
                           int n_samples, std::uint64_t seed);

/// Full manifold-level suite: builds the tubes, shrinks them until the
/// overlap conditions hold, then runs every check on every stratum and
/// comparable pair. Reports are ordered by stratum label.
std::vector<StrataCheck> verify_stratification(const BallModel& m, int n_samples,
                                               std::uint64_t seed);

/// Geodesic tubes about the 0- and 1-dimensional sphere strata: runs the
/// retraction-compatibility and thickness checks on the sphere level,
/// together with the fiber-shape checks (connected circular fibers with
/// equal halves, pairwise disjoint curve tubes).
std::vector<StrataCheck> sphere_conic_check(const BallModel& m, int n_samples,
                                            std::uint64_t seed);

}  // namespace mst
