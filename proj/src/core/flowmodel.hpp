#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "components.hpp"
#include "diagram.hpp"

namespace mst {

// ---------------------------------------------------------------------------
// Ball model of the flow on the open radius-3 ball B. Every ray from the
// origin carries one open section mapped to a trajectory; the section length
// is 1 (rays through marked points), 2 (rays through the curves), or 3
// (all other rays). phi_o(v) = lambda_{p_v} cap f^{-1}(3-|v|).
// ---------------------------------------------------------------------------

enum class RayType { I, II, III };

struct RayClass {
    RayType type = RayType::III;
    double section_length = 3.0;  // 1, 2 or 3
    // type I
    int k = 0, sign = 0;
    // type II
    int l = 0;
    double t = 0.0;  // curve parameter of the hit point
    // type III
    int b_label = 0;  // index-0 label (0 = manifold boundary)
};

enum class TrajKind {
    O,      // top critical point, f = 3
    CritX,  // x_k, f = 2
    CritY,  // y_l, f = 1
    CritB,  // b_j, f = 0
    Mu,     // mu_k^{sign}: o -> x_k, levels (2,3)
    Wol,    // o -> y_l through alpha_l(t), levels (1,3)
    Wob,    // o -> b_j, levels (0,3)
    Lambda, // lambda_l^i: x_k -> y_l, levels (1,2)
    Nu,     // nu_l^{sign}: y_l -> b_j, levels (0,1)
    WkB,    // membrane base x_k -> b_j at azimuth theta, levels (0,2)
};

struct TrajectoryId {
    TrajKind kind = TrajKind::O;
    int k = 0, sign = 0;  // Mu, Lambda (end pair), WkB
    int l = 0, i = 0;     // curve / arc indices
    int j = 0;            // index-0 label
    double t = 0.0;       // curve parameter (Wol, Nu)
    double theta = 0.0;   // membrane azimuth (WkB)
    Vec3 dir{};           // representing unit direction
};

bool same_trajectory(const TrajectoryId& a, const TrajectoryId& b, double tol = 1e-7);
std::string to_string(const TrajectoryId& id);

struct ManifoldPoint {
    TrajectoryId traj;
    double level = 3.0;  // f-value in [0,3]
    Vec3 model{};        // (3-level) * representing direction
    int side = 0;        // optional membrane side for Nu
};

// An outbound membrane: geodesic of spherical length R from a marked point.
struct Membrane {
    int k = 0, sign = 0;
    double theta = 0.0;
    Vec3 base_dir;  // unit marked direction
    Vec3 tangent;   // unit departure direction
    double length = 0.0;  // = R

    /// Unit direction at arclength tau in (0, R].
    Vec3 point(double tau) const;
};

// One component of an inbound fiber O_l(t) minus alpha_l(t).
struct FiberArc {
    int side = +1;        // +1 / -1 w.r.t. n = normalize(cross(dir, tangent))
    double length = 0.0;  // spherical length R_l(t)
    std::function<Vec3(double)> point;  // s in (0,1] -> unit direction
};

struct Cascade {
    struct Member {
        TrajectoryId traj;
        double level_lo = 0.0, level_hi = 3.0;  // open level range
        Vec3 limit_dir{};  // unit: model limit at level c is (3-c)*limit_dir
        int side = 0;      // for Nu members
    };
    std::vector<Member> members;  // ordered top level first; length 1..3
};

class BallModel {
  public:
    explicit BallModel(const SphericalDiagram& d, int component_subdivisions = 5);

    const SphericalDiagram& diagram() const { return d_; }
    const CurveGeometry& geometry() const { return *geom_; }
    const ComponentMap& components() const { return *comps_; }

    RayClass classify_ray(const Vec3& unit_dir, double tol = 1e-6) const;

    bool in_Bo(const Vec3& v) const;
    ManifoldPoint phi_o(const Vec3& v) const;  // throws outside B_o

    Membrane outbound_membrane(int k, int sign, double theta) const;

    /// Azimuths (in the marked point's tangent frame) of arc end segments
    /// at x_k^{sign}; these membranes have bases terminating at y_l.
    struct SpecialAzimuth {
        double theta;
        int l, i;
        bool at_start;  // arc i of curve l starts (vs ends) here
    };
    std::vector<SpecialAzimuth> special_azimuths(int k, int sign) const;

    /// The two components of O_l(t) minus alpha_l(t); equal lengths R_l(t).
    std::pair<FiberArc, FiberArc> inbound_membrane(int l, double t) const;
    double fiber_halfwidth(int l, double t) const;  // R_l(t)

    double eps_fiber() const { return eps_fiber_; }

    // -- cascades -----------------------------------------------------------
    struct Approach {
        enum Kind { Radial, MembraneAzimuth, CurveSide, TangentialAlongArc } kind = Radial;
        double theta = 0.0;  // MembraneAzimuth
        int side = 0;        // CurveSide / TangentialAlongArc; 0 = unspecified
        int i = 0;           // TangentialAlongArc: arc index
        bool at_start = true;  // which end of the arc
    };

    /// Limit cascade of trajectory sequences approaching the singular
    /// direction u per the descriptor. Throws on inconsistent descriptors
    /// (e.g. exactly tangential approach with no side).
    Cascade cascade_limit(const Vec3& u, const Approach& a) const;

    bool cascade_valid(const Cascade& c) const;

    /// Model point of a cascade at a level it covers.
    ManifoldPoint cascade_point(const Cascade& c, double level) const;

  private:
    SphericalDiagram d_;
    std::unique_ptr<CurveGeometry> geom_;
    std::unique_ptr<ComponentMap> comps_;
    double eps_fiber_ = 0.0;  // mid-part fiber half-width (spherical length)

    int label_near_curve(int l, double t, int side) const;
    int label_near_membrane(const Membrane& mb) const;
};

// A sequence element for Definition-10 convergence: the model point of the
// n-th trajectory at a given level, when the trajectory reaches that level.
using ModelTrajectory = std::function<std::optional<Vec3>(double level)>;

struct ConvergenceResult {
    bool converged = false;
    std::vector<double> levels;
    std::vector<double> residuals;  // max over the tail window, per level
    std::string witness;
};

ConvergenceResult converges_to_cascade(const BallModel& m,
                                       const std::vector<ModelTrajectory>& seq,
                                       const Cascade& c,
                                       const std::vector<double>& levels,
                                       double tol);

// ---------------------------------------------------------------------------
// Flow maps between transversal discs and their alignment. Everything is
// expressed in the orthonormal frames (E_down, N_down) of the source plane
// and (E_up, N_up) of the target plane, so points are 2-vectors.
// ---------------------------------------------------------------------------

struct FlowMapSpec {
    Mat2 J;                               // d(zeta) at the origin
    std::function<Vec2(Vec2)> zeta;      // defaults to v -> J v
    double Q_radius = 1.0;

    Vec2 apply(const Vec2& v) const { return zeta ? zeta(v) : J * v; }
};

/// Orientation-preserving sigma with sigma*J orthogonal,
/// sigma*J(E_down) = N_up and sigma*J(N_down) = +-E_up.
Mat2 build_sigma(const FlowMapSpec& spec);

struct AlignedFlowMap {
    std::function<Vec2(Vec2)> zeta_prime;
    double Qstar_radius = 0.0;   // zeta' = sigma*J exactly inside this radius
    double support_radius = 0.0; // zeta' = zeta outside this radius
    Mat2 sigmaJ;                 // the orthogonal linear part on Q*
    bool injective = false;
    std::string witness;  // set when the blend failed injectivity
};

AlignedFlowMap align_flow_map(const FlowMapSpec& spec, double support_radius);

}  // namespace mst
