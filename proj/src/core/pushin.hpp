#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flowmodel.hpp"

namespace mst {

// ---------------------------------------------------------------------------
// Warp profile g: (0,1) -> (1/4,1) with g(tau)=tau+1/4 below 1/8, g(tau)=tau
// above 7/8, g > tau in between, g' > 0; and the radial warp
// h_R(tau,t) = t R g(tau/R) + (1-t) tau.
// ---------------------------------------------------------------------------

struct WarpProfile {
    double eval(double tau) const;      // tau in (0,1); closure values at 0,1
    double eval_inv(double y) const;    // y in (1/4,1); bisection
    double deriv(double tau) const;     // analytic g'
    double hR(double tau, double t, double R) const;
    double hR_inv(double taup, double R) const;  // inverse of h_R(.,1); taup > R/4
};

// ---------------------------------------------------------------------------
// Two-stage push-in H_2 = H*_1 o H_1 of the star-shaped domain B_o.
// Stage 1 (H) cones the radial warp over the geodesic discs D_k^{+-} from the
// vertices x~_k^{+-} = (1/3) x_k^{+-}, moving points along constant-norm cone
// curves. Stage 2 (H*) does the same over the inbound fibers O_l(t), coning
// from alpha~_l(t) = (2/3) alpha_l(t) along the curves c_p.
// ---------------------------------------------------------------------------

enum class Piece {
    Interior,    // not a boundary point
    SSstar,      // S cap S*
    Vertex,      // x~_k^{+-}
    Sigma1,      // H*_1(cone over C_k^{+-})
    Sigma2Cp1,   // warped-cone wall, positive fiber side
    Sigma2Cp2,   // negative fiber side
    Sigma2Alpha, // alpha~_l itself
};

std::string to_string(Piece p);

class PushInTransform {
  public:
    explicit PushInTransform(const BallModel& m);

    const BallModel& model() const { return *m_; }
    const WarpProfile& profile() const { return g_; }
    double R() const { return R_; }

    /// Cone coordinates of z relative to the disc cone at x_k^{sign}.
    struct ConeCoord {
        bool inside = false;
        int k = 0, sign = 0;
        double theta = 0.0;  // azimuth of the geodesic section
        double tau = 0.0;    // warp coordinate (spherical length in [0,R))
        double rho = 0.0;    // |z|
    };
    ConeCoord cone_coords(const Vec3& z) const;

    /// Warped-cone (fan) coordinates of z near curve l.
    struct FanCoord {
        int l = 0;
        double t = 0.0;      // fiber parameter along the curve
        double sigma = 0.0;  // signed fiber offset of the radial direction
        double tau_p = 0.0;  // fiber parameter of the carrying curve c_p
        double Rl = 0.0;     // fiber half-width R_l(t)
        double rho = 0.0;
    };
    std::optional<FanCoord> fan_coords(const Vec3& z) const;

    /// Point of the curve c_p (fiber t of curve l, side from the sign of
    /// tau_p) at fiber offset sigma in [0, |tau_p|] on the same side.
    Vec3 fan_point(int l, double t, double tau_p, double sigma) const;
    double fan_norm(int l, double t, double tau_p, double sigma) const;

    Vec3 apply_H(const Vec3& z, double t) const;
    Vec3 apply_Hstar(const Vec3& z, double t) const;
    Vec3 apply_H2(const Vec3& z) const;
    Vec3 apply_Ht(const Vec3& z, double t) const;  // t in [0,2]

    /// Stage inverses at t=1; nullopt when z lies in the vacated region.
    std::optional<Vec3> invert_H1(const Vec3& z) const;
    std::optional<Vec3> invert_Hstar1(const Vec3& z) const;
    std::optional<Vec3> invert_H2(const Vec3& z) const;

    bool in_Bstar(const Vec3& z) const;
    bool in_H1Bo(const Vec3& z) const;  // membership after stage 1 only

    struct BoundaryHit {
        double rho = 3.0;
        Piece piece = Piece::SSstar;
        bool unique = true;   // exactly one sign change along the ray
        int k = 0, sign = 0;  // Vertex / Sigma1
        int l = 0;            // Sigma2
        double t = 0.0;       // Sigma2: fiber parameter
    };
    BoundaryHit boundary_radius(const Vec3& unit_dir) const;

    /// Scans membership along the ray and reports whether it flips exactly
    /// once, i.e. rho* is single-valued in this direction.
    bool star_shaped_along(const Vec3& unit_dir, int samples = 96) const;

    struct QRSections {
        Vec3 q_star, q_starstar;         // on S (norm 3)
        Vec3 vertex_star, vertex_starstar;  // cone vertices (norm 1)
        double u_star = 0.0, u_starstar = 0.0;  // arc parameters of q
        /// r-section point: vertex + s*(q - vertex), s in [0,1]
        Vec3 r_star(double s) const { return vertex_star + s * (q_star - vertex_star); }
        Vec3 r_starstar(double s) const {
            return vertex_starstar + s * (q_starstar - vertex_starstar);
        }
    };
    QRSections q_and_r_sections(int l, int i) const;

    Vec3 normalize_to_unit_ball(const Vec3& z) const;  // z / rho*(z^)

    /// Sampled points of the edge where closure(Sigma1) meets Sigma2 near the
    /// given end of arc i of curve l, grouped into connected chains.
    std::vector<std::vector<Vec3>> edge_chains(int l, int i, bool at_start) const;

    // geometry exports
    std::string export_surface_obj(int subdivisions = 4) const;
    std::string export_surface_tags_json(int subdivisions = 4) const;
    std::string export_polylines_json(int samples_per_line = 64) const;

  private:
    const BallModel* m_;
    WarpProfile g_;
    double R_ = 0.0;

    Vec3 fiber_dir(int l, double t, double tau) const;  // unit, signed offset tau
};

}  // namespace mst
