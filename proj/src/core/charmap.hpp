#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pushin.hpp"

namespace mst {

// ---------------------------------------------------------------------------
// The characteristic map psi on the closed pushed-in ball. Interior points go
// through phi_o after undoing both push-in stages; boundary points are
// dispatched by their piece of the decomposition
//   S* = (S cap S*) u* {vertices} u* Sigma_2 u* Sigma_1.
// By construction f(psi(x)) = 3 - |x| everywhere.
// ---------------------------------------------------------------------------

struct CaseReport {
    int case_id = 0;
    bool instantiable = true;
    bool passed = false;
    int n_sequences = 0;
    int n_passed = 0;
    double worst_residual = 0.0;
    std::string notice;
    std::vector<std::string> witnesses;  // replayable: seed + sequence index
};

struct CellCheckReport {
    bool passed = false;
    int n_interior = 0;
    int n_collisions = 0;
    int n_cone_samples = 0;
    int n_cone_bad = 0;
    std::string witness;
};

class CharacteristicMap {
  public:
    explicit CharacteristicMap(const PushInTransform& tf);

    const PushInTransform& transform() const { return *tf_; }
    const BallModel& model() const { return *m_; }

    /// psi at a point of the closed pushed-in ball; throws outside.
    ManifoldPoint eval_psi(const Vec3& p) const;

    /// max |f(psi(x)) - (3 - |x|)| over mixed interior/boundary samples
    /// covering every boundary piece present in the diagram.
    double level_identity_residual(int n_samples, std::uint64_t seed) const;

    /// Continuity at boundary points, one case of the partition at a time.
    /// Sequences are geometric (ratio 0.7), images are checked for cascade
    /// convergence (tail window = last 20%) and for image-point/level
    /// convergence. Non-instantiable cases come back with a notice.
    CaseReport continuity_case(int case_id, int n_sequences, double tol,
                               std::uint64_t seed) const;
    std::vector<CaseReport> continuity_suite(int n_sequences, double tol,
                                             std::uint64_t seed) const;

    /// Injectivity on interior samples and the cone-over-alpha_l property.
    CellCheckReport characteristic_cell_check(int n_samples, std::uint64_t seed) const;

    /// Model trajectory of the image point's trajectory (Definition-10 probe):
    /// level -> model point when the trajectory reaches that level.
    static ModelTrajectory trajectory_model(const ManifoldPoint& mp);

  private:
    const PushInTransform* tf_;
    const BallModel* m_;

    ManifoldPoint boundary_psi(const Vec3& p, const PushInTransform::BoundaryHit& bh) const;
};

}  // namespace mst
