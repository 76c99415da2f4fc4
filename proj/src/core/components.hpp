#pragma once

#include <vector>

#include "diagram.hpp"

namespace mst {

// ---------------------------------------------------------------------------
// Connected components of S minus the closure of the singular set (marked
// discs and curve neighborhoods), computed on a subdivided icosahedron.
// Components are identified by the anchor directions in
// SphericalDiagram::component_labels.
// ---------------------------------------------------------------------------

class ComponentMap {
  public:
    ComponentMap(const SphericalDiagram& d, const CurveGeometry& geom, int subdivisions = 5);

    /// Component id (0-based) at a unit direction, or -1 inside the mask.
    int component_at(const Vec3& unit_dir) const;

    /// b_j label at a unit direction; 0 when the point is masked or the
    /// component carries no anchor.
    int label_at(const Vec3& unit_dir) const;

    int component_count() const { return n_components_; }

    /// true when every anchor of a label lands in a distinct component and
    /// every component carries exactly one label.
    bool labels_consistent() const { return labels_consistent_; }

  private:
    std::vector<Vec3> verts_;            // unit
    std::vector<std::vector<int>> adj_;  // vertex adjacency
    std::vector<int> comp_;              // -1 = masked
    std::vector<int> comp_label_;        // component id -> b_j label (0 = none)
    int n_components_ = 0;
    bool labels_consistent_ = false;

    int nearest_vertex(const Vec3& unit_dir) const;
};

}  // namespace mst
