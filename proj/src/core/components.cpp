#include "components.hpp"

#include "icosphere.hpp"


#include <array>
#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <set>
#include <stdexcept>

namespace mst {



ComponentMap::ComponentMap(const SphericalDiagram& d, const CurveGeometry& geom,
                           int subdivisions) {
    IcoMesh m = icosphere_mesh(subdivisions);
    verts_ = m.verts;

    adj_.resize(verts_.size());
    double max_edge = 0.0;
    for (const auto& f : m.faces)
        for (int e = 0; e < 3; ++e) {
            int a = f[e], b = f[(e + 1) % 3];
            adj_[a].push_back(b);
            adj_[b].push_back(a);
            max_edge = std::max(max_edge, angle_between(verts_[a], verts_[b]));
        }
    for (auto& nb : adj_) {
        std::sort(nb.begin(), nb.end());
        nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    }

    // Mask: marked discs of radius R and a band around each curve wide enough
    // that the masked region is connected across the mesh.
    const double R = d.R();
    const double margin = 1.2 * max_edge;  // angular units
    comp_.assign(verts_.size(), -1);
    std::vector<char> masked(verts_.size(), 0);
    for (size_t i = 0; i < verts_.size(); ++i) {
        for (const auto& p : d.points)
            if (3.0 * angle_between(verts_[i], p.dir) < R + 3.0 * margin) masked[i] = 1;
        if (!masked[i]) {
            auto n = geom.nearest(verts_[i]);
            if (n && n->dist < 3.0 * margin) masked[i] = 1;
        }
    }

    n_components_ = 0;
    for (size_t i = 0; i < verts_.size(); ++i) {
        if (masked[i] || comp_[i] >= 0) continue;
        std::deque<int> q{static_cast<int>(i)};
        comp_[i] = n_components_;
        while (!q.empty()) {
            int v = q.front();
            q.pop_front();
            for (int w : adj_[v])
                if (!masked[w] && comp_[w] < 0) {
                    comp_[w] = n_components_;
                    q.push_back(w);
                }
        }
        ++n_components_;
    }

    comp_label_.assign(n_components_, 0);
    labels_consistent_ = true;
    std::set<int> seen_components;
    for (const auto& [label, anchors] : d.component_labels)
        for (const auto& a : anchors) {
            int c = component_at(normalized(a));
            if (c < 0) { labels_consistent_ = false; continue; }
            if (comp_label_[c] != 0 && comp_label_[c] != label) labels_consistent_ = false;
            if (seen_components.count(c) && comp_label_[c] == label) {
                // two anchors of the same label in one component: harmless
            }
            comp_label_[c] = label;
            seen_components.insert(c);
        }
    for (int c = 0; c < n_components_; ++c)
        if (comp_label_[c] == 0) labels_consistent_ = false;
}

int ComponentMap::nearest_vertex(const Vec3& unit_dir) const {
    int best = 0;
    double best_d = 1e300;
    for (size_t i = 0; i < verts_.size(); ++i) {
        double d2 = norm2(verts_[i] - unit_dir);
        if (d2 < best_d) { best_d = d2; best = static_cast<int>(i); }
    }
    return best;
}

int ComponentMap::component_at(const Vec3& unit_dir) const {
    int v = nearest_vertex(unit_dir);
    if (comp_[v] >= 0) return comp_[v];
    // fall back to the nearest unmasked vertex among the neighbors' neighbors
    std::set<int> ring{v};
    for (int pass = 0; pass < 6; ++pass) {
        std::set<int> next = ring;
        for (int a : ring)
            for (int b : adj_[a]) next.insert(b);
        ring = next;
        int best = -1;
        double best_d = 1e300;
        for (int a : ring)
            if (comp_[a] >= 0) {
                double d2 = norm2(verts_[a] - unit_dir);
                if (d2 < best_d) { best_d = d2; best = a; }
            }
        if (best >= 0) return comp_[best];
    }
    return -1;
}

int ComponentMap::label_at(const Vec3& unit_dir) const {
    int c = component_at(unit_dir);
    return c >= 0 ? comp_label_[c] : 0;
}

}  // namespace mst
