#pragma once

#include <array>
#include <map>
#include <vector>

#include "geom.hpp"

namespace mst {

struct IcoMesh {
    std::vector<Vec3> verts;  // unit
    std::vector<std::array<int, 3>> faces;
};

inline IcoMesh icosahedron_mesh() {
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    IcoMesh m;
    m.verts = {
        {-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0},
        {0, -1, p}, {0, 1, p}, {0, -1, -p}, {0, 1, -p},
        {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1},
    };
    for (auto& v : m.verts) v = normalized(v);
    m.faces = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
    };
    return m;
}

inline IcoMesh subdivide_mesh(const IcoMesh& in) {
    IcoMesh out;
    out.verts = in.verts;
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
        auto key = std::minmax(a, b);
        auto it = mid.find(key);
        if (it != mid.end()) return it->second;
        int id = static_cast<int>(out.verts.size());
        out.verts.push_back(normalized(out.verts[a] + out.verts[b]));
        mid[key] = id;
        return id;
    };
    for (const auto& f : in.faces) {
        int ab = midpoint(f[0], f[1]);
        int bc = midpoint(f[1], f[2]);
        int ca = midpoint(f[2], f[0]);
        out.faces.push_back({f[0], ab, ca});
        out.faces.push_back({f[1], bc, ab});
        out.faces.push_back({f[2], ca, bc});
        out.faces.push_back({ab, bc, ca});
    }
    return out;
}

inline IcoMesh icosphere_mesh(int subdivisions) {
    IcoMesh m = icosahedron_mesh();
    for (int s = 0; s < subdivisions; ++s) m = subdivide_mesh(m);
    return m;
}

}  // namespace mst
