#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "diagram.hpp"

namespace mst {

using nlohmann::json;

namespace {

Vec3 vec_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3)
        throw std::runtime_error("expected a 3-element array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

int sign_from_json(const json& j) {
    if (j.is_string()) {
        std::string s = j.get<std::string>();
        if (s == "+") return +1;
        if (s == "-") return -1;
    } else if (j.is_number_integer()) {
        int s = j.get<int>();
        if (s == 1 || s == -1) return s;
    }
    throw std::runtime_error("sign must be \"+\", \"-\", 1 or -1");
}

}  // namespace

SphericalDiagram diagram_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    SphericalDiagram d;
    d.delta = j.value("delta", 0.5);
    d.epsilon = j.value("epsilon", 0.05);
    d.t0 = j.value("t0", 0.1);
    d.closed_manifold = j.value("closed_manifold", true);
    d.seed = j.value("seed", std::uint64_t{0});

    for (const auto& pj : j.value("points", json::array())) {
        BoundaryPoint p;
        p.k = pj.at("k").get<int>();
        p.sign = sign_from_json(pj.at("sign"));
        p.dir = normalized(vec_from_json(pj.at("dir")));
        d.points.push_back(p);
    }
    for (const auto& cj : j.value("curves", json::array())) {
        Curve c;
        c.label = cj.at("l").get<int>();
        c.closed = cj.value("closed", false);
        if (c.closed) {
            for (const auto& v : cj.at("control")) c.control.push_back(normalized(vec_from_json(v)));
        } else {
            for (const auto& aj : cj.at("arcs")) {
                Arc a;
                a.start = {aj.at("start").at("k").get<int>(), sign_from_json(aj.at("start").at("sign"))};
                a.end = {aj.at("end").at("k").get<int>(), sign_from_json(aj.at("end").at("sign"))};
                for (const auto& v : aj.value("control", json::array()))
                    a.control.push_back(normalized(vec_from_json(v)));
                c.arcs.push_back(std::move(a));
            }
        }
        d.curves.push_back(std::move(c));
    }
    const json labels = j.value("component_labels", json::object());
    for (const auto& [key, anchors] : labels.items()) {
        int label = std::stoi(key);
        std::vector<Vec3> dirs;
        for (const auto& v : anchors) dirs.push_back(normalized(vec_from_json(v)));
        d.component_labels[label] = std::move(dirs);
    }
    return d;
}

std::string diagram_to_json(const SphericalDiagram& d) {
    json j;
    j["delta"] = d.delta;
    j["epsilon"] = d.epsilon;
    j["t0"] = d.t0;
    j["closed_manifold"] = d.closed_manifold;
    j["seed"] = d.seed;

    json pts = json::array();
    for (const auto& p : d.points)
        pts.push_back({{"k", p.k}, {"sign", p.sign > 0 ? "+" : "-"}, {"dir", vec_to_json(p.dir)}});
    j["points"] = pts;

    json cvs = json::array();
    for (const auto& c : d.curves) {
        json cj;
        cj["l"] = c.label;
        if (c.closed) {
            cj["closed"] = true;
            json ctrl = json::array();
            for (const auto& v : c.control) ctrl.push_back(vec_to_json(v));
            cj["control"] = ctrl;
        } else {
            json arcs = json::array();
            for (const auto& a : c.arcs) {
                json aj;
                aj["start"] = {{"k", a.start.k}, {"sign", a.start.sign > 0 ? "+" : "-"}};
                aj["end"] = {{"k", a.end.k}, {"sign", a.end.sign > 0 ? "+" : "-"}};
                json ctrl = json::array();
                for (const auto& v : a.control) ctrl.push_back(vec_to_json(v));
                aj["control"] = ctrl;
                arcs.push_back(aj);
            }
            cj["arcs"] = arcs;
        }
        cvs.push_back(cj);
    }
    j["curves"] = cvs;

    json labels = json::object();
    for (const auto& [label, anchors] : d.component_labels) {
        json dirs = json::array();
        for (const auto& v : anchors) dirs.push_back(vec_to_json(v));
        labels[std::to_string(label)] = dirs;
    }
    j["component_labels"] = labels;

    return j.dump(2);
}

SphericalDiagram load_diagram(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return diagram_from_json(text);
}

}  // namespace mst
