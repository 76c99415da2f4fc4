#include "mstrat.h"

#include <cstring>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "core/pushin.hpp"
#include "core/report.hpp"

using namespace mst;

struct mstrat_diagram {
    SphericalDiagram d;
};

struct mstrat_report {
    Report r;
};

namespace {

thread_local std::string g_last_error = "no error";

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

template <typename F>
mstrat_status guarded(F&& f) {
    try {
        return f();
    } catch (const nlohmann::json::exception& e) {
        g_last_error = e.what();
        return MSTRAT_ERR_PARSE;
    } catch (const std::invalid_argument& e) {
        g_last_error = e.what();
        return MSTRAT_ERR_INVALID_ARGUMENT;
    } catch (const std::domain_error& e) {
        g_last_error = e.what();
        return MSTRAT_ERR_DOMAIN;
    } catch (const std::ios_base::failure& e) {
        g_last_error = e.what();
        return MSTRAT_ERR_IO;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return MSTRAT_ERR_INTERNAL;
    }
}

mstrat_status bad_argument(const char* msg) {
    g_last_error = msg;
    return MSTRAT_ERR_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

const char* mstrat_version(void) { return "1.0.0"; }

const char* mstrat_last_error(void) { return g_last_error.c_str(); }

mstrat_status mstrat_diagram_from_json(const char* json_text, mstrat_diagram** out) {
    if (!json_text || !out) return bad_argument("null argument");
    return guarded([&] {
        *out = new mstrat_diagram{diagram_from_json(json_text)};
        return MSTRAT_OK;
    });
}

mstrat_status mstrat_diagram_load(const char* path, mstrat_diagram** out) {
    if (!path || !out) return bad_argument("null argument");
    return guarded([&] {
        *out = new mstrat_diagram{load_diagram(path)};
        return MSTRAT_OK;
    });
}

mstrat_status mstrat_diagram_synthesize(int k, int l, uint64_t seed,
                                        mstrat_diagram** out) {
    if (!out) return bad_argument("null argument");
    return guarded([&] {
        *out = new mstrat_diagram{synthesize_diagram(k, l, seed)};
        return MSTRAT_OK;
    });
}

mstrat_status mstrat_diagram_to_json(const mstrat_diagram* d, char** out) {
    if (!d || !out) return bad_argument("null argument");
    return guarded([&] {
        *out = dup_string(diagram_to_json(d->d));
        return MSTRAT_OK;
    });
}

void mstrat_diagram_free(mstrat_diagram* d) { delete d; }

mstrat_status mstrat_validate(const mstrat_diagram* d, int* passed,
                              char** report_json) {
    if (!d || !passed) return bad_argument("null argument");
    return guarded([&] {
        Report r = run_suite(d->d, "diagram", 0, 0.0, 0);
        *passed = r.all_passed() ? 1 : 0;
        if (report_json) *report_json = dup_string(report_to_json(r));
        return MSTRAT_OK;
    });
}

mstrat_status mstrat_verify(const mstrat_diagram* d, const char* suite, int samples,
                            double tol, uint64_t seed, mstrat_report** out) {
    if (!d || !suite || !out) return bad_argument("null argument");
    if (samples <= 0) return bad_argument("samples must be positive");
    return guarded([&] {
        *out = new mstrat_report{run_suite(d->d, suite, samples, tol, seed)};
        return MSTRAT_OK;
    });
}

int mstrat_report_passed(const mstrat_report* r) {
    return r && r->r.all_passed() ? 1 : 0;
}

mstrat_status mstrat_report_to_json(const mstrat_report* r, char** out) {
    if (!r || !out) return bad_argument("null argument");
    return guarded([&] {
        *out = dup_string(report_to_json(r->r));
        return MSTRAT_OK;
    });
}

void mstrat_report_free(mstrat_report* r) { delete r; }

mstrat_status mstrat_export(const mstrat_diagram* d, const char* kind, int detail,
                            char** out) {
    if (!d || !kind || !out) return bad_argument("null argument");
    return guarded([&] {
        std::string k = kind;
        BallModel m(d->d);
        PushInTransform tf(m);
        std::string text;
        if (k == "surface") {
            text = tf.export_surface_obj(detail > 0 ? detail : 4);
        } else if (k == "tags") {
            text = tf.export_surface_tags_json(detail > 0 ? detail : 4);
        } else if (k == "cones" || k == "curves") {
            auto poly =
                nlohmann::ordered_json::parse(tf.export_polylines_json(detail > 0 ? detail : 64));
            nlohmann::ordered_json j;
            if (k == "cones") {
                j["circles"] = poly["circles"];
            } else {
                j["alpha_tilde"] = poly["alpha_tilde"];
                j["edges"] = poly["edges"];
            }
            text = j.dump(2) + "\n";
        } else {
            throw std::invalid_argument("unknown export kind: " + k);
        }
        *out = dup_string(text);
        return MSTRAT_OK;
    });
}

void mstrat_string_free(char* s) { delete[] s; }

}  // extern "C"
