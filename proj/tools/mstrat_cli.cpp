#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <mstrat.h>

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

struct StringGuard {
    char* s = nullptr;
    ~StringGuard() { mstrat_string_free(s); }
};

struct DiagramGuard {
    mstrat_diagram* d = nullptr;
    ~DiagramGuard() { mstrat_diagram_free(d); }
};

struct ReportGuard {
    mstrat_report* r = nullptr;
    ~ReportGuard() { mstrat_report_free(r); }
};

bool write_output(const std::string& path, const char* text) {
    if (path.empty()) {
        std::cout << text;
        return true;
    }
    std::ofstream os(path, std::ios::binary);
    os << text;
    if (!os) {
        std::cerr << "error: cannot write " << path << "\n";
        return false;
    }
    return true;
}

int load_instance(const std::string& path, DiagramGuard& dg) {
    if (mstrat_diagram_load(path.c_str(), &dg.d) != MSTRAT_OK) {
        std::cerr << "error: " << mstrat_last_error() << "\n";
        return kExitUsage;
    }
    return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Morse-Smale stratification toolkit"};
    app.require_subcommand(1);

    std::string instance, out, suite = "all", kind;
    int samples = 200, detail = 0;
    double tol = 1e-3;
    std::uint64_t seed = 1;

    // Environment overrides for CI pins.
    auto env_opt = [](CLI::Option* o, const char* name) { o->envname(name); };

    auto* validate = app.add_subcommand("validate", "check a diagram instance");
    validate->add_option("instance", instance, "instance JSON path")->required();
    validate->add_option("--out", out, "write the report here instead of stdout");

    auto* verify = app.add_subcommand("verify", "run verification suites");
    verify->add_option("instance", instance, "instance JSON path")->required();
    env_opt(verify->add_option("--suite", suite,
                               "diagram|flow|pushin|continuity|strata|all"),
            "MSTRAT_SUITE");
    env_opt(verify->add_option("--samples", samples, "sample budget per check"),
            "MSTRAT_SAMPLES");
    env_opt(verify->add_option("--tol", tol, "continuity tail tolerance"), "MSTRAT_TOL");
    env_opt(verify->add_option("--seed", seed, "RNG seed (determines the report)"),
            "MSTRAT_SEED");
    verify->add_option("--out", out, "write the report here instead of stdout");

    auto* exp = app.add_subcommand("export", "export push-in geometry");
    exp->add_option("what", kind, "surface|cones|curves")->required();
    exp->add_option("instance", instance, "instance JSON path")->required();
    exp->add_option("--detail", detail, "mesh subdivisions / samples per line");
    exp->add_option("--out", out, "output path (surface also writes <out>.tags.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    DiagramGuard dg;
    if (int rc = load_instance(instance, dg)) return rc;

    if (*validate) {
        int passed = 0;
        StringGuard report;
        if (mstrat_validate(dg.d, &passed, &report.s) != MSTRAT_OK) {
            std::cerr << "error: " << mstrat_last_error() << "\n";
            return kExitUsage;
        }
        if (!write_output(out, report.s)) return kExitUsage;
        return passed ? kExitPass : kExitFail;
    }

    if (*verify) {
        ReportGuard rg;
        if (mstrat_verify(dg.d, suite.c_str(), samples, tol, seed, &rg.r) != MSTRAT_OK) {
            std::cerr << "error: " << mstrat_last_error() << "\n";
            return kExitUsage;
        }
        StringGuard report;
        if (mstrat_report_to_json(rg.r, &report.s) != MSTRAT_OK) {
            std::cerr << "error: " << mstrat_last_error() << "\n";
            return kExitUsage;
        }
        if (!write_output(out, report.s)) return kExitUsage;
        return mstrat_report_passed(rg.r) ? kExitPass : kExitFail;
    }

    // export
    StringGuard text;
    if (mstrat_export(dg.d, kind.c_str(), detail, &text.s) != MSTRAT_OK) {
        std::cerr << "error: " << mstrat_last_error() << "\n";
        return kExitUsage;
    }
    if (!write_output(out, text.s)) return kExitUsage;
    if (kind == "surface" && !out.empty()) {
        StringGuard tags;
        if (mstrat_export(dg.d, "tags", detail, &tags.s) != MSTRAT_OK) {
            std::cerr << "error: " << mstrat_last_error() << "\n";
            return kExitUsage;
        }
        if (!write_output(out + ".tags.json", tags.s)) return kExitUsage;
    }
    return kExitPass;
}
