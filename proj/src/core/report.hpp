#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "strata.hpp"

namespace mst {

// ---------------------------------------------------------------------------
// Unified verification report. Every suite is reduced to a flat list of
// checks so the CLI can serialize one schema regardless of what ran. The
// serialization is deterministic (insertion-ordered keys, stable check
// ordering, shortest round-trip number formatting), so two runs with the
// same arguments produce byte-identical output.
// ---------------------------------------------------------------------------

struct Report {
    std::string version = "1";
    std::string instance_hash;
    std::string suite;
    std::vector<StrataCheck> checks;

    bool all_passed() const;
};

/// FNV-1a over the canonical JSON serialization of the diagram.
std::string instance_hash_of(const SphericalDiagram& d);

/// Run one of the named suites ("diagram", "flow", "pushin", "continuity",
/// "strata", or "all") against the diagram. Throws std::invalid_argument on
/// an unknown suite name.
Report run_suite(const SphericalDiagram& d, const std::string& suite,
                 int samples, double tol, std::uint64_t seed);

std::string report_to_json(const Report& r);

}  // namespace mst
