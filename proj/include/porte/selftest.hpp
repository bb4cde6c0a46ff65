#pragma once

#include <string>
#include <vector>

namespace porte {

struct SelftestCase {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct SelftestReport {
    std::vector<SelftestCase> cases;
    bool all_pass = false;
    double elapsed_seconds = 0.0;

    std::string to_json() const;
};

// Runs the gradient-verification suite (finite differences against every
// analytic gradient) plus the metric and quantizer property suites.
// inject_wrong_gradient is a harness-sensitivity hook: it scales one
// analytic gradient by 1.01, which must be caught and fail the run.
SelftestReport run_selftest(bool inject_wrong_gradient = false);

}  // namespace porte
