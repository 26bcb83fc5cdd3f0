#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "funsde/condition.hpp"
#include "funsde/funsol.hpp"

namespace funsde {

/// A named example problem with the gauge inputs and reference formulas that go with it.
/// Parameter values are configuration choices; every preset is fully bound.
struct Preset {
    std::string name;
    std::string description;
    SdeProblem problem;
    std::optional<Expr> phi;  // analytic phi(t); absent when the condition fails
    Expr F;
    double y0 = 0.0;
    /// Closed-form Z(t, y) in the gauge (phi, F, y0), when known.
    std::function<double(double, double)> closed_form_z;
    /// Closed-form Pr{X_t <= x}, when known.
    std::function<double(double, double)> closed_form_cdf;
    /// Box in (t, X) handed to classify; sigma is positive on it.
    Box classify_box;
    /// Box in (t, y) on which Z is compared and checked.
    Box solution_box;
    Verdict expected;
};

std::vector<std::string> preset_names();

/// gbm | ou | linear | nonlinear_nonautonomous | negative_control. Throws
/// std::invalid_argument on an unknown name.
Preset get_preset(const std::string& name);

/// Runs the classify -> gauge -> solve pipeline with the preset's F and y0.
ResidualReport classify_preset(const Preset& preset);
Gauge preset_gauge(const Preset& preset, const ResidualReport& report);
/// The solution of a satisfiable preset. For the negative control the condition check is
/// bypassed and Z is built from the naive gauge phi = 0, F = 0.
FunctionalSolution preset_solution(const Preset& preset);

struct CheckResult {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    bool passed = false;
};

struct VerifyReport {
    std::string preset;
    Verdict verdict;
    std::vector<CheckResult> checks;

    bool passed() const;
};

/// Classification, gauge identity, closed-form match, PDE residuals, monotonicity and
/// path invariance. Failures are entries of the report, not exceptions.
VerifyReport verify_preset(const Preset& preset);

}  // namespace funsde
