#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "funsde/condition.hpp"
#include "funsde/problems.hpp"

namespace funsde::cli {

enum ExitCode : int { kOk = 0, kError = 1, kNotSatisfiable = 2 };

/// JSON problem description read by every subcommand that takes a file.
struct ProblemFile {
    SdeProblem problem;
    std::optional<Expr> phi;
    Expr F;
    double y0 = 0.0;
    std::optional<Box> box;

    /// The classification box: the file's box, or t in [0, T] and x0 +- max(1, |x0|) / 2
    /// with 21 points each.
    Box working_box() const;
};

ProblemFile problem_from_json(const nlohmann::json& j);
nlohmann::json problem_to_json(const ProblemFile& file);
ProblemFile load_problem(const std::string& path);
ProblemFile preset_file(const Preset& preset);

/// Shortest decimal string that reads back to the same double.
std::string format_number(double v);

/// "lo:hi:n" (n evenly spaced points, n = 1 gives lo) or a comma separated list.
std::vector<double> parse_grid(const std::string& spec);

/// Runs one command line. args excludes the program name. Results go to `out` (or the
/// --out file), diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace funsde::cli
