#include "funsde/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "funsde/errors.hpp"
#include "funsde/funsol.hpp"
#include "funsde/mcsim.hpp"

namespace funsde::cli {

using nlohmann::json;

namespace {

Grid grid_from_json(const json& j, const char* axis) {
    if (!j.is_array() || j.size() != 3) {
        throw std::invalid_argument(std::string("box.") + axis + " must be [lo, hi, n]");
    }
    Grid g{j[0].get<double>(), j[1].get<double>(), j[2].get<std::size_t>()};
    if (g.n < 2) throw std::invalid_argument(std::string("box.") + axis + " needs at least 2 points");
    if (!(g.hi > g.lo)) throw std::invalid_argument(std::string("box.") + axis + " needs lo < hi");
    return g;
}

json grid_to_json(const Grid& g) { return json::array({g.lo, g.hi, g.n}); }

/// Writes to the --out file when one was given, otherwise to the command's stdout.
class Sink {
public:
    Sink(const std::string& path, std::ostream& fallback) {
        if (!path.empty()) {
            file_.open(path, std::ios::binary);
            if (!file_) throw std::runtime_error("cannot open '" + path + "' for writing");
        }
        stream_ = path.empty() ? &fallback : &file_;
    }
    std::ostream& operator*() { return *stream_; }

private:
    std::ofstream file_;
    std::ostream* stream_;
};

void write_row(std::ostream& os, std::initializer_list<double> values) {
    bool first = true;
    for (const double v : values) {
        if (!first) os << ',';
        os << format_number(v);
        first = false;
    }
    os << '\n';
}

struct Pipeline {
    ProblemFile file;
    ResidualReport report;
};

Pipeline classify_file(const std::string& path, ClassifyTolerances tol = {}) {
    Pipeline p{load_problem(path), {}};
    p.report = classify(p.file.problem, p.file.working_box(), tol);
    return p;
}

Gauge gauge_for(const Pipeline& p, ode::Tolerances tol) {
    if (p.report.verdict == Verdict::NotSatisfiable) {
        throw NotSatisfiableError("integration condition does not hold: residual varies in x by " +
                                  format_number(p.report.max_x_variation));
    }
    if (p.file.phi) {
        return build_gauge(*p.file.phi, p.file.F, p.file.y0, p.file.problem.T, p.file.problem.params, tol);
    }
    return build_gauge(p.report, p.file.F, p.file.y0, tol);
}

FunctionalSolution solution_for(const Pipeline& p, ode::Tolerances tol) {
    return build_solution(p.report, gauge_for(p, tol), {tol});
}

std::vector<std::size_t> parse_counts(const std::string& spec) {
    std::vector<std::size_t> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t v = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size()) {
            throw std::invalid_argument("bad integer list '" + spec + "'");
        }
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("empty integer list");
    return out;
}

std::uint64_t parse_seed(const std::string& text) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
        throw std::invalid_argument("seed must be a decimal 64-bit integer, got '" + text + "'");
    }
    return v;
}

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_seed(item));
    if (out.empty()) throw std::invalid_argument("empty seed list");
    return out;
}

IntegrationPath parse_path(const std::string& name) {
    if (name == "hv") return IntegrationPath::HorizontalThenVertical;
    if (name == "vh") return IntegrationPath::VerticalThenHorizontal;
    if (name == "diagonal") return IntegrationPath::Diagonal;
    throw std::invalid_argument("unknown path '" + name + "' (expected hv, vh, diagonal or cached)");
}

json report_json(const VerifyReport& r) {
    json checks = json::array();
    for (const auto& c : r.checks) {
        checks.push_back({{"name", c.name}, {"value", c.value}, {"threshold", c.threshold}, {"passed", c.passed}});
    }
    return {{"preset", r.preset}, {"verdict", to_string(r.verdict)}, {"passed", r.passed()}, {"checks", checks}};
}

}  // namespace

Box ProblemFile::working_box() const {
    if (box) return *box;
    const double half = 0.5 * std::max(1.0, std::fabs(problem.x0));
    return {{0.0, problem.T, 21}, {problem.x0 - half, problem.x0 + half, 21}};
}

ProblemFile problem_from_json(const json& j) {
    ProblemFile f;
    f.problem.mu = parse(j.at("mu").get<std::string>());
    f.problem.sigma = parse(j.at("sigma").get<std::string>());
    f.problem.x0 = j.at("x0").get<double>();
    f.problem.T = j.value("T", 1.0);
    if (!(f.problem.T > 0.0)) throw std::invalid_argument("T must be positive");
    if (j.contains("params")) {
        for (const auto& [name, value] : j.at("params").items()) f.problem.params[name] = value.get<double>();
    }
    if (j.contains("gauge")) {
        const json& g = j.at("gauge");
        if (g.contains("phi")) f.phi = parse(g.at("phi").get<std::string>());
        if (g.contains("F")) f.F = parse(g.at("F").get<std::string>());
        f.y0 = g.value("y0", 0.0);
    }
    if (j.contains("box")) f.box = Box{grid_from_json(j.at("box").at("t"), "t"), grid_from_json(j.at("box").at("x"), "x")};
    return f;
}

json problem_to_json(const ProblemFile& f) {
    json j = {{"mu", format(f.problem.mu)},
              {"sigma", format(f.problem.sigma)},
              {"x0", f.problem.x0},
              {"T", f.problem.T},
              {"params", json::object()}};
    for (const auto& [name, value] : f.problem.params) j["params"][name] = value;
    json gauge = {{"F", format(f.F)}, {"y0", f.y0}};
    if (f.phi) gauge["phi"] = format(*f.phi);
    j["gauge"] = gauge;
    if (f.box) j["box"] = {{"t", grid_to_json(f.box->t)}, {"x", grid_to_json(f.box->x)}};
    return j;
}

ProblemFile load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return problem_from_json(j);
}

ProblemFile preset_file(const Preset& preset) {
    ProblemFile f;
    f.problem = preset.problem;
    f.phi = preset.phi;
    f.F = preset.F;
    f.y0 = preset.y0;
    f.box = preset.classify_box;
    return f;
}

std::string format_number(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::vector<double> parse_grid(const std::string& spec) {
    const auto number = [&](std::string_view s) {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size()) {
            throw std::invalid_argument("bad grid '" + spec + "'");
        }
        return v;
    };
    std::vector<std::string_view> parts;
    const char sep = spec.find(':') != std::string::npos ? ':' : ',';
    std::string_view rest = spec;
    while (true) {
        const auto pos = rest.find(sep);
        parts.push_back(rest.substr(0, pos));
        if (pos == std::string_view::npos) break;
        rest.remove_prefix(pos + 1);
    }
    if (sep == ',') {
        std::vector<double> out;
        for (const auto p : parts) out.push_back(number(p));
        return out;
    }
    if (parts.size() != 3) throw std::invalid_argument("grid '" + spec + "' must be lo:hi:n");
    const double n = number(parts[2]);
    if (!(n >= 1.0) || n != std::floor(n)) throw std::invalid_argument("grid point count must be a positive integer");
    const auto points = Grid{number(parts[0]), number(parts[1]), static_cast<std::size_t>(n)}.points();
    return {points.data(), points.data() + points.size()};
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Path-independent functional solutions of scalar SDEs", "funsde"};
    app.require_subcommand(1);

    std::string file;
    std::string out_path;
    double rtol = ode::Tolerances{}.rtol;
    double atol = ode::Tolerances{}.atol;
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("file", file, "problem file (JSON)")->required();
        sub->add_option("--out", out_path, "write the result here instead of stdout");
        sub->add_option("--rtol", rtol, "ODE relative tolerance");
        sub->add_option("--atol", atol, "ODE absolute tolerance");
    };

    ClassifyTolerances ctol;
    auto* check = app.add_subcommand("check", "test the integration condition");
    add_common(check);
    check->add_option("--tol", ctol.variation, "relative tolerance on the x-variation of the residual");
    check->add_option("--tol-brownian", ctol.brownian, "scaled tolerance on sup |phi| for the Brownian case");

    std::string t_grid, x_grid;
    auto* gauge = app.add_subcommand("gauge", "tabulate phi, Phi, G, F, m and v");
    add_common(gauge);
    gauge->add_option("--t-grid", t_grid, "lo:hi:n or a comma separated list (default 0:T:11)");

    auto* solve = app.add_subcommand("solve", "tabulate Z(t, x)");
    add_common(solve);
    solve->add_option("--t-grid", t_grid, "lo:hi:n or a comma separated list (default 0:T:11)");
    solve->add_option("--x-grid", x_grid, "lo:hi:n or a comma separated list (default -3:3:13)");

    double t = NAN, x = NAN, target = NAN, lo = -1.0, hi = 1.0;
    std::string path_name = "cached";
    auto* evalc = app.add_subcommand("eval", "evaluate Z(t, x)");
    add_common(evalc);
    evalc->add_option("--t", t)->required();
    evalc->add_option("--x", x)->required();
    evalc->add_option("--path", path_name, "cached | hv | vh | diagonal");

    auto* invertc = app.add_subcommand("invert", "solve Z(t, x) = target for x");
    add_common(invertc);
    invertc->add_option("--t", t)->required();
    invertc->add_option("--target", target)->required();
    invertc->add_option("--lo", lo, "initial bracket");
    invertc->add_option("--hi", hi, "initial bracket");

    auto* cdfc = app.add_subcommand("cdf", "Pr{X_t <= x} on a grid of x");
    add_common(cdfc);
    cdfc->add_option("--t", t)->required();
    cdfc->add_option("--x-grid", x_grid)->required();

    SimConfig sim;
    sim.workers = 1;
    double sim_T = NAN;
    std::string format_name = "stats";
    const auto set_seed = [&](const std::string& v) {
        try {
            sim.seed = parse_seed(v);
        } catch (const std::invalid_argument& e) {
            throw CLI::ValidationError("--seed", e.what());
        }
    };
    auto* simulate = app.add_subcommand("simulate", "Euler-Maruyama paths of X and the coupled Y");
    add_common(simulate);
    simulate->add_option("--paths", sim.n_paths);
    simulate->add_option("--steps", sim.n_steps);
    simulate->add_option_function<std::string>("--seed", set_seed, "decimal 64-bit seed");
    simulate->add_option("--workers", sim.workers);
    simulate->add_option("--substeps", sim.substeps);
    simulate->add_option("--T", sim_T, "simulation horizon (default: the problem's T)");
    simulate->add_option("--format", format_name, "stats | paths");

    std::string mode = "coupled", levels_spec, seeds_spec;
    std::size_t bins = 20;
    auto* validate = app.add_subcommand("validate", "Monte Carlo checks of the functional solution");
    add_common(validate);
    validate->add_option("--mode", mode, "coupled | collapse | ks");
    validate->add_option("--paths", sim.n_paths);
    validate->add_option("--steps", sim.n_steps, "finest number of steps");
    validate->add_option("--levels", levels_spec, "comma separated step counts dividing --steps");
    validate->add_option_function<std::string>("--seed", set_seed, "decimal 64-bit seed");
    validate->add_option("--seeds", seeds_spec, "comma separated seeds; coupled errors are averaged");
    validate->add_option("--workers", sim.workers);
    validate->add_option("--bins", bins, "collapse mode: number of Y_T bins");
    validate->add_option("--t", t, "ks mode: time of the comparison (default T)");
    validate->add_option("--T", sim_T, "simulation horizon (default: the problem's T)");

    std::string sigma_src, phi_src = "0", gamma_src = "0";
    double x0 = 1.0, T = 1.0;
    std::vector<std::string> param_specs;
    auto* generate = app.add_subcommand("generate-mu", "synthesize a drift satisfying the condition");
    generate->add_option("--sigma", sigma_src)->required();
    generate->add_option("--phi", phi_src, "phi(t), default 0");
    generate->add_option("--gamma", gamma_src, "gamma(t), default 0");
    generate->add_option("--x0", x0);
    generate->add_option("--T", T);
    generate->add_option("--param", param_specs, "name=value, repeatable");
    generate->add_option("--out", out_path, "write the problem file here instead of stdout");

    std::string preset_name, out_dir = ".";
    auto* example = app.add_subcommand("example", "write a preset problem file and verify it");
    example->add_option("name", preset_name)->required();
    example->add_option("--out", out_dir, "directory for <name>.json");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return e.get_exit_code() == 0 ? kOk : kError;
    }

    try {
        const ode::Tolerances tol{rtol, atol};
        if (sim.workers == 0) sim.workers = std::max(1u, std::thread::hardware_concurrency());

        if (check->parsed()) {
            const Pipeline p = classify_file(file, ctol);
            const ResidualReport& r = p.report;
            json j = {{"verdict", to_string(r.verdict)},
                      {"x_ref", r.x_ref},
                      {"max_x_variation", r.max_x_variation},
                      {"sup_phi", r.sup_phi},
                      {"scale", r.scale},
                      {"t", std::vector<double>(r.t.data(), r.t.data() + r.t.size())},
                      {"phi", std::vector<double>(r.phi.data(), r.phi.data() + r.phi.size())}};
            if (r.verdict != Verdict::NotSatisfiable &&
                r.phi.maxCoeff() - r.phi.minCoeff() <= ctol.variation * (1.0 + r.sup_phi)) {
                j["phi_const"] = r.verdict == Verdict::BrownianCase ? 0.0 : r.phi[0];
            }
            Sink sink(out_path, out);
            *sink << j.dump() << '\n';
            return r.verdict == Verdict::NotSatisfiable ? kNotSatisfiable : kOk;
        }

        if (gauge->parsed()) {
            const Pipeline p = classify_file(file);
            const Gauge g = gauge_for(p, tol);
            const auto ts = parse_grid(t_grid.empty() ? "0:" + format_number(g.T()) + ":11" : t_grid);
            Sink sink(out_path, out);
            *sink << "t,phi,Phi,G,F,m,v\n";
            for (const double s : ts) write_row(*sink, {s, g.phi(s), g.Phi(s), g.G(s), g.F(s), g.m(s), g.v(s)});
            return kOk;
        }

        if (solve->parsed()) {
            const Pipeline p = classify_file(file);
            const FunctionalSolution fs = solution_for(p, tol);
            const auto ts = parse_grid(t_grid.empty() ? "0:" + format_number(fs.T()) + ":11" : t_grid);
            const auto xs = parse_grid(x_grid.empty() ? "-3:3:13" : x_grid);
            Sink sink(out_path, out);
            *sink << 't';
            for (const double v : xs) *sink << ',' << format_number(v);
            *sink << '\n';
            for (const double s : ts) {
                *sink << format_number(s);
                for (const double v : xs) *sink << ',' << format_number(fs(s, v));
                *sink << '\n';
            }
            return kOk;
        }

        if (evalc->parsed()) {
            const Pipeline p = classify_file(file);
            const FunctionalSolution fs = solution_for(p, tol);
            const double z = path_name == "cached" ? fs(t, x) : evaluate_via_path(fs, t, x, parse_path(path_name));
            Sink sink(out_path, out);
            *sink << json{{"t", t}, {"x", x}, {"z", z}}.dump() << '\n';
            return kOk;
        }

        if (invertc->parsed()) {
            const Pipeline p = classify_file(file);
            const FunctionalSolution fs = solution_for(p, tol);
            const double y = invert(fs, t, target, lo, hi);
            Sink sink(out_path, out);
            *sink << json{{"t", t}, {"target", target}, {"x", y}, {"residual", fs(t, y) - target}}.dump() << '\n';
            return kOk;
        }

        if (cdfc->parsed()) {
            const Pipeline p = classify_file(file);
            const FunctionalSolution fs = solution_for(p, tol);
            const auto xs = parse_grid(x_grid);
            Sink sink(out_path, out);
            *sink << "x,cdf\n";
            for (const double v : xs) write_row(*sink, {v, cdf(fs, t, v)});
            return kOk;
        }

        if (simulate->parsed()) {
            const Pipeline p = classify_file(file);
            sim.T = std::isnan(sim_T) ? p.file.problem.T : sim_T;
            const bool paths = format_name == "paths";
            if (!paths && format_name != "stats") throw std::invalid_argument("unknown format '" + format_name + "'");
            const bool with_y = p.report.verdict != Verdict::NotSatisfiable;
            sim.keep_paths = true;
            PathEnsemble ens = simulate_em(*p.report.model, sim);
            if (with_y) simulate_y(gauge_for(p, tol), ens);
            Sink sink(out_path, out);
            if (paths) {
                *sink << (with_y ? "path,k,t,dB,x,y\n" : "path,k,t,dB,x\n");
                for (Eigen::Index i = 0; i < ens.x.rows(); ++i) {
                    for (Eigen::Index k = 0; k < ens.x.cols(); ++k) {
                        const double dB = k == 0 ? 0.0 : ens.dB(i, k - 1);
                        *sink << i << ',' << k << ',' << format_number(ens.t[k]) << ',' << format_number(dB) << ','
                              << format_number(ens.x(i, k));
                        if (with_y) *sink << ',' << format_number(ens.y(i, k));
                        *sink << '\n';
                    }
                }
            } else {
                *sink << (with_y ? "k,t,mean_x,sd_x,mean_y,sd_y\n" : "k,t,mean_x,sd_x\n");
                const auto n = static_cast<double>(ens.x.rows());
                const auto stats = [&](const auto& col) {
                    const double mean = col.sum() / n;
                    const double var = n > 1 ? (col.array() - mean).square().sum() / (n - 1.0) : 0.0;
                    return std::pair{mean, std::sqrt(var)};
                };
                for (Eigen::Index k = 0; k < ens.x.cols(); ++k) {
                    const auto [mx, sx] = stats(ens.x.col(k));
                    *sink << k << ',' << format_number(ens.t[k]) << ',' << format_number(mx) << ','
                          << format_number(sx);
                    if (with_y) {
                        const auto [my, sy] = stats(ens.y.col(k));
                        *sink << ',' << format_number(my) << ',' << format_number(sy);
                    }
                    *sink << '\n';
                }
            }
            return kOk;
        }

        if (validate->parsed()) {
            const Pipeline p = classify_file(file);
            const FunctionalSolution fs = solution_for(p, tol);
            sim.T = std::isnan(sim_T) ? fs.T() : sim_T;
            sim.keep_paths = false;
            std::vector<std::size_t> levels;
            if (levels_spec.empty()) {
                for (std::size_t n = sim.n_steps; n >= 1 && levels.size() < 4; n /= 2) {
                    levels.insert(levels.begin(), n);
                    if (n % 2 != 0) break;
                }
            } else {
                levels = parse_counts(levels_spec);
            }
            const auto seeds = seeds_spec.empty() ? std::vector<std::uint64_t>{sim.seed} : parse_seeds(seeds_spec);
            Sink sink(out_path, out);
            if (mode == "coupled") {
                std::vector<ErrorStats> runs;
                for (const auto seed : seeds) {
                    sim.seed = seed;
                    runs.push_back(coupled_validation(fs, sim, levels));
                }
                const ErrorStats avg = average(runs);
                *sink << "n_steps,dt,mean_sup_error,max_sup_error,ratio\n";
                for (const auto& r : avg.table) {
                    *sink << r.n_steps << ',' << format_number(r.dt) << ',' << format_number(r.mean_sup_error) << ','
                          << format_number(r.max_sup_error) << ',' << format_number(r.ratio) << '\n';
                }
            } else if (mode == "collapse") {
                *sink << "seed,n_steps,dt,spread\n";
                for (const auto seed : seeds) {
                    sim.seed = seed;
                    for (const auto& r : path_independence_test(fs, sim, bins, levels).table) {
                        *sink << seed << ',' << r.n_steps << ',' << format_number(r.dt) << ','
                              << format_number(r.spread) << '\n';
                    }
                }
            } else if (mode == "ks") {
                const double at = std::isnan(t) ? sim.T : t;
                *sink << "seed,t,samples,statistic,x_at\n";
                for (const auto seed : seeds) {
                    sim.seed = seed;
                    const KsStats ks = empirical_cdf_test(fs, sim, at);
                    *sink << seed << ',' << format_number(at) << ',' << ks.samples << ','
                          << format_number(ks.statistic) << ',' << format_number(ks.x_at) << '\n';
                }
            } else {
                throw std::invalid_argument("unknown mode '" + mode + "'");
            }
            return kOk;
        }

        if (generate->parsed()) {
            ProblemFile f;
            for (const auto& spec : param_specs) {
                const auto eq = spec.find('=');
                if (eq == std::string::npos) throw std::invalid_argument("--param expects name=value");
                f.problem.params[spec.substr(0, eq)] = parse_grid(spec.substr(eq + 1)).at(0);
            }
            const Expr sigma = parse(sigma_src);
            const Expr phi = parse(phi_src);
            f.problem.mu = mu_from_sigma(sigma, phi, parse(gamma_src));
            f.problem.sigma = sigma;
            f.problem.x0 = x0;
            f.problem.T = T;
            f.phi = phi;
            Sink sink(out_path, out);
            *sink << problem_to_json(f).dump(2) << '\n';
            return kOk;
        }

        if (example->parsed()) {
            const Preset preset = get_preset(preset_name);
            std::filesystem::create_directories(out_dir);
            const auto path = std::filesystem::path(out_dir) / (preset.name + ".json");
            {
                std::ofstream os(path, std::ios::binary);
                if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
                os << problem_to_json(preset_file(preset)).dump(2) << '\n';
            }
            const VerifyReport report = verify_preset(preset);
            out << report_json(report).dump() << '\n';
            return report.passed() ? kOk : kError;
        }
    } catch (const NotSatisfiableError& e) {
        err << "not satisfiable: " << e.what() << '\n';
        return kNotSatisfiable;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kError;
    }
    return kError;
}

}  // namespace funsde::cli
