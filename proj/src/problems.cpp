#include "funsde/problems.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "funsde/errors.hpp"

namespace funsde {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

Box make_box(double t_lo, double t_hi, double x_lo, double x_hi, std::size_t n) {
    return {{t_lo, t_hi, n}, {x_lo, x_hi, n}};
}

Preset gbm() {
    constexpr double mu_hat = 0.1;
    constexpr double sigma_hat = 0.2;
    constexpr double x0 = 1.0;
    Preset p;
    p.name = "gbm";
    p.description = "geometric Brownian motion dX = mu_hat X dt + sigma_hat X dB";
    p.problem = {parse("mu_hat*x"), parse("sigma_hat*x"), x0, 1.0, {{"mu_hat", mu_hat}, {"sigma_hat", sigma_hat}}};
    p.phi = Expr::constant(0.0);
    p.closed_form_z = [=](double t, double y) {
        return x0 * std::exp((mu_hat - 0.5 * sigma_hat * sigma_hat) * t + sigma_hat * y);
    };
    p.closed_form_cdf = [=](double t, double x) {
        if (x <= 0.0) return 0.0;
        return normal_cdf((std::log(x / x0) - (mu_hat - 0.5 * sigma_hat * sigma_hat) * t) /
                          (sigma_hat * std::sqrt(t)));
    };
    p.classify_box = make_box(0.0, 1.0, 0.5, 2.0, 11);
    p.solution_box = make_box(0.0, 1.0, -3.0, 3.0, 11);
    p.expected = Verdict::BrownianCase;
    return p;
}

Preset ou() {
    constexpr double theta = 1.5;
    constexpr double mu_hat = 0.7;
    constexpr double sigma_hat = 0.3;
    constexpr double r0 = 1.0;
    Preset p;
    p.name = "ou";
    p.description = "Ornstein-Uhlenbeck process dX = theta (mu_hat - X) dt + sigma_hat dB";
    p.problem = {parse("theta*(mu_hat-x)"), parse("sigma_hat"), r0, 1.0,
                 {{"theta", theta}, {"mu_hat", mu_hat}, {"sigma_hat", sigma_hat}}};
    p.phi = parse("-theta");
    p.F = parse("theta*mu_hat/sigma_hat*exp(theta*t)");
    p.closed_form_z = [=](double t, double y) {
        return r0 * std::exp(-theta * t) + sigma_hat * std::exp(-theta * t) * y;
    };
    p.closed_form_cdf = [=](double t, double x) {
        const double decay = std::exp(-theta * t);
        const double mean = r0 * decay + mu_hat * (1.0 - decay);
        const double sd = sigma_hat * std::sqrt((1.0 - decay * decay) / (2.0 * theta));
        return normal_cdf((x - mean) / sd);
    };
    p.classify_box = make_box(0.0, 1.0, -2.0, 2.0, 11);
    p.solution_box = make_box(0.0, 1.0, -3.0, 3.0, 11);
    p.expected = Verdict::GaugedCase;
    return p;
}

Preset linear() {
    constexpr double a0 = 0.1;
    constexpr double a1 = 0.05;
    constexpr double b0 = 0.2;
    constexpr double b1 = 0.1;
    constexpr double x0 = 1.0;
    Preset p;
    p.name = "linear";
    p.description = "homogeneous linear SDE dX = alpha(t) X dt + beta(t) X dB, alpha = a0 + a1 t, beta = b0 + b1 t";
    p.problem = {parse("(a0+a1*t)*x"), parse("(b0+b1*t)*x"), x0, 1.0,
                 {{"a0", a0}, {"a1", a1}, {"b0", b0}, {"b1", b1}}};
    p.phi = parse("-b1/(b0+b1*t)");
    // int_0^t beta^2 and int_0^t (alpha - beta^2 / 2).
    const auto beta_sq = [=](double t) { return b0 * b0 * t + b0 * b1 * t * t + b1 * b1 * t * t * t / 3.0; };
    const auto drift = [=](double t) { return a0 * t + 0.5 * a1 * t * t - 0.5 * beta_sq(t); };
    // G = beta / beta(0), so Y = int beta dB / b0.
    p.closed_form_z = [=](double t, double y) { return x0 * std::exp(drift(t) + b0 * y); };
    p.closed_form_cdf = [=](double t, double x) {
        if (x <= 0.0) return 0.0;
        return normal_cdf((std::log(x / x0) - drift(t)) / std::sqrt(beta_sq(t)));
    };
    p.classify_box = make_box(0.0, 1.0, 0.5, 2.0, 11);
    p.solution_box = make_box(0.0, 1.0, -3.0, 3.0, 11);
    p.expected = Verdict::GaugedCase;
    return p;
}

Preset nonlinear_nonautonomous() {
    Preset p;
    p.name = "nonlinear_nonautonomous";
    p.description = "non-autonomous nonlinear SDE with sigma = (t+1) exp(-x^2/2)";
    p.problem = {parse("exp(-x^2/2)/(t+1)*quad(exp(xi^2/2), 0, x) - x*(t+1)^2/2*exp(-x^2) + exp(-x^2/2)"),
                 parse("(t+1)*exp(-x^2/2)"), 0.5, 1.0, {}};
    p.phi = Expr::constant(0.0);
    p.classify_box = make_box(0.0, 1.0, -2.0, 2.0, 11);
    p.solution_box = make_box(0.0, 1.0, -2.0, 2.0, 11);
    p.expected = Verdict::BrownianCase;
    return p;
}

Preset negative_control() {
    Preset p;
    p.name = "negative_control";
    p.description = "dX = X^2 dt + dB; the residual 2x depends on x";
    p.problem = {parse("x^2"), parse("1"), -1.0, 1.0, {}};
    p.classify_box = make_box(0.0, 1.0, -2.0, 2.0, 11);
    p.solution_box = make_box(0.0, 1.0, -1.0, 1.0, 11);
    p.expected = Verdict::NotSatisfiable;
    return p;
}

CheckResult check_le(std::string name, double value, double threshold) {
    return {std::move(name), value, threshold, value <= threshold};
}

CheckResult check_ge(std::string name, double value, double threshold) {
    return {std::move(name), value, threshold, value >= threshold};
}

Grid interior(const Grid& g, std::size_t n) {
    const double margin = 0.05 * (g.hi - g.lo);
    return {g.lo + margin, g.hi - margin, n};
}

}  // namespace

std::vector<std::string> preset_names() {
    return {"gbm", "ou", "linear", "nonlinear_nonautonomous", "negative_control"};
}

Preset get_preset(const std::string& name) {
    if (name == "gbm") return gbm();
    if (name == "ou") return ou();
    if (name == "linear") return linear();
    if (name == "nonlinear_nonautonomous") return nonlinear_nonautonomous();
    if (name == "negative_control") return negative_control();
    throw std::invalid_argument("unknown preset '" + name + "'");
}

ResidualReport classify_preset(const Preset& preset) { return classify(preset.problem, preset.classify_box); }

Gauge preset_gauge(const Preset& preset, const ResidualReport& report) {
    return build_gauge(report, preset.F, preset.y0);
}

FunctionalSolution preset_solution(const Preset& preset) {
    const ResidualReport report = classify_preset(preset);
    if (report.verdict == Verdict::NotSatisfiable) {
        Gauge naive([](double) { return 0.0; }, Expr(), 0.0, preset.problem.T);
        return FunctionalSolution(report.model, std::move(naive));
    }
    return build_solution(report, preset_gauge(preset, report));
}

bool VerifyReport::passed() const {
    for (const auto& c : checks) {
        if (!c.passed) return false;
    }
    return true;
}

VerifyReport verify_preset(const Preset& preset) {
    VerifyReport out;
    out.preset = preset.name;
    const auto fail = [&](const std::string& name) { out.checks.push_back({name, NAN, 0.0, false}); };

    ResidualReport report;
    try {
        report = classify_preset(preset);
    } catch (const std::exception& e) {
        out.verdict = Verdict::NotSatisfiable;
        fail(std::string("classify: ") + e.what());
        return out;
    }
    out.verdict = report.verdict;
    out.checks.push_back({"verdict", static_cast<double>(report.verdict), static_cast<double>(preset.expected),
                          report.verdict == preset.expected});

    try {
        if (report.verdict == Verdict::NotSatisfiable) {
            out.checks.push_back(check_ge("max_x_variation", report.max_x_variation, 1.0));
            const FunctionalSolution fs = preset_solution(preset);
            const double t = preset.problem.T;
            const double x = preset.solution_box.x.hi;
            const double d = std::fabs(evaluate_via_path(fs, t, x, IntegrationPath::HorizontalThenVertical) -
                                       evaluate_via_path(fs, t, x, IntegrationPath::VerticalThenHorizontal));
            out.checks.push_back(check_ge("path_disagreement", d, 1e-3));
            return out;
        }

        if (preset.phi) {
            const Expr phi = bind(*preset.phi, preset.problem.params);
            double err = 0.0;
            for (Eigen::Index i = 0; i < report.t.size(); ++i) {
                err = std::max(err, std::fabs(report.phi[i] - eval(phi, report.t[i], 0.0)));
            }
            out.checks.push_back(check_le("phi", err, 1e-8));
        }

        const Gauge gauge = preset_gauge(preset, report);
        {
            const double T = gauge.T();
            const double h = 1e-5;
            double err = 0.0;
            for (int i = 0; i < 50; ++i) {
                const double t = (0.01 + 0.98 * i / 49.0) * T;
                const double dG = (gauge.G(t + h) - gauge.G(t - h)) / (2.0 * h);
                err = std::max(err, std::fabs(dG / gauge.G(t) + gauge.phi(t)));
            }
            out.checks.push_back(check_le("gauge_identity", err, 1e-6));
        }

        const FunctionalSolution fs = build_solution(report, gauge);
        const Eigen::VectorXd ts = preset.solution_box.t.points();
        const Eigen::VectorXd xs = preset.solution_box.x.points();
        const Eigen::MatrixXd Z = grid_export(fs, ts, xs);
        const double scale = 1.0 + Z.cwiseAbs().maxCoeff();

        if (preset.closed_form_z) {
            double err = 0.0;
            for (Eigen::Index i = 0; i < ts.size(); ++i) {
                for (Eigen::Index j = 0; j < xs.size(); ++j) {
                    err = std::max(err, std::fabs(Z(i, j) - preset.closed_form_z(ts[i], xs[j])));
                }
            }
            out.checks.push_back(check_le("closed_form", err / scale, 1e-6));
        }

        double monotone = INFINITY;
        for (Eigen::Index i = 0; i < Z.rows(); ++i) {
            for (Eigen::Index j = 1; j < Z.cols(); ++j) monotone = std::min(monotone, Z(i, j) - Z(i, j - 1));
        }
        out.checks.push_back({"monotone", monotone, 0.0, monotone > 0.0});

        const Box pde_grid{interior(preset.solution_box.t, 15), interior(preset.solution_box.x, 15)};
        const PdeResiduals r = pde_residuals(fs, pde_grid);
        out.checks.push_back(check_le("pde_dz_dx", r.dz_dx / r.scale, 1e-5));
        out.checks.push_back(check_le("pde_dz_dt", r.dz_dt / r.scale, 1e-5));
        out.checks.push_back(check_le("pde_mixed", r.mixed / r.scale, 1e-4));
        out.checks.push_back(check_le("ito_drift", r.ito_drift / r.scale, 1e-4));

        std::mt19937_64 gen(20231);
        std::uniform_real_distribution<double> ut(preset.solution_box.t.lo, preset.solution_box.t.hi);
        std::uniform_real_distribution<double> ux(preset.solution_box.x.lo, preset.solution_box.x.hi);
        double spread = 0.0;
        for (int i = 0; i < 10; ++i) {
            const double t = ut(gen);
            const double x = ux(gen);
            const double a = evaluate_via_path(fs, t, x, IntegrationPath::HorizontalThenVertical);
            const double b = evaluate_via_path(fs, t, x, IntegrationPath::VerticalThenHorizontal);
            const double c = evaluate_via_path(fs, t, x, IntegrationPath::Diagonal);
            spread = std::max({spread, std::fabs(a - b), std::fabs(a - c), std::fabs(b - c)});
        }
        out.checks.push_back(check_le("path_invariance", spread / scale, 1e-6));
    } catch (const std::exception& e) {
        fail(std::string("pipeline: ") + e.what());
    }
    return out;
}

}  // namespace funsde
