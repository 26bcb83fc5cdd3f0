#include "funsde/condition.hpp"

#include <cmath>
#include <stdexcept>

#include "funsde/errors.hpp"

namespace funsde {

Eigen::VectorXd Grid::points() const {
    if (n == 1) return Eigen::VectorXd::Constant(1, lo);
    return Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(n), lo, hi);
}

SdeModel::SdeModel(const SdeProblem& problem)
    : problem_(problem),
      mu_(bind(problem.mu, problem.params)),
      sigma_(bind(problem.sigma, problem.params)) {
    for (const Expr* e : {&mu_, &sigma_}) {
        const auto unbound = parameters(*e);
        if (!unbound.empty()) throw UnboundParameterError(*unbound.begin());
    }
    dmu_dx_ = differentiate(mu_, Var::x);
    dsigma_dx_ = differentiate(sigma_, Var::x);
    dsigma_dt_ = differentiate(sigma_, Var::t);
    d2sigma_dx2_ = differentiate(dsigma_dx_, Var::x);
}

double SdeModel::ResidualTerms::magnitude() const {
    return std::fabs(dmu_dx) + std::fabs(drift_coupling) + std::fabs(time_variation) +
           std::fabs(curvature);
}

SdeModel::ResidualTerms SdeModel::residual_terms(double t, double x) const {
    const double s = sigma(t, x);
    if (s == 0.0) throw DomainError("sigma vanishes at (t, x)");
    const double m = mu(t, x);
    return {dmu_dx(t, x), m / s * dsigma_dx(t, x), dsigma_dt(t, x) / s, 0.5 * s * d2sigma_dx2(t, x)};
}

double residual(const SdeProblem& problem, double t, double x) {
    return SdeModel(problem).residual(t, x);
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::BrownianCase: return "BrownianCase";
        case Verdict::GaugedCase: return "GaugedCase";
        case Verdict::NotSatisfiable: return "NotSatisfiable";
    }
    return "?";
}

ResidualReport classify(const SdeProblem& problem, const Box& box, ClassifyTolerances tol) {
    if (box.t.n < 5 || box.x.n < 5 || !(box.t.hi > box.t.lo) || !(box.x.hi > box.x.lo)) {
        throw std::invalid_argument("classify needs a non-degenerate box of at least 5 x 5 points");
    }
    ResidualReport report;
    report.model = std::make_shared<const SdeModel>(problem);
    report.tolerances = tol;
    report.t = box.t.points();
    report.x = box.x.points();
    report.x_ref = box.x.midpoint();
    const auto nt = report.t.size();
    const auto nx = report.x.size();
    report.residual.resize(nt, nx);
    report.phi.resize(nt);

    const SdeModel& model = *report.model;
    const auto terms_at = [&](double t, double x) {
        if (!(model.sigma(t, x) > 0.0)) {
            throw DomainError("sigma is not positive at t = " + std::to_string(t) +
                              ", x = " + std::to_string(x));
        }
        return model.residual_terms(t, x);
    };

    double magnitude = 0.0;
    for (Eigen::Index i = 0; i < nt; ++i) {
        const auto ref = terms_at(report.t[i], report.x_ref);
        report.phi[i] = ref.value();
        magnitude = std::max(magnitude, ref.magnitude());
        for (Eigen::Index j = 0; j < nx; ++j) {
            const auto terms = terms_at(report.t[i], report.x[j]);
            report.residual(i, j) = terms.value();
            magnitude = std::max(magnitude, terms.magnitude());
        }
    }
    report.scale = 1.0 + magnitude;
    report.sup_phi = report.phi.cwiseAbs().maxCoeff();
    report.max_x_variation = (report.residual.colwise() - report.phi).cwiseAbs().maxCoeff();

    if (report.max_x_variation > tol.variation * (1.0 + report.sup_phi)) {
        report.verdict = Verdict::NotSatisfiable;
    } else if (report.sup_phi <= tol.brownian * report.scale) {
        report.verdict = Verdict::BrownianCase;
    } else {
        report.verdict = Verdict::GaugedCase;
    }
    return report;
}

namespace {

double require_positive_horizon(double T) {
    if (!(T > 0.0)) throw std::invalid_argument("gauge horizon must be positive");
    return T;
}

Expr require_time_only(Expr F) {
    if (const auto unbound = parameters(F); !unbound.empty()) throw UnboundParameterError(*unbound.begin());
    if (depends_on(F, Var::x)) throw std::invalid_argument("F must depend on t only");
    return F;
}

}  // namespace

Gauge::Gauge(std::function<double(double)> phi, Expr F, double y0, double T, ode::Tolerances tol)
    : phi_(std::move(phi)),
      F_(require_time_only(std::move(F))),
      y0_(y0),
      T_(require_positive_horizon(T)),
      Phi_(ode::integrate([this](double s, double) { return phi_(s); }, 0.0, 0.0, T, tol)),
      m_(ode::integrate([this](double s, double) { return this->F(s); }, y0, 0.0, T, tol)),
      v_(ode::integrate([this](double s, double) { return std::exp(-2.0 * Phi_(s)); }, 0.0, 0.0, T,
                        tol)) {}

Gauge build_gauge(const ResidualReport& report, const Expr& F, double y0, ode::Tolerances tol) {
    if (report.verdict == Verdict::NotSatisfiable) {
        throw NotSatisfiableError("integration condition does not hold: residual varies in x by " +
                                  std::to_string(report.max_x_variation));
    }
    const auto& problem = report.model->problem();
    const Expr bound_F = bind(F, problem.params);
    if (report.verdict == Verdict::BrownianCase) {
        return Gauge([](double) { return 0.0; }, bound_F, y0, problem.T, tol);
    }
    auto model = report.model;
    const double x_ref = report.x_ref;
    return Gauge([model, x_ref](double t) { return model->residual(t, x_ref); }, bound_F, y0,
                 problem.T, tol);
}

Gauge build_gauge(const Expr& phi, const Expr& F, double y0, double T, const Params& params,
                  ode::Tolerances tol) {
    const Expr bound_phi = bind(phi, params);
    if (depends_on(bound_phi, Var::x)) throw std::invalid_argument("phi must depend on t only");
    if (!parameters(bound_phi).empty()) throw UnboundParameterError(*parameters(bound_phi).begin());
    return Gauge([bound_phi](double t) { return eval(bound_phi, t, 0.0); }, bind(F, params), y0, T,
                 tol);
}

Expr mu_from_sigma(const Expr& sigma, const Expr& phi, const Expr& gamma) {
    if (depends_on(phi, Var::x) || depends_on(gamma, Var::x)) {
        throw std::invalid_argument("phi and gamma must depend on t only");
    }
    const Expr half = Expr::constant(0.5);
    const Expr integrand = (differentiate(sigma, Var::t) + phi * sigma) / pow(sigma, Expr::constant(2.0));
    const Expr body = simplify(substitute(integrand, Var::x, Expr::variable(Var::xi)));
    const Expr integral = Expr::quad(body, Expr::constant(0.0), Expr::variable(Var::x));
    return simplify((half * differentiate(sigma, Var::x) + integral + gamma) * sigma);
}

Expr mu_autonomous(const Expr& sigma, double c) {
    if (depends_on(sigma, Var::t)) throw std::invalid_argument("autonomous sigma must not depend on t");
    return simplify((Expr::constant(0.5) * differentiate(sigma, Var::x) + Expr::constant(c)) * sigma);
}

}  // namespace funsde
