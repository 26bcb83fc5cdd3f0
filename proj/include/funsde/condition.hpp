#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>

#include "funsde/expr.hpp"
#include "funsde/ode.hpp"

namespace funsde {

/// dX = mu(t, X) dt + sigma(t, X) dB on [0, T], X(0) = x0.
struct SdeProblem {
    Expr mu;
    Expr sigma;
    double x0 = 0.0;
    double T = 1.0;
    Params params;
};

/// Uniform grid lo, ..., hi with n points.
struct Grid {
    double lo = 0.0;
    double hi = 1.0;
    std::size_t n = 2;

    Eigen::VectorXd points() const;
    double midpoint() const { return 0.5 * (lo + hi); }
};

struct Box {
    Grid t;
    Grid x;
};

/// mu and sigma with parameters bound, plus the derivatives the integration condition
/// needs. Immutable; evaluation is thread-safe.
class SdeModel {
public:
    explicit SdeModel(const SdeProblem& problem);

    struct ResidualTerms {
        double dmu_dx;           // d mu / dX
        double drift_coupling;   // (mu / sigma) d sigma / dX
        double time_variation;   // (1 / sigma) d sigma / dt
        double curvature;        // (sigma / 2) d^2 sigma / dX^2
        double value() const { return dmu_dx - drift_coupling - time_variation - curvature; }
        double magnitude() const;
    };

    double mu(double t, double x) const { return eval(mu_, t, x); }
    double sigma(double t, double x) const { return eval(sigma_, t, x); }
    double dsigma_dx(double t, double x) const { return eval(dsigma_dx_, t, x); }
    double dsigma_dt(double t, double x) const { return eval(dsigma_dt_, t, x); }
    double d2sigma_dx2(double t, double x) const { return eval(d2sigma_dx2_, t, x); }
    double dmu_dx(double t, double x) const { return eval(dmu_dx_, t, x); }

    /// Throws DomainError where sigma vanishes.
    ResidualTerms residual_terms(double t, double x) const;
    double residual(double t, double x) const { return residual_terms(t, x).value(); }

    const SdeProblem& problem() const { return problem_; }
    const Expr& bound_mu() const { return mu_; }
    const Expr& bound_sigma() const { return sigma_; }

private:
    SdeProblem problem_;
    Expr mu_, sigma_, dmu_dx_, dsigma_dx_, dsigma_dt_, d2sigma_dx2_;
};

/// R = dmu/dX - (mu/sigma) dsigma/dX - (1/sigma) dsigma/dt - (sigma/2) d2sigma/dX2.
double residual(const SdeProblem& problem, double t, double x);

enum class Verdict { BrownianCase, GaugedCase, NotSatisfiable };
std::string to_string(Verdict v);

struct ClassifyTolerances {
    double brownian = 1e-8;   // sup|phi| <= brownian * scale
    double variation = 1e-6;  // max_x_variation <= variation * (1 + sup|phi|)
};

struct ResidualReport {
    Eigen::VectorXd t;
    Eigen::VectorXd x;
    Eigen::MatrixXd residual;  // rows follow t, columns follow x
    Eigen::VectorXd phi;       // residual at (t_i, x_ref)
    double x_ref = 0.0;
    double max_x_variation = 0.0;
    double sup_phi = 0.0;
    double scale = 1.0;  // 1 + largest summed magnitude of the residual terms on the box
    Verdict verdict = Verdict::NotSatisfiable;
    ClassifyTolerances tolerances;
    std::shared_ptr<const SdeModel> model;
};

/// Samples the residual on the box and decides whether it is a function of t alone.
/// The reference column is the x midpoint of the box.
ResidualReport classify(const SdeProblem& problem, const Box& box, ClassifyTolerances tol = {});

/// Auxiliary process Y = y0 + int F ds + int G dB with G = exp(-Phi), Phi = int_0^t phi.
class Gauge {
public:
    Gauge(std::function<double(double)> phi, Expr F, double y0, double T, ode::Tolerances tol = {});

    double phi(double t) const { return phi_(t); }
    double Phi(double t) const { return Phi_(t); }
    double G(double t) const { return std::exp(-Phi_(t)); }
    double F(double t) const { return eval(F_, t, 0.0); }
    /// Mean of Y_t.
    double m(double t) const { return m_(t); }
    /// Variance of Y_t.
    double v(double t) const { return v_(t); }
    double y0() const { return y0_; }
    double T() const { return T_; }
    const Expr& F_expr() const { return F_; }

private:
    std::function<double(double)> phi_;
    Expr F_;
    double y0_;
    double T_;
    ode::DenseSolution Phi_;
    ode::DenseSolution m_;
    ode::DenseSolution v_;
};

/// Gauge from a classification. BrownianCase uses phi = 0 exactly; GaugedCase evaluates
/// the residual along x = x_ref. Throws NotSatisfiableError.
Gauge build_gauge(const ResidualReport& report, const Expr& F = {}, double y0 = 0.0,
                  ode::Tolerances tol = {});

/// Gauge from an analytic phi(t). F and phi may reference parameters.
Gauge build_gauge(const Expr& phi, const Expr& F, double y0, double T, const Params& params = {},
                  ode::Tolerances tol = {});

/// mu = (1/2 dsigma/dX + int_0^X (dsigma/dt + phi sigma) / sigma^2 dxi + gamma) sigma, so
/// that the residual of (mu, sigma) is phi.
/// phi and gamma must not depend on x.
Expr mu_from_sigma(const Expr& sigma, const Expr& phi, const Expr& gamma);

/// Autonomous drift mu = (1/2 sigma' + c) sigma. Rejects sigma depending on t.
Expr mu_autonomous(const Expr& sigma, double c);

}  // namespace funsde
