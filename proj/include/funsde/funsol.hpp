#pragma once

#include <Eigen/Dense>
#include <memory>

#include "funsde/condition.hpp"
#include "funsde/ode.hpp"

namespace funsde {

struct SolverOptions {
    ode::Tolerances tol;
    /// Length of the first vertical chunk; chunk k covers [L (2^k - 1), L (2^(k+1) - 1)].
    double vertical_chunk = 4.0;
};

enum class IntegrationPath { HorizontalThenVertical, VerticalThenHorizontal, Diagonal };

/// Dense horizontal solution dZ/dt = f(t, Z), Z(0) = x0 with
/// f = mu - sigma (1/2 dsigma/dZ + F / G).
ode::DenseSolution solve_horizontal(const SdeModel& model, const Gauge& gauge, ode::Tolerances tol = {});

/// Z(t, x) such that Z(t, Y_t) solves the SDE. The horizontal solve happens at
/// construction; vertical solves dZ/dx = sigma(t, Z) / G(t) are built per distinct t on
/// first use and cached. Concurrent evaluation is safe and gives the same values as
/// sequential evaluation.
///
/// The constructor does not check the integration condition, which lets a negative
/// control be pushed through the same machinery; build_solution() does.
class FunctionalSolution {
public:
    FunctionalSolution(const SdeProblem& problem, Gauge gauge, SolverOptions options = {});
    FunctionalSolution(std::shared_ptr<const SdeModel> model, Gauge gauge, SolverOptions options = {});
    ~FunctionalSolution();
    FunctionalSolution(FunctionalSolution&&) noexcept;
    FunctionalSolution& operator=(FunctionalSolution&&) noexcept;

    /// Z(t, x). Throws std::out_of_range for t outside [0, T].
    double operator()(double t, double x) const;

    /// dZ/dx = sigma(t, Z) / G(t), from the vertical equation.
    double dz_dx(double t, double x) const;

    /// f(t, z) of the horizontal equation.
    double horizontal_rhs(double t, double z) const;
    /// g(t, z) = sigma(t, z) / G(t) of the vertical equation.
    double vertical_rhs(double t, double z) const;

    const ode::DenseSolution& horizontal() const { return horizontal_; }
    const SdeModel& model() const { return *model_; }
    const SdeProblem& problem() const { return model_->problem(); }
    const Gauge& gauge() const { return gauge_; }
    const SolverOptions& options() const { return options_; }
    double T() const { return model_->problem().T; }
    std::size_t cached_columns() const;

private:
    struct Cache;

    std::shared_ptr<const SdeModel> model_;
    Gauge gauge_;
    SolverOptions options_;
    ode::DenseSolution horizontal_;
    std::unique_ptr<Cache> cache_;
};

/// Checked construction: throws NotSatisfiableError when the report says so.
FunctionalSolution build_solution(const ResidualReport& report, Gauge gauge, SolverOptions options = {});

double evaluate(const FunctionalSolution& fs, double t, double x);

/// Integrates dZ/dtau = f gamma_1' + g gamma_2' along the chosen path from (0, 0).
double evaluate_via_path(const FunctionalSolution& fs, double t, double x, IntegrationPath path);

/// Solves Z(t, x) = target for x. The bracket is doubled up to 60 times until it
/// encloses the target, then bisection and a Newton polish using dZ/dx. Throws
/// BracketExhaustedError when the doublings run out or a doubling leaves Z unchanged.
double invert(const FunctionalSolution& fs, double t, double target, double lo = -1.0, double hi = 1.0);

/// Pr{X_t <= x} = D(Z_t^{-1}(x)) with D the normal law of Y_t (mean m(t), variance v(t)).
double cdf(const FunctionalSolution& fs, double t, double x);

/// Row per t, column per x.
Eigen::MatrixXd grid_export(const FunctionalSolution& fs, const Eigen::VectorXd& t, const Eigen::VectorXd& x);

/// Finite-difference checks of the PDE system satisfied by Z.
struct PdeResiduals {
    double dz_dx = 0.0;        // |Z_x - sigma / G|
    double dz_dt = 0.0;        // |Z_t - f|
    double mixed = 0.0;        // |d/dt (sigma / G) - d/dx f| along Z
    double ito_drift = 0.0;    // |Z_t + F Z_x + G^2 / 2 Z_xx - mu|
    double scale = 1.0;        // 1 + max |Z| on the grid
};

PdeResiduals pde_residuals(const FunctionalSolution& fs, const Box& grid, double h = 1e-4);

}  // namespace funsde
