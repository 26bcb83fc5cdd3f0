#pragma once

#include <functional>
#include <span>
#include <vector>

namespace funsde::ode {

struct Tolerances {
    double rtol = 1e-10;
    double atol = 1e-12;
};

using Rhs = std::function<double(double s, double z)>;

/// Piecewise cubic Hermite interpolant through the accepted steps of an integration; each
/// step contributes its end point and a midpoint knot. Breakpoints are stored in integration order, so a backward solve has decreasing s.
class DenseSolution {
public:
    DenseSolution(std::vector<double> s, std::vector<double> z, std::vector<double> dz);

    /// Throws std::out_of_range outside [lower(), upper()].
    double operator()(double s) const;
    double derivative(double s) const;

    double start() const { return s_.front(); }
    double end() const { return s_.back(); }
    double lower() const { return std::min(s_.front(), s_.back()); }
    double upper() const { return std::max(s_.front(), s_.back()); }
    bool contains(double s) const { return s >= lower() && s <= upper(); }
    double initial_value() const { return z_.front(); }
    double final_value() const { return z_.back(); }

    std::span<const double> breakpoints() const { return s_; }
    std::span<const double> values() const { return z_; }
    /// Number of knot intervals (two per accepted step).
    std::size_t intervals() const { return s_.size() - 1; }

private:
    std::size_t interval(double s) const;

    std::vector<double> s_;
    std::vector<double> z_;
    std::vector<double> dz_;
    bool forward_;
};

/// Runge-Kutta-Fehlberg 4(5) with PI step control and cubic Hermite dense output.
/// `b` may be smaller than `a` (backward integration).
/// Throws StepUnderflowError or NonFiniteRhsError.
DenseSolution integrate(const Rhs& rhs, double z0, double a, double b, Tolerances tol = {});

/// Adaptive Simpson quadrature with Richardson correction. Throws QuadratureError when
/// the recursion depth limit is reached or the integrand is not finite.
double quad(const std::function<double(double)>& f, double a, double b, double tol = 1e-10);

}  // namespace funsde::ode
