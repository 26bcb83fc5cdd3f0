#include "funsde/funsol.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <shared_mutex>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "funsde/errors.hpp"

namespace funsde {

namespace {

constexpr int kMaxBracketDoublings = 60;
constexpr int kMaxChunks = 64;

struct Column {
    double z0 = 0.0;
    double G = 1.0;
    std::vector<std::shared_ptr<const ode::DenseSolution>> up;    // x >= 0
    std::vector<std::shared_ptr<const ode::DenseSolution>> down;  // x <= 0
};

}  // namespace

struct FunctionalSolution::Cache {
    mutable std::shared_mutex mutex;
    std::unordered_map<std::uint64_t, Column> columns;
};

ode::DenseSolution solve_horizontal(const SdeModel& model, const Gauge& gauge, ode::Tolerances tol) {
    const auto f = [&](double t, double z) {
        const double s = model.sigma(t, z);
        return model.mu(t, z) - s * (0.5 * model.dsigma_dx(t, z) + gauge.F(t) / gauge.G(t));
    };
    const auto& p = model.problem();
    return ode::integrate(f, p.x0, 0.0, p.T, tol);
}

FunctionalSolution::FunctionalSolution(const SdeProblem& problem, Gauge gauge, SolverOptions options)
    : FunctionalSolution(std::make_shared<const SdeModel>(problem), std::move(gauge), options) {}

FunctionalSolution::FunctionalSolution(std::shared_ptr<const SdeModel> model, Gauge gauge,
                                       SolverOptions options)
    : model_(std::move(model)),
      gauge_(std::move(gauge)),
      options_(options),
      horizontal_(solve_horizontal(*model_, gauge_, options.tol)),
      cache_(std::make_unique<Cache>()) {
    if (gauge_.T() < model_->problem().T) {
        throw std::invalid_argument("gauge horizon is shorter than the problem horizon");
    }
}

FunctionalSolution::~FunctionalSolution() = default;
FunctionalSolution::FunctionalSolution(FunctionalSolution&&) noexcept = default;
FunctionalSolution& FunctionalSolution::operator=(FunctionalSolution&&) noexcept = default;

double FunctionalSolution::horizontal_rhs(double t, double z) const {
    const double s = model_->sigma(t, z);
    return model_->mu(t, z) - s * (0.5 * model_->dsigma_dx(t, z) + gauge_.F(t) / gauge_.G(t));
}

double FunctionalSolution::vertical_rhs(double t, double z) const {
    return model_->sigma(t, z) / gauge_.G(t);
}

double FunctionalSolution::operator()(double t, double x) const {
    if (!(t >= 0.0 && t <= T())) throw std::out_of_range("t outside [0, T]");
    if (!std::isfinite(x)) throw std::out_of_range("x must be finite");

    const double L = options_.vertical_chunk;
    const double ax = std::fabs(x);
    int k = 0;
    while (ax > L * (std::ldexp(1.0, k + 1) - 1.0)) {
        if (++k >= kMaxChunks) throw std::out_of_range("x beyond the vertical solution range");
    }
    const bool upward = x >= 0.0;
    const std::uint64_t key = std::bit_cast<std::uint64_t>(t);

    std::shared_ptr<const ode::DenseSolution> chunk;
    {
        std::shared_lock lock(cache_->mutex);
        if (auto it = cache_->columns.find(key); it != cache_->columns.end()) {
            const auto& chunks = upward ? it->second.up : it->second.down;
            if (static_cast<int>(chunks.size()) > k) chunk = chunks[static_cast<std::size_t>(k)];
        }
    }
    if (!chunk) {
        std::unique_lock lock(cache_->mutex);
        auto [it, inserted] = cache_->columns.try_emplace(key);
        Column& col = it->second;
        if (inserted) {
            col.z0 = horizontal_(t);
            col.G = gauge_.G(t);
        }
        auto& chunks = upward ? col.up : col.down;
        const double dir = upward ? 1.0 : -1.0;
        const double G = col.G;
        const auto g = [&](double, double z) { return model_->sigma(t, z) / G; };
        while (static_cast<int>(chunks.size()) <= k) {
            const int j = static_cast<int>(chunks.size());
            const double a = dir * L * (std::ldexp(1.0, j) - 1.0);
            const double b = dir * L * (std::ldexp(1.0, j + 1) - 1.0);
            const double z_start = j == 0 ? col.z0 : chunks.back()->final_value();
            chunks.push_back(
                std::make_shared<const ode::DenseSolution>(ode::integrate(g, z_start, a, b, options_.tol)));
        }
        chunk = chunks[static_cast<std::size_t>(k)];
    }
    return (*chunk)(x);
}

double FunctionalSolution::dz_dx(double t, double x) const { return vertical_rhs(t, (*this)(t, x)); }

std::size_t FunctionalSolution::cached_columns() const {
    std::shared_lock lock(cache_->mutex);
    return cache_->columns.size();
}

FunctionalSolution build_solution(const ResidualReport& report, Gauge gauge, SolverOptions options) {
    if (report.verdict == Verdict::NotSatisfiable) {
        throw NotSatisfiableError("no path-independent functional solution: residual varies in x by " +
                                  std::to_string(report.max_x_variation));
    }
    return FunctionalSolution(report.model, std::move(gauge), options);
}

double evaluate(const FunctionalSolution& fs, double t, double x) { return fs(t, x); }

double evaluate_via_path(const FunctionalSolution& fs, double t, double x, IntegrationPath path) {
    if (!(t >= 0.0 && t <= fs.T())) throw std::out_of_range("t outside [0, T]");
    const auto tol = fs.options().tol;
    const double x0 = fs.problem().x0;
    switch (path) {
        case IntegrationPath::HorizontalThenVertical: {
            const auto f = [&](double s, double z) { return fs.horizontal_rhs(s, z); };
            const double z_t = ode::integrate(f, x0, 0.0, t, tol).final_value();
            const auto g = [&](double, double z) { return fs.vertical_rhs(t, z); };
            return ode::integrate(g, z_t, 0.0, x, tol).final_value();
        }
        case IntegrationPath::VerticalThenHorizontal: {
            const auto g = [&](double, double z) { return fs.vertical_rhs(0.0, z); };
            const double z_x = ode::integrate(g, x0, 0.0, x, tol).final_value();
            const auto f = [&](double s, double z) { return fs.horizontal_rhs(s, z); };
            return ode::integrate(f, z_x, 0.0, t, tol).final_value();
        }
        case IntegrationPath::Diagonal: {
            const auto h = [&](double tau, double z) {
                return t * fs.horizontal_rhs(tau * t, z) + x * fs.vertical_rhs(tau * t, z);
            };
            return ode::integrate(h, x0, 0.0, 1.0, tol).final_value();
        }
    }
    throw std::logic_error("unknown integration path");
}

double invert(const FunctionalSolution& fs, double t, double target, double lo, double hi) {
    if (!std::isfinite(target)) throw BracketExhaustedError("target is not finite");
    if (!(hi > lo)) std::swap(lo, hi);
    if (hi == lo) hi = lo + 1.0;
    double z_lo = fs(t, lo);
    double z_hi = fs(t, hi);
    for (int i = 0; !(z_lo <= target && target <= z_hi); ++i) {
        if (i == kMaxBracketDoublings) {
            throw BracketExhaustedError("target " + std::to_string(target) +
                                        " outside the attainable range of Z(t, .)");
        }
        const double width = hi - lo;
        const auto probe = [&](double x) {
            try {
                return fs(t, x);
            } catch (const std::out_of_range&) {
                throw BracketExhaustedError("target " + std::to_string(target) +
                                            " not reached within the vertical solution range");
            }
        };
        // A doubling that leaves Z unchanged means Z(t, .) has flattened onto an asymptote.
        const auto saturated = [](double before, double after) {
            return std::fabs(after - before) <= 1e-12 * (1.0 + std::fabs(after));
        };
        bool stalled = false;
        if (z_lo > target) {
            lo -= width;
            const double z = probe(lo);
            stalled = saturated(z_lo, z);
            z_lo = z;
        }
        if (z_hi < target) {
            hi += width;
            const double z = probe(hi);
            stalled = stalled || saturated(z_hi, z);
            z_hi = z;
        }
        if (stalled && !(z_lo <= target && target <= z_hi)) {
            throw BracketExhaustedError("target " + std::to_string(target) +
                                        " beyond the asymptote of Z(t, .)");
        }
    }
    if (z_lo == target) return lo;
    if (z_hi == target) return hi;

    // Bisection down to a narrow bracket, then Newton safeguarded by the bracket.
    for (int i = 0; i < 200 && hi - lo > 1e-6 * std::max(1.0, std::fabs(lo)); ++i) {
        const double mid = 0.5 * (lo + hi);
        const double z_mid = fs(t, mid);
        if (z_mid <= target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double atol = 1e-12 * (1.0 + std::fabs(target));
    double x = 0.5 * (lo + hi);
    for (int i = 0; i < 100; ++i) {
        const double z = fs(t, x);
        const double r = z - target;
        if (std::fabs(r) <= atol) return x;
        if (r < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        const double slope = fs.vertical_rhs(t, z);
        double next = slope > 0.0 ? x - r / slope : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::fabs(next - x) <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::fabs(x))) {
            return next;
        }
        x = next;
    }
    return x;
}

double cdf(const FunctionalSolution& fs, double t, double x) {
    if (!(t > 0.0 && t <= fs.T())) throw std::out_of_range("cdf needs t in (0, T]");
    const Gauge& g = fs.gauge();
    const double z_t = fs.horizontal()(t);
    if (fs.model().sigma(t, z_t) == 0.0) {
        // Degenerate diffusion: X_t is the deterministic value Z(t, .).
        return x < z_t ? 0.0 : 1.0;
    }
    const double mean = g.m(t);
    const double sd = std::sqrt(g.v(t));
    const double y = invert(fs, t, x, mean - sd, mean + sd);
    return 0.5 * std::erfc(-(y - mean) / (sd * std::sqrt(2.0)));
}

Eigen::MatrixXd grid_export(const FunctionalSolution& fs, const Eigen::VectorXd& t, const Eigen::VectorXd& x) {
    Eigen::MatrixXd out(t.size(), x.size());
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        for (Eigen::Index j = 0; j < x.size(); ++j) out(i, j) = fs(t[i], x[j]);
    }
    return out;
}

PdeResiduals pde_residuals(const FunctionalSolution& fs, const Box& grid, double h) {
    const Eigen::VectorXd ts = grid.t.points();
    const Eigen::VectorXd xs = grid.x.points();
    const Gauge& g = fs.gauge();
    const SdeModel& model = fs.model();
    PdeResiduals out;
    double max_z = 0.0;
    for (const double t : ts) {
        for (const double x : xs) {
            const double z = fs(t, x);
            const double z_xp = fs(t, x + h);
            const double z_xm = fs(t, x - h);
            const double z_tp = fs(t + h, x);
            const double z_tm = fs(t - h, x);
            const double zx = (z_xp - z_xm) / (2.0 * h);
            const double zt = (z_tp - z_tm) / (2.0 * h);
            const double zxx = (z_xp - 2.0 * z + z_xm) / (h * h);

            out.dz_dx = std::max(out.dz_dx, std::fabs(zx - fs.vertical_rhs(t, z)));
            out.dz_dt = std::max(out.dz_dt, std::fabs(zt - fs.horizontal_rhs(t, z)));
            const double dg_dt = (fs.vertical_rhs(t + h, z_tp) - fs.vertical_rhs(t - h, z_tm)) / (2.0 * h);
            const double df_dx = (fs.horizontal_rhs(t, z_xp) - fs.horizontal_rhs(t, z_xm)) / (2.0 * h);
            out.mixed = std::max(out.mixed, std::fabs(dg_dt - df_dx));
            const double G = g.G(t);
            const double drift = zt + g.F(t) * zx + 0.5 * G * G * zxx;
            out.ito_drift = std::max(out.ito_drift, std::fabs(drift - model.mu(t, z)));
            max_z = std::max(max_z, std::fabs(z));
        }
    }
    out.scale = 1.0 + max_z;
    return out;
}

}  // namespace funsde
