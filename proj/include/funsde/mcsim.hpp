#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "funsde/condition.hpp"
#include "funsde/funsol.hpp"

namespace funsde {

/// Counter-based normal variates: one value per (seed, path, step), independent of the
/// order in which they are drawn.
namespace rng {

std::uint64_t hash(std::uint64_t seed, std::uint64_t path, std::uint64_t step);
/// Uniform in the open interval (0, 1).
double uniform(std::uint64_t seed, std::uint64_t path, std::uint64_t step);
double standard_normal(std::uint64_t seed, std::uint64_t path, std::uint64_t step);
/// Quantile of the standard normal law, accurate to a few ulps.
double inverse_normal_cdf(double p);

}  // namespace rng

struct SimConfig {
    std::size_t n_paths = 1000;
    std::size_t n_steps = 100;
    double T = 1.0;
    std::uint64_t seed = 0;
    /// Increments of the simulation grid are sums of `substeps` increments of an
    /// n_steps * substeps grid; a coarse and a fine run share one Brownian path.
    std::size_t substeps = 1;
    unsigned workers = 1;
    /// Store the full (n_paths x n_steps) arrays; terminal slices are always kept.
    bool keep_paths = true;

    double dt() const { return T / static_cast<double>(n_steps); }
    /// t_k = T k / n_steps.
    double time(std::size_t k) const;
};

/// Brownian increment of step k on the simulation grid of cfg.
double brownian_increment(const SimConfig& cfg, std::size_t path, std::size_t step);

using PathMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct PathEnsemble {
    SimConfig config;
    Eigen::VectorXd t;  // n_steps + 1 grid times
    PathMatrix dB;      // n_paths x n_steps, when keep_paths
    PathMatrix x;       // n_paths x (n_steps + 1), Euler-Maruyama, when keep_paths
    PathMatrix y;       // n_paths x (n_steps + 1), when keep_paths and simulate_y ran
    Eigen::VectorXd x_T;
    Eigen::VectorXd y_T;
    bool has_y = false;
};

/// X_{k+1} = X_k + mu(t_k, X_k) dt + sigma(t_k, X_k) dB_k. Throws SimulationError on
/// blow-up, naming the lowest failing path.
PathEnsemble simulate_em(const SdeModel& model, const SimConfig& cfg);
PathEnsemble simulate_em(const SdeProblem& problem, const SimConfig& cfg);

/// Y_{k+1} = Y_k + F(t_k) dt + G(t_k) dB_k with the increments already used for X.
void simulate_y(const Gauge& gauge, PathEnsemble& ensemble);

struct ConvergenceRow {
    std::size_t n_steps = 0;
    double dt = 0.0;
    double mean_sup_error = 0.0;
    double max_sup_error = 0.0;
    double ratio = 0.0;  // previous (coarser) mean / this mean; 0 for the first row
};

struct ErrorStats {
    std::vector<ConvergenceRow> table;  // coarse to fine
};

/// Per-path sup_k |X_em(t_k) - Z(t_k, Y(t_k))| for each grid in `levels`. cfg.n_steps
/// is the finest grid and every level must divide it.
ErrorStats coupled_validation(const FunctionalSolution& fs, const SimConfig& cfg,
                              std::span<const std::size_t> levels);

/// Averages mean/max sup errors over runs (e.g. several seeds) and recomputes ratios.
ErrorStats average(std::span<const ErrorStats> runs);

struct CollapseRow {
    std::size_t n_steps = 0;
    double dt = 0.0;
    double spread = 0.0;             // max over bins
    std::vector<double> bin_spread;  // 90th percentile of |X_em(T) - Z(T, Y_T)| per bin
};

struct CollapseStats {
    std::vector<CollapseRow> table;  // coarse to fine
};

/// Bins terminal values by Y_T (equal-count bins) and measures how far X_em(T) sits
/// from the curve Z(T, .). Bins with fewer than two paths are skipped.
CollapseStats path_independence_test(const FunctionalSolution& fs, const SimConfig& cfg, std::size_t n_bins,
                                     std::span<const std::size_t> levels);

struct KsStats {
    double statistic = 0.0;
    double x_at = 0.0;
    std::size_t samples = 0;
};

/// Kolmogorov-Smirnov distance between the empirical law of X_em(t) and cdf(fs, t, .).
/// With an empty x_grid the exact statistic over the sample points is returned.
KsStats empirical_cdf_test(const FunctionalSolution& fs, const SimConfig& cfg, double t,
                           std::span<const double> x_grid = {});

}  // namespace funsde
