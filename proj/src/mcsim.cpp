#include "funsde/mcsim.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "funsde/errors.hpp"

namespace funsde {

namespace rng {

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t hash(std::uint64_t seed, std::uint64_t path, std::uint64_t step) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ (path * 0xd1b54a32d192ed03ULL));
    h = splitmix64(h ^ (step * 0xabc98388fb8fac03ULL));
    return h;
}

double uniform(std::uint64_t seed, std::uint64_t path, std::uint64_t step) {
    // 53 random bits, shifted by half an ulp so 0 and 1 are never returned.
    return (static_cast<double>(hash(seed, path, step) >> 11) + 0.5) * 0x1.0p-53;
}

double standard_normal(std::uint64_t seed, std::uint64_t path, std::uint64_t step) {
    return inverse_normal_cdf(uniform(seed, path, step));
}

double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -std::numeric_limits<double>::infinity();
        if (p == 1.0) return std::numeric_limits<double>::infinity();
        throw std::domain_error("probability outside [0, 1]");
    }
    // Acklam's rational approximation (relative error 1.15e-9) ...
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // ... refined by one Halley step against the complementary error function.
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

}  // namespace rng

namespace {

/// Runs body(path) for every path. Paths are split into contiguous blocks per worker;
/// each path's work only touches its own outputs. If several paths fail, the error of
/// the lowest path index is rethrown so failures do not depend on scheduling.
template <class Body>
void for_each_path(std::size_t n_paths, unsigned workers, Body body) {
    const unsigned n_workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n_paths, 1))));
    if (n_workers == 1) {
        for (std::size_t p = 0; p < n_paths; ++p) body(p);
        return;
    }
    std::vector<std::exception_ptr> errors(n_workers);
    std::vector<std::size_t> failed_at(n_workers, std::numeric_limits<std::size_t>::max());
    std::vector<std::thread> threads;
    threads.reserve(n_workers);
    const std::size_t block = (n_paths + n_workers - 1) / n_workers;
    for (unsigned w = 0; w < n_workers; ++w) {
        threads.emplace_back([&, w] {
            const std::size_t begin = w * block;
            const std::size_t end = std::min(n_paths, begin + block);
            for (std::size_t p = begin; p < end; ++p) {
                try {
                    body(p);
                } catch (...) {
                    errors[w] = std::current_exception();
                    failed_at[w] = p;
                    return;
                }
            }
        });
    }
    for (auto& th : threads) th.join();
    const auto first = std::min_element(failed_at.begin(), failed_at.end());
    if (*first != std::numeric_limits<std::size_t>::max()) {
        std::rethrow_exception(errors[static_cast<std::size_t>(first - failed_at.begin())]);
    }
}

void validate(const SimConfig& cfg) {
    if (cfg.n_steps < 1) throw std::invalid_argument("n_steps must be at least 1");
    if (cfg.substeps < 1) throw std::invalid_argument("substeps must be at least 1");
    if (!(cfg.T > 0.0)) throw std::invalid_argument("simulation horizon must be positive");
}

Eigen::VectorXd time_grid(const SimConfig& cfg) {
    Eigen::VectorXd t(static_cast<Eigen::Index>(cfg.n_steps + 1));
    for (std::size_t k = 0; k <= cfg.n_steps; ++k) t[static_cast<Eigen::Index>(k)] = cfg.time(k);
    return t;
}

// Deterministic per-step gauge tables, shared by all paths.
struct GaugeTable {
    std::vector<double> F_dt;
    std::vector<double> G;
};

GaugeTable gauge_table(const Gauge& gauge, const SimConfig& cfg) {
    GaugeTable table;
    table.F_dt.resize(cfg.n_steps);
    table.G.resize(cfg.n_steps);
    const double dt = cfg.dt();
    for (std::size_t k = 0; k < cfg.n_steps; ++k) {
        const double t = cfg.time(k);
        table.F_dt[k] = gauge.F(t) * dt;
        table.G[k] = gauge.G(t);
    }
    return table;
}

double em_step(const SdeModel& model, double t, double x, double dt, double dB, std::size_t path,
               std::size_t step) {
    double next;
    try {
        next = x + model.mu(t, x) * dt + model.sigma(t, x) * dB;
    } catch (const DomainError&) {
        next = NAN;
    }
    if (!std::isfinite(next)) {
        throw SimulationError("Euler-Maruyama state became non-finite on path " + std::to_string(path) +
                                  " at step " + std::to_string(step),
                              path, step);
    }
    return next;
}

SimConfig level_config(const SimConfig& finest, std::size_t n_steps) {
    if (n_steps == 0 || finest.n_steps % n_steps != 0) {
        throw std::invalid_argument("every level must divide the finest number of steps");
    }
    SimConfig cfg = finest;
    cfg.n_steps = n_steps;
    cfg.substeps = finest.substeps * (finest.n_steps / n_steps);
    cfg.keep_paths = false;
    return cfg;
}

double percentile90(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(values.size())));
    return values[std::max<std::size_t>(rank, 1) - 1];
}

}  // namespace

double SimConfig::time(std::size_t k) const {
    return T * static_cast<double>(k) / static_cast<double>(n_steps);
}

double brownian_increment(const SimConfig& cfg, std::size_t path, std::size_t step) {
    const double fine_dt = cfg.T / static_cast<double>(cfg.n_steps * cfg.substeps);
    const double scale = std::sqrt(fine_dt);
    double sum = 0.0;
    const std::size_t first = step * cfg.substeps;
    for (std::size_t j = 0; j < cfg.substeps; ++j) {
        sum += scale * rng::standard_normal(cfg.seed, path, first + j);
    }
    return sum;
}

PathEnsemble simulate_em(const SdeModel& model, const SimConfig& cfg) {
    validate(cfg);
    PathEnsemble ens;
    ens.config = cfg;
    ens.t = time_grid(cfg);
    const auto n_paths = static_cast<Eigen::Index>(cfg.n_paths);
    const auto n_steps = static_cast<Eigen::Index>(cfg.n_steps);
    if (cfg.keep_paths) {
        ens.dB.resize(n_paths, n_steps);
        ens.x.resize(n_paths, n_steps + 1);
    }
    ens.x_T.resize(n_paths);
    const double dt = cfg.dt();
    const double x0 = model.problem().x0;
    for_each_path(cfg.n_paths, cfg.workers, [&](std::size_t p) {
        const auto row = static_cast<Eigen::Index>(p);
        double x = x0;
        if (cfg.keep_paths) ens.x(row, 0) = x;
        for (std::size_t k = 0; k < cfg.n_steps; ++k) {
            const double dB = brownian_increment(cfg, p, k);
            x = em_step(model, ens.t[static_cast<Eigen::Index>(k)], x, dt, dB, p, k);
            if (cfg.keep_paths) {
                ens.dB(row, static_cast<Eigen::Index>(k)) = dB;
                ens.x(row, static_cast<Eigen::Index>(k) + 1) = x;
            }
        }
        ens.x_T[row] = x;
    });
    return ens;
}

PathEnsemble simulate_em(const SdeProblem& problem, const SimConfig& cfg) {
    return simulate_em(SdeModel(problem), cfg);
}

void simulate_y(const Gauge& gauge, PathEnsemble& ens) {
    const SimConfig& cfg = ens.config;
    const auto table = gauge_table(gauge, cfg);
    const auto n_paths = static_cast<Eigen::Index>(cfg.n_paths);
    if (cfg.keep_paths) ens.y.resize(n_paths, static_cast<Eigen::Index>(cfg.n_steps) + 1);
    ens.y_T.resize(n_paths);
    for_each_path(cfg.n_paths, cfg.workers, [&](std::size_t p) {
        const auto row = static_cast<Eigen::Index>(p);
        double y = gauge.y0();
        if (cfg.keep_paths) ens.y(row, 0) = y;
        for (std::size_t k = 0; k < cfg.n_steps; ++k) {
            const auto col = static_cast<Eigen::Index>(k);
            const double dB = cfg.keep_paths ? ens.dB(row, col) : brownian_increment(cfg, p, k);
            y += table.F_dt[k] + table.G[k] * dB;
            if (cfg.keep_paths) ens.y(row, col + 1) = y;
        }
        ens.y_T[row] = y;
    });
    ens.has_y = true;
}

ErrorStats coupled_validation(const FunctionalSolution& fs, const SimConfig& finest,
                              std::span<const std::size_t> levels) {
    validate(finest);
    if (finest.T > fs.T()) throw std::invalid_argument("simulation horizon exceeds the solution horizon");
    const SdeModel& model = fs.model();
    const Gauge& gauge = fs.gauge();
    ErrorStats stats;
    for (const std::size_t n : levels) {
        const SimConfig cfg = level_config(finest, n);
        const auto table = gauge_table(gauge, cfg);
        const double dt = cfg.dt();
        std::vector<double> sup(cfg.n_paths, 0.0);
        for_each_path(cfg.n_paths, cfg.workers, [&](std::size_t p) {
            double x = model.problem().x0;
            double y = gauge.y0();
            double worst = std::fabs(x - fs(0.0, y));
            for (std::size_t k = 0; k < cfg.n_steps; ++k) {
                const double dB = brownian_increment(cfg, p, k);
                x = em_step(model, cfg.time(k), x, dt, dB, p, k);
                y += table.F_dt[k] + table.G[k] * dB;
                worst = std::max(worst, std::fabs(x - fs(cfg.time(k + 1), y)));
            }
            sup[p] = worst;
        });
        ConvergenceRow row;
        row.n_steps = n;
        row.dt = dt;
        row.mean_sup_error = std::accumulate(sup.begin(), sup.end(), 0.0) / static_cast<double>(sup.size());
        row.max_sup_error = *std::max_element(sup.begin(), sup.end());
        if (!stats.table.empty()) row.ratio = stats.table.back().mean_sup_error / row.mean_sup_error;
        stats.table.push_back(row);
    }
    return stats;
}

ErrorStats average(std::span<const ErrorStats> runs) {
    if (runs.empty()) return {};
    ErrorStats out = runs.front();
    for (std::size_t i = 0; i < out.table.size(); ++i) {
        double mean = 0.0;
        double max = 0.0;
        for (const auto& run : runs) {
            if (run.table.size() != out.table.size() || run.table[i].n_steps != out.table[i].n_steps) {
                throw std::invalid_argument("convergence tables have different levels");
            }
            mean += run.table[i].mean_sup_error;
            max += run.table[i].max_sup_error;
        }
        out.table[i].mean_sup_error = mean / static_cast<double>(runs.size());
        out.table[i].max_sup_error = max / static_cast<double>(runs.size());
        out.table[i].ratio = i == 0 ? 0.0 : out.table[i - 1].mean_sup_error / out.table[i].mean_sup_error;
    }
    return out;
}

CollapseStats path_independence_test(const FunctionalSolution& fs, const SimConfig& finest, std::size_t n_bins,
                                     std::span<const std::size_t> levels) {
    validate(finest);
    if (n_bins < 1) throw std::invalid_argument("need at least one bin");
    if (finest.T > fs.T()) throw std::invalid_argument("simulation horizon exceeds the solution horizon");
    CollapseStats stats;
    for (const std::size_t n : levels) {
        const SimConfig cfg = level_config(finest, n);
        PathEnsemble ens = simulate_em(fs.model(), cfg);
        simulate_y(fs.gauge(), ens);

        const double T = cfg.T;
        std::vector<double> deviation(cfg.n_paths);
        for_each_path(cfg.n_paths, cfg.workers, [&](std::size_t p) {
            const auto i = static_cast<Eigen::Index>(p);
            deviation[p] = std::fabs(ens.x_T[i] - fs(T, ens.y_T[i]));
        });

        std::vector<std::size_t> order(cfg.n_paths);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return ens.y_T[static_cast<Eigen::Index>(a)] < ens.y_T[static_cast<Eigen::Index>(b)];
        });

        CollapseRow row;
        row.n_steps = n;
        row.dt = cfg.dt();
        for (std::size_t b = 0; b < n_bins; ++b) {
            const std::size_t begin = b * cfg.n_paths / n_bins;
            const std::size_t end = (b + 1) * cfg.n_paths / n_bins;
            if (end - begin < 2) continue;
            std::vector<double> values;
            values.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) values.push_back(deviation[order[i]]);
            const double spread = percentile90(std::move(values));
            row.bin_spread.push_back(spread);
            row.spread = std::max(row.spread, spread);
        }
        stats.table.push_back(std::move(row));
    }
    return stats;
}

KsStats empirical_cdf_test(const FunctionalSolution& fs, const SimConfig& base, double t,
                           std::span<const double> x_grid) {
    validate(base);
    const double dt = base.dt();
    const auto k = static_cast<std::size_t>(std::llround(t / dt));
    if (k == 0 || k > base.n_steps || std::fabs(static_cast<double>(k) * dt - t) > 1e-9 * base.T) {
        throw std::invalid_argument("t must be a positive point of the simulation grid");
    }
    SimConfig cfg = base;
    cfg.n_steps = k;
    cfg.T = base.time(k);
    cfg.keep_paths = false;
    const PathEnsemble ens = simulate_em(fs.model(), cfg);

    std::vector<double> samples(ens.x_T.data(), ens.x_T.data() + ens.x_T.size());
    std::sort(samples.begin(), samples.end());
    const auto n = static_cast<double>(samples.size());

    KsStats stats;
    stats.samples = samples.size();
    if (x_grid.empty()) {
        std::vector<double> model_cdf(samples.size());
        for_each_path(samples.size(), cfg.workers, [&](std::size_t i) { model_cdf[i] = cdf(fs, cfg.T, samples[i]); });
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const double above = static_cast<double>(i + 1) / n - model_cdf[i];
            const double below = model_cdf[i] - static_cast<double>(i) / n;
            const double d = std::max(above, below);
            if (d > stats.statistic) {
                stats.statistic = d;
                stats.x_at = samples[i];
            }
        }
    } else {
        for (const double x : x_grid) {
            const auto count = std::upper_bound(samples.begin(), samples.end(), x) - samples.begin();
            const double d = std::fabs(static_cast<double>(count) / n - cdf(fs, cfg.T, x));
            if (d > stats.statistic) {
                stats.statistic = d;
                stats.x_at = x;
            }
        }
    }
    return stats;
}

}  // namespace funsde
