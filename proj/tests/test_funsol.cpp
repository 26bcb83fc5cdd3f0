#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <thread>

#include "funsde/errors.hpp"
#include "funsde/funsol.hpp"
#include "oracles.hpp"

using namespace funsde;

namespace {

constexpr double kMu = 0.1, kSigma = 0.2, kX0 = 1.0;
constexpr double kTheta = 1.5, kMuHat = 0.7, kSigmaHat = 0.3, kR0 = 1.0;

SdeProblem gbm() { return {parse("mu_hat*x"), parse("sigma_hat*x"), kX0, 1.0, {{"mu_hat", kMu}, {"sigma_hat", kSigma}}}; }

SdeProblem ou() {
    return {parse("theta*(mu_hat-x)"), parse("sigma_hat"), kR0, 1.0,
            {{"theta", kTheta}, {"mu_hat", kMuHat}, {"sigma_hat", kSigmaHat}}};
}

SdeProblem squared() { return {parse("x^2"), parse("1"), -1.0, 1.0, {}}; }

double gbm_z(double t, double y) { return kX0 * std::exp((kMu - kSigma * kSigma / 2) * t + kSigma * y); }

double ou_z(double t, double y) { return kR0 * std::exp(-kTheta * t) + kSigmaHat * std::exp(-kTheta * t) * y; }

FunctionalSolution gbm_solution() { return FunctionalSolution(gbm(), build_gauge(parse("0"), parse("0"), 0.0, 1.0)); }

FunctionalSolution ou_solution(bool drift_f) {
    const auto p = ou();
    const Expr F = drift_f ? parse("theta*mu_hat/sigma_hat*exp(theta*t)") : parse("0");
    return FunctionalSolution(p, build_gauge(parse("-theta"), F, 0.0, p.T, p.params));
}

}  // namespace

TEST(Horizontal, Gbm) {
    const auto fs = gbm_solution();
    for (double t = 0.0; t <= 1.0; t += 0.125) {
        EXPECT_NEAR(fs.horizontal()(t), kX0 * std::exp((kMu - kSigma * kSigma / 2) * t), 1e-9);
    }
}

TEST(Horizontal, OuWithExponentialF) {
    const auto fs = ou_solution(true);
    for (double t = 0.0; t <= 1.0; t += 0.125) EXPECT_NEAR(fs.horizontal()(t), kR0 * std::exp(-kTheta * t), 1e-9);
}

TEST(Horizontal, OuWithZeroF) {
    const auto fs = ou_solution(false);
    for (double t = 0.0; t <= 1.0; t += 0.125) {
        EXPECT_NEAR(fs.horizontal()(t), kMuHat + (kR0 - kMuHat) * std::exp(-kTheta * t), 1e-9);
    }
}

TEST(Evaluate, GbmClosedForm) {
    const auto fs = gbm_solution();
    EXPECT_EQ(fs(0.0, 0.0), kX0);
    for (double t = 0.0; t <= 1.0; t += 0.25) {
        for (double y = -3.0; y <= 3.0; y += 0.5) EXPECT_NEAR(fs(t, y), gbm_z(t, y), 1e-8 * gbm_z(t, y)) << t << " " << y;
    }
}

TEST(Evaluate, OuClosedForm) {
    const auto fs = ou_solution(true);
    for (double t = 0.0; t <= 1.0; t += 0.25) {
        for (double y = -3.0; y <= 3.0; y += 0.5) EXPECT_NEAR(fs(t, y), ou_z(t, y), 1e-9);
    }
}

TEST(Evaluate, HomogeneousLinear) {
    const double a0 = 0.1, a1 = 0.05, b0 = 0.2, b1 = 0.1;
    const Params params{{"a0", a0}, {"a1", a1}, {"b0", b0}, {"b1", b1}};
    const SdeProblem p{parse("(a0+a1*t)*x"), parse("(b0+b1*t)*x"), kX0, 1.0, params};
    const FunctionalSolution fs(p, build_gauge(parse("-b1/(b0+b1*t)"), parse("0"), 0.0, 1.0, params));
    const auto alpha = [&](double s) { return a0 + a1 * s; };
    const auto beta = [&](double s) { return b0 + b1 * s; };
    for (double t = 0.0; t <= 1.0; t += 0.25) {
        const double drift = oracle::romberg([&](double s) { return alpha(s) - 0.5 * beta(s) * beta(s); }, 0.0, t);
        EXPECT_NEAR(fs.gauge().G(t), beta(t) / b0, 1e-9);
        for (double y = -3.0; y <= 3.0; y += 1.0) {
            const double expected = kX0 * std::exp(drift + b0 * y);
            EXPECT_NEAR(fs(t, y), expected, 1e-8 * expected);
        }
    }
}

TEST(Evaluate, CachesOneColumnPerTime) {
    const auto fs = gbm_solution();
    for (double y : {0.5, -0.5, 7.0, -9.0}) fs(0.5, y);
    fs(0.25, 1.0);
    EXPECT_EQ(fs.cached_columns(), 2u);
}

TEST(Evaluate, FarValuesIndependentOfQueryOrder) {
    const auto a = gbm_solution();
    const auto b = gbm_solution();
    const double first = a(0.5, 10.0);
    b(0.5, 1.0);
    b(0.5, 30.0);
    EXPECT_EQ(b(0.5, 10.0), first);
}

TEST(Evaluate, Errors) {
    const auto fs = gbm_solution();
    EXPECT_THROW(fs(-0.1, 0.0), std::out_of_range);
    EXPECT_THROW(fs(1.1, 0.0), std::out_of_range);
    EXPECT_THROW(fs(0.5, NAN), std::out_of_range);
}

TEST(Evaluate, BuildSolutionRejectsNotSatisfiable) {
    const auto report = classify(squared(), {{0.0, 1.0, 11}, {-2.0, 2.0, 11}});
    ASSERT_EQ(report.verdict, Verdict::NotSatisfiable);
    EXPECT_THROW(build_solution(report, build_gauge(parse("0"), parse("0"), 0.0, 1.0)), NotSatisfiableError);
}

TEST(Evaluate, ConcurrentReadersMatchSequential) {
    std::vector<std::pair<double, double>> points;
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> ut(0.0, 1.0), uy(-6.0, 6.0);
    for (int i = 0; i < 400; ++i) points.emplace_back(std::round(ut(gen) * 8) / 8, uy(gen));

    const auto seq = gbm_solution();
    std::vector<double> expected;
    for (const auto& [t, y] : points) expected.push_back(seq(t, y));

    const auto par = gbm_solution();
    std::vector<double> got(points.size());
    std::vector<std::thread> threads;
    for (int w = 0; w < 4; ++w) {
        threads.emplace_back([&, w] {
            for (std::size_t i = static_cast<std::size_t>(w); i < points.size(); i += 4) {
                got[i] = par(points[i].first, points[i].second);
            }
        });
    }
    for (auto& th : threads) th.join();
    for (std::size_t i = 0; i < points.size(); ++i) EXPECT_EQ(got[i], expected[i]) << i;
}

TEST(Paths, GbmAllAgreeWithClosedForm) {
    const auto fs = gbm_solution();
    for (auto path : {IntegrationPath::HorizontalThenVertical, IntegrationPath::VerticalThenHorizontal,
                      IntegrationPath::Diagonal}) {
        EXPECT_NEAR(evaluate_via_path(fs, 1.0, 0.5, path), gbm_z(1.0, 0.5), 1e-6);
    }
}

TEST(Paths, OriginReturnsInitialValue) {
    const auto fs = ou_solution(false);
    for (auto path : {IntegrationPath::HorizontalThenVertical, IntegrationPath::VerticalThenHorizontal,
                      IntegrationPath::Diagonal}) {
        EXPECT_EQ(evaluate_via_path(fs, 0.0, 0.0, path), kR0);
    }
}

TEST(Paths, NotSatisfiableProblemDisagrees) {
    const FunctionalSolution fs(squared(), build_gauge(parse("0"), parse("0"), 0.0, 1.0));
    const double hv = evaluate_via_path(fs, 1.0, 1.0, IntegrationPath::HorizontalThenVertical);
    const double vh = evaluate_via_path(fs, 1.0, 1.0, IntegrationPath::VerticalThenHorizontal);
    EXPECT_GT(std::fabs(hv - vh), 1e-3);
}

TEST(Paths, InvarianceAtRandomPoints) {
    const auto fs = ou_solution(true);
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> ut(0.0, 1.0), uy(-3.0, 3.0);
    for (int i = 0; i < 10; ++i) {
        const double t = ut(gen), y = uy(gen);
        const double hv = evaluate_via_path(fs, t, y, IntegrationPath::HorizontalThenVertical);
        const double vh = evaluate_via_path(fs, t, y, IntegrationPath::VerticalThenHorizontal);
        const double dg = evaluate_via_path(fs, t, y, IntegrationPath::Diagonal);
        const double scale = 1.0 + std::fabs(hv);
        EXPECT_LE(std::fabs(hv - vh), 1e-6 * scale);
        EXPECT_LE(std::fabs(hv - dg), 1e-6 * scale);
        EXPECT_LE(std::fabs(hv - fs(t, y)), 1e-6 * scale);
    }
}

TEST(Invert, GbmRoundTrip) {
    const auto fs = gbm_solution();
    for (double t : {0.3, 1.0}) {
        for (double x : {-2.0, 0.0, 1.3}) EXPECT_NEAR(invert(fs, t, fs(t, x)), x, 1e-9);
    }
}

TEST(Invert, GbmAnalyticInverse) {
    const auto fs = gbm_solution();
    for (double x : {0.4, 1.0, 2.5, 8.0}) {
        const double t = 0.7;
        EXPECT_NEAR(invert(fs, t, x), (std::log(x / kX0) - (kMu - kSigma * kSigma / 2) * t) / kSigma, 1e-8);
    }
}

TEST(Invert, OuAnalyticInverse) {
    const auto fs = ou_solution(true);
    for (double x : {-1.0, 0.0, 0.6, 2.0}) {
        const double t = 0.6;
        EXPECT_NEAR(invert(fs, t, x), (x - kR0 * std::exp(-kTheta * t)) * std::exp(kTheta * t) / kSigmaHat, 1e-8);
    }
}

TEST(Invert, BracketExhausted) {
    const auto fs = gbm_solution();
    // GBM is positive, so no y reaches a negative target.
    EXPECT_THROW(invert(fs, 0.5, -1.0), BracketExhaustedError);
    EXPECT_THROW(invert(fs, 0.5, INFINITY), BracketExhaustedError);
}

TEST(Cdf, GbmLognormal) {
    const auto fs = gbm_solution();
    for (double t : {0.25, 1.0}) {
        for (double x : {0.5, 0.9, 1.0, 1.1, 1.6}) {
            const double expected =
                oracle::normal_cdf((std::log(x / kX0) - (kMu - kSigma * kSigma / 2) * t) / (kSigma * std::sqrt(t)));
            EXPECT_NEAR(cdf(fs, t, x), expected, 1e-9);
        }
    }
}

TEST(Cdf, BrownianMedian) {
    const auto fs = gbm_solution();
    EXPECT_NEAR(cdf(fs, 0.5, fs(0.5, 0.0)), 0.5, 1e-12);
}

TEST(Cdf, OuGaussian) {
    for (bool drift_f : {true, false}) {
        const auto fs = ou_solution(drift_f);
        for (double t : {0.2, 1.0}) {
            const double mean = kR0 * std::exp(-kTheta * t) + kMuHat * (1 - std::exp(-kTheta * t));
            const double sd = kSigmaHat * std::sqrt((1 - std::exp(-2 * kTheta * t)) / (2 * kTheta));
            for (double x : {0.2, 0.5, 0.8, 1.1}) {
                EXPECT_NEAR(cdf(fs, t, x), oracle::normal_cdf((x - mean) / sd), 1e-9) << drift_f << " " << t << " " << x;
            }
        }
    }
}

TEST(Cdf, GaugeFreedom) {
    const auto a = ou_solution(true);
    const auto b = ou_solution(false);
    EXPECT_GT(std::fabs(a(0.5, 1.0) - b(0.5, 1.0)), 1e-2);
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> ut(0.05, 1.0), ux(0.0, 1.4);
    for (int i = 0; i < 20; ++i) {
        const double t = ut(gen), x = ux(gen);
        EXPECT_NEAR(cdf(a, t, x), cdf(b, t, x), 1e-9);
    }
}

TEST(Cdf, MonotoneAndBounded) {
    const auto fs = ou_solution(false);
    double prev = 0.0;
    for (double x = -1.0; x <= 2.5; x += 0.05) {
        const double p = cdf(fs, 0.5, x);
        EXPECT_GE(p, prev);
        EXPECT_LE(p, 1.0);
        prev = p;
    }
}

TEST(Cdf, DegenerateDiffusionIsAStep) {
    const SdeProblem p{parse("-x"), parse("0"), 1.0, 1.0, {}};
    const FunctionalSolution fs(p, build_gauge(parse("0"), parse("0"), 0.0, 1.0));
    const double z = std::exp(-0.5);
    EXPECT_NEAR(fs.horizontal()(0.5), z, 1e-9);
    EXPECT_EQ(cdf(fs, 0.5, z - 1e-6), 0.0);
    EXPECT_EQ(cdf(fs, 0.5, z + 1e-6), 1.0);
}

TEST(Cdf, Errors) {
    const auto fs = gbm_solution();
    EXPECT_THROW(cdf(fs, 0.0, 1.0), std::out_of_range);
    EXPECT_THROW(cdf(fs, 1.5, 1.0), std::out_of_range);
}

TEST(GridExport, Shapes) {
    const auto fs = gbm_solution();
    const Eigen::MatrixXd one = grid_export(fs, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1));
    ASSERT_EQ(one.rows(), 1);
    ASSERT_EQ(one.cols(), 1);
    EXPECT_EQ(one(0, 0), kX0);

    const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(5, 0.0, 1.0);
    const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(5, -2.0, 2.0);
    const Eigen::MatrixXd z = grid_export(fs, t, y);
    for (Eigen::Index i = 0; i < 5; ++i) {
        for (Eigen::Index j = 0; j < 5; ++j) {
            EXPECT_NEAR(z(i, j), gbm_z(t[i], y[j]), 1e-6);
            if (j > 0) EXPECT_GT(z(i, j), z(i, j - 1));
        }
    }
}

TEST(Properties, PdeResiduals) {
    const Box grid{{0.05, 0.95, 15}, {-2.7, 2.7, 15}};
    for (const auto* name : {"gbm", "ou"}) {
        const auto fs = std::string(name) == "gbm" ? gbm_solution() : ou_solution(true);
        const auto r = pde_residuals(fs, grid);
        EXPECT_LE(r.dz_dx, 1e-5 * r.scale) << name;
        EXPECT_LE(r.dz_dt, 1e-5 * r.scale) << name;
        EXPECT_LE(r.mixed, 1e-4 * r.scale) << name;
        EXPECT_LE(r.ito_drift, 1e-4 * r.scale) << name;
    }
}

TEST(Properties, NotSatisfiableBreaksTheItoDrift) {
    const FunctionalSolution fs(squared(), build_gauge(parse("0"), parse("0"), 0.0, 1.0));
    const auto r = pde_residuals(fs, {{0.05, 0.95, 15}, {-0.9, 0.9, 15}});
    EXPECT_GT(r.ito_drift, 1e-3 * r.scale);
}

TEST(Properties, StrictlyMonotoneInX) {
    const auto fs = ou_solution(false);
    std::mt19937_64 gen(2);
    std::uniform_real_distribution<double> ut(0.0, 1.0), uy(-4.0, 4.0);
    for (int i = 0; i < 200; ++i) {
        const double t = ut(gen), a = uy(gen), b = uy(gen);
        if (a == b) continue;
        EXPECT_EQ(fs(t, a) < fs(t, b), a < b);
    }
}
