#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "funsde/condition.hpp"
#include "funsde/errors.hpp"
#include "oracles.hpp"

using namespace funsde;

namespace {

SdeProblem gbm() { return {parse("mu_hat*x"), parse("sigma_hat*x"), 1.0, 1.0, {{"mu_hat", 0.1}, {"sigma_hat", 0.2}}}; }

SdeProblem ou() {
    return {parse("theta*(mu_hat-x)"), parse("sigma_hat"), 1.0, 1.0, {{"theta", 1.5}, {"mu_hat", 0.7}, {"sigma_hat", 0.3}}};
}

SdeProblem squared() { return {parse("x^2"), parse("1"), -1.0, 1.0, {}}; }

Box box(double x_lo, double x_hi, std::size_t n = 11) { return {{0.0, 1.0, n}, {x_lo, x_hi, n}}; }

// The residual assembled from central finite differences of mu and sigma.
double fd_residual(const SdeProblem& p, double t, double x) {
    const double h = 1e-4;
    const auto mu = [&](double s, double y) { return eval(p.mu, s, y, p.params); };
    const auto sg = [&](double s, double y) { return eval(p.sigma, s, y, p.params); };
    const double s = sg(t, x);
    const double mu_x = (mu(t, x + h) - mu(t, x - h)) / (2 * h);
    const double s_x = (sg(t, x + h) - sg(t, x - h)) / (2 * h);
    const double s_t = (sg(t + h, x) - sg(t - h, x)) / (2 * h);
    const double s_xx = (sg(t, x + h) - 2 * s + sg(t, x - h)) / (h * h);
    return mu_x - mu(t, x) / s * s_x - s_t / s - 0.5 * s * s_xx;
}

}  // namespace

TEST(Residual, Gbm) {
    for (double t = 0.0; t <= 1.0; t += 0.25) {
        for (double x = 0.5; x <= 2.0; x += 0.25) EXPECT_NEAR(residual(gbm(), t, x), 0.0, 1e-15);
    }
}

TEST(Residual, OrnsteinUhlenbeck) {
    for (double x = -2.0; x <= 2.0; x += 0.5) EXPECT_DOUBLE_EQ(residual(ou(), 0.3, x), -1.5);
}

TEST(Residual, SquaredDrift) {
    for (double x = -2.0; x <= 2.0; x += 0.5) EXPECT_DOUBLE_EQ(residual(squared(), 0.3, x), 2.0 * x);
}

TEST(Residual, VanishingSigma) { EXPECT_THROW(residual(gbm(), 0.0, 0.0), DomainError); }

TEST(Residual, UnboundParameter) {
    SdeProblem p = gbm();
    p.params.erase("sigma_hat");
    EXPECT_THROW(SdeModel{p}, UnboundParameterError);
}

TEST(Residual, MatchesFiniteDifferenceAssembly) {
    const SdeProblem p{parse("sin(x)*(t+1) + x^3/5"), parse("(2+cos(t*x))*exp(-x^2/4)"), 0.0, 1.0, {}};
    const SdeModel model(p);
    std::mt19937_64 gen(2);
    std::uniform_real_distribution<double> ut(0.1, 0.9), ux(-1.5, 1.5);
    for (int i = 0; i < 30; ++i) {
        const double t = ut(gen), x = ux(gen);
        EXPECT_NEAR(model.residual(t, x), fd_residual(p, t, x), 1e-5);
    }
}

TEST(Classify, Gbm) {
    const auto r = classify(gbm(), box(0.5, 2.0));
    EXPECT_EQ(r.verdict, Verdict::BrownianCase);
    EXPECT_LE(r.sup_phi, 1e-8 * r.scale);
    EXPECT_EQ(r.x_ref, 1.25);
}

TEST(Classify, OrnsteinUhlenbeck) {
    const auto r = classify(ou(), box(-2.0, 2.0));
    EXPECT_EQ(r.verdict, Verdict::GaugedCase);
    EXPECT_EQ(r.x_ref, 0.0);
    for (Eigen::Index i = 0; i < r.phi.size(); ++i) EXPECT_NEAR(r.phi[i], -1.5, 1e-12);
    EXPECT_LE(r.max_x_variation, 1e-12);
}

TEST(Classify, SquaredDriftIsNotSatisfiable) {
    const auto r = classify(squared(), box(-2.0, 2.0));
    EXPECT_EQ(r.verdict, Verdict::NotSatisfiable);
    EXPECT_NEAR(r.max_x_variation, 4.0, 1e-12);  // residual 2x against 2 * 0 over a range of 4
}

TEST(Classify, PreconditionsAreEnforced) {
    EXPECT_THROW(classify(gbm(), box(0.5, 2.0, 4)), std::invalid_argument);
    EXPECT_THROW(classify(gbm(), {{0.0, 0.0, 5}, {0.5, 2.0, 5}}), std::invalid_argument);
    EXPECT_THROW(classify(gbm(), box(-1.0, 1.0)), DomainError);
}

TEST(Classify, Deterministic) {
    const auto a = classify(ou(), box(-2.0, 2.0, 21));
    const auto b = classify(ou(), box(-2.0, 2.0, 21));
    EXPECT_EQ(a.residual, b.residual);
    EXPECT_EQ(a.phi, b.phi);
    EXPECT_EQ(a.max_x_variation, b.max_x_variation);
    EXPECT_EQ(a.verdict, b.verdict);
}

TEST(Gauge, BrownianCase) {
    const Gauge g = build_gauge(classify(gbm(), box(0.5, 2.0)));
    for (const double t : {0.0, 0.3, 0.77, 1.0}) {
        EXPECT_EQ(g.G(t), 1.0);
        EXPECT_EQ(g.m(t), 0.0);
        EXPECT_NEAR(g.v(t), t, 1e-14);
    }
}

TEST(Gauge, OrnsteinUhlenbeck) {
    const Gauge g = build_gauge(classify(ou(), box(-2.0, 2.0)));
    for (const double t : {0.0, 0.3, 0.77, 1.0}) {
        EXPECT_NEAR(g.G(t), std::exp(1.5 * t), 1e-12);
        EXPECT_NEAR(g.v(t), (std::exp(3.0 * t) - 1.0) / 3.0, 1e-9);
    }
}

TEST(Gauge, LinearEquation) {
    const SdeProblem p{parse("(a0+a1*t)*x"), parse("(b0+b1*t)*x"), 1.0, 1.0,
                       {{"a0", 0.1}, {"a1", 0.05}, {"b0", 0.2}, {"b1", 0.1}}};
    const auto r = classify(p, box(0.5, 2.0));
    ASSERT_EQ(r.verdict, Verdict::GaugedCase);
    const Gauge g = build_gauge(r);
    for (const double t : {0.0, 0.3, 0.77, 1.0}) {
        const double beta = 0.2 + 0.1 * t;
        EXPECT_NEAR(g.phi(t), -0.1 / beta, 1e-14);
        EXPECT_NEAR(g.G(t), beta / 0.2, 1e-10);
    }
}

TEST(Gauge, FromExpressionWithDrift) {
    const Gauge g = build_gauge(parse("-theta"), parse("theta*mu_hat/sigma_hat*exp(theta*t)"), 0.5, 1.0,
                                {{"theta", 1.5}, {"mu_hat", 0.7}, {"sigma_hat", 0.3}});
    const double t = 0.6;
    EXPECT_NEAR(g.m(t), 0.5 + 0.7 / 0.3 * (std::exp(1.5 * t) - 1.0), 1e-9);
    EXPECT_EQ(g.y0(), 0.5);
    EXPECT_EQ(g.m(0.0), 0.5);
}

TEST(Gauge, Invariants) {
    const Gauge g = build_gauge(parse("sin(3*t) - t"), Expr(), 0.0, 2.0);
    EXPECT_EQ(g.G(0.0), 1.0);
    EXPECT_EQ(g.v(0.0), 0.0);
    double prev = 0.0;
    const double h = 1e-5;
    for (int i = 0; i < 50; ++i) {
        const double t = 0.02 + 1.96 * i / 49.0;
        EXPECT_GT(g.G(t), 0.0);
        EXPECT_GE(g.v(t), prev);
        prev = g.v(t);
        const double dG = (g.G(t + h) - g.G(t - h)) / (2 * h);
        EXPECT_LE(std::fabs(dG / g.G(t) + g.phi(t)), 1e-6);
        // Phi against an independent quadrature.
        EXPECT_NEAR(g.Phi(t), oracle::romberg([](double s) { return std::sin(3 * s) - s; }, 0.0, t), 1e-9);
    }
}

TEST(Gauge, Errors) {
    EXPECT_THROW(build_gauge(classify(squared(), box(-2.0, 2.0))), NotSatisfiableError);
    EXPECT_THROW(build_gauge(parse("x"), Expr(), 0.0, 1.0), std::invalid_argument);
    EXPECT_THROW(build_gauge(parse("0"), parse("x"), 0.0, 1.0), std::invalid_argument);
    EXPECT_THROW(build_gauge(parse("0"), Expr(), 0.0, 0.0), std::invalid_argument);
    EXPECT_THROW(build_gauge(parse("k"), Expr(), 0.0, 1.0), UnboundParameterError);
}

TEST(MuFromSigma, Example4) {
    const Expr mu = mu_from_sigma(parse("(t+1)*exp(-x^2/2)"), parse("0"), parse("1/(t+1)"));
    const Expr printed = parse("exp(-x^2/2)/(t+1)*quad(exp(xi^2/2), 0, x) - x*(t+1)^2/2*exp(-x^2) + exp(-x^2/2)");
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> ut(0.0, 1.0), ux(-2.0, 2.0);
    for (int i = 0; i < 50; ++i) {
        const double t = ut(gen), x = ux(gen);
        EXPECT_NEAR(eval(mu, t, x), eval(printed, t, x), 1e-8);
    }
}

TEST(MuFromSigma, ConstantSigma) {
    const Expr mu = mu_from_sigma(parse("s"), parse("0"), parse("c"));
    EXPECT_DOUBLE_EQ(eval(mu, 0.4, 1.7, {{"s", 0.3}, {"c", 2.0}}), 0.6);
    EXPECT_DOUBLE_EQ(eval(mu, 0.9, -3.0, {{"s", 0.3}, {"c", 2.0}}), 0.6);
}

TEST(MuFromSigma, LinearSigmaGivesLinearDrift) {
    const Params p{{"s", 0.2}, {"c0", 0.3}};
    const Expr mu = mu_from_sigma(parse("s*x"), parse("0"), parse("c0"));
    for (const double x : {0.5, 1.0, 2.0, 3.5}) EXPECT_NEAR(eval(mu, 0.5, x, p), (0.1 + 0.3) * 0.2 * x, 1e-14);
}

TEST(MuFromSigma, ResidualEqualsPhi) {
    struct Case {
        const char* sigma;
        const char* phi;
        const char* gamma;
    };
    for (const Case c : {Case{"(t+1)*exp(-x^2/2)", "0", "1/(t+1)"}, Case{"2 + sin(x) + t", "-0.5", "t"},
                         Case{"exp(t)*(1 + x^2)", "cos(t)", "1"}, Case{"1 + t*x^2", "t", "0"}}) {
        const Expr sigma = parse(c.sigma);
        const Expr phi = parse(c.phi);
        const SdeProblem p{mu_from_sigma(sigma, phi, parse(c.gamma)), sigma, 0.0, 1.0, {}};
        const auto r = classify(p, box(-1.0, 1.0, 21));
        EXPECT_NE(r.verdict, Verdict::NotSatisfiable) << c.sigma;
        EXPECT_EQ(r.verdict == Verdict::BrownianCase, std::string(c.phi) == "0") << c.sigma;
        EXPECT_LE(r.max_x_variation, 1e-6) << c.sigma;
        for (Eigen::Index i = 0; i < r.t.size(); ++i) EXPECT_NEAR(r.phi[i], eval(phi, r.t[i], 0.0), 1e-8) << c.sigma;
    }
}

TEST(MuAutonomous, Gbm) {
    const double mu_hat = 0.1, s = 0.2;
    const Expr mu = mu_autonomous(parse("s*x"), (mu_hat - s * s / 2) / s);
    for (const double x : {0.5, 1.0, 2.0}) EXPECT_NEAR(eval(mu, 0, x, {{"s", s}}), mu_hat * x, 1e-15);
}

TEST(MuAutonomous, UnitSigma) { EXPECT_EQ(mu_autonomous(parse("1"), 0.0), parse("0")); }

TEST(MuAutonomous, QuadraticSigma) {
    const Expr sigma = parse("1+x^2");
    const Expr mu = mu_autonomous(sigma, 1.0);
    const SdeProblem p{mu, sigma, 0.0, 1.0, {}};
    for (double x = -2.0; x <= 2.0; x += 0.25) {
        EXPECT_NEAR(eval(mu, 0, x), x * (1 + x * x) + (1 + x * x), 1e-13);
        EXPECT_NEAR(residual(p, 0.5, x), 0.0, 1e-13);
    }
}

TEST(MuAutonomous, RejectsTimeDependence) { EXPECT_THROW(mu_autonomous(parse("t*x"), 1.0), std::invalid_argument); }
