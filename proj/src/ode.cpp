#include "funsde/ode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "funsde/errors.hpp"

namespace funsde::ode {

namespace {

// Fehlberg 4(5) tableau.
constexpr double c2 = 1.0 / 4.0, c3 = 3.0 / 8.0, c4 = 12.0 / 13.0, c6 = 1.0 / 2.0;
constexpr double a21 = 1.0 / 4.0;
constexpr double a31 = 3.0 / 32.0, a32 = 9.0 / 32.0;
constexpr double a41 = 1932.0 / 2197.0, a42 = -7200.0 / 2197.0, a43 = 7296.0 / 2197.0;
constexpr double a51 = 439.0 / 216.0, a52 = -8.0, a53 = 3680.0 / 513.0, a54 = -845.0 / 4104.0;
constexpr double a61 = -8.0 / 27.0, a62 = 2.0, a63 = -3544.0 / 2565.0, a64 = 1859.0 / 4104.0,
                 a65 = -11.0 / 40.0;
constexpr double b1 = 16.0 / 135.0, b3 = 6656.0 / 12825.0, b4 = 28561.0 / 56430.0, b5 = -9.0 / 50.0,
                 b6 = 2.0 / 55.0;
constexpr double e1 = 1.0 / 360.0, e3 = -128.0 / 4275.0, e4 = -2197.0 / 75240.0, e5 = 1.0 / 50.0,
                 e6 = 2.0 / 55.0;

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 5.0;
constexpr double kAlpha = 0.7 / 5.0;
constexpr double kBeta = 0.4 / 5.0;

constexpr int kMaxQuadDepth = 50;
constexpr int kMinQuadDepth = 3;

double eval_rhs(const Rhs& rhs, double s, double z) {
    const double v = rhs(s, z);
    if (!std::isfinite(v)) throw NonFiniteRhsError("non-finite right-hand side", s);
    return v;
}

struct SimpsonPanel {
    double a, m, b;
    double fa, fm, fb;
    double whole;
};

double checked_eval(const std::function<double(double)>& f, double s) {
    const double v = f(s);
    if (!std::isfinite(v)) throw QuadratureError("non-finite integrand");
    return v;
}

double simpson_recursive(const std::function<double(double)>& f, const SimpsonPanel& p, double tol,
                         int depth) {
    const double lm = 0.5 * (p.a + p.m);
    const double rm = 0.5 * (p.m + p.b);
    if (!(lm > std::min(p.a, p.m) && lm < std::max(p.a, p.m))) {
        throw QuadratureError("quadrature panel collapsed below machine precision");
    }
    const double flm = checked_eval(f, lm);
    const double frm = checked_eval(f, rm);
    const double left = (p.m - p.a) / 6.0 * (p.fa + 4.0 * flm + p.fm);
    const double right = (p.b - p.m) / 6.0 * (p.fm + 4.0 * frm + p.fb);
    const double delta = left + right - p.whole;
    if (depth >= kMinQuadDepth && std::fabs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    if (depth >= kMaxQuadDepth) throw QuadratureError("maximum quadrature depth exceeded");
    return simpson_recursive(f, {p.a, lm, p.m, p.fa, flm, p.fm, left}, 0.5 * tol, depth + 1) +
           simpson_recursive(f, {p.m, rm, p.b, p.fm, frm, p.fb, right}, 0.5 * tol, depth + 1);
}

double half_step(const Rhs& rhs, double s, double z, double k1, double hs) {
    const double k2 = eval_rhs(rhs, s + c2 * hs, z + hs * a21 * k1);
    const double k3 = eval_rhs(rhs, s + c3 * hs, z + hs * (a31 * k1 + a32 * k2));
    const double k4 = eval_rhs(rhs, s + c4 * hs, z + hs * (a41 * k1 + a42 * k2 + a43 * k3));
    const double k5 = eval_rhs(rhs, s + hs, z + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const double k6 =
        eval_rhs(rhs, s + c6 * hs, z + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    return z + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
}

}  // namespace

DenseSolution::DenseSolution(std::vector<double> s, std::vector<double> z, std::vector<double> dz)
    : s_(std::move(s)), z_(std::move(z)), dz_(std::move(dz)) {
    if (s_.empty() || s_.size() != z_.size() || s_.size() != dz_.size()) {
        throw std::invalid_argument("dense solution needs matching, non-empty knot arrays");
    }
    forward_ = s_.back() >= s_.front();
}

std::size_t DenseSolution::interval(double s) const {
    const double span = std::fabs(s_.back() - s_.front());
    const double slack = 1e-12 * (1.0 + span);
    if (s < lower() - slack || s > upper() + slack) {
        throw std::out_of_range("dense solution queried outside its domain");
    }
    std::size_t idx;
    if (forward_) {
        idx = static_cast<std::size_t>(std::upper_bound(s_.begin(), s_.end(), s) - s_.begin());
    } else {
        idx = static_cast<std::size_t>(
            std::upper_bound(s_.begin(), s_.end(), s, std::greater<>()) - s_.begin());
    }
    if (idx == 0) return 0;
    return std::min(idx - 1, s_.size() - 2);
}

double DenseSolution::operator()(double s) const {
    if (s_.size() == 1) {
        interval(s);
        return z_.front();
    }
    const std::size_t i = interval(s);
    const double h = s_[i + 1] - s_[i];
    const double th = (s - s_[i]) / h;
    const double th2 = th * th;
    const double th3 = th2 * th;
    const double h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
    const double h10 = th3 - 2.0 * th2 + th;
    const double h01 = -2.0 * th3 + 3.0 * th2;
    const double h11 = th3 - th2;
    return h00 * z_[i] + h10 * h * dz_[i] + h01 * z_[i + 1] + h11 * h * dz_[i + 1];
}

double DenseSolution::derivative(double s) const {
    if (s_.size() == 1) {
        interval(s);
        return dz_.front();
    }
    const std::size_t i = interval(s);
    const double h = s_[i + 1] - s_[i];
    const double th = (s - s_[i]) / h;
    const double th2 = th * th;
    const double d00 = 6.0 * th2 - 6.0 * th;
    const double d10 = 3.0 * th2 - 4.0 * th + 1.0;
    const double d01 = -6.0 * th2 + 6.0 * th;
    const double d11 = 3.0 * th2 - 2.0 * th;
    return (d00 * z_[i] + d01 * z_[i + 1]) / h + d10 * dz_[i] + d11 * dz_[i + 1];
}

DenseSolution integrate(const Rhs& rhs, double z0, double a, double b, Tolerances tol) {
    if (!std::isfinite(z0) || !std::isfinite(a) || !std::isfinite(b)) {
        throw std::invalid_argument("integrate: non-finite initial data");
    }
    std::vector<double> ss{a};
    std::vector<double> zs{z0};
    std::vector<double> dzs{eval_rhs(rhs, a, z0)};
    const double span = std::fabs(b - a);
    if (span == 0.0) return DenseSolution(std::move(ss), std::move(zs), std::move(dzs));

    const double dir = b > a ? 1.0 : -1.0;
    const double min_step = 1e-14 * span;
    double h = std::clamp(span / 100.0, std::min(1e-10, span), span);
    double s = a;
    double z = z0;
    double k1 = dzs.back();
    double err_prev = 1.0;
    bool last_rejected = false;

    while (dir * (b - s) > 0.0) {
        if (h < min_step) throw StepUnderflowError("step size underflow", s);
        bool final_step = false;
        if (h >= std::fabs(b - s)) {
            h = std::fabs(b - s);
            final_step = true;
        }
        const double hs = dir * h;
        const double k2 = eval_rhs(rhs, s + c2 * hs, z + hs * a21 * k1);
        const double k3 = eval_rhs(rhs, s + c3 * hs, z + hs * (a31 * k1 + a32 * k2));
        const double k4 = eval_rhs(rhs, s + c4 * hs, z + hs * (a41 * k1 + a42 * k2 + a43 * k3));
        const double k5 = eval_rhs(rhs, s + hs, z + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        const double k6 =
            eval_rhs(rhs, s + c6 * hs, z + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        const double z_new = z + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        const double err_abs = std::fabs(hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6));
        const double scale = tol.atol + tol.rtol * std::max(std::fabs(z), std::fabs(z_new));
        double err = err_abs / scale;

        // Midpoint knot from a separate half step. The cubic Hermite interpolant of the
        // full step misses it by ~16x the error of the half-step interpolant that is stored,
        // and that error is held to the same tolerance as the step itself.
        double s_mid = 0.0, z_mid = 0.0, k_mid = 0.0, k_new = 0.0;
        if (err <= 1.0) {
            s_mid = s + 0.5 * hs;
            z_mid = half_step(rhs, s, z, k1, 0.5 * hs);
            k_new = eval_rhs(rhs, final_step ? b : s + hs, z_new);
            k_mid = eval_rhs(rhs, s_mid, z_mid);
            const double hermite_mid = 0.5 * (z + z_new) + hs * (k1 - k_new) / 8.0;
            err = std::max(err, std::fabs(hermite_mid - z_mid) / 16.0 / scale);
        }

        if (err <= 1.0) {
            const double s_new = final_step ? b : s + hs;
            ss.push_back(s_mid);
            zs.push_back(z_mid);
            dzs.push_back(k_mid);
            ss.push_back(s_new);
            zs.push_back(z_new);
            dzs.push_back(k_new);
            s = s_new;
            z = z_new;
            k1 = k_new;
            double factor = kMaxFactor;
            if (err > 0.0) {
                factor = kSafety * std::pow(err, -kAlpha) * std::pow(err_prev, kBeta);
                factor = std::clamp(factor, kMinFactor, kMaxFactor);
            }
            if (last_rejected) factor = std::min(factor, 1.0);
            err_prev = std::max(err, 1e-4);
            last_rejected = false;
            h *= factor;
        } else {
            const double factor = std::max(kMinFactor, kSafety * std::pow(err, -0.2));
            h *= factor;
            last_rejected = true;
        }
    }
    return DenseSolution(std::move(ss), std::move(zs), std::move(dzs));
}

double quad(const std::function<double(double)>& f, double a, double b, double tol) {
    if (!std::isfinite(a) || !std::isfinite(b)) throw QuadratureError("non-finite integration bounds");
    if (a == b) return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = checked_eval(f, a);
    const double fm = checked_eval(f, m);
    const double fb = checked_eval(f, b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    const double abs_tol = tol * (1.0 + std::fabs(whole));
    return simpson_recursive(f, {a, m, b, fa, fm, fb, whole}, abs_tol, 0);
}

}  // namespace funsde::ode
