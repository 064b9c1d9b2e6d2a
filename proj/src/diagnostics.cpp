#include "qnctl/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "qnctl/errors.hpp"
#include "qnctl/gradest.hpp"

namespace qnctl {

void TheoryConstants::validate() const {
    if (!(L > 0) || !(H > 0) || !(lambda >= 1.0) || !(mu > 0) || !(D > 0))
        throw InvalidInputError("TheoryConstants: L, H, mu, D must be positive and lambda >= 1");
    if (!(kappa >= 0.0) || !(kappa < 1.0)) throw InvalidInputError("TheoryConstants: kappa must lie in [0, 1)");
    if (!(theta > 0.0) || !(theta < 1.0)) throw InvalidInputError("TheoryConstants: theta must lie in (0, 1)");
}

double rate_bound_at(const TheoryConstants& c, double F1, double T) {
    c.validate();
    const double omk = 1.0 - c.kappa;
    return std::sqrt(2.0 * c.L * c.H * c.H * F1 / (omk * omk * T)) +
           c.lambda * c.H * c.H * (std::log(T) + 2.0) / (omk * T);
}

Vec rate_bound(const TheoryConstants& c, double F1, std::size_t T) {
    Vec out(static_cast<Index>(T));
    for (std::size_t t = 1; t <= T; ++t) out(static_cast<Index>(t - 1)) = rate_bound_at(c, F1, static_cast<double>(t));
    return out;
}

double hbar1(const TheoryConstants& c, double F1) {
    return c.lambda * std::sqrt(2.0 * c.L * c.H * c.H * F1) / (1.0 - c.kappa);
}

double hbar2(const TheoryConstants& c) { return c.lambda * c.lambda * c.H * c.H / (1.0 - c.kappa); }

double gd_limit_bound_at(const TheoryConstants& c, double F1, double T) {
    c.validate();
    return hbar1(c, F1) / std::sqrt(T) + hbar2(c) * std::log(T) / T + 2.0 * hbar2(c) / T;
}

double regret_bound_at(const TheoryConstants& c, double F1, double T) {
    c.validate();
    const double h1 = hbar1(c, F1), h2 = hbar2(c);
    if (c.theta <= 0.5)
        return (h1 * std::sqrt(T) + h2 * std::log(T) + 2.0 * h2) / (2.0 * c.mu * std::pow(c.D, 2.0 * c.theta - 1.0));
    const double p = 1.0 / (2.0 * c.theta);
    return std::pow(T, 1.0 - 1.0 / (4.0 * c.theta)) *
           (std::pow(h1 / (2.0 * c.mu), p) + 2.0 * std::pow(h2 / (2.0 * c.mu), p));
}

double regret_bound_probabilistic_at(const TheoryConstants& c, double F1, double T, double delta) {
    if (!(delta > 0.0) || !(delta < 1.0)) throw InvalidInputError("regret bound: delta must lie in (0, 1)");
    return regret_bound_at(c, F1, T) / delta;
}

// ---------------------------------------------------------------- objectives

QuadraticObjective::QuadraticObjective(Mat Q, Vec center, double noise_std, Vec start, double radius)
    : Q_(std::move(Q)), center_(std::move(center)), start_(std::move(start)), s_(noise_std), radius_(radius) {
    Eigen::SelfAdjointEigenSolver<Mat> es(Q_);
    if (es.eigenvalues().minCoeff() <= 0.0) throw InvalidInputError("QuadraticObjective: Q must be positive definite");
    Qhalf_ = es.operatorSqrt();
}

std::unique_ptr<QuadraticObjective> QuadraticObjective::standard() {
    Vec d(5);
    d << 2.0, 1.5, 1.0, 0.75, 0.5;
    Vec c(5);
    c << 0.5, -0.5, 0.25, 0.0, 1.0;
    Vec start = c + Vec::Constant(5, 1.5);
    return std::make_unique<QuadraticObjective>(Mat(d.asDiagonal()), c, 0.1, start, 4.0);
}

Vec QuadraticObjective::sample_zeta(std::mt19937_64& rng) const {
    std::normal_distribution<double> nd(0.0, s_);
    Vec z = center_;
    for (Index i = 0; i < z.size(); ++i) z(i) += nd(rng);
    return z;
}

double QuadraticObjective::f(const Vec& w, const Vec& z) const { return 0.5 * (w - z).dot(Q_ * (w - z)); }
Vec QuadraticObjective::grad_f(const Vec& w, const Vec& z) const { return Q_ * (w - z); }
double QuadraticObjective::F(const Vec& w) const {
    return 0.5 * (w - center_).dot(Q_ * (w - center_)) + 0.5 * s_ * s_ * Q_.trace();
}
Vec QuadraticObjective::grad_F(const Vec& w) const { return Q_ * (w - center_); }
Mat QuadraticObjective::curvature_factor(const Vec&, const Vec&) const { return Qhalf_; }

TheoryConstants QuadraticObjective::constants() const {
    Eigen::SelfAdjointEigenSolver<Mat> es(Q_);
    const double lmax = es.eigenvalues().maxCoeff(), lmin = es.eigenvalues().minCoeff();
    TheoryConstants c;
    c.L = lmax;
    c.H = std::sqrt(lmax * lmax * radius_ * radius_ + s_ * s_ * (Q_ * Q_).trace());
    c.lambda = 1.0;
    c.mu = lmin;
    c.theta = 0.5;
    c.D = 0.5 * lmax * radius_ * radius_;
    return c;
}

NonconvexObjective::NonconvexObjective(Vec a, double c, double noise_std, Vec start)
    : a_(std::move(a)), start_(std::move(start)), c_(c), s_(noise_std) {}

std::unique_ptr<NonconvexObjective> NonconvexObjective::standard() {
    Vec a(5), start(5);
    a << 0.2, 0.5, 1.0, 2.0, 0.3;
    start << 2.5, -2.5, 2.0, -2.0, 2.8;
    return std::make_unique<NonconvexObjective>(a, 1.0, 0.3, start);
}

Vec NonconvexObjective::sample_zeta(std::mt19937_64& rng) const {
    std::normal_distribution<double> nd(0.0, s_);
    Vec z(a_.size());
    for (Index i = 0; i < z.size(); ++i) z(i) = nd(rng);
    return z;
}

double NonconvexObjective::f(const Vec& w, const Vec& z) const {
    return 0.5 * (a_.array() * (w - z).array().square()).sum() + c_ * (1.0 - w.array().cos()).sum();
}
Vec NonconvexObjective::grad_f(const Vec& w, const Vec& z) const {
    return (a_.array() * (w - z).array() + c_ * w.array().sin()).matrix();
}
double NonconvexObjective::F(const Vec& w) const {
    return 0.5 * (a_.array() * w.array().square()).sum() + 0.5 * s_ * s_ * a_.sum() + c_ * (1.0 - w.array().cos()).sum();
}
Vec NonconvexObjective::grad_F(const Vec& w) const {
    return (a_.array() * w.array() + c_ * w.array().sin()).matrix();
}
Mat NonconvexObjective::curvature_factor(const Vec&, const Vec&) const {
    return Mat(a_.array().sqrt().matrix().asDiagonal());
}

TheoryConstants NonconvexObjective::constants() const {
    // Iterates stay inside the box |w_i| <= R with R the largest starting coordinate (plus noise margin).
    const double R = start_.cwiseAbs().maxCoeff() + 1.0;
    TheoryConstants c;
    c.L = a_.maxCoeff() + c_;
    c.H = std::sqrt((a_.array() * R + c_).square().sum() + s_ * s_ * a_.squaredNorm());
    c.lambda = 1.0;
    c.mu = 1e-3;
    c.theta = 0.5;
    c.D = F(Vec::Constant(a_.size(), R)) - F_star();
    return c;
}

FlatObjective::FlatObjective(Index dim, double start) : n_(dim), start_(start) {
    if (std::abs(start) > 1.0) throw InvalidInputError("FlatObjective: start must lie in the unit box");
}

double FlatObjective::F(const Vec& w) const { return w.array().abs().pow(8.0 / 3.0).sum(); }
Vec FlatObjective::grad_F(const Vec& w) const {
    return ((8.0 / 3.0) * w.array().sign() * w.array().abs().pow(5.0 / 3.0)).matrix();
}
Mat FlatObjective::curvature_factor(const Vec& w, const Vec&) const {
    return Mat(((40.0 / 9.0) * w.array().abs().pow(2.0 / 3.0)).sqrt().matrix().asDiagonal());
}

TheoryConstants FlatObjective::constants() const {
    TheoryConstants c;
    c.L = 40.0 / 9.0;
    c.H = std::sqrt(static_cast<double>(n_)) * 8.0 / 3.0;
    c.lambda = 1.0;
    // |grad F|^2 >= 2 mu F^{3/2} on the unit box; for n > 1 the power-mean inequality costs n^{-1/2}.
    c.mu = (32.0 / 9.0) / std::sqrt(static_cast<double>(n_));
    c.theta = 0.75;
    c.D = static_cast<double>(n_);
    return c;
}

TheoryConstants ZeroObjective::constants() const { return TheoryConstants{}; }

// ---------------------------------------------------------------- runs

SyntheticTrace run_synthetic(const SyntheticObjective& obj, const SyntheticRunConfig& cfg) {
    const Index n = obj.dim();
    OptimizerState st = make_optimizer_state(obj.initial_point(), cfg.optimizer);
    std::mt19937_64 rng(cfg.seed);
    SyntheticTrace tr;
    const Index T = static_cast<Index>(cfg.T);
    tr.grad2_Ainv.resize(T);
    tr.grad2.resize(T);
    tr.gap.resize(T);
    const double Fstar = obj.F_star();
    const double bias = cfg.kappa_inject / std::sqrt(cfg.lambda_inject);
    const bool gd = cfg.optimizer.gradient_descent();
    for (Index t = 0; t < T; ++t) {
        const Vec zeta = obj.sample_zeta(rng);
        Mat Lambda;
        if (!gd) {
            Lambda = pseudo_hessian(obj.curvature_factor(st.omega, zeta), Mat(), cfg.optimizer.epsilon, 0.0);
            Eigen::SelfAdjointEigenSolver<Mat> es(Lambda, Eigen::EigenvaluesOnly);
            tr.lambda_max_seen = std::max(tr.lambda_max_seen, es.eigenvalues().maxCoeff());
        }
        update_running_hessian(st, Lambda, cfg.optimizer);
        const Vec gF = obj.grad_F(st.omega);
        tr.grad2(t) = gF.squaredNorm();
        tr.grad2_Ainv(t) = gF.dot(st.apply_inverse(gF));
        tr.gap(t) = obj.F(st.omega) - Fstar;
        Vec est = obj.grad_f(st.omega, zeta);
        if (bias != 0.0) est -= bias * gF;
        tr.max_est_second_moment = std::max(tr.max_est_second_moment, est.squaredNorm());
        quasi_newton_step_with_gradient(st, est, cfg.optimizer);
    }
    (void)n;
    tr.omega_final = st.omega;
    return tr;
}

std::vector<SyntheticTrace> run_synthetic_seeds(const SyntheticObjective& obj, const SyntheticRunConfig& cfg,
                                                std::size_t n_seeds, Exec exec) {
    std::vector<SyntheticTrace> out(n_seeds);
    for_each_index(n_seeds, exec, [&](std::size_t i) {
        SyntheticRunConfig c = cfg;
        c.seed = cfg.seed + i;
        out[i] = run_synthetic(obj, c);
    });
    return out;
}

double kappa_hat_at(const SyntheticObjective& obj, const Vec& w, double kappa_inject, double lambda_inject,
                    std::size_t batch, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Vec> est, truth;
    const Vec gF = obj.grad_F(w);
    const double bias = kappa_inject / std::sqrt(lambda_inject);
    for (std::size_t i = 0; i < batch; ++i) {
        const Vec g = obj.grad_f(w, obj.sample_zeta(rng));
        truth.push_back(g);
        est.push_back(g - bias * gF);
    }
    return estimate_kappa(est, truth, lambda_inject);
}

// ---------------------------------------------------------------- reports

double loglog_slope(const Vec& x, const Vec& y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidInputError("loglog_slope: need >= 2 points");
    const Vec lx = x.array().log(), ly = y.array().log();
    const double mx = lx.mean(), my = ly.mean();
    return ((lx.array() - mx) * (ly.array() - my)).sum() / (lx.array() - mx).square().sum();
}

double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw InvalidInputError("quantile: empty sample");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

namespace {
// Seed mean and standard error of per-seed prefix statistics.
void mean_stderr(const std::vector<Vec>& rows, Vec& mean, Vec& se) {
    const Index T = rows.front().size();
    const double n = static_cast<double>(rows.size());
    mean = Vec::Zero(T);
    for (const auto& r : rows) mean += r;
    mean /= n;
    se = Vec::Zero(T);
    if (rows.size() < 2) return;
    for (const auto& r : rows) se.array() += (r - mean).array().square();
    se = (se.array() / (n - 1.0) / n).sqrt();
}

Vec prefix_mean(const Vec& v) {
    Vec out(v.size());
    double acc = 0.0;
    for (Index i = 0; i < v.size(); ++i) {
        acc += v(i);
        out(i) = acc / static_cast<double>(i + 1);
    }
    return out;
}

Vec prefix_sum(const Vec& v) {
    Vec out(v.size());
    double acc = 0.0;
    for (Index i = 0; i < v.size(); ++i) out(i) = (acc += v(i));
    return out;
}
}  // namespace

RateReport verify_rate(const std::vector<SyntheticTrace>& runs, const TheoryConstants& c, double F1,
                       std::size_t t_min) {
    if (runs.empty()) throw InvalidInputError("verify_rate: no runs");
    RateReport rep;
    rep.t_min = t_min;
    std::vector<Vec> rows;
    for (const auto& r : runs) rows.push_back(prefix_mean(r.grad2_Ainv));
    mean_stderr(rows, rep.lhs, rep.lhs_stderr);
    try {
        c.validate();
        rep.rhs = rate_bound(c, F1, static_cast<std::size_t>(rep.lhs.size()));
    } catch (const InvalidInputError&) {
        rep.binding = false;
        rep.rhs = Vec::Constant(rep.lhs.size(), std::numeric_limits<double>::infinity());
    }
    for (const auto& r : runs)
        if (r.lambda_max_seen > c.lambda + 1e-9 || r.max_est_second_moment > c.H * c.H * 1.0000001) rep.binding = false;
    for (Index t = static_cast<Index>(t_min) - 1; t < rep.lhs.size(); ++t)
        if (t >= 0 && rep.lhs(t) + rep.lhs_stderr(t) > rep.rhs(t)) rep.holds = false;
    const Index T = rep.lhs.size();
    if (T >= 20) {
        const Index lo = std::max<Index>(static_cast<Index>(t_min), T / 100);
        std::vector<double> xs, ys;
        for (Index t = lo; t <= T; t = std::max(t + 1, static_cast<Index>(t * 1.25))) {
            xs.push_back(static_cast<double>(t));
            ys.push_back(rep.lhs(t - 1));
        }
        rep.slope = loglog_slope(Eigen::Map<Vec>(xs.data(), static_cast<Index>(xs.size())),
                                 Eigen::Map<Vec>(ys.data(), static_cast<Index>(ys.size())));
    }
    return rep;
}

RateReport regret_report(const std::vector<SyntheticTrace>& runs, const TheoryConstants& c, double F1) {
    if (runs.empty()) throw InvalidInputError("regret_report: no runs");
    RateReport rep = verify_rate(runs, c, F1);
    std::vector<Vec> rows;
    for (const auto& r : runs) rows.push_back(prefix_sum(r.gap));
    Vec se;
    mean_stderr(rows, rep.regret_empirical, se);
    const Index T = rep.regret_empirical.size();
    rep.regret_bound.resize(T);
    for (Index t = 0; t < T; ++t) rep.regret_bound(t) = regret_bound_at(c, F1, static_cast<double>(t + 1));
    return rep;
}

}  // namespace qnctl
