#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "qnctl/optimizer.hpp"
#include "qnctl/parallel.hpp"

namespace qnctl {

struct TheoryConstants {
    double L = 1.0;       // smoothness
    double H = 1.0;       // second-moment bound
    double lambda = 1.0;  // pseudo-Hessian eigenvalue bound
    double kappa = 0.0;   // modelling-error modulus
    double mu = 1.0;      // Lojasiewicz constant
    double theta = 0.5;   // Lojasiewicz exponent
    double D = 1.0;       // radius of the minimum (function value)

    void validate() const;
};

// Right-hand side of the averaged-gradient rate bound for a single horizon T.
double rate_bound_at(const TheoryConstants& c, double F1, double T);
// Evaluated for every prefix length 1..T.
Vec rate_bound(const TheoryConstants& c, double F1, std::size_t T);

double hbar1(const TheoryConstants& c, double F1);
double hbar2(const TheoryConstants& c);
// Gradient-descent-limit bound on the plain squared-gradient average.
double gd_limit_bound_at(const TheoryConstants& c, double F1, double T);
// Expected-regret bound; case split on theta.
double regret_bound_at(const TheoryConstants& c, double F1, double T);
// High-probability (Markov) form: the expected bound divided by delta.
double regret_bound_probabilistic_at(const TheoryConstants& c, double F1, double T, double delta);

// Stochastic objective f(w; zeta) with known expectation F and minimiser.
class SyntheticObjective {
public:
    virtual ~SyntheticObjective() = default;
    virtual std::string name() const = 0;
    virtual Index dim() const = 0;
    virtual Vec sample_zeta(std::mt19937_64& rng) const = 0;
    virtual double f(const Vec& w, const Vec& zeta) const = 0;
    virtual Vec grad_f(const Vec& w, const Vec& zeta) const = 0;
    virtual double F(const Vec& w) const = 0;
    virtual Vec grad_F(const Vec& w) const = 0;
    // Gauss-Newton factor used to form Lambda_t = (1/eps) C^T C + I.
    virtual Mat curvature_factor(const Vec& w, const Vec& zeta) const = 0;
    virtual Vec omega_star() const = 0;
    virtual double F_star() const { return F(omega_star()); }
    virtual Vec initial_point() const = 0;
    // Valid constants on the region the iterates stay in.
    virtual TheoryConstants constants() const = 0;
};

// f = 1/2 (w - zeta)^T Q (w - zeta), zeta ~ N(center, s^2 I). theta = 1/2, mu = lambda_min(Q).
class QuadraticObjective final : public SyntheticObjective {
public:
    QuadraticObjective(Mat Q, Vec center, double noise_std, Vec start, double radius);
    std::string name() const override { return "quadratic"; }
    Index dim() const override { return center_.size(); }
    Vec sample_zeta(std::mt19937_64& rng) const override;
    double f(const Vec& w, const Vec& zeta) const override;
    Vec grad_f(const Vec& w, const Vec& zeta) const override;
    double F(const Vec& w) const override;
    Vec grad_F(const Vec& w) const override;
    Mat curvature_factor(const Vec& w, const Vec& zeta) const override;
    Vec omega_star() const override { return center_; }
    Vec initial_point() const override { return start_; }
    TheoryConstants constants() const override;

    static std::unique_ptr<QuadraticObjective> standard();

private:
    Mat Q_, Qhalf_;
    Vec center_, start_;
    double s_, radius_;
};

// f = 1/2 sum a_i (w_i - zeta_i)^2 + c sum (1 - cos w_i), zeta ~ N(0, s^2 I).
// Non-convex wherever cos w_i < -a_i / c.
class NonconvexObjective final : public SyntheticObjective {
public:
    NonconvexObjective(Vec a, double c, double noise_std, Vec start);
    std::string name() const override { return "nonconvex"; }
    Index dim() const override { return a_.size(); }
    Vec sample_zeta(std::mt19937_64& rng) const override;
    double f(const Vec& w, const Vec& zeta) const override;
    Vec grad_f(const Vec& w, const Vec& zeta) const override;
    double F(const Vec& w) const override;
    Vec grad_F(const Vec& w) const override;
    Mat curvature_factor(const Vec& w, const Vec& zeta) const override;
    Vec omega_star() const override { return Vec::Zero(a_.size()); }
    Vec initial_point() const override { return start_; }
    TheoryConstants constants() const override;

    static std::unique_ptr<NonconvexObjective> standard();

private:
    Vec a_, start_;
    double c_, s_;
};

// f = sum |w_i|^{8/3} (deterministic); theta = 3/4, mu = 32/9 on the unit box.
class FlatObjective final : public SyntheticObjective {
public:
    FlatObjective(Index dim, double start);
    std::string name() const override { return "flat"; }
    Index dim() const override { return n_; }
    Vec sample_zeta(std::mt19937_64&) const override { return Vec::Zero(n_); }
    double f(const Vec& w, const Vec&) const override { return F(w); }
    Vec grad_f(const Vec& w, const Vec&) const override { return grad_F(w); }
    double F(const Vec& w) const override;
    Vec grad_F(const Vec& w) const override;
    Mat curvature_factor(const Vec& w, const Vec& zeta) const override;
    Vec omega_star() const override { return Vec::Zero(n_); }
    Vec initial_point() const override { return Vec::Constant(n_, start_); }
    TheoryConstants constants() const override;

private:
    Index n_;
    double start_;
};

// Zero objective; regret must vanish identically.
class ZeroObjective final : public SyntheticObjective {
public:
    explicit ZeroObjective(Index dim) : n_(dim) {}
    std::string name() const override { return "zero"; }
    Index dim() const override { return n_; }
    Vec sample_zeta(std::mt19937_64&) const override { return Vec::Zero(n_); }
    double f(const Vec&, const Vec&) const override { return 0.0; }
    Vec grad_f(const Vec&, const Vec&) const override { return Vec::Zero(n_); }
    double F(const Vec&) const override { return 0.0; }
    Vec grad_F(const Vec&) const override { return Vec::Zero(n_); }
    Mat curvature_factor(const Vec&, const Vec&) const override { return Mat::Zero(n_, n_); }
    Vec omega_star() const override { return Vec::Zero(n_); }
    Vec initial_point() const override { return Vec::Ones(n_); }
    TheoryConstants constants() const override;

private:
    Index n_;
};

struct SyntheticRunConfig {
    OptimizerConfig optimizer;
    std::size_t T = 1000;
    std::uint64_t seed = 0;
    // Mean-shift bias F_est = grad f - (kappa / sqrt(lambda)) grad F, so the modelling-error condition holds with equality.
    double kappa_inject = 0.0;
    double lambda_inject = 1.0;
};

struct SyntheticTrace {
    Vec grad2_Ainv;  // |grad F(w_t)|^2 in the A_t^{-1} metric
    Vec grad2;       // |grad F(w_t)|^2
    Vec gap;         // F(w_t) - F*
    Vec omega_final;
    double lambda_max_seen = 1.0;
    double max_est_second_moment = 0.0;  // largest |F_est|^2 seen (audit against H^2)
};

SyntheticTrace run_synthetic(const SyntheticObjective& obj, const SyntheticRunConfig& cfg);

// Runs seeds seed0 .. seed0+n-1 (optionally in parallel); results ordered by seed.
std::vector<SyntheticTrace> run_synthetic_seeds(const SyntheticObjective& obj, const SyntheticRunConfig& cfg,
                                                std::size_t n_seeds, Exec exec);

// kappa-hat at w from a batch of per-sample (estimated, true) gradient pairs.
double kappa_hat_at(const SyntheticObjective& obj, const Vec& w, double kappa_inject, double lambda_inject,
                    std::size_t batch, std::uint64_t seed);

struct RateReport {
    Vec lhs;              // seed-mean running average of |grad F|^2_{A^{-1}}
    Vec lhs_stderr;
    Vec rhs;              // rate bound per prefix
    double slope = 0.0;   // log-log fit across horizons (multi-horizon reports)
    Vec regret_empirical; // seed-mean cumulative F(w_t) - F*
    Vec regret_bound;
    bool binding = true;  // false if the constants failed their audit
    bool holds = true;    // lhs + stderr <= rhs for t >= t_min
    std::size_t t_min = 10;
};

RateReport verify_rate(const std::vector<SyntheticTrace>& runs, const TheoryConstants& c, double F1,
                       std::size_t t_min = 10);
RateReport regret_report(const std::vector<SyntheticTrace>& runs, const TheoryConstants& c, double F1);

// Least-squares slope of log(y) against log(x).
double loglog_slope(const Vec& x, const Vec& y);

// Empirical quantile (linear interpolation), q in [0, 1].
double quantile(std::vector<double> v, double q);

}  // namespace qnctl
