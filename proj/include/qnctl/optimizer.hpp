#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <vector>

#include "qnctl/numerics.hpp"
#include "qnctl/trajectories.hpp"

namespace qnctl {

enum class StepKind { Constant, RateOptimal, Diminishing };

// How A_t^{-1} is applied: the rank-free inverse recursion, a fresh Cholesky
// factorisation of the running mean, or Auto (recursion for small problems).
enum class InverseMode { Recursion, Cholesky, Auto };

struct OptimizerConfig {
    double epsilon = std::numeric_limits<double>::infinity();
    double alpha = 0.0;
    StepKind step = StepKind::Constant;
    double eta = 0.1;                // constant step
    double F1 = 1.0, L = 1.0, H = 1.0;  // rate-optimal step estimates
    std::size_t T = 1000;
    double c = 0.1;                  // diminishing: c / sqrt(t)
    InverseMode inverse = InverseMode::Auto;
    std::size_t reinvert_every = 100;  // 0 disables periodic direct re-inversion
    Index auto_recursion_max_dim = 256;

    void validate() const;
    bool gradient_descent() const { return !(epsilon < std::numeric_limits<double>::infinity()); }
    double step_size(std::size_t t) const;
};

struct GradNorms {
    double g2 = 0.0;       // |g|^2
    double g2_Ainv = 0.0;  // g^T A^{-1} g
};

struct OptimizerState {
    std::size_t t = 0;
    Vec omega;
    Mat A;      // running mean of Lambda_k (empty in gradient-descent mode: identity)
    Mat A_inv;  // maintained by the recursion (recursion mode only)
    Eigen::LLT<Mat> chol;  // factor of A (Cholesky mode only)
    bool use_recursion = true;
    double lambda_max_seen = 1.0;
    double lambda_min_seen = 1.0;
    std::vector<LossRecord> loss_history;
    std::vector<GradNorms> grad_norm_history;

    Vec apply_inverse(const Vec& g) const;
    Mat inverse() const;
};

OptimizerState make_optimizer_state(const Vec& omega0, const OptimizerConfig& cfg);

// L_t = (I - G dpi/dy)^+ G dpi/domega; dpi_dy may be empty (pure feedforward).
Mat assemble_sensitivity(const Mat& G_est, const Mat& dpi_domega, const Mat& dpi_dy = Mat());

// Lambda_t = (1/eps) L^T L + (alpha/eps) J^T J + I (loss Hessian is the identity).
Mat pseudo_hessian(const Mat& L_t, const Mat& dpi_domega, double epsilon, double alpha);

// Advances t and folds Lambda_t into the running mean; in gradient-descent mode only t moves.
void update_running_hessian(OptimizerState& state, const Mat& Lambda_t, const OptimizerConfig& cfg);

// One inverse-recursion step: A_t^{-1} from A_{t-1}^{-1} and Lambda_t (t >= 2).
Mat recursion_inverse_update(const Mat& A_prev_inv, const Mat& Lambda_t, std::size_t t);

struct StepInfo {
    GradNorms norms;
    double eta = 0.0;
    double step_norm = 0.0;
};

// omega <- omega - eta_t A_t^{-1} g with g = L^T grad_y.
StepInfo quasi_newton_step(OptimizerState& state, const Mat& L_t, const Vec& grad_y, const OptimizerConfig& cfg);
// Same update given the parameter-space gradient estimate directly.
StepInfo quasi_newton_step_with_gradient(OptimizerState& state, const Vec& g, const OptimizerConfig& cfg);

// Binary optimizer snapshot (magic, t, omega, running mean A); the inverse is rebuilt on load.
void save_optimizer_state(std::ostream& os, const OptimizerState& s);
OptimizerState load_optimizer_state(std::istream& is, const OptimizerConfig& cfg);

double rate_optimal_step_size(double F1, double L, double H, std::size_t T);

}  // namespace qnctl
