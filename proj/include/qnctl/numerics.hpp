#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

namespace qnctl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kDefaultPinvTol = 1e-12;

struct PseudoInverseResult {
    Mat matrix;
    Index rank = 0;
    double tolerance = kDefaultPinvTol;
};

// Moore-Penrose inverse via SVD; singular values below tol * sigma_max are dropped.
PseudoInverseResult pseudo_inverse(const Mat& m, double tol = kDefaultPinvTol);

struct SvdResult {
    Mat U;
    Vec sigma;
    Mat V;
};

// Thin SVD, sigma non-increasing.
SvdResult svd_factorize(const Mat& m);

// R minimising 1/2 sum |u_i - R y_i|^2 + rho/2 |R|_F^2.
// With rho == 0 and a singular Gram matrix the minimum-norm solution is returned
// unless allow_min_norm is false, in which case RegularizationRequiredError is thrown.
Mat ridge_regression(const std::vector<Vec>& inputs, const std::vector<Vec>& targets, double rho,
                     bool allow_min_norm = true);

// Coefficients c0..c5 (ascending powers of tau) of the quintic meeting
// position/velocity/acceleration at tau = 0 and tau = d.
std::array<double, 6> solve_quintic_boundary(double p0, double v0, double a0, double p1,
                                             double v1, double a1, double d);

// deriv = 0, 1, 2, 3 for value, velocity, acceleration, jerk.
double eval_quintic(const std::array<double, 6>& c, double tau, int deriv = 0);

// q x q lower-triangular Toeplitz matrix with g[0] on the diagonal.
Mat convolution_matrix(const Vec& g, Index q);

// y_k = sum_{j<=k} g_j u_{k-j}, truncated to u.size().
Vec causal_convolve(const Vec& g, const Vec& u);

bool all_finite(const Mat& m);

}  // namespace qnctl
