#include "qnctl/numerics.hpp"

#include <cmath>

#include "qnctl/errors.hpp"

namespace qnctl {

bool all_finite(const Mat& m) { return m.allFinite(); }

PseudoInverseResult pseudo_inverse(const Mat& m, double tol) {
    if (!(tol > 0.0)) throw InvalidInputError("pseudo_inverse: tol must be positive");
    if (!m.allFinite()) throw InvalidInputError("pseudo_inverse: non-finite input");
    PseudoInverseResult out;
    out.tolerance = tol;
    if (m.size() == 0) {
        out.matrix = Mat::Zero(m.cols(), m.rows());
        return out;
    }
    Eigen::BDCSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vec& s = svd.singularValues();
    const double cutoff = tol * (s.size() > 0 ? s(0) : 0.0);
    Vec sinv = Vec::Zero(s.size());
    for (Index i = 0; i < s.size(); ++i) {
        if (s(i) > cutoff && s(i) > 0.0) {
            sinv(i) = 1.0 / s(i);
            ++out.rank;
        }
    }
    out.matrix = svd.matrixV() * sinv.asDiagonal() * svd.matrixU().transpose();
    return out;
}

SvdResult svd_factorize(const Mat& m) {
    if (!m.allFinite()) throw InvalidInputError("svd_factorize: non-finite input");
    Eigen::BDCSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

Mat ridge_regression(const std::vector<Vec>& inputs, const std::vector<Vec>& targets, double rho,
                     bool allow_min_norm) {
    if (inputs.empty() || inputs.size() != targets.size())
        throw InvalidInputError("ridge_regression: need equally many (non-zero) inputs and targets");
    if (rho < 0.0) throw InvalidInputError("ridge_regression: rho must be non-negative");
    const Index dy = inputs.front().size();
    const Index du = targets.front().size();
    Mat Y(dy, static_cast<Index>(inputs.size()));
    Mat U(du, static_cast<Index>(targets.size()));
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].size() != dy || targets[i].size() != du)
            throw InvalidInputError("ridge_regression: inconsistent sample dimensions");
        Y.col(static_cast<Index>(i)) = inputs[i];
        U.col(static_cast<Index>(i)) = targets[i];
    }
    if (!Y.allFinite() || !U.allFinite()) throw InvalidInputError("ridge_regression: non-finite data");

    Mat gram = Y * Y.transpose();
    const Mat cross = U * Y.transpose();
    if (rho > 0.0) {
        gram.diagonal().array() += rho;
        Eigen::LLT<Mat> llt(gram);
        // R gram = cross  <=>  gram R^T = cross^T (gram symmetric)
        return llt.solve(cross.transpose()).transpose();
    }
    Eigen::FullPivLU<Mat> lu(gram);
    lu.setThreshold(1e-12);
    if (lu.isInvertible()) return lu.solve(cross.transpose()).transpose();
    if (!allow_min_norm)
        throw RegularizationRequiredError("ridge_regression: Gram matrix is singular and rho = 0");
    // Minimum-norm least squares: R = U Y^+.
    return U * pseudo_inverse(Y).matrix;
}

std::array<double, 6> solve_quintic_boundary(double p0, double v0, double a0, double p1,
                                             double v1, double a1, double d) {
    if (!(d > 0.0)) throw InvalidInputError("solve_quintic_boundary: duration must be positive");
    // Low-order coefficients follow from the tau = 0 conditions; the remaining three
    // come from the closed-form inverse of the tau = d block.
    const double d2 = d * d, d3 = d2 * d, d4 = d3 * d, d5 = d4 * d;
    const double c0 = p0, c1 = v0, c2 = 0.5 * a0;
    const double h = p1 - (c0 + c1 * d + c2 * d2);
    const double dv = v1 - (c1 + 2.0 * c2 * d);
    const double da = a1 - 2.0 * c2;
    const double c3 = (20.0 * h - 8.0 * dv * d + da * d2) / (2.0 * d3);
    const double c4 = (-30.0 * h + 14.0 * dv * d - 2.0 * da * d2) / (2.0 * d4);
    const double c5 = (12.0 * h - 6.0 * dv * d + da * d2) / (2.0 * d5);
    return {c0, c1, c2, c3, c4, c5};
}

double eval_quintic(const std::array<double, 6>& c, double tau, int deriv) {
    double acc = 0.0;
    for (int i = 5; i >= deriv; --i) {
        double coeff = c[static_cast<std::size_t>(i)];
        for (int j = 0; j < deriv; ++j) coeff *= static_cast<double>(i - j);
        acc = acc * tau + coeff;
    }
    return acc;
}

Mat convolution_matrix(const Vec& g, Index q) {
    Mat m = Mat::Zero(q, q);
    const Index n = std::min<Index>(g.size(), q);
    for (Index j = 0; j < q; ++j)
        for (Index i = 0; i < n && j + i < q; ++i) m(j + i, j) = g(i);
    return m;
}

Vec causal_convolve(const Vec& g, const Vec& u) {
    const Index q = u.size();
    Vec y = Vec::Zero(q);
    for (Index k = 0; k < q; ++k) {
        const Index n = std::min<Index>(g.size(), k + 1);
        double acc = 0.0;
        for (Index i = 0; i < n; ++i) acc += g(i) * u(k - i);
        y(k) = acc;
    }
    return y;
}

}  // namespace qnctl
