#pragma once

#include <functional>
#include <random>

#include "qnctl/numerics.hpp"

namespace qnctl::testing {

inline Mat random_matrix(Index r, Index c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    Mat m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
    return m;
}

inline Vec random_vector(Index n, std::mt19937_64& rng, double scale = 1.0) {
    return random_matrix(n, 1, rng, scale);
}

// Central finite-difference Jacobian of f at x.
inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, double h = 1e-6) {
    const Index m = f(x).size();
    Mat J(m, x.size());
    for (Index j = 0; j < x.size(); ++j) {
        Vec xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        J.col(j) = (f(xp) - f(xm)) / (2.0 * h);
    }
    return J;
}

inline double rel_err(const Mat& a, const Mat& b) {
    const double d = (a - b).norm();
    const double s = std::max(a.norm(), b.norm());
    return s > 0.0 ? d / s : d;
}

}  // namespace qnctl::testing
