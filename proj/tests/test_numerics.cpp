#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>

#include "qnctl/errors.hpp"
#include "qnctl/numerics.hpp"
#include "test_util.hpp"

using namespace qnctl;
using namespace qnctl::testing;

namespace {
void check_penrose(const Mat& A) {
    const Mat P = pseudo_inverse(A).matrix;
    const double s = std::max(1.0, svd_factorize(A).sigma.size() ? svd_factorize(A).sigma(0) : 1.0);
    CHECK((A * P * A - A).norm() < 1e-10 * s);
    CHECK((P * A * P - P).norm() < 1e-10 * s);
    CHECK(((A * P) - (A * P).transpose()).norm() < 1e-10 * s);
    CHECK(((P * A) - (P * A).transpose()).norm() < 1e-10 * s);
}
}  // namespace

TEST_CASE("pseudo-inverse of simple matrices") {
    CHECK(pseudo_inverse(Mat::Identity(3, 3)).matrix.isApprox(Mat::Identity(3, 3)));
    Mat d(2, 2);
    d << 2, 0, 0, 0;
    const auto r = pseudo_inverse(d);
    Mat want(2, 2);
    want << 0.5, 0, 0, 0;
    CHECK((r.matrix - want).norm() < 1e-15);
    CHECK(r.rank == 1);
}

TEST_CASE("pseudo-inverse satisfies the Penrose identities for every rank profile") {
    std::mt19937_64 rng(7);
    check_penrose(random_matrix(5, 3, rng));
    for (Index rank = 0; rank <= 4; ++rank) {
        const Mat A = rank == 0 ? Mat::Zero(4, 6) : Mat(random_matrix(4, rank, rng) * random_matrix(rank, 6, rng));
        check_penrose(A);
        CHECK(pseudo_inverse(A).rank == rank);
    }
}

TEST_CASE("pseudo-inverse rejects non-finite input") {
    Mat A = Mat::Identity(2, 2);
    A(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(pseudo_inverse(A), InvalidInputError);
}

TEST_CASE("ridge regression examples") {
    std::vector<Vec> y{Vec::Ones(3), Vec::LinSpaced(3, 0, 1)}, u{Vec::Zero(2), Vec::Zero(2)};
    CHECK(ridge_regression(y, u, 1.0).norm() == 0.0);

    Vec y1(2), u1(1);
    y1 << 1, 0;
    u1 << 3;
    const Mat R = ridge_regression({y1}, {u1}, 0.0);
    CHECK(R.rows() == 1);
    CHECK(R(0, 0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(std::abs(R(0, 1)) < 1e-14);
    CHECK_THROWS_AS(ridge_regression({y1}, {u1}, 0.0, false), RegularizationRequiredError);
    CHECK_THROWS_AS(ridge_regression({}, {}, 1.0), InvalidInputError);
}

TEST_CASE("ridge regression recovers a planted map and matches the Kronecker least-squares oracle") {
    std::mt19937_64 rng(11);
    const Mat R0 = random_matrix(3, 5, rng);
    std::vector<Vec> ys, us;
    for (int i = 0; i < 50; ++i) {
        ys.push_back(random_vector(5, rng));
        us.push_back(R0 * ys.back());
    }
    CHECK((ridge_regression(ys, us, 1e-8) - R0).norm() < 1e-6);
    CHECK((ridge_regression(ys, us, 1e-12) - ridge_regression(ys, us, 0.0)).norm() < 1e-6);

    // Noisy targets, rho = 0.7: solve min |(Y^T (x) I) vec R - vec U|^2 + rho |vec R|^2 directly.
    const double rho = 0.7;
    for (auto& u : us) u += random_vector(3, rng, 0.3);
    Mat big = Mat::Zero(50 * 3 + 15, 15);
    Vec rhs = Vec::Zero(50 * 3 + 15);
    for (int i = 0; i < 50; ++i)
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 5; ++c) big(i * 3 + r, c * 3 + r) = ys[i](c);
            rhs(i * 3 + r) = us[i](r);
        }
    big.bottomRows(15) = std::sqrt(rho) * Mat::Identity(15, 15);
    const Vec vecR = big.colPivHouseholderQr().solve(rhs);
    const Mat oracle = Eigen::Map<const Mat>(vecR.data(), 3, 5);
    CHECK((ridge_regression(ys, us, rho) - oracle).norm() < 1e-10);
}

TEST_CASE("svd factorisation") {
    Mat d = Mat::Zero(2, 2);
    d(0, 0) = 3;
    d(1, 1) = 1;
    const auto s = svd_factorize(d);
    CHECK(s.sigma(0) == doctest::Approx(3.0));
    CHECK(s.sigma(1) == doctest::Approx(1.0));
    CHECK(svd_factorize(Mat::Zero(3, 2)).sigma.norm() == 0.0);

    std::mt19937_64 rng(3);
    const Mat A = random_matrix(4, 6, rng);
    const auto f = svd_factorize(A);
    CHECK((f.U * f.sigma.asDiagonal() * f.V.transpose() - A).norm() < 1e-10 * f.sigma(0));
    CHECK((f.U.transpose() * f.U - Mat::Identity(f.U.cols(), f.U.cols())).norm() < 1e-12);
    CHECK((f.V.transpose() * f.V - Mat::Identity(f.V.cols(), f.V.cols())).norm() < 1e-12);
    for (Index i = 1; i < f.sigma.size(); ++i) CHECK(f.sigma(i) <= f.sigma(i - 1));
}

TEST_CASE("quintic boundary solve") {
    auto c = solve_quintic_boundary(0, 0, 0, 0, 0, 0, 1);
    for (double x : c) CHECK(x == 0.0);
    c = solve_quintic_boundary(0, 0, 0, 1, 0, 0, 1);
    const double want[6] = {0, 0, 0, 10, -15, 6};
    for (int i = 0; i < 6; ++i) CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-12));
    c = solve_quintic_boundary(0, 1, 0, 1, 1, 0, 1);
    for (double tau : {0.0, 0.3, 0.77, 1.0}) CHECK(eval_quintic(c, tau) == doctest::Approx(tau).epsilon(1e-12));
    CHECK_THROWS_AS(solve_quintic_boundary(0, 0, 0, 1, 0, 0, 0.0), InvalidInputError);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ud(-3, 3);
    for (int trial = 0; trial < 50; ++trial) {
        const double p0 = ud(rng), v0 = ud(rng), a0 = ud(rng), p1 = ud(rng), v1 = ud(rng), a1 = ud(rng);
        const double d = 0.2 + std::abs(ud(rng));
        const auto q = solve_quintic_boundary(p0, v0, a0, p1, v1, a1, d);
        const double tol = 1e-9;
        CHECK(eval_quintic(q, 0, 0) == doctest::Approx(p0).epsilon(tol));
        CHECK(eval_quintic(q, 0, 1) == doctest::Approx(v0).epsilon(tol));
        CHECK(eval_quintic(q, 0, 2) == doctest::Approx(a0).epsilon(tol));
        CHECK(eval_quintic(q, d, 0) == doctest::Approx(p1).epsilon(tol));
        CHECK(eval_quintic(q, d, 1) == doctest::Approx(v1).epsilon(tol));
        CHECK(eval_quintic(q, d, 2) == doctest::Approx(a1).epsilon(tol));
    }
}

TEST_CASE("convolution matrix is the lifted causal convolution") {
    std::mt19937_64 rng(9);
    const Vec g = random_vector(4, rng);
    const Vec u = random_vector(12, rng);
    const Mat C = convolution_matrix(g, 12);
    CHECK(C.isLowerTriangular());
    Vec direct = Vec::Zero(12);
    for (Index k = 0; k < 12; ++k)
        for (Index i = 0; i < g.size() && i <= k; ++i) direct(k) += g(i) * u(k - i);
    CHECK((C * u - direct).norm() < 1e-12);
    CHECK((causal_convolve(g, u) - direct).norm() < 1e-12);
}
