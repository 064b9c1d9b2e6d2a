#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "qnctl/errors.hpp"
#include "qnctl/optimizer.hpp"
#include "test_util.hpp"

using namespace qnctl;
using namespace qnctl::testing;

namespace {
Mat random_spd(Index n, std::mt19937_64& rng, double lo, double hi) {
    const Mat Q = random_matrix(n, n, rng).householderQr().householderQ();
    std::uniform_real_distribution<double> ud(lo, hi);
    Vec d(n);
    for (Index i = 0; i < n; ++i) d(i) = ud(rng);
    return Q * d.asDiagonal() * Q.transpose();
}

Mat scalar(double v) { return Mat::Constant(1, 1, v); }

OptimizerConfig qn(double eps, double alpha, double eta, InverseMode mode = InverseMode::Recursion) {
    OptimizerConfig c;
    c.epsilon = eps;
    c.alpha = alpha;
    c.eta = eta;
    c.inverse = mode;
    return c;
}

// Linear-quadratic tracking problem y = G J omega, loss 1/2 |y - r|^2, iterated with the optimizer.
std::vector<Vec> iterate_lq(const Mat& G, const Mat& J, const Vec& r, const Vec& w0, const OptimizerConfig& cfg, int steps,
                            std::vector<double>* metric = nullptr) {
    OptimizerState s = make_optimizer_state(w0, cfg);
    std::vector<Vec> out;
    for (int t = 0; t < steps; ++t) {
        const Mat L = G * J;
        const Vec gy = L * s.omega - r;
        update_running_hessian(s, pseudo_hessian(L, J, cfg.epsilon, cfg.alpha), cfg);
        const auto info = quasi_newton_step(s, L, gy, cfg);
        if (metric) metric->push_back(info.norms.g2_Ainv);
        out.push_back(s.omega);
    }
    return out;
}
}  // namespace

TEST_CASE("sensitivity assembly") {
    std::mt19937_64 rng(1);
    const Mat G = random_matrix(6, 6, rng).triangularView<Eigen::Lower>();
    const Mat J = random_matrix(6, 3, rng);
    CHECK((assemble_sensitivity(G, J) - G * J).norm() == 0.0);
    CHECK((assemble_sensitivity(G, J, Mat::Zero(6, 6)) - G * J).norm() == 0.0);
    CHECK(assemble_sensitivity(scalar(2), scalar(1), scalar(0.25))(0, 0) == doctest::Approx(4.0));
    const Mat K = random_matrix(6, 6, rng, 0.3).triangularView<Eigen::StrictlyLower>();
    Mat M = Mat::Identity(6, 6) - G * K;
    const Mat direct = M.fullPivLu().solve(G * J);
    CHECK((assemble_sensitivity(G, J, K) - direct).norm() < 1e-10 * direct.norm());
    CHECK_THROWS_AS(assemble_sensitivity(G, random_matrix(5, 3, rng)), InvalidInputError);
}

TEST_CASE("pseudo-Hessian") {
    std::mt19937_64 rng(2);
    const Mat L = random_matrix(8, 4, rng), J = random_matrix(8, 4, rng);
    CHECK(pseudo_hessian(L, J, std::numeric_limits<double>::infinity(), 1.0) == Mat::Identity(4, 4));
    CHECK(pseudo_hessian(scalar(2), scalar(1), 1.0, 1.0)(0, 0) == doctest::Approx(6.0));
    for (int k = 0; k < 20; ++k) {
        const Mat Lam = pseudo_hessian(random_matrix(8, 4, rng, 3), random_matrix(8, 4, rng), 0.01 + k, 0.1 * k);
        CHECK((Lam - Lam.transpose()).norm() == 0.0);
        CHECK(Eigen::SelfAdjointEigenSolver<Mat>(Lam).eigenvalues().minCoeff() >= 1.0 - 1e-10);
    }
    const Mat expect = L.transpose() * L / 0.5 + 0.3 / 0.5 * J.transpose() * J + Mat::Identity(4, 4);
    CHECK((pseudo_hessian(L, J, 0.5, 0.3) - expect).norm() < 1e-12 * expect.norm());
    CHECK_THROWS_AS(pseudo_hessian(L, J, 0.0, 0.0), InvalidInputError);
}

TEST_CASE("running mean and inverse recursion examples") {
    const auto cfg = qn(1.0, 0.0, 1.0);
    OptimizerState s = make_optimizer_state(Vec::Zero(3), cfg);
    update_running_hessian(s, 2.0 * Mat::Identity(3, 3), cfg);
    CHECK(s.t == 1);
    CHECK((s.A - 2.0 * Mat::Identity(3, 3)).norm() == 0.0);
    CHECK((s.A_inv - 0.5 * Mat::Identity(3, 3)).norm() < 1e-15);
    update_running_hessian(s, 4.0 * Mat::Identity(3, 3), cfg);
    CHECK((s.A - 3.0 * Mat::Identity(3, 3)).norm() < 1e-15);
    CHECK((s.A_inv - Mat::Identity(3, 3) / 3.0).norm() < 1e-14);
    CHECK((recursion_inverse_update(0.5 * Mat::Identity(2, 2), 4.0 * Mat::Identity(2, 2), 2) - Mat::Identity(2, 2) / 3.0)
              .norm() < 1e-14);
}

TEST_CASE("inverse recursion tracks direct inversion") {
    std::mt19937_64 rng(3);
    for (std::size_t every : {std::size_t{0}, std::size_t{100}}) {
        auto cfg = qn(1.0, 0.0, 1.0);
        cfg.reinvert_every = every;
        OptimizerState s = make_optimizer_state(Vec::Zero(12), cfg);
        Mat sum = Mat::Zero(12, 12);
        double worst = 0.0;
        const int steps = every == 0 ? 100 : 1000;
        for (int t = 1; t <= steps; ++t) {
            const Mat Lam = random_spd(12, rng, 1.0, 10.0);
            sum += Lam;
            update_running_hessian(s, Lam, cfg);
            const Mat direct = (sum / t).inverse();
            worst = std::max(worst, (s.A_inv - direct).cwiseAbs().maxCoeff());
            CHECK((s.A - sum / t).norm() < 1e-10 * s.A.norm());
        }
        MESSAGE("reinvert_every=" << every << " max |A_inv - direct| = " << worst);
        CHECK(worst < 1e-8);
    }
}

TEST_CASE("Cholesky mode agrees with recursion mode") {
    std::mt19937_64 rng(4);
    auto a = qn(1.0, 0.0, 1.0, InverseMode::Recursion), b = qn(1.0, 0.0, 1.0, InverseMode::Cholesky);
    OptimizerState sa = make_optimizer_state(Vec::Zero(6), a), sb = make_optimizer_state(Vec::Zero(6), b);
    for (int t = 0; t < 30; ++t) {
        const Mat Lam = random_spd(6, rng, 1.0, 5.0);
        update_running_hessian(sa, Lam, a);
        update_running_hessian(sb, Lam, b);
    }
    const Vec g = Vec::LinSpaced(6, -1, 1);
    CHECK((sa.apply_inverse(g) - sb.apply_inverse(g)).norm() < 1e-10);
    auto c = qn(1.0, 0.0, 1.0, InverseMode::Auto);
    c.auto_recursion_max_dim = 4;
    CHECK_FALSE(make_optimizer_state(Vec::Zero(6), c).use_recursion);
    CHECK(make_optimizer_state(Vec::Zero(3), c).use_recursion);
}

TEST_CASE("step examples") {
    OptimizerConfig gd;
    gd.eta = 0.1;
    OptimizerState s = make_optimizer_state(Vec::Zero(2), gd);
    update_running_hessian(s, Mat(), gd);
    Vec g(2);
    g << 1, -2;
    quasi_newton_step_with_gradient(s, g, gd);
    CHECK(s.omega(0) == doctest::Approx(-0.1));
    CHECK(s.omega(1) == doctest::Approx(0.2));

    const auto cfg = qn(1.0, 1.0, 1.0);
    OptimizerState q = make_optimizer_state(Vec::Zero(1), cfg);
    update_running_hessian(q, pseudo_hessian(scalar(2), scalar(1), 1.0, 1.0), cfg);
    const auto info = quasi_newton_step(q, scalar(2), Vec::Constant(1, 3.0), cfg);  // g = 2 * 3 = 6
    CHECK(q.omega(0) == doctest::Approx(-1.0));
    CHECK(info.norms.g2 == doctest::Approx(36.0));
    CHECK(info.norms.g2_Ainv == doctest::Approx(6.0));

    OptimizerState z = make_optimizer_state(Vec::Constant(3, 0.7), cfg);
    update_running_hessian(z, Mat::Identity(3, 3), cfg);
    quasi_newton_step_with_gradient(z, Vec::Zero(3), cfg);
    CHECK(z.omega == Vec::Constant(3, 0.7));
    CHECK(z.t == 1);
}

TEST_CASE("non-finite inputs leave the state unchanged") {
    const auto cfg = qn(1.0, 0.0, 1.0);
    OptimizerState s = make_optimizer_state(Vec::Ones(2), cfg);
    update_running_hessian(s, 2.0 * Mat::Identity(2, 2), cfg);
    const OptimizerState before = s;
    Mat bad = Mat::Identity(2, 2);
    bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(update_running_hessian(s, bad, cfg), NonFiniteGradientError);
    CHECK_THROWS_AS(quasi_newton_step_with_gradient(s, Vec::Constant(2, std::numeric_limits<double>::infinity()), cfg),
                    NonFiniteGradientError);
    CHECK(s.t == before.t);
    CHECK(s.A == before.A);
    CHECK(s.A_inv == before.A_inv);
    CHECK(s.omega == before.omega);
    CHECK(s.grad_norm_history.empty());
    // A running mean that is not positive definite is rejected the same way.
    OptimizerState c = make_optimizer_state(Vec::Ones(2), qn(1.0, 0.0, 1.0, InverseMode::Cholesky));
    CHECK_THROWS_AS(update_running_hessian(c, -Mat::Identity(2, 2), qn(1.0, 0.0, 1.0, InverseMode::Cholesky)),
                    NonFiniteGradientError);
    CHECK(c.t == 0);
}

TEST_CASE("gradient-descent limit") {
    std::mt19937_64 rng(5);
    const Mat G = random_matrix(10, 10, rng).triangularView<Eigen::Lower>(), J = random_matrix(10, 4, rng);
    const Vec r = random_vector(10, rng), w0 = random_vector(4, rng);
    OptimizerConfig gd;
    gd.eta = 1e-3;
    const auto a = iterate_lq(G, J, r, w0, gd, 50);
    const auto b = iterate_lq(G, J, r, w0, qn(1e12, 0.5, 1e-3), 50);
    for (int t = 0; t < 50; ++t) CHECK(rel_err(a[t], b[t]) < 1e-9);
}

TEST_CASE("orthogonal reparameterisation: iterates and metric are covariant") {
    std::mt19937_64 rng(6);
    const Mat G = random_matrix(12, 12, rng).triangularView<Eigen::Lower>(), J = random_matrix(12, 5, rng);
    const Vec r = random_vector(12, rng), w0 = random_vector(5, rng);
    const Mat S = random_matrix(5, 5, rng).householderQr().householderQ();
    const auto cfg = qn(0.7, 0.2, 0.5);
    std::vector<double> m1, m2;
    const auto a = iterate_lq(G, J, r, w0, cfg, 50, &m1);
    const auto b = iterate_lq(G, J * S, r, S.transpose() * w0, cfg, 50, &m2);
    for (int t = 0; t < 50; ++t) {
        CHECK((a[t] - S * b[t]).norm() < 1e-6);
        CHECK(m1[t] == doctest::Approx(m2[t]).epsilon(1e-8));
    }
}

TEST_CASE("general reparameterisation: covariant when the model term dominates") {
    // With eps -> 0 and eta*eps held fixed, A ~ (1/eps)(L^T L + alpha J^T J) which transforms as S^T(.)S.
    std::mt19937_64 rng(7);
    const Mat G = random_matrix(12, 12, rng).triangularView<Eigen::Lower>(), J = random_matrix(12, 5, rng);
    const Vec r = random_vector(12, rng), w0 = random_vector(5, rng);
    const Mat S = random_matrix(5, 5, rng) + 3.0 * Mat::Identity(5, 5);
    const double eps = 1e-10;
    const auto cfg = qn(eps, 0.2, 0.3 / eps);
    const auto a = iterate_lq(G, J, r, w0, cfg, 50);
    const auto b = iterate_lq(G, J * S, r, S.fullPivLu().solve(w0), cfg, 50);
    CHECK((a.back() - w0).norm() > 0.1);  // the iterates actually move
    for (int t = 0; t < 50; ++t) CHECK((a[t] - S * b[t]).norm() < 1e-6);
}

TEST_CASE("rate-optimal step size") {
    CHECK(rate_optimal_step_size(1, 2, 1, 1) == doctest::Approx(1.0));
    CHECK(rate_optimal_step_size(0, 2, 1, 1) == 0.0);
    CHECK(rate_optimal_step_size(3, 2, 5, 400) == doctest::Approx(0.5 * rate_optimal_step_size(3, 2, 5, 100)));
    CHECK_THROWS_AS(rate_optimal_step_size(1, 0, 1, 1), InvalidInputError);
    OptimizerConfig c;
    c.step = StepKind::Diminishing;
    c.c = 2.0;
    CHECK(c.step_size(4) == doctest::Approx(1.0));
}

TEST_CASE("optimizer state round-trips through its binary form") {
    std::mt19937_64 rng(8);
    for (auto mode : {InverseMode::Recursion, InverseMode::Cholesky}) {
        const auto cfg = qn(1.0, 0.0, 1.0, mode);
        OptimizerState s = make_optimizer_state(random_vector(5, rng), cfg);
        for (int t = 0; t < 7; ++t) update_running_hessian(s, random_spd(5, rng, 1, 4), cfg);
        std::stringstream ss;
        save_optimizer_state(ss, s);
        const OptimizerState l = load_optimizer_state(ss, cfg);
        CHECK(l.t == 7);
        CHECK(l.omega == s.omega);
        CHECK(l.A == s.A);
        const Vec g = random_vector(5, rng);
        CHECK((l.apply_inverse(g) - s.apply_inverse(g)).norm() < 1e-10);
    }
    std::stringstream junk("not a state");
    CHECK_THROWS_AS(load_optimizer_state(junk, OptimizerConfig{}), InvalidInputError);
}
