#include "qnctl/optimizer.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "qnctl/errors.hpp"
#include "qnctl/gradest.hpp"

namespace qnctl {

void OptimizerConfig::validate() const {
    if (!(epsilon > 0.0)) throw InvalidInputError("OptimizerConfig: epsilon must be positive");
    if (alpha < 0.0) throw InvalidInputError("OptimizerConfig: alpha must be non-negative");
    if (step == StepKind::Constant && !(eta > 0.0)) throw InvalidInputError("OptimizerConfig: eta must be positive");
    if (step == StepKind::Diminishing && !(c > 0.0)) throw InvalidInputError("OptimizerConfig: c must be positive");
    if (step == StepKind::RateOptimal && (F1 < 0.0 || !(L > 0.0) || !(H > 0.0) || T == 0))
        throw InvalidInputError("OptimizerConfig: invalid rate-optimal step constants");
}

double rate_optimal_step_size(double F1, double L, double H, std::size_t T) {
    if (F1 < 0.0 || !(L > 0.0) || !(H > 0.0) || T == 0)
        throw InvalidInputError("rate_optimal_step_size: constants must be positive");
    return std::sqrt(2.0 * F1 / (L * H * H * static_cast<double>(T)));
}

double OptimizerConfig::step_size(std::size_t t) const {
    switch (step) {
        case StepKind::Constant:
            return eta;
        case StepKind::RateOptimal:
            return rate_optimal_step_size(F1, L, H, T);
        case StepKind::Diminishing:
            return c / std::sqrt(static_cast<double>(std::max<std::size_t>(t, 1)));
    }
    return eta;
}

OptimizerState make_optimizer_state(const Vec& omega0, const OptimizerConfig& cfg) {
    cfg.validate();
    OptimizerState s;
    s.omega = omega0;
    const Index n = omega0.size();
    s.use_recursion = cfg.inverse == InverseMode::Recursion ||
                      (cfg.inverse == InverseMode::Auto && n <= cfg.auto_recursion_max_dim);
    return s;
}

Vec OptimizerState::apply_inverse(const Vec& g) const {
    if (A.size() == 0) return g;
    if (use_recursion) return A_inv * g;
    return chol.solve(g);
}

Mat OptimizerState::inverse() const {
    if (A.size() == 0) return Mat::Identity(omega.size(), omega.size());
    if (use_recursion) return A_inv;
    return chol.solve(Mat::Identity(A.rows(), A.cols()));
}

Mat assemble_sensitivity(const Mat& G, const Mat& J, const Mat& K) {
    if (G.cols() != J.rows()) throw InvalidInputError("assemble_sensitivity: shape mismatch");
    if (K.size() == 0 || K.isZero(0.0)) return G * J;
    return closed_loop_gradient(G, K).G * J;
}

Mat pseudo_hessian(const Mat& L_t, const Mat& J, double epsilon, double alpha) {
    if (!(epsilon > 0.0)) throw InvalidInputError("pseudo_hessian: epsilon must be positive");
    const Index n = L_t.cols();
    if (J.size() > 0 && J.cols() != n) throw InvalidInputError("pseudo_hessian: shape mismatch");
    Mat Lam = Mat::Identity(n, n);
    if (std::isinf(epsilon)) return Lam;
    Lam.selfadjointView<Eigen::Lower>().rankUpdate(L_t.transpose(), 1.0 / epsilon);
    if (alpha > 0.0 && J.size() > 0) Lam.selfadjointView<Eigen::Lower>().rankUpdate(J.transpose(), alpha / epsilon);
    Lam.triangularView<Eigen::StrictlyUpper>() = Lam.transpose();
    return Lam;
}

Mat recursion_inverse_update(const Mat& A_prev_inv, const Mat& Lambda_t, std::size_t t) {
    const double tm1 = static_cast<double>(t - 1), td = static_cast<double>(t);
    const Mat R = A_prev_inv * Lambda_t;
    Mat inner = R / tm1;
    inner.diagonal().array() += 1.0;
    const Mat X = inner.partialPivLu().solve(A_prev_inv);
    Mat out = (td / tm1) * A_prev_inv - (td / (tm1 * tm1)) * (R * X);
    return 0.5 * (out + out.transpose());
}

void update_running_hessian(OptimizerState& s, const Mat& Lambda_t, const OptimizerConfig& cfg) {
    if (cfg.gradient_descent()) {
        s.t += 1;
        return;
    }
    const Index n = s.omega.size();
    if (Lambda_t.rows() != n || Lambda_t.cols() != n) throw InvalidInputError("update_running_hessian: shape");
    if (!Lambda_t.allFinite()) throw NonFiniteGradientError("update_running_hessian: non-finite Lambda_t");
    // Candidate state is built aside so a failed factorisation leaves s untouched.
    const std::size_t t = s.t + 1;
    const double td = static_cast<double>(t);
    Mat A = t == 1 ? Lambda_t : Mat(s.A + (Lambda_t - s.A) / td);
    if (s.use_recursion) {
        const bool direct = t == 1 || (cfg.reinvert_every > 0 && t % cfg.reinvert_every == 0);
        Mat A_inv;
        if (direct) {
            Eigen::LLT<Mat> llt(A);
            if (llt.info() != Eigen::Success) throw NonFiniteGradientError("update_running_hessian: A_t not positive definite");
            A_inv = llt.solve(Mat::Identity(n, n));
        } else {
            A_inv = recursion_inverse_update(s.A_inv, Lambda_t, t);
        }
        if (!A_inv.allFinite()) throw NonFiniteGradientError("update_running_hessian: non-finite A_t inverse");
        s.A_inv = std::move(A_inv);
    } else {
        Eigen::LLT<Mat> llt(A);
        if (llt.info() != Eigen::Success) throw NonFiniteGradientError("update_running_hessian: A_t not positive definite");
        s.chol = std::move(llt);
    }
    s.A = std::move(A);
    s.t = t;
}

StepInfo quasi_newton_step_with_gradient(OptimizerState& s, const Vec& g, const OptimizerConfig& cfg) {
    if (g.size() != s.omega.size()) throw InvalidInputError("quasi_newton_step: gradient size mismatch");
    if (!g.allFinite()) throw NonFiniteGradientError("quasi_newton_step: non-finite gradient");
    const Vec d = s.apply_inverse(g);
    if (!d.allFinite()) throw NonFiniteGradientError("quasi_newton_step: non-finite direction");
    StepInfo info;
    info.eta = cfg.step_size(s.t);
    info.norms.g2 = g.squaredNorm();
    info.norms.g2_Ainv = g.dot(d);
    const Vec delta = -info.eta * d;
    info.step_norm = delta.norm();
    s.omega += delta;
    s.grad_norm_history.push_back(info.norms);
    return info;
}

StepInfo quasi_newton_step(OptimizerState& s, const Mat& L_t, const Vec& grad_y, const OptimizerConfig& cfg) {
    if (L_t.rows() != grad_y.size()) throw InvalidInputError("quasi_newton_step: L_t / gradient mismatch");
    return quasi_newton_step_with_gradient(s, L_t.transpose() * grad_y, cfg);
}

namespace {
constexpr char kStateMagic[8] = {'Q', 'N', 'O', 'P', 'T', '0', '0', '1'};

void put_i64(std::ostream& os, std::int64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }
std::int64_t get_i64(std::istream& is) {
    std::int64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw InvalidInputError("load_optimizer_state: truncated");
    return v;
}
void put_doubles(std::ostream& os, const double* p, Index n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(n)));
}
void get_doubles(std::istream& is, double* p, Index n) {
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(n)));
    if (!is) throw InvalidInputError("load_optimizer_state: truncated payload");
}
}  // namespace

void save_optimizer_state(std::ostream& os, const OptimizerState& s) {
    os.write(kStateMagic, sizeof kStateMagic);
    put_i64(os, static_cast<std::int64_t>(s.t));
    put_i64(os, s.omega.size());
    put_doubles(os, s.omega.data(), s.omega.size());
    put_i64(os, s.A.rows());
    put_doubles(os, s.A.data(), s.A.size());
}

OptimizerState load_optimizer_state(std::istream& is, const OptimizerConfig& cfg) {
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kStateMagic, sizeof magic) != 0) throw InvalidInputError("load_optimizer_state: bad magic");
    const auto t = get_i64(is);
    const auto n = get_i64(is);
    if (t < 0 || n < 0) throw InvalidInputError("load_optimizer_state: corrupt header");
    Vec omega(n);
    get_doubles(is, omega.data(), n);
    OptimizerState s = make_optimizer_state(omega, cfg);
    s.t = static_cast<std::size_t>(t);
    const auto m = get_i64(is);
    if (m != 0 && m != n) throw InvalidInputError("load_optimizer_state: A has the wrong size");
    if (m > 0) {
        s.A.resize(m, m);
        get_doubles(is, s.A.data(), m * m);
        Eigen::LLT<Mat> llt(s.A);
        if (llt.info() != Eigen::Success) throw InvalidInputError("load_optimizer_state: A is not positive definite");
        if (s.use_recursion) s.A_inv = llt.solve(Mat::Identity(m, m));
        else s.chol = std::move(llt);
    }
    return s;
}

}  // namespace qnctl
