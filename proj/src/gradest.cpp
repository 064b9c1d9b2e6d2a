#include "qnctl/gradest.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include "qnctl/errors.hpp"

namespace qnctl {

using cd = std::complex<double>;

void FrequencyResponseSet::validate() const {
    const Index n = frequencies.size();
    if (amplitude.size() != n || phase.size() != n || nonlinearity.size() != n)
        throw InvalidInputError("FrequencyResponseSet: unequal lengths");
    for (Index i = 1; i < n; ++i)
        if (!(frequencies(i) > frequencies(i - 1)))
            throw InvalidInputError("FrequencyResponseSet: frequencies must be strictly increasing");
}

FrequencyResponseSet identify_frequency_response(const RolloutFn& plant, double dt, const Vec& freqs_hz,
                                                 double amplitude, double settle, double measure,
                                                 const IdentifyOptions& opt) {
    if (!(dt > 0) || !(amplitude > 0) || settle < 0 || !(measure > 0))
        throw InvalidInputError("identify_frequency_response: invalid timing or amplitude");
    const Index nf = freqs_hz.size();
    if (nf == 0) throw InvalidInputError("identify_frequency_response: no frequencies");
    for (Index i = 0; i < nf; ++i) {
        if (!(freqs_hz(i) > 0)) throw InvalidInputError("identify_frequency_response: frequencies must be positive");
        if (measure * freqs_hz(i) < 3.0 - 1e-9)
            throw InvalidInputError("identify_frequency_response: measure window shorter than 3 periods");
    }
    const Index n_settle = static_cast<Index>(std::llround(settle / dt));
    const Index n_meas = static_cast<Index>(std::llround(measure / dt));
    const Index q = n_settle + n_meas;

    FrequencyResponseSet frs;
    frs.frequencies = freqs_hz;
    frs.amplitude.resize(nf);
    frs.phase.resize(nf);
    frs.nonlinearity.resize(nf);
    std::vector<std::string> failures(static_cast<std::size_t>(nf));

    for_each_index(static_cast<std::size_t>(nf), opt.exec, [&](std::size_t idx) {
        const Index i = static_cast<Index>(idx);
        const double w = 2.0 * std::numbers::pi * freqs_hz(i);
        Vec u(q);
        for (Index k = 0; k < q; ++k) u(k) = amplitude * std::sin(w * static_cast<double>(k) * dt);
        Vec y;
        try {
            y = plant(u, static_cast<std::uint64_t>(idx));
        } catch (const DivergenceError& e) {
            failures[idx] = std::string(e.what());
            return;
        }
        // Regress the measured window on sin, cos and a constant. Output sample k is taken at
        // the end of the k-th hold interval when the correction is active.
        const double shift = opt.zoh_correction ? 1.0 : 0.0;
        Mat X(n_meas, 3);
        Vec yy = y.segment(n_settle, n_meas);
        for (Index r = 0; r < n_meas; ++r) {
            const double t = (static_cast<double>(n_settle + r) + shift) * dt;
            X(r, 0) = std::sin(w * t);
            X(r, 1) = std::cos(w * t);
            X(r, 2) = 1.0;
        }
        const Vec coef = X.colPivHouseholderQr().solve(yy);
        const Vec resid = yy - X * coef;
        double amp = std::hypot(coef(0), coef(1)) / amplitude;
        double ph = std::atan2(coef(1), coef(0));
        if (opt.zoh_correction) {
            const double x = 0.5 * w * dt;
            amp /= std::sin(x) / x;
            ph += x;
        }
        frs.amplitude(i) = amp;
        frs.phase(i) = std::remainder(ph, 2.0 * std::numbers::pi);
        frs.nonlinearity(i) = std::sqrt(resid.squaredNorm() / static_cast<double>(n_meas));
    });
    for (Index i = 0; i < nf; ++i)
        if (!failures[static_cast<std::size_t>(i)].empty())
            throw DivergenceError("identification diverged at " + std::to_string(freqs_hz(i)) + " Hz: " +
                                      failures[static_cast<std::size_t>(i)],
                                  0);
    // Unwrap so that the phase curve is continuous in frequency.
    for (Index i = 1; i < nf; ++i) {
        while (frs.phase(i) - frs.phase(i - 1) > std::numbers::pi) frs.phase(i) -= 2.0 * std::numbers::pi;
        while (frs.phase(i) - frs.phase(i - 1) < -std::numbers::pi) frs.phase(i) += 2.0 * std::numbers::pi;
    }
    return frs;
}

cd RationalTransferFunction::eval(cd s) const {
    cd n = 0.0, d = 0.0;
    for (Index k = num.size() - 1; k >= 0; --k) n = n * s + num(k);
    for (Index k = den.size() - 1; k >= 0; --k) d = d * s + den(k);
    return n / d;
}

std::vector<cd> RationalTransferFunction::poles() const {
    const Index na = den_order();
    std::vector<cd> p;
    if (na <= 0) return p;
    Mat comp = Mat::Zero(na, na);
    for (Index i = 1; i < na; ++i) comp(i, i - 1) = 1.0;
    for (Index i = 0; i < na; ++i) comp(i, na - 1) = -den(i) / den(na);
    Eigen::EigenSolver<Mat> es(comp, false);
    for (Index i = 0; i < na; ++i) p.push_back(es.eigenvalues()(i));
    return p;
}

bool RationalTransferFunction::is_stable(double margin) const {
    for (const auto& p : poles())
        if (p.real() >= -margin) return false;
    return true;
}

namespace {
cd poly_eval(const Vec& c, cd s) {
    cd acc = 0.0;
    for (Index k = c.size() - 1; k >= 0; --k) acc = acc * s + c(k);
    return acc;
}
}  // namespace

RationalTransferFunction fit_transfer_function(const FrequencyResponseSet& frs, Index nb, Index na) {
    frs.validate();
    if (nb < 0 || na < nb) throw InvalidInputError("fit_transfer_function: need den_order >= num_order >= 0");
    const Index m = frs.frequencies.size();
    const Index nu = (nb + 1) + na;
    if (m < nb + na + 1) throw InvalidInputError("fit_transfer_function: not enough frequency points");

    // Work in s' = s / w_n for conditioning.
    const double wn = 2.0 * std::numbers::pi * frs.frequencies(m - 1);
    std::vector<cd> s(static_cast<std::size_t>(m)), H(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) {
        s[static_cast<std::size_t>(i)] = cd(0.0, 2.0 * std::numbers::pi * frs.frequencies(i) / wn);
        H[static_cast<std::size_t>(i)] = frs.response(i);
    }
    Vec weight = Vec::Ones(m);
    Vec b = Vec::Zero(nb + 1), a = Vec::Zero(na + 1);
    a(na) = 1.0;
    int it = 0;
    for (it = 1; it <= 50; ++it) {
        Mat X(2 * m, nu);
        Vec rhs(2 * m);
        for (Index i = 0; i < m; ++i) {
            const cd si = s[static_cast<std::size_t>(i)], hi = H[static_cast<std::size_t>(i)];
            const double wi = weight(i);
            cd p = 1.0;
            for (Index k = 0; k <= nb; ++k, p *= si) {
                X(2 * i, k) = wi * p.real();
                X(2 * i + 1, k) = wi * p.imag();
            }
            p = 1.0;
            for (Index k = 0; k < na; ++k, p *= si) {
                const cd v = -hi * p;
                X(2 * i, nb + 1 + k) = wi * v.real();
                X(2 * i + 1, nb + 1 + k) = wi * v.imag();
            }
            const cd r = hi * std::pow(si, static_cast<double>(na));
            rhs(2 * i) = wi * r.real();
            rhs(2 * i + 1) = wi * r.imag();
        }
        const Vec sol = X.colPivHouseholderQr().solve(rhs);
        b = sol.head(nb + 1);
        a.head(na) = sol.tail(na);
        Vec next(m);
        for (Index i = 0; i < m; ++i) next(i) = 1.0 / std::abs(poly_eval(a, s[static_cast<std::size_t>(i)]));
        const double change = ((next - weight).cwiseAbs().array() / next.cwiseAbs().array()).maxCoeff();
        weight = next;
        if (change < 1e-6) break;
    }

    RationalTransferFunction tf;
    tf.iterations = std::min(it, 50);
    tf.num.resize(nb + 1);
    tf.den.resize(na + 1);
    // Undo the frequency scaling and renormalise to a monic denominator in s.
    for (Index k = 0; k <= na; ++k) tf.den(k) = a(k) * std::pow(wn, static_cast<double>(na - k));
    for (Index k = 0; k <= nb; ++k) tf.num(k) = b(k) * std::pow(wn, static_cast<double>(na - k));
    double err = 0.0;
    for (Index i = 0; i < m; ++i) {
        const cd si(0.0, 2.0 * std::numbers::pi * frs.frequencies(i));
        err += std::norm(tf.eval(si) - frs.response(i));
    }
    tf.fit_error = std::sqrt(err / static_cast<double>(m));
    if (!tf.num.allFinite() || !tf.den.allFinite() || !tf.is_stable())
        throw InstabilityError("fit_transfer_function: fitted poles are not stable (orders " + std::to_string(nb) +
                               "/" + std::to_string(na) + ")");
    return tf;
}

RationalTransferFunction fit_transfer_function_with_retry(const FrequencyResponseSet& frs,
                                                          const std::vector<std::pair<Index, Index>>& ladder) {
    std::string last = "fit_transfer_function_with_retry: empty ladder";
    for (const auto& [nb, na] : ladder) {
        try {
            return fit_transfer_function(frs, nb, na);
        } catch (const InstabilityError& e) {
            last = e.what();
        }
    }
    throw InstabilityError(last);
}

Vec zoh_impulse_response(const RationalTransferFunction& tf, double dt, Index q) {
    if (!(dt > 0) || q <= 0) throw InvalidInputError("zoh_impulse_response: invalid dt or horizon");
    const Index na = tf.den_order(), nb = tf.num_order();
    if (na < 0 || nb > na || std::abs(tf.den(na) - 1.0) > 1e-12)
        throw InvalidInputError("zoh_impulse_response: need a proper transfer function with monic denominator");
    for (const auto& p : tf.poles())
        if (p.real() > 1e-9 * (1.0 + std::abs(p)))
            throw InstabilityError("zoh_impulse_response: transfer function has unstable poles");
    Vec g = Vec::Zero(q);
    const double d = nb == na ? tf.num(na) : 0.0;
    if (na == 0) {
        g(0) = d;
        return g;
    }
    // Controllable canonical realisation of the strictly proper remainder.
    Vec c = Vec::Zero(na);
    for (Index k = 0; k < na; ++k) c(k) = (k <= nb ? tf.num(k) : 0.0) - d * tf.den(k);
    Mat M = Mat::Zero(na + 1, na + 1);
    for (Index i = 0; i + 1 < na; ++i) M(i, i + 1) = 1.0;
    for (Index k = 0; k < na; ++k) M(na - 1, k) = -tf.den(k);
    M(na - 1, na) = 1.0;
    const Mat E = (M * dt).exp();
    const Mat Ad = E.topLeftCorner(na, na);
    Vec x = E.topRightCorner(na, 1);
    g(0) = c.dot(x) + d;
    for (Index k = 1; k < q; ++k) {
        x = Ad * x;
        g(k) = c.dot(x);
    }
    return g;
}

Mat static_gradient_from_tf(const RationalTransferFunction& tf, double dt, Index q) {
    return convolution_matrix(zoh_impulse_response(tf, dt, q), q);
}

Mat fd_least_squares(const Mat& dU, const Mat& dY) { return (pseudo_inverse(dU).matrix * dY).transpose(); }

FdResult finite_difference_gradient(const RolloutFn& plant, const Vec& u, std::size_t n_env, double perturb_std,
                                    std::uint64_t seed, const FdOptions& opt) {
    if (n_env < 1) throw InvalidInputError("finite_difference_gradient: n_env must be >= 1");
    if (!(perturb_std > 0)) throw InvalidInputError("finite_difference_gradient: perturb_std must be positive");
    const Index q = u.size();
    const Vec y0 = plant(u, seed);
    std::vector<Vec> du(n_env), dy(n_env);
    std::vector<char> ok(n_env, 0);
    for_each_index(n_env, opt.exec, [&](std::size_t i) {
        std::mt19937_64 rng(seed + i);
        std::normal_distribution<double> nd(0.0, perturb_std);
        Vec d(q);
        for (Index k = 0; k < q; ++k) d(k) = nd(rng);
        try {
            const Vec y = plant(u + d, seed + i);
            if (!y.allFinite()) return;
            dy[i] = y - y0;
            du[i] = std::move(d);
            ok[i] = 1;
        } catch (const DivergenceError&) {
        }
    });
    FdResult res;
    for (char c : ok) res.used += c ? 1 : 0;
    res.excluded = n_env - res.used;
    if (res.used == 0) throw NoDataError("finite_difference_gradient: every perturbed rollout diverged");
    Mat dU(static_cast<Index>(res.used), q), dY(static_cast<Index>(res.used), y0.size());
    Index r = 0;
    for (std::size_t i = 0; i < n_env; ++i) {
        if (!ok[i]) continue;
        dU.row(r) = du[i].transpose();
        dY.row(r) = dy[i].transpose();
        ++r;
    }
    res.G = fd_least_squares(dU, dY);
    return res;
}

ClosedLoopResult closed_loop_gradient(const Mat& G, const Mat& K) {
    if (G.cols() != K.rows() || K.cols() != G.rows())
        throw InvalidInputError("closed_loop_gradient: shape mismatch");
    ClosedLoopResult res;
    Mat M = -G * K;
    M.diagonal().array() += 1.0;
    const Index n = M.rows();
    bool lower = true;
    for (Index j = 1; j < n && lower; ++j)
        for (Index i = 0; i < j; ++i)
            if (M(i, j) != 0.0) {
                lower = false;
                break;
            }
    if (lower && (M.diagonal().array() != 0.0).all()) {
        res.G = M.triangularView<Eigen::Lower>().solve(G);
        res.rank = n;
        res.triangular = true;
        return res;
    }
    const auto pinv = pseudo_inverse(M);
    res.G = pinv.matrix * G;
    res.rank = pinv.rank;
    return res;
}

namespace {
Vec sample_mean(const std::vector<Vec>& xs) {
    Vec m = Vec::Zero(xs.front().size());
    for (const auto& x : xs) {
        if (x.size() != m.size()) throw InvalidInputError("estimate_kappa: inconsistent vector sizes");
        m += x;
    }
    return m / static_cast<double>(xs.size());
}
}  // namespace

double estimate_kappa(const std::vector<Vec>& F_est, const std::vector<Vec>& F_true, double lambda_bound) {
    if (F_est.empty() || F_est.size() != F_true.size())
        throw InvalidInputError("estimate_kappa: need equal, non-zero sample counts");
    if (!(lambda_bound >= 1.0)) throw InvalidInputError("estimate_kappa: lambda must be >= 1");
    const Vec me = sample_mean(F_est), mt = sample_mean(F_true);
    const double nt = mt.norm();
    if (nt < 1e-12) throw UndefinedKappaError("estimate_kappa: mean true gradient vanishes");
    return std::sqrt(lambda_bound) * (me - mt).norm() / nt;
}

bool kappa_ball_contains(const std::vector<Vec>& F_est, const std::vector<Vec>& F_true, double lambda_bound) {
    const Vec me = sample_mean(F_est), mt = sample_mean(F_true);
    return (me - mt).squaredNorm() < mt.squaredNorm() / lambda_bound;
}

std::string frs_to_json(const FrequencyResponseSet& frs) {
    auto vec = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    nlohmann::json j;
    j["frequencies_hz"] = vec(frs.frequencies);
    j["amplitude"] = vec(frs.amplitude);
    j["phase_rad"] = vec(frs.phase);
    j["nonlinearity"] = vec(frs.nonlinearity);
    return j.dump(1);
}

std::string tf_to_json(const RationalTransferFunction& tf) {
    auto vec = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    nlohmann::json j;
    j["numerator_ascending"] = vec(tf.num);
    j["denominator_ascending"] = vec(tf.den);
    j["fit_error"] = tf.fit_error;
    j["iterations"] = tf.iterations;
    nlohmann::json poles = nlohmann::json::array();
    for (const auto& p : tf.poles()) poles.push_back({p.real(), p.imag()});
    j["poles"] = poles;
    return j.dump(1);
}

RationalTransferFunction tf_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    RationalTransferFunction tf;
    auto num = j.at("numerator_ascending").get<std::vector<double>>();
    auto den = j.at("denominator_ascending").get<std::vector<double>>();
    tf.num = Eigen::Map<Vec>(num.data(), static_cast<Index>(num.size()));
    tf.den = Eigen::Map<Vec>(den.data(), static_cast<Index>(den.size()));
    tf.fit_error = j.value("fit_error", 0.0);
    return tf;
}

}  // namespace qnctl
