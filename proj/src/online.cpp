#include "qnctl/online.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>

#include "qnctl/errors.hpp"

namespace qnctl {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(seed) ^ stream) ^ index);
}

ParameterVector ControlLoop::init_parameters(std::uint64_t seed) const {
    ParameterVector p = qnctl::init_parameters(ff, seed, "ff.");
    if (fb) p = concat(p, qnctl::init_parameters(*fb, derive_seed(seed, 1, 0), "fb."));
    return p;
}

LoopRollout run_loop(const ControlLoop& loop, const Vec& omega, const Trajectory& ref, const Trajectory& noise) {
    if (omega.size() != loop.n_params()) throw InvalidInputError("run_loop: parameter size mismatch");
    const Index q = ref.length();
    if (noise.length() != q) throw InvalidInputError("run_loop: noise length mismatch");
    LoopRollout r;
    r.noise = noise;
    r.u_ff = policy_forward(loop.ff, omega.data(), ref);
    r.u_fb = Trajectory::zeros(q, ref.dt);
    r.u = Trajectory::zeros(q, ref.dt);
    r.y = Trajectory::zeros(q, ref.dt);
    r.e = Trajectory::zeros(q, ref.dt);
    auto plant = loop.plant();
    plant->reset();
    const double* w_fb = omega.data() + loop.n_ff();
    for (Index k = 0; k < q; ++k) {
        if (loop.fb) r.u_fb.at(k) = policy_apply(*loop.fb, w_fb, build_window(r.e, k, *loop.fb))(0);
        r.u.at(k) = r.u_ff.at(k) + r.u_fb.at(k);
        r.y.at(k) = plant->step(r.u.at(k) + noise.at(k));
        r.e.at(k) = r.y.at(k) - ref.at(k);
    }
    return r;
}

LoopJacobians loop_jacobians(const ControlLoop& loop, const Vec& omega, const Trajectory& ref, const LoopRollout& r) {
    LoopJacobians out;
    const Index q = ref.length();
    const auto jff = policy_jacobians(loop.ff, omega.data(), ref);
    if (!loop.fb) {
        out.J = jff.d_pi_d_omega;
        return out;
    }
    const auto jfb = policy_jacobians(*loop.fb, omega.data() + loop.n_ff(), r.e);
    out.J.resize(q, loop.n_params());
    out.J << jff.d_pi_d_omega, jfb.d_pi_d_omega;
    out.K = jfb.d_pi_d_signal;
    return out;
}

Mat GradientModel::evaluate(const Vec& u, std::uint64_t seed) const {
    if (fixed) return *fixed;
    if (at_input) return at_input(u, seed);
    throw InvalidInputError("GradientModel: empty model");
}

GradientModel static_gradient_model(Mat G) {
    GradientModel m;
    m.fixed = std::make_shared<const Mat>(std::move(G));
    return m;
}

GradientModel fd_gradient_model(PlantFactory plant, std::size_t n_env, double perturb_std, Exec exec) {
    GradientModel m;
    m.at_input = [plant = std::move(plant), n_env, perturb_std, exec](const Vec& u, std::uint64_t seed) {
        RolloutFn fn = [&plant](const Vec& uu, std::uint64_t) {
            auto p = plant();
            p->reset();
            Vec y(uu.size());
            for (Index k = 0; k < uu.size(); ++k) y(k) = p->step(uu(k));
            return y;
        };
        return finite_difference_gradient(fn, u, n_env, perturb_std, seed, {exec}).G;
    };
    return m;
}

OnlineRunResult run_online_learning(const ControlLoop& loop, const ReferenceSource& refs, const GradientModel& model,
                                    const Vec& omega0, const OnlineRunConfig& cfg) {
    cfg.optimizer.validate();
    OnlineRunResult res;
    res.state = make_optimizer_state(omega0, cfg.optimizer);
    LossRecord avg;
    const std::size_t max_skips = static_cast<std::size_t>(std::floor(cfg.abort_fraction * static_cast<double>(cfg.T)));

    for (std::size_t t = 1; t <= cfg.T; ++t) {
        RunLogRow row;
        row.t = t;
        const Trajectory ref = refs(t);
        const Trajectory noise = gaussian_noise(ref.length(), ref.dt, cfg.noise_std, derive_seed(cfg.seed, 2, t));
        try {
            const LoopRollout r = run_loop(loop, res.state.omega, ref, noise);
            const double loss = tracking_loss(r.y, ref);
            const Vec grad_y = tracking_loss_gradient(r.y, ref);
            const LoopJacobians jac = loop_jacobians(loop, res.state.omega, ref, r);
            const Mat G = model.evaluate(r.u.values, derive_seed(cfg.seed, 3, t));
            const Mat L = assemble_sensitivity(G, jac.J, jac.K);
            const Vec g = L.transpose() * grad_y;
            if (!L.allFinite() || !g.allFinite()) throw NonFiniteGradientError("run_online_learning: non-finite gradient estimate");
            Mat Lambda;
            if (!cfg.optimizer.gradient_descent()) {
                Lambda = pseudo_hessian(L, jac.J, cfg.optimizer.epsilon, cfg.optimizer.alpha);
                if (!Lambda.allFinite())
                    throw NonFiniteGradientError("run_online_learning: non-finite pseudo-Hessian");
            }
            update_running_hessian(res.state, Lambda, cfg.optimizer);
            row.kappa_hat = std::numeric_limits<double>::quiet_NaN();
            if (cfg.truth) {
                const Mat Lt = assemble_sensitivity(cfg.truth->evaluate(r.u.values, derive_seed(cfg.seed, 4, t)), jac.J,
                                                    jac.K);
                const Vec gt = Lt.transpose() * grad_y;
                if (gt.norm() > 1e-12) row.kappa_hat = std::sqrt(cfg.audit_lambda) * (g - gt).norm() / gt.norm();
            }
            const StepInfo info = quasi_newton_step_with_gradient(res.state, g, cfg.optimizer);
            avg = update_average_loss(avg, loss);
            res.state.loss_history.push_back(avg);
            row.loss = loss;
            row.delta_t = avg.average;
            row.grad_norm2 = info.norms.g2;
            row.grad_norm2_Ainv = info.norms.g2_Ainv;
            row.step_norm = info.step_norm;
        } catch (const DivergenceError&) {
            row.skipped = true;
        } catch (const NonFiniteGradientError&) {
            row.skipped = true;
        }
        if (row.skipped) {
            row.loss = std::numeric_limits<double>::quiet_NaN();
            row.delta_t = avg.average;
            row.kappa_hat = std::numeric_limits<double>::quiet_NaN();
            if (++res.skipped > max_skips)
                throw RunAbortedError("run_online_learning: more than " + std::to_string(max_skips) +
                                      " iterations skipped");
        }
        res.log.push_back(row);
        if (cfg.on_iteration) cfg.on_iteration(row);
        if (cfg.checkpoint_every > 0 && cfg.on_checkpoint && t % cfg.checkpoint_every == 0) cfg.on_checkpoint(res.state);
    }
    return res;
}

PilotEstimate estimate_step_constants(const ControlLoop& loop, const ReferenceSource& refs, const GradientModel& model,
                                      const Vec& omega0, double noise_std, std::size_t n_samples, double shift,
                                      std::uint64_t seed) {
    if (n_samples == 0 || !(shift > 0.0)) throw InvalidInputError("estimate_step_constants: need samples and a positive shift");
    auto gradient = [&](const Vec& w, const Trajectory& ref, const Trajectory& noise, std::uint64_t s, double* loss) {
        const LoopRollout r = run_loop(loop, w, ref, noise);
        if (loss) *loss = tracking_loss(r.y, ref);
        const LoopJacobians jac = loop_jacobians(loop, w, ref, r);
        return Vec(assemble_sensitivity(model.evaluate(r.u.values, s), jac.J, jac.K).transpose() *
                   tracking_loss_gradient(r.y, ref));
    };
    PilotEstimate est;
    std::mt19937_64 rng(derive_seed(seed, 5, 0));
    std::normal_distribution<double> nd(0.0, 1.0);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const Trajectory ref = refs(i);
        const Trajectory noise = gaussian_noise(ref.length(), ref.dt, noise_std, derive_seed(seed, 6, i));
        Vec dir(omega0.size());
        for (Index k = 0; k < dir.size(); ++k) dir(k) = nd(rng);
        dir *= shift / dir.norm();
        double loss = 0.0;
        try {
            const Vec g0 = gradient(omega0, ref, noise, derive_seed(seed, 7, i), &loss);
            const Vec g1 = gradient(omega0 + dir, ref, noise, derive_seed(seed, 7, i), nullptr);
            est.F1 += loss;
            est.H = std::max(est.H, g0.norm());
            est.L = std::max(est.L, (g1 - g0).norm() / shift);
            ++est.samples;
        } catch (const DivergenceError&) {
        }
    }
    if (est.samples == 0) throw NoDataError("estimate_step_constants: every pilot rollout diverged");
    est.F1 /= static_cast<double>(est.samples);
    return est;
}

void write_run_log_header(std::ostream& os) {
    os << "t,loss,delta_t,grad_norm2,grad_norm2_Ainv,step_norm,kappa_hat,skipped\n";
}

void write_run_log_row(std::ostream& os, const RunLogRow& r) {
    os << std::setprecision(17) << r.t << ',' << r.loss << ',' << r.delta_t << ',' << r.grad_norm2 << ','
       << r.grad_norm2_Ainv << ',' << r.step_norm << ',' << r.kappa_hat << ',' << (r.skipped ? 1 : 0) << '\n';
}

}  // namespace qnctl
