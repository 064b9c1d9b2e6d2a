#include "qnctl/plants.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <string>

#include "qnctl/errors.hpp"

namespace qnctl {

namespace {
constexpr double kRateGuard = 1e6;
}

void PlantConfig::validate() const {
    if (!(dt > 0.0) || horizon <= 0 || noise_std < 0.0) throw InvalidInputError("PlantConfig: invalid fields");
}

void BeamParameters::validate() const {
    if (n_units <= 0 || !(unit_length > 0) || !(inertia > 0) || !(k1 > 0) || !(k2 > 0) || !(k3 > 0) ||
        !(damping > 0))
        throw InvalidInputError("BeamParameters: all parameters must be positive");
}

Index BeamParameters::substeps_for(double dt) const {
    if (substeps > 0) return substeps;
    // Chain eigenvalues are bounded by 4x the single-joint values. RK4 is stable for
    // |h lambda| <= 2.78 on the negative real axis; keep h |lambda_max| <= 2.
    const double x = design_deflection;
    const double k_eff = k1 + 3.0 * k2 * x * x + 5.0 * k3 * x * x * x * x;
    const double lam = 4.0 * damping / inertia + 2.0 * std::sqrt(4.0 * k_eff / inertia);
    return std::max<Index>(1, static_cast<Index>(std::ceil(dt * lam / 2.0)));
}

BeamPlant::BeamPlant(BeamParameters params, double dt) : p_(params), dt_(dt) {
    p_.validate();
    if (!(dt > 0.0)) throw InvalidInputError("BeamPlant: dt must be positive");
    substeps_ = p_.substeps_for(dt_);
    const Index n = p_.n_units;
    for (Vec* v : {&alpha_, &rate_, &k1a_, &k1w_, &k2a_, &k2w_, &k3a_, &k3w_, &k4a_, &k4w_, &ta_, &tw_, &joint_})
        v->setZero(n);
    joint_.setZero(n + 1);
}

void BeamPlant::reset() {
    alpha_.setZero();
    rate_.setZero();
    k_ = 0;
}

void BeamPlant::derivative(const Vec& a, const Vec& w, double torque, Vec& da, Vec& dw) const {
    // joint_(i) = spring + damper torque transmitted through joint i (joint 0 at the clamp).
    const Index n = p_.n_units;
    double prev_a = 0.0, prev_w = 0.0;
    for (Index i = 0; i < n; ++i) {
        const double rel = a(i) - prev_a;
        joint_(i) = p_.spring_torque(rel) + p_.damping * (w(i) - prev_w);
        prev_a = a(i);
        prev_w = w(i);
    }
    joint_(n) = 0.0;
    const double inv_i = 1.0 / p_.inertia;
    for (Index i = 0; i < n; ++i) {
        da(i) = w(i);
        dw(i) = (joint_(i + 1) - joint_(i)) * inv_i;
    }
    dw(0) += torque * inv_i;
}

double BeamPlant::step(double u) {
    const double h = dt_ / static_cast<double>(substeps_);
    for (Index s = 0; s < substeps_; ++s) {
        derivative(alpha_, rate_, u, k1a_, k1w_);
        ta_ = alpha_ + 0.5 * h * k1a_;
        tw_ = rate_ + 0.5 * h * k1w_;
        derivative(ta_, tw_, u, k2a_, k2w_);
        ta_ = alpha_ + 0.5 * h * k2a_;
        tw_ = rate_ + 0.5 * h * k2w_;
        derivative(ta_, tw_, u, k3a_, k3w_);
        ta_ = alpha_ + h * k3a_;
        tw_ = rate_ + h * k3w_;
        derivative(ta_, tw_, u, k4a_, k4w_);
        alpha_ += (h / 6.0) * (k1a_ + 2.0 * k2a_ + 2.0 * k3a_ + k4a_);
        rate_ += (h / 6.0) * (k1w_ + 2.0 * k2w_ + 2.0 * k3w_ + k4w_);
    }
    const std::size_t k = k_++;
    if (!rate_.allFinite() || !alpha_.allFinite() || rate_.cwiseAbs().maxCoeff() > kRateGuard)
        throw DivergenceError("beam state diverged at sample " + std::to_string(k), k);
    return tip();
}

double BeamPlant::tip() const { return p_.unit_length * alpha_.array().sin().sum(); }

double BeamPlant::energy() const {
    double e = 0.5 * p_.inertia * rate_.squaredNorm();
    double prev = 0.0;
    for (Index i = 0; i < p_.n_units; ++i) {
        e += p_.spring_energy(alpha_(i) - prev);
        prev = alpha_(i);
    }
    return e;
}

LtiPlant::LtiPlant(Vec impulse_response, double dt) : g_(std::move(impulse_response)), dt_(dt) {
    if (g_.size() == 0) throw InvalidInputError("LtiPlant: empty impulse response");
    if (!(dt > 0.0)) throw InvalidInputError("LtiPlant: dt must be positive");
}

void LtiPlant::reset() { history_.clear(); }

double LtiPlant::step(double u) {
    history_.push_back(u);
    const std::size_t k = history_.size() - 1;
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(g_.size()), k + 1);
    double y = 0.0;
    for (std::size_t i = 0; i < n; ++i) y += g_(static_cast<Index>(i)) * history_[k - i];
    return y;
}

Trajectory gaussian_noise(Index q, double dt, double std_dev, std::uint64_t seed) {
    Vec v = Vec::Zero(q);
    if (std_dev > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd(0.0, std_dev);
        for (Index k = 0; k < q; ++k) v(k) = nd(rng);
    }
    return Trajectory(std::move(v), dt, 1);
}

PlantRollout rollout_open_loop(Plant& plant, const Trajectory& input, const std::optional<Trajectory>& noise,
                               std::uint64_t seed) {
    const Index q = input.length();
    if (noise && noise->length() != q) throw InvalidInputError("rollout: noise length mismatch");
    PlantRollout r;
    r.seed = seed;
    r.input = input;
    r.noise = noise ? *noise : Trajectory::zeros(q, input.dt);
    r.output = Trajectory::zeros(q, input.dt);
    plant.reset();
    for (Index k = 0; k < q; ++k) r.output.at(k) = plant.step(input.at(k) + r.noise.at(k));
    return r;
}

PlantRollout beam_rollout(const BeamParameters& params, const PlantConfig& cfg, const Trajectory& input,
                          const std::optional<Trajectory>& noise) {
    cfg.validate();
    if (input.length() != cfg.horizon) throw InvalidInputError("beam_rollout: input length must equal horizon");
    BeamPlant plant(params, cfg.dt);
    std::optional<Trajectory> n = noise;
    if (!n && cfg.noise_std > 0.0) n = gaussian_noise(cfg.horizon, cfg.dt, cfg.noise_std, cfg.seed);
    return rollout_open_loop(plant, input, n, cfg.seed);
}

PlantRollout lti_rollout(const Vec& impulse_response, const Trajectory& input,
                         const std::optional<Trajectory>& noise) {
    if (impulse_response.size() > input.length())
        throw InvalidInputError("lti_rollout: impulse response longer than horizon");
    const Index q = input.length();
    if (noise && noise->length() != q) throw InvalidInputError("lti_rollout: noise length mismatch");
    PlantRollout r;
    r.input = input;
    r.noise = noise ? *noise : Trajectory::zeros(q, input.dt);
    r.output = Trajectory(causal_convolve(impulse_response, input.values + r.noise.values), input.dt, 1);
    return r;
}

void write_rollout_csv(std::ostream& os, const PlantRollout& r) {
    os << "k,t,u,n_d,y\n" << std::setprecision(17);
    for (Index k = 0; k < r.input.length(); ++k)
        os << k << ',' << r.input.time(k) << ',' << r.input.at(k) << ',' << r.noise.at(k) << ','
           << r.output.at(k) << '\n';
}

}  // namespace qnctl
