#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>

#include "qnctl/trajectory.hpp"

namespace qnctl {

struct PlantConfig {
    double dt = 0.01;
    Index horizon = 550;
    double noise_std = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct BeamParameters {
    Index n_units = 50;
    double unit_length = 0.03;
    double inertia = 5e-3;
    double k1 = 5.0;
    double k2 = 1e3;
    double k3 = 1e4;
    double damping = 30.0;
    // Joint deflection used to size the RK4 substep from the local spring stiffness.
    double design_deflection = 1.0;
    // 0 = derive from the stability estimate.
    Index substeps = 0;

    void validate() const;
    double spring_torque(double x) const { return x * (k1 + x * x * (k2 + k3 * x * x)); }
    double spring_energy(double x) const {
        const double x2 = x * x;
        return x2 * (0.5 * k1 + x2 * (0.25 * k2 + k3 * x2 / 6.0));
    }
    // Number of RK4 substeps per sample interval dt.
    Index substeps_for(double dt) const;
};

struct PlantRollout {
    Trajectory input;
    Trajectory output;
    Trajectory noise;
    std::uint64_t seed = 0;
};

// Discrete-time single-input single-output plant. step() holds u over one sample
// interval and returns the output measured at the end of that interval.
class Plant {
public:
    virtual ~Plant() = default;
    virtual void reset() = 0;
    virtual double step(double u) = 0;
    virtual double dt() const = 0;
    virtual std::unique_ptr<Plant> clone() const = 0;
};

using PlantFactory = std::function<std::unique_ptr<Plant>()>;

class BeamPlant final : public Plant {
public:
    BeamPlant(BeamParameters params, double dt);
    void reset() override;
    double step(double u) override;
    double dt() const override { return dt_; }
    std::unique_ptr<Plant> clone() const override { return std::make_unique<BeamPlant>(*this); }

    double tip() const;
    double energy() const;
    const Vec& angles() const { return alpha_; }
    const Vec& rates() const { return rate_; }
    const BeamParameters& params() const { return p_; }
    Index substeps() const { return substeps_; }
    std::size_t steps_taken() const { return k_; }

private:
    void derivative(const Vec& a, const Vec& w, double torque, Vec& da, Vec& dw) const;

    BeamParameters p_;
    double dt_;
    Index substeps_;
    Vec alpha_, rate_;
    Vec k1a_, k1w_, k2a_, k2w_, k3a_, k3w_, k4a_, k4w_, ta_, tw_;
    mutable Vec joint_;
    std::size_t k_ = 0;
};

// Finite impulse response y_k = sum_i g_i u_{k-i}.
class LtiPlant final : public Plant {
public:
    LtiPlant(Vec impulse_response, double dt);
    void reset() override;
    double step(double u) override;
    double dt() const override { return dt_; }
    std::unique_ptr<Plant> clone() const override { return std::make_unique<LtiPlant>(*this); }
    const Vec& impulse_response() const { return g_; }

private:
    Vec g_;
    double dt_;
    std::vector<double> history_;
};

Trajectory gaussian_noise(Index q, double dt, double std_dev, std::uint64_t seed);

// Runs input (+ noise) through a freshly reset plant.
PlantRollout rollout_open_loop(Plant& plant, const Trajectory& input, const std::optional<Trajectory>& noise,
                               std::uint64_t seed = 0);

PlantRollout beam_rollout(const BeamParameters& params, const PlantConfig& cfg, const Trajectory& input,
                          const std::optional<Trajectory>& noise = std::nullopt);

PlantRollout lti_rollout(const Vec& impulse_response, const Trajectory& input,
                         const std::optional<Trajectory>& noise = std::nullopt);

void write_rollout_csv(std::ostream& os, const PlantRollout& r);

}  // namespace qnctl
