#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qnctl/gradest.hpp"
#include "qnctl/optimizer.hpp"
#include "qnctl/plants.hpp"
#include "qnctl/policies.hpp"

namespace qnctl {

// Deterministic seed derivation (splitmix64 over (seed, stream, index)).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

// Two-degree-of-freedom loop: u_k = pi_ff(ref window) + pi_fb(past errors), y = G(u + n_d).
struct ControlLoop {
    PlantFactory plant;
    PolicySpec ff;
    std::optional<PolicySpec> fb;

    Index n_ff() const { return ff.parameter_count(); }
    Index n_fb() const { return fb ? fb->parameter_count() : 0; }
    Index n_params() const { return n_ff() + n_fb(); }
    ParameterVector init_parameters(std::uint64_t seed) const;
};

struct LoopRollout {
    Trajectory u, y, e, u_ff, u_fb, noise;
};

// Runs the loop causally; throws DivergenceError if the plant diverges.
LoopRollout run_loop(const ControlLoop& loop, const Vec& omega, const Trajectory& ref, const Trajectory& noise);

struct LoopJacobians {
    Mat J;  // d pi / d omega, q x n_params
    Mat K;  // d pi_fb / d error, q x q (empty without feedback)
};

LoopJacobians loop_jacobians(const ControlLoop& loop, const Vec& omega, const Trajectory& ref, const LoopRollout& r);

// Plant-gradient model: static matrix, or a callback evaluated at the applied input.
struct GradientModel {
    std::shared_ptr<const Mat> fixed;
    std::function<Mat(const Vec& u, std::uint64_t seed)> at_input;
    Mat evaluate(const Vec& u, std::uint64_t seed) const;
};

GradientModel static_gradient_model(Mat G);
GradientModel fd_gradient_model(PlantFactory plant, std::size_t n_env, double perturb_std, Exec exec);

struct RunLogRow {
    std::size_t t = 0;
    double loss = 0.0;
    double delta_t = 0.0;
    double grad_norm2 = 0.0;
    double grad_norm2_Ainv = 0.0;
    double step_norm = 0.0;
    double kappa_hat = 0.0;
    bool skipped = false;
};

struct OnlineRunConfig {
    std::size_t T = 300;
    std::uint64_t seed = 0;
    double noise_std = 0.0;
    OptimizerConfig optimizer;
    double abort_fraction = 0.1;
    // Optional true plant Jacobian for the per-iteration kappa audit.
    std::optional<GradientModel> truth;
    double audit_lambda = 1.0;
    std::function<void(const RunLogRow&)> on_iteration;
    // Called with the state after every checkpoint_every-th iteration (0 disables).
    std::size_t checkpoint_every = 0;
    std::function<void(const OptimizerState&)> on_checkpoint;
};

using ReferenceSource = std::function<Trajectory(std::size_t t)>;

struct OnlineRunResult {
    OptimizerState state;
    std::vector<RunLogRow> log;
    std::size_t skipped = 0;
};

OnlineRunResult run_online_learning(const ControlLoop& loop, const ReferenceSource& refs, const GradientModel& model,
                                    const Vec& omega0, const OnlineRunConfig& cfg);

struct PilotEstimate {
    double F1 = 0.0;  // mean loss at omega0
    double L = 0.0;   // largest gradient-difference quotient
    double H = 0.0;   // root of the largest gradient second moment
    std::size_t samples = 0;
};

// Pilot estimates of the rate-optimal step constants from n_samples references:
// L from gradient differences under a small random parameter shift, H from |g|^2.
PilotEstimate estimate_step_constants(const ControlLoop& loop, const ReferenceSource& refs, const GradientModel& model,
                                      const Vec& omega0, double noise_std, std::size_t n_samples, double shift,
                                      std::uint64_t seed);

void write_run_log_header(std::ostream& os);
void write_run_log_row(std::ostream& os, const RunLogRow& row);

}  // namespace qnctl
