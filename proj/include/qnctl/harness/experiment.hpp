#pragma once

#include <cstdint>
#include <string>

#include "qnctl/gradest.hpp"
#include "qnctl/harness/config.hpp"
#include "qnctl/online.hpp"

namespace qnctl {

struct IdentifyResult {
    FrequencyResponseSet frs;
    RationalTransferFunction tf;
    bool from_cache = false;
};

RolloutFn plant_rollout_fn(const PlantSpec& spec);

// Frequency identification plus transfer-function fit; honours the tf_cache path.
IdentifyResult identify_plant(const ExperimentConfig& cfg, Exec exec = Exec::Parallel);
void write_bode_csv(std::ostream& os, const FrequencyResponseSet& frs, const RationalTransferFunction& tf);

ControlLoop make_loop(const ExperimentConfig& cfg);
// Identifies the policy structure stored in checkpoints.
std::uint64_t loop_spec_hash(const ExperimentConfig& cfg);

// Gradient model from the configured estimator (identifies the plant if needed).
GradientModel make_gradient_model(const ExperimentConfig& cfg, Exec exec = Exec::Parallel);

// Fixed held-out references, independent of the training seed.
Trajectory test_reference(const ExperimentConfig& cfg, std::size_t i);

struct EvalResult {
    double mean_loss = 0.0;
    std::size_t diverged = 0;
};

// Held-out average loss; parameters are never modified (hash checked on exit).
EvalResult evaluate_parameters(const ExperimentConfig& cfg, const ParameterVector& params, Exec exec = Exec::Parallel);

struct ExperimentResult {
    std::uint64_t seed = 0;
    OnlineRunResult run;
    ParameterVector params;
    double final_delta = 0.0;
    EvalResult held_out;
    std::string run_dir;
};

// One seeded run. Writes run_log.csv (first line is a timestamp comment),
// checkpoint.bin, checkpoint.json and summary.json into <output_dir>/seed_<seed>
// unless write_outputs is false.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, const GradientModel& model,
                                bool write_outputs = true);
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, bool write_outputs = true);

std::string summary_json(const ExperimentConfig& cfg, const ExperimentResult& r);

}  // namespace qnctl
