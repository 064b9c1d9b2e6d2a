#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qnctl/optimizer.hpp"
#include "qnctl/plants.hpp"
#include "qnctl/policies.hpp"
#include "qnctl/trajectories.hpp"

namespace qnctl {

enum class PlantKind { Beam, Lti };
enum class EstimatorKind { StaticTf, FiniteDifference, Exact };

struct PlantSpec {
    PlantKind kind = PlantKind::Beam;
    double dt = 0.01;
    BeamParameters beam;
    Vec impulse_response;  // Lti only

    PlantFactory factory() const;
    void validate() const;
};

struct IdentifySpec {
    double amplitude = 5.0;
    double freq_min = 0.1;
    double freq_max = 4.0;
    Index n_freqs = 40;
    double settle = 10.0;
    double measure = 30.0;
    std::string tf_cache;  // reuse/store the fitted model here when non-empty

    Vec frequencies() const;
};

struct EstimatorSpec {
    EstimatorKind kind = EstimatorKind::StaticTf;
    IdentifySpec identify;
    std::size_t n_env = 200;
    double perturb_std = 1.0;
};

struct ExperimentConfig {
    std::string name = "custom";
    PlantSpec plant;
    BeamReferenceDistribution distribution;
    PolicySpec ff;
    std::optional<PolicySpec> fb;
    EstimatorSpec estimator;
    OptimizerConfig optimizer;
    std::size_t T = 300;
    double noise_std = 0.0;
    std::vector<std::uint64_t> seeds{1};
    std::size_t n_test = 50;
    double abort_fraction = 0.1;
    std::size_t checkpoint_every = 0;  // periodic policy + optimizer snapshots (0 = final only)
    std::string output_dir = "runs";

    void validate() const;
};

// Desk-scale recipes exp1..exp6 (beam with 10 units, T = 300).
ExperimentConfig preset(const std::string& name);
std::vector<std::string> preset_names();

std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

// Writes `text` to `path`, creating parent directories.
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace qnctl
