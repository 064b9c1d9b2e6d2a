#pragma once

#include <memory>
#include <vector>

#include "qnctl/gradest.hpp"
#include "qnctl/trajectory.hpp"

namespace qnctl {

struct IlcConfig {
    double gamma = 0.5;
    std::size_t max_iterations = 300;
    double tolerance = 1e-9;  // tracking RMS
    std::size_t stagnation_window = 20;
    // Tikhonov damping of G^+ relative to sigma_max(G): sigma / (sigma^2 + (r sigma_max)^2). 0 = plain pseudo-inverse.
    double regularization = 0.0;
    std::shared_ptr<const Mat> G;

    void validate() const;
};

struct IlcResult {
    Trajectory u;
    std::vector<double> rms;  // rms[i] = tracking RMS of the i-th applied input
    std::size_t iterations = 0;
    bool converged = false;
};

// u <- u + gamma G^+ (y_ref - y) until RMS < tolerance; returns the best input seen.
// Throws StagnationError when the error fails to decrease for stagnation_window iterations.
IlcResult ilc_ideal_input(const RolloutFn& plant, const Trajectory& y_ref, const IlcConfig& cfg);

}  // namespace qnctl
