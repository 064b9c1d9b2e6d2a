#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "qnctl/trajectory.hpp"

namespace qnctl {

struct BeamReferenceDistribution {
    std::pair<double, double> t_a_range{1.2, 1.8};
    std::pair<double, double> t_b_range{2.9, 3.5};
    std::pair<double, double> y_range{-0.2, 0.2};
    std::pair<double, double> v_range{-2.0, 2.0};
    double total_time = 5.5;
    double hold_tail = 0.5;
    double dt = 0.01;

    void validate() const;
    Index samples() const;
};

struct Knot {
    double t = 0.0, y = 0.0, v = 0.0;
};

struct BeamReference {
    Trajectory trajectory;
    Knot a, b;
    std::array<std::array<double, 6>, 3> segments{};  // quintic coefficients per segment
    std::array<double, 4> knot_times{};                // 0, t_a, t_b, total - hold
};

// Samples knots i.i.d. uniform and joins them with minimum-jerk quintics; y sampled at k*dt.
BeamReference sample_beam_reference_full(const BeamReferenceDistribution& dist, std::uint64_t seed);
Trajectory sample_beam_reference(const BeamReferenceDistribution& dist, std::uint64_t seed);

// Continuous-time evaluation of a sampled reference (deriv 0..3).
double evaluate_reference(const BeamReference& ref, double t, int deriv = 0);

// 1/2 |y - y_ref|^2 summed over samples and channels.
double tracking_loss(const Trajectory& y, const Trajectory& y_ref);
Vec tracking_loss_gradient(const Trajectory& y, const Trajectory& y_ref);

struct LossRecord {
    std::size_t iteration = 0;
    double loss = 0.0;
    double average = 0.0;
};

LossRecord update_average_loss(const LossRecord& prev, double loss);

// Fixed pool of references; epoch-wise sampling without replacement.
class ReferencePool {
public:
    ReferencePool(std::vector<Trajectory> refs, std::uint64_t seed);
    const Trajectory& next();
    std::size_t size() const { return refs_.size(); }
    std::size_t epoch() const { return epoch_; }
    std::size_t last_index() const { return last_; }

private:
    void reshuffle();
    std::vector<Trajectory> refs_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0, epoch_ = 0, last_ = 0;
    std::mt19937_64 rng_;
};

}  // namespace qnctl
