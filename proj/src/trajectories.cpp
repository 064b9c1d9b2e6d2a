#include "qnctl/trajectories.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qnctl/errors.hpp"

namespace qnctl {

void BeamReferenceDistribution::validate() const {
    auto ordered = [](const std::pair<double, double>& r) { return r.first <= r.second; };
    if (!ordered(t_a_range) || !ordered(t_b_range) || !ordered(y_range) || !ordered(v_range))
        throw InvalidInputError("BeamReferenceDistribution: ranges must be ordered");
    if (!(t_a_range.first > 0.0) || !(t_b_range.first > t_a_range.second))
        throw InvalidInputError("BeamReferenceDistribution: knot times must be increasing");
    if (!(total_time > t_b_range.second + hold_tail))
        throw InvalidInputError("BeamReferenceDistribution: total_time too short for the hold");
    if (!(dt > 0.0) || hold_tail < 0.0) throw InvalidInputError("BeamReferenceDistribution: bad dt/hold");
}

Index BeamReferenceDistribution::samples() const {
    return static_cast<Index>(std::llround(total_time / dt));
}

namespace {
double draw(std::mt19937_64& rng, const std::pair<double, double>& r) {
    if (r.first == r.second) return r.first;
    return std::uniform_real_distribution<double>(r.first, r.second)(rng);
}
}  // namespace

double evaluate_reference(const BeamReference& ref, double t, int deriv) {
    const auto& kt = ref.knot_times;
    if (t <= kt[0]) return 0.0;
    if (t >= kt[3]) return 0.0;
    std::size_t s = t < kt[1] ? 0 : (t < kt[2] ? 1 : 2);
    return eval_quintic(ref.segments[s], t - kt[s], deriv);
}

BeamReference sample_beam_reference_full(const BeamReferenceDistribution& dist, std::uint64_t seed) {
    dist.validate();
    std::mt19937_64 rng(seed);
    BeamReference ref;
    ref.a.t = draw(rng, dist.t_a_range);
    ref.b.t = draw(rng, dist.t_b_range);
    ref.a.y = draw(rng, dist.y_range);
    ref.b.y = draw(rng, dist.y_range);
    ref.a.v = draw(rng, dist.v_range);
    ref.b.v = draw(rng, dist.v_range);
    const double t_end = dist.total_time - dist.hold_tail;
    ref.knot_times = {0.0, ref.a.t, ref.b.t, t_end};
    ref.segments[0] = solve_quintic_boundary(0, 0, 0, ref.a.y, ref.a.v, 0, ref.a.t);
    ref.segments[1] = solve_quintic_boundary(ref.a.y, ref.a.v, 0, ref.b.y, ref.b.v, 0, ref.b.t - ref.a.t);
    ref.segments[2] = solve_quintic_boundary(ref.b.y, ref.b.v, 0, 0, 0, 0, t_end - ref.b.t);

    const Index q = dist.samples();
    Vec y(q);
    for (Index k = 0; k < q; ++k) y(k) = evaluate_reference(ref, static_cast<double>(k) * dist.dt);
    ref.trajectory = Trajectory(std::move(y), dist.dt, 1);
    return ref;
}

Trajectory sample_beam_reference(const BeamReferenceDistribution& dist, std::uint64_t seed) {
    return sample_beam_reference_full(dist, seed).trajectory;
}

namespace {
void check_same_shape(const Trajectory& y, const Trajectory& y_ref) {
    if (y.values.size() != y_ref.values.size() || y.channels != y_ref.channels)
        throw InvalidInputError("tracking_loss: length mismatch");
}
}  // namespace

double tracking_loss(const Trajectory& y, const Trajectory& y_ref) {
    check_same_shape(y, y_ref);
    return 0.5 * (y.values - y_ref.values).squaredNorm();
}

Vec tracking_loss_gradient(const Trajectory& y, const Trajectory& y_ref) {
    check_same_shape(y, y_ref);
    return y.values - y_ref.values;
}

LossRecord update_average_loss(const LossRecord& prev, double loss) {
    LossRecord next;
    next.iteration = prev.iteration + 1;
    next.loss = loss;
    const double t = static_cast<double>(next.iteration);
    next.average = ((t - 1.0) * prev.average + loss) / t;
    return next;
}

ReferencePool::ReferencePool(std::vector<Trajectory> refs, std::uint64_t seed)
    : refs_(std::move(refs)), rng_(seed) {
    if (refs_.empty()) throw InvalidInputError("ReferencePool: empty pool");
    order_.resize(refs_.size());
    reshuffle();
}

void ReferencePool::reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
}

const Trajectory& ReferencePool::next() {
    if (cursor_ == order_.size()) {
        reshuffle();
        ++epoch_;
    }
    last_ = order_[cursor_++];
    return refs_[last_];
}

}  // namespace qnctl
