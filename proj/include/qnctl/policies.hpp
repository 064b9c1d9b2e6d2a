#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "qnctl/trajectory.hpp"

namespace qnctl {

enum class PolicyKind { Linear, Mlp };

struct PolicySpec {
    PolicyKind kind = PolicyKind::Linear;
    Index h1 = 0;           // past samples in the window
    Index h2 = 0;           // future samples in the window
    Index hidden = 0;       // mlp only
    Index in_channels = 1;
    Index out_channels = 1;
    // Feedback policies read only strictly past samples: offsets -h1..-1.
    bool strictly_causal = false;
    // Optional fixed linear maps around the network (latent parameterisation).
    Mat pre;   // (network input) x (window size)
    Mat post;  // out_channels x (network output)

    void validate() const;
    std::vector<Index> offsets() const;
    Index window_size() const;  // taps * in_channels
    Index net_in() const;
    Index net_out() const;
    Index parameter_count() const;
    std::string describe() const;  // canonical text used for hashing
    std::uint64_t hash() const;
};

struct ParamBlock {
    std::string name;
    Index rows = 0, cols = 0;
    Index size() const { return rows * cols; }
};

struct ParameterVector {
    Vec data;
    std::vector<ParamBlock> layout;

    Index layout_size() const;
    void validate() const;
    Index block_offset(const std::string& name) const;
};

struct JacobianBundle {
    Mat d_pi_d_omega;   // (q * out) x n_omega
    Mat d_pi_d_signal;  // (q * out) x (q * in)
};

// Zero-padded window of samples k-h1..k+h2 (all channels, sample-major).
Vec build_window(const Trajectory& series, Index k, Index h1, Index h2);
Vec build_window(const Trajectory& series, Index k, const PolicySpec& spec);

ParameterVector make_layout(const PolicySpec& spec, const std::string& prefix = "");
// Linear: W = 0. Mlp: W1 ~ U(+-1/sqrt(fan_in)), W2 = 0, biases 0.
ParameterVector init_parameters(const PolicySpec& spec, std::uint64_t seed, const std::string& prefix = "");

// Network output for one window; omega points at this policy's slice of the parameters.
Vec policy_apply(const PolicySpec& spec, const double* omega, const Vec& window);

Trajectory policy_forward(const PolicySpec& spec, const ParameterVector& omega, const Trajectory& signal);
Trajectory policy_forward(const PolicySpec& spec, const double* omega, const Trajectory& signal);

JacobianBundle policy_jacobians(const PolicySpec& spec, const ParameterVector& omega, const Trajectory& signal);
JacobianBundle policy_jacobians(const PolicySpec& spec, const double* omega, const Trajectory& signal);

Trajectory two_dof_compose(const Trajectory& ff, const Trajectory& fb);

ParameterVector concat(const ParameterVector& a, const ParameterVector& b);

// Versioned binary checkpoint: magic, version, spec hash, layout, raw reals.
void save_checkpoint(std::ostream& os, std::uint64_t spec_hash, const ParameterVector& p);
ParameterVector load_checkpoint(std::istream& is, std::uint64_t* spec_hash = nullptr);
std::string parameters_to_json(const ParameterVector& p, std::uint64_t spec_hash);
ParameterVector parameters_from_json(const std::string& text);

// FNV-1a over layout and raw bytes; used to confirm evaluation leaves parameters untouched.
std::uint64_t parameter_hash(const ParameterVector& p);
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ull);

}  // namespace qnctl
