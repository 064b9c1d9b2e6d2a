#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qnctl/numerics.hpp"
#include "qnctl/parallel.hpp"

namespace qnctl {

// Black-box access: input sequence (and an environment seed) -> output sequence.
// May throw DivergenceError.
using RolloutFn = std::function<Vec(const Vec& u, std::uint64_t seed)>;

struct FrequencyResponseSet {
    Vec frequencies;   // Hz
    Vec amplitude;
    Vec phase;         // rad
    Vec nonlinearity;  // RMS residual after removing the fundamental and offset

    void validate() const;
    std::complex<double> response(Index i) const { return std::polar(amplitude(i), phase(i)); }
};

struct IdentifyOptions {
    // Refer the estimate to the continuous-time plant behind the zero-order hold:
    // removes the hold's sinc gain and half-sample delay. Turn off to obtain the
    // response of the sampled map itself.
    bool zoh_correction = true;
    Exec exec = Exec::Serial;
};

FrequencyResponseSet identify_frequency_response(const RolloutFn& plant, double dt, const Vec& freqs_hz,
                                                 double amplitude, double settle, double measure,
                                                 const IdentifyOptions& opt = {});

// Continuous-time rational transfer function; coefficients in ascending powers of s,
// denominator monic (den(den.size()-1) == 1).
struct RationalTransferFunction {
    Vec num;
    Vec den;
    double fit_error = 0.0;
    int iterations = 0;

    Index num_order() const { return num.size() - 1; }
    Index den_order() const { return den.size() - 1; }
    std::complex<double> eval(std::complex<double> s) const;
    std::vector<std::complex<double>> poles() const;
    bool is_stable(double margin = 0.0) const;
};

RationalTransferFunction fit_transfer_function(const FrequencyResponseSet& frs, Index num_order, Index den_order);

// Tries the default orders and then the retry ladder; throws the last InstabilityError.
RationalTransferFunction fit_transfer_function_with_retry(
    const FrequencyResponseSet& frs,
    const std::vector<std::pair<Index, Index>>& ladder = {{2, 4}, {1, 2}, {2, 3}, {3, 5}, {0, 2}, {0, 1}});

// q-sample impulse response of the zero-order-hold discretisation (g[0] = C Bd + D).
Vec zoh_impulse_response(const RationalTransferFunction& tf, double dt, Index q);

// Lower-triangular lifted Jacobian built from the ZOH impulse response.
Mat static_gradient_from_tf(const RationalTransferFunction& tf, double dt, Index q);

struct FdOptions {
    Exec exec = Exec::Serial;
};

struct FdResult {
    Mat G;
    std::size_t used = 0;
    std::size_t excluded = 0;
};

// Least-squares Jacobian from perturbed rollouts: G^T = pinv(dU) dY.
// Environment i uses seed + i (perturbation draw and plant noise).
FdResult finite_difference_gradient(const RolloutFn& plant, const Vec& u, std::size_t n_env, double perturb_std,
                                    std::uint64_t seed, const FdOptions& opt = {});

// Row-permuted variant used to test ordering invariance.
Mat fd_least_squares(const Mat& dU, const Mat& dY);

struct ClosedLoopResult {
    Mat G;
    Index rank = 0;
    bool triangular = false;
};

// (I - G K)^+ G; unit-lower-triangular fast path when G K is strictly lower triangular.
ClosedLoopResult closed_loop_gradient(const Mat& G_open, const Mat& d_pifb_d_signal);

double estimate_kappa(const std::vector<Vec>& F_est, const std::vector<Vec>& F_true, double lambda_bound);

// Fig. 2 geometry: |mean(F_est) - mean(F_true)| < |mean(F_true)| / sqrt(lambda).
bool kappa_ball_contains(const std::vector<Vec>& F_est, const std::vector<Vec>& F_true, double lambda_bound);

std::string frs_to_json(const FrequencyResponseSet& frs);
std::string tf_to_json(const RationalTransferFunction& tf);
RationalTransferFunction tf_from_json(const std::string& text);

}  // namespace qnctl
