#include "qnctl/harness/ilc.hpp"

#include <cmath>
#include <limits>

#include "qnctl/errors.hpp"

namespace qnctl {

void IlcConfig::validate() const {
    if (!(gamma > 0.0) || gamma > 1.0) throw InvalidInputError("IlcConfig: gamma must lie in (0, 1]");
    if (max_iterations == 0 || stagnation_window == 0) throw InvalidInputError("IlcConfig: counts must be positive");
    if (!(tolerance > 0.0)) throw InvalidInputError("IlcConfig: tolerance must be positive");
    if (regularization < 0.0) throw InvalidInputError("IlcConfig: regularization must be non-negative");
    if (!G || G->size() == 0) throw InvalidInputError("IlcConfig: gradient model required");
}

IlcResult ilc_ideal_input(const RolloutFn& plant, const Trajectory& y_ref, const IlcConfig& cfg) {
    cfg.validate();
    const Index q = y_ref.length();
    if (cfg.G->rows() != q || cfg.G->cols() != q) throw InvalidInputError("ilc: G must be q x q");
    Mat Gp;
    if (cfg.regularization > 0.0) {
        const SvdResult svd = svd_factorize(*cfg.G);
        const double rho = cfg.regularization * svd.sigma(0);
        const Vec f = svd.sigma.array() / (svd.sigma.array().square() + rho * rho);
        Gp = svd.V * f.asDiagonal() * svd.U.transpose();
    } else {
        Gp = pseudo_inverse(*cfg.G).matrix;
    }
    IlcResult res;
    Vec u = Vec::Zero(q), best_u = u;
    double best = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    for (std::size_t it = 0; it <= cfg.max_iterations; ++it) {
        const Vec e = y_ref.values - plant(u, 0);
        const double rms = std::sqrt(e.squaredNorm() / static_cast<double>(q));
        res.rms.push_back(rms);
        if (rms < best) {
            best = rms;
            best_u = u;
            since_best = 0;
        } else if (++since_best >= cfg.stagnation_window) {
            throw StagnationError("ilc: tracking error stagnated", best_u);
        }
        res.iterations = it;
        if (rms < cfg.tolerance) {
            res.converged = true;
            break;
        }
        if (it == cfg.max_iterations) break;
        u += cfg.gamma * (Gp * e);
    }
    res.u = Trajectory(best_u, y_ref.dt);
    return res;
}

}  // namespace qnctl
