#include "qnctl/harness/pretrain.hpp"

#include "qnctl/errors.hpp"

namespace qnctl {

LatentMaps pretrain_latent(const std::vector<std::pair<Vec, Vec>>& pairs, double rho, Index n_sigma) {
    if (pairs.empty()) throw InvalidInputError("pretrain_latent: need at least one pair");
    std::vector<Vec> ys, us;
    for (const auto& [y, u] : pairs) {
        ys.push_back(y);
        us.push_back(u);
    }
    LatentMaps m;
    m.R = ridge_regression(ys, us, rho);
    if (n_sigma < 1 || n_sigma > std::min(m.R.rows(), m.R.cols()))
        throw InvalidInputError("pretrain_latent: latent size must lie in [1, min(R dims)]");
    const SvdResult svd = svd_factorize(m.R);
    m.sigma = svd.sigma.head(n_sigma);
    const Vec root = m.sigma.array().sqrt();
    m.U = svd.U.leftCols(n_sigma) * root.asDiagonal();
    m.V = svd.V.leftCols(n_sigma) * root.asDiagonal();
    return m;
}

}  // namespace qnctl
