#pragma once

#include <utility>
#include <vector>

#include "qnctl/numerics.hpp"

namespace qnctl {

struct LatentMaps {
    Mat R;      // full ridge solution, u = R y
    Mat U;      // left factor scaled by sqrt(sigma)
    Mat V;      // right factor scaled by sqrt(sigma)
    Vec sigma;  // leading singular values
    Mat reconstruct() const { return U * V.transpose(); }
};

// Ridge fit of ideal inputs on references, truncated to n_sigma singular triplets.
LatentMaps pretrain_latent(const std::vector<std::pair<Vec, Vec>>& pairs, double rho, Index n_sigma);

}  // namespace qnctl
