#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "qnctl/numerics.hpp"

namespace qnctl {

// Uniformly sampled signal; values are stored sample-major: values[k * channels + c].
struct Trajectory {
    Vec values;
    double dt = 0.01;
    Index channels = 1;

    Trajectory() = default;
    Trajectory(Vec v, double dt_, Index ch = 1);
    static Trajectory zeros(Index q, double dt_, Index ch = 1);

    Index length() const { return channels > 0 ? values.size() / channels : 0; }
    double& at(Index k, Index c = 0) { return values(k * channels + c); }
    double at(Index k, Index c = 0) const { return values(k * channels + c); }
    double time(Index k) const { return static_cast<double>(k) * dt; }
};

void write_csv(std::ostream& os, const Trajectory& tr, const std::vector<std::string>& names = {});
Trajectory read_csv(std::istream& is);

// Compact binary blob: magic, channels, length, dt, raw doubles.
void write_blob(std::ostream& os, const Trajectory& tr);
Trajectory read_blob(std::istream& is);

}  // namespace qnctl
