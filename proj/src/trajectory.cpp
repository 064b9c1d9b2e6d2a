#include "qnctl/trajectory.hpp"

#include <cstdint>
#include <cstring>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "qnctl/errors.hpp"

namespace qnctl {

namespace {
constexpr char kBlobMagic[8] = {'Q', 'N', 'T', 'R', 'A', 'J', '0', '1'};
}

Trajectory::Trajectory(Vec v, double dt_, Index ch) : values(std::move(v)), dt(dt_), channels(ch) {
    if (!(dt > 0.0)) throw InvalidInputError("Trajectory: dt must be positive");
    if (channels <= 0 || values.size() % channels != 0)
        throw InvalidInputError("Trajectory: length must be a multiple of the channel count");
}

Trajectory Trajectory::zeros(Index q, double dt_, Index ch) { return Trajectory(Vec::Zero(q * ch), dt_, ch); }

void write_csv(std::ostream& os, const Trajectory& tr, const std::vector<std::string>& names) {
    os << "k,t";
    for (Index c = 0; c < tr.channels; ++c) {
        if (static_cast<std::size_t>(c) < names.size())
            os << ',' << names[static_cast<std::size_t>(c)];
        else
            os << ",v" << c;
    }
    os << '\n' << std::setprecision(17);
    for (Index k = 0; k < tr.length(); ++k) {
        os << k << ',' << tr.time(k);
        for (Index c = 0; c < tr.channels; ++c) os << ',' << tr.at(k, c);
        os << '\n';
    }
}

Trajectory read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw InvalidInputError("read_csv: empty stream");
    Index channels = 0;
    for (char ch : line) channels += (ch == ',');
    channels -= 1;
    if (channels < 1) throw InvalidInputError("read_csv: expected columns k,t,value...");
    std::vector<double> vals, times;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        std::getline(ss, cell, ',');
        times.push_back(std::stod(cell));
        for (Index c = 0; c < channels; ++c) {
            if (!std::getline(ss, cell, ',')) throw InvalidInputError("read_csv: short row");
            vals.push_back(std::stod(cell));
        }
    }
    const double dt = times.size() > 1 ? times[1] - times[0] : 1.0;
    return Trajectory(Eigen::Map<Vec>(vals.data(), static_cast<Index>(vals.size())), dt, channels);
}

void write_blob(std::ostream& os, const Trajectory& tr) {
    os.write(kBlobMagic, sizeof kBlobMagic);
    const std::int64_t ch = tr.channels, n = tr.length();
    os.write(reinterpret_cast<const char*>(&ch), sizeof ch);
    os.write(reinterpret_cast<const char*>(&n), sizeof n);
    os.write(reinterpret_cast<const char*>(&tr.dt), sizeof tr.dt);
    os.write(reinterpret_cast<const char*>(tr.values.data()),
             static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(tr.values.size())));
}

Trajectory read_blob(std::istream& is) {
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kBlobMagic, sizeof magic) != 0)
        throw InvalidInputError("read_blob: bad magic");
    std::int64_t ch = 0, n = 0;
    double dt = 0.0;
    is.read(reinterpret_cast<char*>(&ch), sizeof ch);
    is.read(reinterpret_cast<char*>(&n), sizeof n);
    is.read(reinterpret_cast<char*>(&dt), sizeof dt);
    if (!is || ch <= 0 || n < 0) throw InvalidInputError("read_blob: bad header");
    Vec v(ch * n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(v.size())));
    if (!is) throw InvalidInputError("read_blob: truncated payload");
    return Trajectory(std::move(v), dt, ch);
}

}  // namespace qnctl
