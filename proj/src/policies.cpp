#include "qnctl/policies.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "qnctl/errors.hpp"

namespace qnctl {

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMat>;
constexpr char kCkptMagic[8] = {'Q', 'N', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kCkptVersion = 1;

// Read-only views of one policy's parameter slice.
struct Net {
    const PolicySpec& spec;
    const double* w;
    ConstRowMap W1() const { return {w, spec.kind == PolicyKind::Mlp ? spec.hidden : spec.net_out(), spec.net_in()}; }
    Eigen::Map<const Vec> b1() const { return {w + spec.hidden * spec.net_in(), spec.hidden}; }
    ConstRowMap W2() const {
        return {w + spec.hidden * spec.net_in() + spec.hidden, spec.net_out(), spec.hidden};
    }
    Eigen::Map<const Vec> b2() const {
        return {w + spec.hidden * spec.net_in() + spec.hidden + spec.net_out() * spec.hidden, spec.net_out()};
    }
};

Vec to_net_input(const PolicySpec& spec, const Vec& window) {
    return spec.pre.size() > 0 ? Vec(spec.pre * window) : window;
}
}  // namespace

void PolicySpec::validate() const {
    if (h1 < 0 || h2 < 0 || in_channels <= 0 || out_channels <= 0)
        throw InvalidInputError("PolicySpec: negative window or non-positive channel count");
    if (kind == PolicyKind::Mlp && hidden <= 0) throw InvalidInputError("PolicySpec: mlp needs hidden > 0");
    if (strictly_causal && h2 != 0) throw InvalidInputError("PolicySpec: feedback policies need h2 = 0");
    if (strictly_causal && h1 == 0) throw InvalidInputError("PolicySpec: feedback policies need h1 > 0");
    if (pre.size() > 0 && pre.cols() != window_size()) throw InvalidInputError("PolicySpec: pre map width");
    if (post.size() > 0 && post.rows() != out_channels) throw InvalidInputError("PolicySpec: post map height");
}

std::vector<Index> PolicySpec::offsets() const {
    std::vector<Index> o;
    if (strictly_causal) {
        for (Index i = -h1; i <= -1; ++i) o.push_back(i);
    } else {
        for (Index i = -h1; i <= h2; ++i) o.push_back(i);
    }
    return o;
}

Index PolicySpec::window_size() const { return static_cast<Index>(offsets().size()) * in_channels; }
Index PolicySpec::net_in() const { return pre.size() > 0 ? pre.rows() : window_size(); }
Index PolicySpec::net_out() const { return post.size() > 0 ? post.cols() : out_channels; }

Index PolicySpec::parameter_count() const {
    if (kind == PolicyKind::Linear) return net_out() * net_in();
    return hidden * net_in() + hidden + net_out() * hidden + net_out();
}

std::string PolicySpec::describe() const {
    std::ostringstream os;
    os << (kind == PolicyKind::Linear ? "linear" : "mlp") << ";h1=" << h1 << ";h2=" << h2 << ";hidden=" << hidden
       << ";in=" << in_channels << ";out=" << out_channels << ";causal=" << strictly_causal
       << ";pre=" << pre.rows() << 'x' << pre.cols() << ";post=" << post.rows() << 'x' << post.cols();
    return os.str();
}

std::uint64_t PolicySpec::hash() const {
    const std::string s = describe();
    std::uint64_t h = fnv1a(s.data(), s.size());
    if (pre.size() > 0) h = fnv1a(pre.data(), sizeof(double) * static_cast<std::size_t>(pre.size()), h);
    if (post.size() > 0) h = fnv1a(post.data(), sizeof(double) * static_cast<std::size_t>(post.size()), h);
    return h;
}

Index ParameterVector::layout_size() const {
    Index n = 0;
    for (const auto& b : layout) n += b.size();
    return n;
}

void ParameterVector::validate() const {
    if (layout_size() != data.size()) throw InvalidInputError("ParameterVector: layout does not cover data");
    if (!data.allFinite()) throw InvalidInputError("ParameterVector: non-finite entries");
}

Index ParameterVector::block_offset(const std::string& name) const {
    Index off = 0;
    for (const auto& b : layout) {
        if (b.name == name) return off;
        off += b.size();
    }
    throw InvalidInputError("ParameterVector: no block named " + name);
}

Vec build_window(const Trajectory& series, Index k, Index h1, Index h2) {
    const Index ch = series.channels, q = series.length();
    Vec w = Vec::Zero((h1 + 1 + h2) * ch);
    for (Index i = -h1; i <= h2; ++i) {
        const Index j = k + i;
        if (j < 0 || j >= q) continue;
        for (Index c = 0; c < ch; ++c) w((i + h1) * ch + c) = series.at(j, c);
    }
    return w;
}

Vec build_window(const Trajectory& series, Index k, const PolicySpec& spec) {
    const Index ch = series.channels, q = series.length();
    const auto off = spec.offsets();
    Vec w = Vec::Zero(static_cast<Index>(off.size()) * ch);
    for (std::size_t i = 0; i < off.size(); ++i) {
        const Index j = k + off[i];
        if (j < 0 || j >= q) continue;
        for (Index c = 0; c < ch; ++c) w(static_cast<Index>(i) * ch + c) = series.at(j, c);
    }
    return w;
}

ParameterVector make_layout(const PolicySpec& spec, const std::string& prefix) {
    spec.validate();
    ParameterVector p;
    if (spec.kind == PolicyKind::Linear) {
        p.layout.push_back({prefix + "W", spec.net_out(), spec.net_in()});
    } else {
        p.layout.push_back({prefix + "W1", spec.hidden, spec.net_in()});
        p.layout.push_back({prefix + "b1", spec.hidden, 1});
        p.layout.push_back({prefix + "W2", spec.net_out(), spec.hidden});
        p.layout.push_back({prefix + "b2", spec.net_out(), 1});
    }
    p.data = Vec::Zero(p.layout_size());
    return p;
}

ParameterVector init_parameters(const PolicySpec& spec, std::uint64_t seed, const std::string& prefix) {
    ParameterVector p = make_layout(spec, prefix);
    if (spec.kind == PolicyKind::Mlp) {
        std::mt19937_64 rng(seed);
        const double r = 1.0 / std::sqrt(static_cast<double>(spec.net_in()));
        std::uniform_real_distribution<double> ud(-r, r);
        for (Index i = 0; i < spec.hidden * spec.net_in(); ++i) p.data(i) = ud(rng);
    }
    return p;
}

Vec policy_apply(const PolicySpec& spec, const double* omega, const Vec& window) {
    const Net net{spec, omega};
    const Vec x = to_net_input(spec, window);
    Vec out;
    if (spec.kind == PolicyKind::Linear) {
        out = net.W1() * x;
    } else {
        const Vec z = (net.W1() * x + net.b1()).cwiseMax(0.0);
        out = net.W2() * z + net.b2();
    }
    return spec.post.size() > 0 ? Vec(spec.post * out) : out;
}

Trajectory policy_forward(const PolicySpec& spec, const double* omega, const Trajectory& signal) {
    spec.validate();
    if (signal.channels != spec.in_channels) throw InvalidInputError("policy_forward: channel mismatch");
    const Index q = signal.length(), m = spec.out_channels;
    Trajectory out = Trajectory::zeros(q, signal.dt, m);
    for (Index k = 0; k < q; ++k) out.values.segment(k * m, m) = policy_apply(spec, omega, build_window(signal, k, spec));
    return out;
}

Trajectory policy_forward(const PolicySpec& spec, const ParameterVector& omega, const Trajectory& signal) {
    if (omega.data.size() != spec.parameter_count()) throw InvalidInputError("policy_forward: layout mismatch");
    return policy_forward(spec, omega.data.data(), signal);
}

JacobianBundle policy_jacobians(const PolicySpec& spec, const double* omega, const Trajectory& signal) {
    spec.validate();
    if (signal.channels != spec.in_channels) throw InvalidInputError("policy_jacobians: channel mismatch");
    const Index q = signal.length(), m = spec.out_channels, nin = spec.in_channels;
    const Index d = spec.net_in(), no = spec.net_out(), np = spec.parameter_count();
    const auto off = spec.offsets();
    const Net net{spec, omega};
    const bool has_post = spec.post.size() > 0, has_pre = spec.pre.size() > 0;
    const Mat post = has_post ? spec.post : Mat::Identity(m, no);

    JacobianBundle jb;
    jb.d_pi_d_omega = Mat::Zero(q * m, np);
    jb.d_pi_d_signal = Mat::Zero(q * m, q * nin);
    Mat d_out_d_window(m, spec.window_size());

    for (Index k = 0; k < q; ++k) {
        const Vec w = build_window(signal, k, spec);
        const Vec x = has_pre ? Vec(spec.pre * w) : w;
        auto rows = jb.d_pi_d_omega.middleRows(k * m, m);
        Mat d_out_d_x;  // m x d
        if (spec.kind == PolicyKind::Linear) {
            // out_c = sum_r post(c,r) sum_j W(r,j) x_j
            for (Index r = 0; r < no; ++r)
                for (Index j = 0; j < d; ++j) rows.col(r * d + j) = post.col(r) * x(j);
            d_out_d_x = post * net.W1();
        } else {
            const Index h = spec.hidden;
            const Vec pre_act = net.W1() * x + net.b1();
            Vec gate(h);
            for (Index i = 0; i < h; ++i) gate(i) = pre_act(i) > 0.0 ? 1.0 : 0.0;
            const Vec z = pre_act.cwiseProduct(gate);
            const Mat pw2 = post * net.W2();                  // m x h
            const Mat back = pw2 * gate.asDiagonal();         // m x h, d out / d pre_act
            for (Index i = 0; i < h; ++i) {
                if (gate(i) == 0.0) continue;
                for (Index j = 0; j < d; ++j) rows.col(i * d + j) = back.col(i) * x(j);
            }
            rows.middleCols(h * d, h) = back;
            const Index w2off = h * d + h;
            for (Index r = 0; r < no; ++r)
                for (Index i = 0; i < h; ++i) rows.col(w2off + r * h + i) = post.col(r) * z(i);
            rows.middleCols(w2off + no * h, no) = post;
            d_out_d_x = back * net.W1();
        }
        d_out_d_window = has_pre ? Mat(d_out_d_x * spec.pre) : d_out_d_x;
        for (std::size_t t = 0; t < off.size(); ++t) {
            const Index j = k + off[t];
            if (j < 0 || j >= q) continue;
            jb.d_pi_d_signal.block(k * m, j * nin, m, nin) +=
                d_out_d_window.middleCols(static_cast<Index>(t) * nin, nin);
        }
    }
    return jb;
}

JacobianBundle policy_jacobians(const PolicySpec& spec, const ParameterVector& omega, const Trajectory& signal) {
    if (omega.data.size() != spec.parameter_count()) throw InvalidInputError("policy_jacobians: layout mismatch");
    return policy_jacobians(spec, omega.data.data(), signal);
}

Trajectory two_dof_compose(const Trajectory& ff, const Trajectory& fb) {
    if (ff.values.size() != fb.values.size() || ff.channels != fb.channels)
        throw InvalidInputError("two_dof_compose: length mismatch");
    return Trajectory(ff.values + fb.values, ff.dt, ff.channels);
}

ParameterVector concat(const ParameterVector& a, const ParameterVector& b) {
    ParameterVector p;
    p.layout = a.layout;
    p.layout.insert(p.layout.end(), b.layout.begin(), b.layout.end());
    p.data.resize(a.data.size() + b.data.size());
    p.data << a.data, b.data;
    return p;
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t parameter_hash(const ParameterVector& p) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& b : p.layout) {
        h = fnv1a(b.name.data(), b.name.size(), h);
        const std::int64_t dims[2] = {b.rows, b.cols};
        h = fnv1a(dims, sizeof dims, h);
    }
    return fnv1a(p.data.data(), sizeof(double) * static_cast<std::size_t>(p.data.size()), h);
}

namespace {
template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw InvalidInputError("load_checkpoint: truncated");
    return v;
}
}  // namespace

void save_checkpoint(std::ostream& os, std::uint64_t spec_hash, const ParameterVector& p) {
    p.validate();
    os.write(kCkptMagic, sizeof kCkptMagic);
    put(os, kCkptVersion);
    put(os, spec_hash);
    put(os, static_cast<std::uint32_t>(p.layout.size()));
    for (const auto& b : p.layout) {
        put(os, static_cast<std::uint32_t>(b.name.size()));
        os.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
        put(os, static_cast<std::int64_t>(b.rows));
        put(os, static_cast<std::int64_t>(b.cols));
    }
    put(os, static_cast<std::int64_t>(p.data.size()));
    os.write(reinterpret_cast<const char*>(p.data.data()),
             static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p.data.size())));
}

ParameterVector load_checkpoint(std::istream& is, std::uint64_t* spec_hash) {
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kCkptMagic, sizeof magic) != 0) throw InvalidInputError("load_checkpoint: bad magic");
    if (get<std::uint32_t>(is) != kCkptVersion) throw InvalidInputError("load_checkpoint: unsupported version");
    const auto h = get<std::uint64_t>(is);
    if (spec_hash) *spec_hash = h;
    ParameterVector p;
    const auto nb = get<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < nb; ++i) {
        ParamBlock b;
        b.name.resize(get<std::uint32_t>(is));
        is.read(b.name.data(), static_cast<std::streamsize>(b.name.size()));
        b.rows = get<std::int64_t>(is);
        b.cols = get<std::int64_t>(is);
        p.layout.push_back(b);
    }
    p.data.resize(get<std::int64_t>(is));
    is.read(reinterpret_cast<char*>(p.data.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p.data.size())));
    if (!is) throw InvalidInputError("load_checkpoint: truncated payload");
    p.validate();
    return p;
}

std::string parameters_to_json(const ParameterVector& p, std::uint64_t spec_hash) {
    nlohmann::json j;
    j["version"] = kCkptVersion;
    j["spec_hash"] = spec_hash;
    Index off = 0;
    for (const auto& b : p.layout) {
        nlohmann::json blk;
        blk["name"] = b.name;
        blk["rows"] = b.rows;
        blk["cols"] = b.cols;
        blk["values"] = std::vector<double>(p.data.data() + off, p.data.data() + off + b.size());
        j["blocks"].push_back(blk);
        off += b.size();
    }
    return j.dump(1);
}

ParameterVector parameters_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    ParameterVector p;
    std::vector<double> vals;
    for (const auto& blk : j.at("blocks")) {
        p.layout.push_back({blk.at("name").get<std::string>(), blk.at("rows").get<Index>(), blk.at("cols").get<Index>()});
        const auto v = blk.at("values").get<std::vector<double>>();
        vals.insert(vals.end(), v.begin(), v.end());
    }
    p.data = Eigen::Map<Vec>(vals.data(), static_cast<Index>(vals.size()));
    p.validate();
    return p;
}

}  // namespace qnctl
