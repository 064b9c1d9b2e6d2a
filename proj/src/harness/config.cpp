#include "qnctl/harness/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "qnctl/errors.hpp"

namespace qnctl {

using nlohmann::json;

PlantFactory PlantSpec::factory() const {
    validate();
    if (kind == PlantKind::Beam) {
        BeamParameters p = beam;
        const double h = dt;
        return [p, h] { return std::make_unique<BeamPlant>(p, h); };
    }
    Vec g = impulse_response;
    const double h = dt;
    return [g, h] { return std::make_unique<LtiPlant>(g, h); };
}

void PlantSpec::validate() const {
    if (!(dt > 0.0)) throw InvalidInputError("plant: dt must be positive");
    if (kind == PlantKind::Beam) beam.validate();
    if (kind == PlantKind::Lti && impulse_response.size() == 0)
        throw InvalidInputError("plant: lti plant needs an impulse response");
}

Vec IdentifySpec::frequencies() const {
    if (n_freqs < 1 || !(freq_min > 0.0) || freq_max < freq_min)
        throw InvalidInputError("identify: invalid frequency grid");
    if (n_freqs == 1) return Vec::Constant(1, freq_min);
    return Vec::LinSpaced(n_freqs, freq_min, freq_max);
}

void ExperimentConfig::validate() const {
    plant.validate();
    distribution.validate();
    ff.validate();
    if (ff.strictly_causal) throw InvalidInputError("config: the feedforward policy must not be strictly causal");
    if (fb) {
        fb->validate();
        if (!fb->strictly_causal) throw InvalidInputError("config: the feedback policy must be strictly causal");
    }
    optimizer.validate();
    if (T == 0) throw InvalidInputError("config: T must be positive");
    if (noise_std < 0.0) throw InvalidInputError("config: noise_std must be non-negative");
    if (seeds.empty()) throw InvalidInputError("config: at least one seed required");
    if (n_test == 0) throw InvalidInputError("config: n_test must be positive");
    if (estimator.kind == EstimatorKind::Exact && plant.kind != PlantKind::Lti)
        throw InvalidInputError("config: the exact estimator needs an lti plant");
    if (std::abs(plant.dt - distribution.dt) > 1e-12) throw InvalidInputError("config: plant and reference dt differ");
}

ExperimentConfig preset(const std::string& name) {
    if (name.rfind("exp", 0) != 0 || name.size() != 4 || name[3] < '1' || name[3] > '6')
        throw InvalidInputError("preset: unknown preset '" + name + "'");
    ExperimentConfig c;
    c.name = name;
    c.plant.kind = PlantKind::Beam;
    c.plant.beam.n_units = 10;
    c.plant.beam.unit_length = 0.15;
    c.estimator.identify.tf_cache = "runs/beam_desk_tf.json";
    c.ff.h1 = 10;
    c.ff.h2 = 10;
    c.T = 300;
    c.seeds = {1, 2, 3, 4, 5};
    c.output_dir = "runs/" + name;
    const bool qn = name != "exp1" && name != "exp3";
    const bool mlp = name != "exp1" && name != "exp2";
    c.ff.kind = mlp ? PolicyKind::Mlp : PolicyKind::Linear;
    c.ff.hidden = mlp ? 40 : 0;
    if (qn) {
        c.optimizer.epsilon = 1.0;
        c.optimizer.alpha = 0.1;
        c.optimizer.eta = 15.0;
    } else {
        c.optimizer.eta = 0.1;
    }
    if (name == "exp5" || name == "exp6") c.noise_std = 10.0;
    if (name == "exp6") {
        PolicySpec fb;
        fb.kind = PolicyKind::Linear;
        fb.h1 = 25;
        fb.strictly_causal = true;
        c.fb = fb;
    }
    c.optimizer.T = c.T;
    return c;
}

std::vector<std::string> preset_names() { return {"exp1", "exp2", "exp3", "exp4", "exp5", "exp6"}; }

namespace {

json range_json(const std::pair<double, double>& r) { return json::array({r.first, r.second}); }
std::pair<double, double> range_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json mat_json(const Mat& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
        rows.push_back(r);
    }
    return rows;
}

Mat mat_from(const json& j) {
    if (j.empty()) return Mat();
    Mat m(static_cast<Index>(j.size()), static_cast<Index>(j.at(0).size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index k = 0; k < m.cols(); ++k) m(i, k) = j.at(i).at(k).get<double>();
    return m;
}

json policy_json(const PolicySpec& p) {
    json j{{"kind", p.kind == PolicyKind::Mlp ? "mlp" : "linear"},
           {"h1", p.h1},
           {"h2", p.h2},
           {"hidden", p.hidden},
           {"in_channels", p.in_channels},
           {"out_channels", p.out_channels},
           {"strictly_causal", p.strictly_causal}};
    if (p.pre.size() > 0) j["pre"] = mat_json(p.pre);
    if (p.post.size() > 0) j["post"] = mat_json(p.post);
    return j;
}

PolicySpec policy_from(const json& j) {
    PolicySpec p;
    const std::string kind = j.value("kind", "linear");
    if (kind == "mlp") p.kind = PolicyKind::Mlp;
    else if (kind == "linear") p.kind = PolicyKind::Linear;
    else throw InvalidInputError("config: unknown policy kind '" + kind + "'");
    p.h1 = j.value("h1", Index(0));
    p.h2 = j.value("h2", Index(0));
    p.hidden = j.value("hidden", Index(0));
    p.in_channels = j.value("in_channels", Index(1));
    p.out_channels = j.value("out_channels", Index(1));
    p.strictly_causal = j.value("strictly_causal", false);
    if (j.contains("pre")) p.pre = mat_from(j["pre"]);
    if (j.contains("post")) p.post = mat_from(j["post"]);
    return p;
}

const char* step_name(StepKind k) {
    switch (k) {
        case StepKind::Constant: return "constant";
        case StepKind::RateOptimal: return "rate_optimal";
        case StepKind::Diminishing: return "diminishing";
    }
    return "constant";
}

StepKind step_from(const std::string& s) {
    if (s == "constant") return StepKind::Constant;
    if (s == "rate_optimal") return StepKind::RateOptimal;
    if (s == "diminishing") return StepKind::Diminishing;
    throw InvalidInputError("config: unknown step kind '" + s + "'");
}

const char* inverse_name(InverseMode m) {
    switch (m) {
        case InverseMode::Recursion: return "recursion";
        case InverseMode::Cholesky: return "cholesky";
        case InverseMode::Auto: return "auto";
    }
    return "auto";
}

InverseMode inverse_from(const std::string& s) {
    if (s == "recursion") return InverseMode::Recursion;
    if (s == "cholesky") return InverseMode::Cholesky;
    if (s == "auto") return InverseMode::Auto;
    throw InvalidInputError("config: unknown inverse mode '" + s + "'");
}

const char* estimator_name(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::StaticTf: return "static_tf";
        case EstimatorKind::FiniteDifference: return "fd";
        case EstimatorKind::Exact: return "exact";
    }
    return "static_tf";
}

EstimatorKind estimator_from(const std::string& s) {
    if (s == "static_tf") return EstimatorKind::StaticTf;
    if (s == "fd") return EstimatorKind::FiniteDifference;
    if (s == "exact") return EstimatorKind::Exact;
    throw InvalidInputError("config: unknown estimator '" + s + "'");
}

}  // namespace

std::string config_to_json(const ExperimentConfig& c) {
    json j;
    j["name"] = c.name;
    const BeamParameters& b = c.plant.beam;
    json plant{{"kind", c.plant.kind == PlantKind::Beam ? "beam" : "lti"}, {"dt", c.plant.dt}};
    plant["beam"] = {{"n_units", b.n_units},     {"unit_length", b.unit_length},
                     {"inertia", b.inertia},     {"k1", b.k1},
                     {"k2", b.k2},               {"k3", b.k3},
                     {"damping", b.damping},     {"design_deflection", b.design_deflection},
                     {"substeps", b.substeps}};
    if (c.plant.kind == PlantKind::Lti)
        plant["impulse_response"] = std::vector<double>(c.plant.impulse_response.data(),
                                                        c.plant.impulse_response.data() + c.plant.impulse_response.size());
    j["plant"] = plant;
    const auto& d = c.distribution;
    j["distribution"] = {{"t_a_range", range_json(d.t_a_range)}, {"t_b_range", range_json(d.t_b_range)},
                         {"y_range", range_json(d.y_range)},     {"v_range", range_json(d.v_range)},
                         {"total_time", d.total_time},           {"hold_tail", d.hold_tail},
                         {"dt", d.dt}};
    j["policy"] = {{"ff", policy_json(c.ff)}, {"fb", c.fb ? policy_json(*c.fb) : json(nullptr)}};
    const auto& id = c.estimator.identify;
    j["estimator"] = {{"kind", estimator_name(c.estimator.kind)},
                      {"n_env", c.estimator.n_env},
                      {"perturb_std", c.estimator.perturb_std},
                      {"identify",
                       {{"amplitude", id.amplitude}, {"freq_min", id.freq_min}, {"freq_max", id.freq_max},
                        {"n_freqs", id.n_freqs}, {"settle", id.settle}, {"measure", id.measure},
                        {"tf_cache", id.tf_cache}}}};
    const auto& o = c.optimizer;
    j["optimizer"] = {{"epsilon", std::isinf(o.epsilon) ? json(nullptr) : json(o.epsilon)},
                      {"alpha", o.alpha},
                      {"step", step_name(o.step)},
                      {"eta", o.eta},
                      {"F1", o.F1},
                      {"L", o.L},
                      {"H", o.H},
                      {"c", o.c},
                      {"inverse", inverse_name(o.inverse)},
                      {"reinvert_every", o.reinvert_every}};
    j["run"] = {{"T", c.T},           {"noise_std", c.noise_std},           {"seeds", c.seeds},
                {"n_test", c.n_test}, {"abort_fraction", c.abort_fraction},
                {"checkpoint_every", c.checkpoint_every}};
    j["output"] = {{"dir", c.output_dir}};
    return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidInputError(std::string("config: ") + e.what());
    }
    ExperimentConfig c;
    try {
        if (j.contains("preset")) c = preset(j["preset"].get<std::string>());
        c.name = j.value("name", c.name);
        if (j.contains("plant")) {
            const json& p = j["plant"];
            const std::string kind = p.value("kind", "beam");
            if (kind == "beam") c.plant.kind = PlantKind::Beam;
            else if (kind == "lti") c.plant.kind = PlantKind::Lti;
            else throw InvalidInputError("config: unknown plant kind '" + kind + "'");
            c.plant.dt = p.value("dt", c.plant.dt);
            if (p.contains("beam")) {
                const json& b = p["beam"];
                auto& B = c.plant.beam;
                B.n_units = b.value("n_units", B.n_units);
                B.unit_length = b.value("unit_length", B.unit_length);
                B.inertia = b.value("inertia", B.inertia);
                B.k1 = b.value("k1", B.k1);
                B.k2 = b.value("k2", B.k2);
                B.k3 = b.value("k3", B.k3);
                B.damping = b.value("damping", B.damping);
                B.design_deflection = b.value("design_deflection", B.design_deflection);
                B.substeps = b.value("substeps", B.substeps);
            }
            if (p.contains("impulse_response")) {
                const auto g = p["impulse_response"].get<std::vector<double>>();
                c.plant.impulse_response = Eigen::Map<const Vec>(g.data(), static_cast<Index>(g.size()));
            }
        }
        if (j.contains("distribution")) {
            const json& d = j["distribution"];
            auto& D = c.distribution;
            if (d.contains("t_a_range")) D.t_a_range = range_from(d["t_a_range"]);
            if (d.contains("t_b_range")) D.t_b_range = range_from(d["t_b_range"]);
            if (d.contains("y_range")) D.y_range = range_from(d["y_range"]);
            if (d.contains("v_range")) D.v_range = range_from(d["v_range"]);
            D.total_time = d.value("total_time", D.total_time);
            D.hold_tail = d.value("hold_tail", D.hold_tail);
            D.dt = d.value("dt", D.dt);
        }
        if (j.contains("policy")) {
            const json& p = j["policy"];
            if (p.contains("ff")) c.ff = policy_from(p["ff"]);
            if (p.contains("fb")) {
                if (p["fb"].is_null()) c.fb.reset();
                else c.fb = policy_from(p["fb"]);
            }
        }
        if (j.contains("estimator")) {
            const json& e = j["estimator"];
            if (e.contains("kind")) c.estimator.kind = estimator_from(e["kind"].get<std::string>());
            c.estimator.n_env = e.value("n_env", c.estimator.n_env);
            c.estimator.perturb_std = e.value("perturb_std", c.estimator.perturb_std);
            if (e.contains("identify")) {
                const json& i = e["identify"];
                auto& I = c.estimator.identify;
                I.amplitude = i.value("amplitude", I.amplitude);
                I.freq_min = i.value("freq_min", I.freq_min);
                I.freq_max = i.value("freq_max", I.freq_max);
                I.n_freqs = i.value("n_freqs", I.n_freqs);
                I.settle = i.value("settle", I.settle);
                I.measure = i.value("measure", I.measure);
                I.tf_cache = i.value("tf_cache", I.tf_cache);
            }
        }
        if (j.contains("optimizer")) {
            const json& o = j["optimizer"];
            auto& O = c.optimizer;
            if (o.contains("epsilon"))
                O.epsilon = o["epsilon"].is_null() ? std::numeric_limits<double>::infinity() : o["epsilon"].get<double>();
            O.alpha = o.value("alpha", O.alpha);
            if (o.contains("step")) O.step = step_from(o["step"].get<std::string>());
            O.eta = o.value("eta", O.eta);
            O.F1 = o.value("F1", O.F1);
            O.L = o.value("L", O.L);
            O.H = o.value("H", O.H);
            O.c = o.value("c", O.c);
            if (o.contains("inverse")) O.inverse = inverse_from(o["inverse"].get<std::string>());
            O.reinvert_every = o.value("reinvert_every", O.reinvert_every);
        }
        if (j.contains("run")) {
            const json& r = j["run"];
            c.T = r.value("T", c.T);
            c.noise_std = r.value("noise_std", c.noise_std);
            if (r.contains("seeds")) c.seeds = r["seeds"].get<std::vector<std::uint64_t>>();
            c.n_test = r.value("n_test", c.n_test);
            c.abort_fraction = r.value("abort_fraction", c.abort_fraction);
            c.checkpoint_every = r.value("checkpoint_every", c.checkpoint_every);
        }
        if (j.contains("output")) c.output_dir = j["output"].value("dir", c.output_dir);
    } catch (const json::exception& e) {
        throw InvalidInputError(std::string("config: ") + e.what());
    }
    c.optimizer.T = c.T;
    c.validate();
    return c;
}

void write_text_file(const std::string& path, const std::string& text) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path);
    os << text;
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidInputError("cannot read " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

ExperimentConfig load_config(const std::string& path) { return config_from_json(read_text_file(path)); }

void save_config(const ExperimentConfig& cfg, const std::string& path) { write_text_file(path, config_to_json(cfg) + "\n"); }

}  // namespace qnctl
