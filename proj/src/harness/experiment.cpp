#include "qnctl/harness/experiment.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "qnctl/errors.hpp"
#include "qnctl/parallel.hpp"

namespace qnctl {

namespace {
constexpr std::uint64_t kTestSeed = 0x7e57'5e7d'0000'0001ull;

std::string timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}
}  // namespace

RolloutFn plant_rollout_fn(const PlantSpec& spec) {
    PlantFactory make = spec.factory();
    return [make](const Vec& u, std::uint64_t) {
        auto p = make();
        p->reset();
        Vec y(u.size());
        for (Index k = 0; k < u.size(); ++k) y(k) = p->step(u(k));
        return y;
    };
}

IdentifyResult identify_plant(const ExperimentConfig& cfg, Exec exec) {
    IdentifyResult res;
    const auto& id = cfg.estimator.identify;
    if (!id.tf_cache.empty() && std::filesystem::exists(id.tf_cache)) {
        res.tf = tf_from_json(read_text_file(id.tf_cache));
        res.from_cache = true;
        return res;
    }
    IdentifyOptions opt;
    opt.exec = exec;
    res.frs = identify_frequency_response(plant_rollout_fn(cfg.plant), cfg.plant.dt, id.frequencies(), id.amplitude,
                                          id.settle, id.measure, opt);
    res.tf = fit_transfer_function_with_retry(res.frs);
    if (!id.tf_cache.empty()) write_text_file(id.tf_cache, tf_to_json(res.tf) + "\n");
    return res;
}

void write_bode_csv(std::ostream& os, const FrequencyResponseSet& frs, const RationalTransferFunction& tf) {
    os << "freq_hz,amplitude,phase,nonlinearity,fit_amplitude,fit_phase\n";
    os << std::setprecision(17);
    for (Index i = 0; i < frs.frequencies.size(); ++i) {
        const auto h = tf.eval({0.0, 2.0 * M_PI * frs.frequencies(i)});
        os << frs.frequencies(i) << ',' << frs.amplitude(i) << ',' << frs.phase(i) << ',' << frs.nonlinearity(i) << ','
           << std::abs(h) << ',' << std::arg(h) << '\n';
    }
}

ControlLoop make_loop(const ExperimentConfig& cfg) {
    ControlLoop loop;
    loop.plant = cfg.plant.factory();
    loop.ff = cfg.ff;
    loop.fb = cfg.fb;
    return loop;
}

std::uint64_t loop_spec_hash(const ExperimentConfig& cfg) {
    return cfg.ff.hash() ^ (cfg.fb ? cfg.fb->hash() * 31 : 0);
}

GradientModel make_gradient_model(const ExperimentConfig& cfg, Exec exec) {
    const Index q = cfg.distribution.samples();
    switch (cfg.estimator.kind) {
        case EstimatorKind::Exact:
            return static_gradient_model(convolution_matrix(cfg.plant.impulse_response, q));
        case EstimatorKind::FiniteDifference:
            return fd_gradient_model(cfg.plant.factory(), cfg.estimator.n_env, cfg.estimator.perturb_std, exec);
        case EstimatorKind::StaticTf: {
            const IdentifyResult id = identify_plant(cfg, exec);
            return static_gradient_model(static_gradient_from_tf(id.tf, cfg.plant.dt, q));
        }
    }
    throw InvalidInputError("make_gradient_model: unknown estimator");
}

Trajectory test_reference(const ExperimentConfig& cfg, std::size_t i) {
    return sample_beam_reference(cfg.distribution, derive_seed(kTestSeed, 1, i));
}

EvalResult evaluate_parameters(const ExperimentConfig& cfg, const ParameterVector& params, Exec exec) {
    const std::uint64_t before = parameter_hash(params);
    const ControlLoop loop = make_loop(cfg);
    if (params.data.size() != loop.n_params()) throw InvalidInputError("evaluate: parameter count does not match the policy");
    std::vector<double> loss(cfg.n_test, 0.0);
    std::vector<char> bad(cfg.n_test, 0);
    for_each_index(cfg.n_test, exec, [&](std::size_t i) {
        const Trajectory ref = test_reference(cfg, i);
        const Trajectory noise = gaussian_noise(ref.length(), ref.dt, cfg.noise_std, derive_seed(kTestSeed, 2, i));
        try {
            loss[i] = tracking_loss(run_loop(loop, params.data, ref, noise).y, ref);
        } catch (const DivergenceError&) {
            bad[i] = 1;
        }
    });
    if (parameter_hash(params) != before) throw Error("evaluate: parameters changed during evaluation");
    EvalResult r;
    std::size_t ok = 0;
    for (std::size_t i = 0; i < cfg.n_test; ++i) {
        if (bad[i]) {
            ++r.diverged;
        } else {
            r.mean_loss += loss[i];
            ++ok;
        }
    }
    r.mean_loss = ok > 0 ? r.mean_loss / static_cast<double>(ok) : std::numeric_limits<double>::infinity();
    if (r.diverged > 0) r.mean_loss = std::numeric_limits<double>::infinity();
    return r;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, const GradientModel& model,
                                bool write_outputs) {
    cfg.validate();
    const ControlLoop loop = make_loop(cfg);
    ExperimentResult res;
    res.seed = seed;
    res.params = loop.init_parameters(seed);

    OnlineRunConfig rc;
    rc.T = cfg.T;
    rc.seed = seed;
    rc.noise_std = cfg.noise_std;
    rc.optimizer = cfg.optimizer;
    rc.optimizer.T = cfg.T;
    rc.abort_fraction = cfg.abort_fraction;
    const ReferenceSource refs = [&](std::size_t t) {
        return sample_beam_reference(cfg.distribution, derive_seed(seed, 1, t));
    };
    const std::string run_dir = (std::filesystem::path(cfg.output_dir) / ("seed_" + std::to_string(seed))).string();
    if (write_outputs && cfg.checkpoint_every > 0) {
        std::filesystem::create_directories(run_dir);
        rc.checkpoint_every = cfg.checkpoint_every;
        rc.on_checkpoint = [&](const OptimizerState& st) {
            ParameterVector p = res.params;
            p.data = st.omega;
            std::ofstream ck(run_dir + "/checkpoint_" + std::to_string(st.t) + ".bin", std::ios::binary);
            save_checkpoint(ck, loop_spec_hash(cfg), p);
            std::ofstream os(run_dir + "/optimizer_" + std::to_string(st.t) + ".bin", std::ios::binary);
            save_optimizer_state(os, st);
        };
    }
    res.run = run_online_learning(loop, refs, model, res.params.data, rc);
    res.params.data = res.run.state.omega;
    res.final_delta = res.run.log.empty() ? 0.0 : res.run.log.back().delta_t;
    res.held_out = evaluate_parameters(cfg, res.params);

    if (write_outputs) {
        res.run_dir = run_dir;
        std::filesystem::create_directories(res.run_dir);
        std::ofstream log(res.run_dir + "/run_log.csv", std::ios::binary);
        log << "# generated " << timestamp() << '\n';
        write_run_log_header(log);
        for (const auto& row : res.run.log) write_run_log_row(log, row);
        const std::uint64_t spec_hash = loop_spec_hash(cfg);
        std::ofstream ck(res.run_dir + "/checkpoint.bin", std::ios::binary);
        save_checkpoint(ck, spec_hash, res.params);
        write_text_file(res.run_dir + "/checkpoint.json", parameters_to_json(res.params, spec_hash) + "\n");
        write_text_file(res.run_dir + "/summary.json", summary_json(cfg, res) + "\n");
        save_config(cfg, res.run_dir + "/config.json");
    }
    return res;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, bool write_outputs) {
    return run_experiment(cfg, seed, make_gradient_model(cfg), write_outputs);
}

std::string summary_json(const ExperimentConfig& cfg, const ExperimentResult& r) {
    nlohmann::json j;
    j["name"] = cfg.name;
    j["seed"] = r.seed;
    j["T"] = cfg.T;
    j["iterations_skipped"] = r.run.skipped;
    j["final_loss"] = r.run.log.empty() ? 0.0 : r.run.log.back().loss;
    j["final_delta"] = r.final_delta;
    j["held_out_loss"] = r.held_out.mean_loss;
    j["held_out_diverged"] = r.held_out.diverged;
    j["n_test"] = cfg.n_test;
    j["n_params"] = r.params.data.size();
    std::ostringstream h;
    h << std::hex << std::setw(16) << std::setfill('0') << parameter_hash(r.params);
    j["parameter_hash"] = h.str();
    return j.dump(2);
}

}  // namespace qnctl
