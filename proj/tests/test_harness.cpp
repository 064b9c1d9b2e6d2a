#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "qnctl/errors.hpp"
#include "qnctl/harness/config.hpp"
#include "qnctl/harness/experiment.hpp"
#include "qnctl/harness/ilc.hpp"
#include "qnctl/harness/pretrain.hpp"
#include "test_util.hpp"

using namespace qnctl;
using namespace qnctl::testing;
namespace fs = std::filesystem;

namespace {
Vec lag_impulse(double a, double dt, Index q) {
    RationalTransferFunction tf;
    tf.num = Vec::Constant(1, a);
    tf.den = Vec(2);
    tf.den << a, 1.0;
    return zoh_impulse_response(tf, dt, q);
}

RolloutFn fir(const Vec& g) {
    return [g](const Vec& u, std::uint64_t) { return causal_convolve(g, u); };
}

ExperimentConfig tiny_lti_config(const std::string& out) {
    ExperimentConfig c;
    c.name = "tiny";
    c.plant.kind = PlantKind::Lti;
    c.plant.impulse_response = lag_impulse(20.0, 0.01, 550);
    c.estimator.kind = EstimatorKind::Exact;
    c.ff.h1 = c.ff.h2 = 3;
    c.optimizer.epsilon = 1.0;
    c.optimizer.eta = 0.5;
    c.T = 12;
    c.noise_std = 0.2;
    c.n_test = 5;
    c.checkpoint_every = 5;
    c.output_dir = out;
    return c;
}

std::string slurp(const fs::path& p, bool skip_first_line = false) {
    std::ifstream is(p, std::ios::binary);
    std::string s((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (skip_first_line) s = s.substr(s.find('\n') + 1);
    return s;
}
}  // namespace

TEST_CASE("presets: names, settings, and unknown names") {
    const auto names = preset_names();
    CHECK(names == std::vector<std::string>{"exp1", "exp2", "exp3", "exp4", "exp5", "exp6"});
    for (const auto& n : names) {
        const auto c = preset(n);
        CHECK(c.name == n);
        CHECK(c.T == 300);
        CHECK(c.n_test == 50);
        CHECK(c.plant.beam.n_units == 10);
        CHECK_NOTHROW(c.validate());
    }
    CHECK(preset("exp1").optimizer.gradient_descent());
    CHECK(preset("exp1").ff.kind == PolicyKind::Linear);
    CHECK(preset("exp4").ff.kind == PolicyKind::Mlp);
    CHECK(preset("exp4").ff.hidden == 40);
    CHECK(preset("exp4").optimizer.epsilon == 1.0);
    CHECK(preset("exp4").optimizer.alpha == doctest::Approx(0.1));
    CHECK(preset("exp4").optimizer.eta == doctest::Approx(15.0));
    CHECK_FALSE(preset("exp5").fb.has_value());
    REQUIRE(preset("exp6").fb.has_value());
    CHECK(preset("exp6").fb->strictly_causal);
    CHECK(preset("exp6").noise_std > 0.0);
    CHECK_THROWS_AS(preset("exp7"), InvalidInputError);
}

TEST_CASE("configuration JSON round-trips") {
    for (const auto& n : preset_names()) {
        const auto c = preset(n);
        const std::string j = config_to_json(c);
        CHECK(config_to_json(config_from_json(j)) == j);
    }
    const auto lti = tiny_lti_config("x");
    const auto back = config_from_json(config_to_json(lti));
    CHECK(back.plant.impulse_response == lti.plant.impulse_response);
    CHECK(back.estimator.kind == EstimatorKind::Exact);
    // A preset can serve as the base of a partial config.
    const auto p = config_from_json(R"({"preset": "exp4", "run": {"T": 17}})");
    CHECK(p.T == 17);
    CHECK(p.ff.hidden == 40);
    CHECK_THROWS_AS(config_from_json("{not json"), InvalidInputError);
}

TEST_CASE("ILC: exact model with unit gain converges in one iteration") {
    const Vec g = lag_impulse(20.0, 0.01, 550);
    const Trajectory ref = sample_beam_reference(BeamReferenceDistribution{}, 5);
    IlcConfig cfg;
    cfg.gamma = 1.0;
    cfg.tolerance = 1e-8;
    cfg.G = std::make_shared<const Mat>(convolution_matrix(g, 550));
    const auto r = ilc_ideal_input(fir(g), ref, cfg);
    CHECK(r.converged);
    CHECK(r.iterations == 1);
    CHECK(r.rms.back() < 1e-8);
}

TEST_CASE("ILC: model scaled by two contracts with ratio one half") {
    const Vec g = lag_impulse(20.0, 0.01, 550);
    const Trajectory ref = sample_beam_reference(BeamReferenceDistribution{}, 6);
    IlcConfig cfg;
    cfg.gamma = 1.0;
    cfg.tolerance = 1e-9;
    cfg.G = std::make_shared<const Mat>(2.0 * convolution_matrix(g, 550));
    const auto r = ilc_ideal_input(fir(g), ref, cfg);
    CHECK(r.converged);
    for (std::size_t i = 1; i < std::min<std::size_t>(r.rms.size(), 15); ++i)
        CHECK(r.rms[i] / r.rms[i - 1] == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("ILC: validation and stagnation") {
    IlcConfig cfg;
    CHECK_THROWS_AS(ilc_ideal_input(fir(Vec::Ones(1)), Trajectory::zeros(3, 0.01), cfg), InvalidInputError);
    cfg.G = std::make_shared<const Mat>(Mat::Identity(3, 3));
    cfg.gamma = 1.5;
    CHECK_THROWS_AS(ilc_ideal_input(fir(Vec::Ones(1)), Trajectory::zeros(3, 0.01), cfg), InvalidInputError);
    // A plant that ignores its input cannot improve: the best (initial) input is reported.
    cfg.gamma = 0.5;
    cfg.stagnation_window = 5;
    const RolloutFn deaf = [](const Vec& u, std::uint64_t) { return Vec(Vec::Zero(u.size())); };
    try {
        ilc_ideal_input(deaf, Trajectory(Vec::Ones(3), 0.01), cfg);
        CHECK(false);
    } catch (const StagnationError& e) {
        CHECK(e.best_input == Vec::Zero(3));
    }
}

TEST_CASE("ILC on the desk beam with the identified static model reduces RMS tenfold") {
    auto cfg = preset("exp1");
    cfg.estimator.identify.tf_cache = "test_harness_beam_tf.json";
    const auto id = identify_plant(cfg);
    IlcConfig ilc;
    ilc.regularization = 0.03;
    ilc.max_iterations = 100;
    ilc.G = std::make_shared<const Mat>(static_gradient_from_tf(id.tf, cfg.plant.dt, 550));
    const RolloutFn beam = plant_rollout_fn(cfg.plant);
    // References inside the regime the model was identified in (tip within 0.3 m).
    for (std::uint64_t seed : {8, 9, 10}) {
        Trajectory ref = sample_beam_reference(cfg.distribution, seed);
        ref.values *= 0.3 / ref.values.cwiseAbs().maxCoeff();
        const double rms0 = std::sqrt((beam(Vec::Zero(550), 0) - ref.values).squaredNorm() / 550);
        Vec best;
        try {
            best = ilc_ideal_input(beam, ref, ilc).u.values;
        } catch (const StagnationError& e) {
            best = e.best_input;
        }
        const double rms_best = std::sqrt((beam(best, 0) - ref.values).squaredNorm() / 550);
        MESSAGE("beam ILC seed " << seed << ": rms " << rms0 << " -> " << rms_best);
        CHECK(rms_best * 10.0 <= rms0);
    }
}

TEST_CASE("pretraining: truncation-exact, full rank and degenerate cases") {
    std::mt19937_64 rng(3);
    const Index ny = 12, nu = 9, r = 3;
    const Mat R = random_matrix(nu, r, rng) * random_matrix(r, ny, rng);
    std::vector<std::pair<Vec, Vec>> pairs;
    for (int i = 0; i < 40; ++i) {
        const Vec y = random_vector(ny, rng);
        pairs.emplace_back(y, R * y);
    }
    const auto lat = pretrain_latent(pairs, 1e-8, r);
    CHECK(lat.sigma.size() == r);
    CHECK((lat.reconstruct() - R).norm() < 1e-6 * R.norm());
    CHECK((lat.U.transpose() * lat.U).isDiagonal(1e-10));  // sqrt(sigma)-scaled orthogonal columns
    const auto full = pretrain_latent(pairs, 1e-8, std::min(nu, ny));
    CHECK((full.reconstruct() - full.R).norm() < 1e-10 * full.R.norm());
    std::vector<std::pair<Vec, Vec>> zero;
    for (int i = 0; i < 5; ++i) zero.emplace_back(random_vector(ny, rng), Vec::Zero(nu));
    const auto z = pretrain_latent(zero, 1e-3, 2);
    CHECK(z.sigma.cwiseAbs().maxCoeff() == 0.0);
    CHECK(z.reconstruct().norm() == 0.0);
    CHECK_THROWS_AS(pretrain_latent(pairs, 1e-8, 50), InvalidInputError);
    CHECK_THROWS_AS(pretrain_latent({}, 1e-8, 1), InvalidInputError);
}

TEST_CASE("experiments are reproducible byte for byte apart from the timestamp line") {
    const fs::path root = fs::temp_directory_path() / "qnctl_test_harness";
    fs::remove_all(root);
    // Same config file, same seed, same output directory: the first run's files are moved aside.
    const auto cfg = tiny_lti_config((root / "run").string());
    const auto a = run_experiment(cfg, 3);
    fs::rename(root / "run", root / "a");
    const auto b = run_experiment(cfg, 3);
    CHECK(a.params.data == b.params.data);
    std::size_t compared = 0;
    for (const auto& e : fs::directory_iterator(root / "a" / "seed_3")) {
        const auto name = e.path().filename();
        const bool log = name == "run_log.csv";
        CHECK_MESSAGE(slurp(e.path(), log) == slurp(root / "run" / "seed_3" / name, log), name.string());
        ++compared;
    }
    CHECK(compared >= 9);  // log, checkpoint (bin + json), summary, config, two periodic snapshots each
    CHECK(slurp(root / "a" / "seed_3" / "run_log.csv").rfind("# generated ", 0) == 0);

    // Held-out evaluation of the stored checkpoint reproduces the summary and leaves the parameters untouched.
    std::ifstream ck(root / "a" / "seed_3" / "checkpoint.bin", std::ios::binary);
    std::uint64_t hash = 0;
    const ParameterVector p = load_checkpoint(ck, &hash);
    CHECK(hash == loop_spec_hash(tiny_lti_config("")));
    const std::uint64_t before = parameter_hash(p);
    const auto ev = evaluate_parameters(tiny_lti_config(""), p);
    CHECK(parameter_hash(p) == before);
    CHECK(ev.mean_loss == a.held_out.mean_loss);
    CHECK(ev.diverged == 0);
    fs::remove_all(root);
}

TEST_CASE("held-out set is independent of the training seed and evaluation rejects mismatched parameters") {
    const auto c = tiny_lti_config("");
    CHECK(test_reference(c, 0).values == test_reference(c, 0).values);
    CHECK(test_reference(c, 0).values != test_reference(c, 1).values);
    ParameterVector wrong;
    wrong.data = Vec::Zero(2);
    CHECK_THROWS_AS(evaluate_parameters(c, wrong), InvalidInputError);
}
