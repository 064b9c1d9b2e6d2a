#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>

#include "qnctl/diagnostics.hpp"
#include "qnctl/errors.hpp"
#include "qnctl/harness/config.hpp"
#include "qnctl/harness/experiment.hpp"
#include "qnctl/harness/ilc.hpp"
#include "qnctl/harness/pretrain.hpp"

using namespace qnctl;
using nlohmann::json;

namespace {

struct ConfigArgs {
    std::string config;
    std::string preset;
    std::string out;
    std::string tf;

    void add(CLI::App* app) {
        app->add_option("-c,--config", config, "experiment config (JSON)");
        app->add_option("-p,--preset", preset, "named preset: exp1..exp6");
        app->add_option("-o,--out", out, "output directory (overrides the config)");
        app->add_option("--tf", tf, "transfer-function cache path (overrides the config)");
    }

    ExperimentConfig load() const {
        if (config.empty() == preset.empty()) throw InvalidInputError("give exactly one of --config or --preset");
        ExperimentConfig c = config.empty() ? qnctl::preset(preset) : load_config(config);
        if (!out.empty()) c.output_dir = out;
        if (!tf.empty()) c.estimator.identify.tf_cache = tf;
        c.validate();
        return c;
    }
};

std::string json_number(double x) { return std::isfinite(x) ? json(x).dump() : "null"; }

int cmd_identify(const ConfigArgs& a) {
    ExperimentConfig c = a.load();
    c.estimator.identify.tf_cache.clear();
    const IdentifyResult id = identify_plant(c);
    std::filesystem::create_directories(c.output_dir);
    write_text_file(c.output_dir + "/frs.json", frs_to_json(id.frs) + "\n");
    write_text_file(c.output_dir + "/tf.json", tf_to_json(id.tf) + "\n");
    std::ofstream bode(c.output_dir + "/bode.csv");
    write_bode_csv(bode, id.frs, id.tf);
    std::cout << tf_to_json(id.tf) << "\n";
    return 0;
}

int cmd_train(const ConfigArgs& a, long long seed, long long T) {
    ExperimentConfig c = a.load();
    if (T > 0) c.T = c.optimizer.T = static_cast<std::size_t>(T);
    const std::uint64_t s = seed >= 0 ? static_cast<std::uint64_t>(seed) : c.seeds.front();
    const ExperimentResult r = run_experiment(c, s);
    std::cout << summary_json(c, r) << "\n";
    return 0;
}

int cmd_eval(const ConfigArgs& a, const std::string& checkpoint) {
    const ExperimentConfig c = a.load();
    std::ifstream is(checkpoint, std::ios::binary);
    if (!is) throw InvalidInputError("cannot read " + checkpoint);
    std::uint64_t h = 0;
    const ParameterVector p = load_checkpoint(is, &h);
    if (h != loop_spec_hash(c)) throw InvalidInputError("eval: checkpoint does not match the configured policy");
    const EvalResult r = evaluate_parameters(c, p);
    std::cout << "{\"held_out_loss\": " << json_number(r.mean_loss) << ", \"diverged\": " << r.diverged
              << ", \"n_test\": " << c.n_test << "}\n";
    return 0;
}

int cmd_ilc(const ConfigArgs& a, std::size_t ref_index, double gamma, double reg, std::size_t iters) {
    const ExperimentConfig c = a.load();
    const GradientModel m = make_gradient_model(c);
    if (!m.fixed) throw InvalidInputError("ilc: needs a static gradient model (static_tf or exact estimator)");
    IlcConfig ic;
    ic.gamma = gamma;
    ic.max_iterations = iters;
    ic.regularization = reg;
    ic.G = m.fixed;
    const Trajectory ref = test_reference(c, ref_index);
    IlcResult r;
    try {
        r = ilc_ideal_input(plant_rollout_fn(c.plant), ref, ic);
    } catch (const StagnationError& e) {
        std::cerr << "warning: " << e.what() << "; keeping the best input\n";
        r.u = Trajectory(e.best_input, ref.dt);
    }
    std::filesystem::create_directories(c.output_dir);
    std::ofstream os(c.output_dir + "/ilc_input.csv");
    write_csv(os, r.u, {"u"});
    std::cout << "{\"iterations\": " << r.iterations << ", \"converged\": " << (r.converged ? "true" : "false")
              << ", \"rms_first\": " << json_number(r.rms.empty() ? 0.0 : r.rms.front())
              << ", \"rms_best\": " << json_number(r.rms.empty() ? 0.0 : *std::min_element(r.rms.begin(), r.rms.end()))
              << "}\n";
    return 0;
}

int cmd_pretrain(const ConfigArgs& a, std::size_t n_refs, Index latent, double rho, double gamma, double reg,
                 std::size_t iters) {
    const ExperimentConfig c = a.load();
    const GradientModel m = make_gradient_model(c);
    if (!m.fixed) throw InvalidInputError("pretrain: needs a static gradient model (static_tf or exact estimator)");
    IlcConfig ic;
    ic.gamma = gamma;
    ic.max_iterations = iters;
    ic.regularization = reg;
    ic.G = m.fixed;
    const RolloutFn plant = plant_rollout_fn(c.plant);
    std::vector<std::pair<Vec, Vec>> pairs(n_refs);
    for_each_index(n_refs, Exec::Parallel, [&](std::size_t i) {
        const Trajectory ref = sample_beam_reference(c.distribution, derive_seed(c.seeds.front(), 7, i));
        Vec u;
        try {
            u = ilc_ideal_input(plant, ref, ic).u.values;
        } catch (const StagnationError& e) {
            u = e.best_input;
        }
        pairs[i] = {ref.values, u};
    });
    const LatentMaps lm = pretrain_latent(pairs, rho, latent);
    auto to_json = [](const Mat& M) {
        json rows = json::array();
        for (Index i = 0; i < M.rows(); ++i) {
            json r = json::array();
            for (Index k = 0; k < M.cols(); ++k) r.push_back(M(i, k));
            rows.push_back(r);
        }
        return rows;
    };
    json out{{"sigma", std::vector<double>(lm.sigma.data(), lm.sigma.data() + lm.sigma.size())},
             {"U", to_json(lm.U)},
             {"V", to_json(lm.V)}};
    write_text_file(c.output_dir + "/latent.json", out.dump() + "\n");
    std::cout << "{\"pairs\": " << n_refs << ", \"latent\": " << latent << ", \"sigma_max\": " << lm.sigma(0) << "}\n";
    return 0;
}

int cmd_diagnose(const std::string& objective, std::size_t T, std::size_t seeds, double epsilon, double kappa,
                 const std::string& out) {
    std::unique_ptr<SyntheticObjective> obj;
    if (objective == "quadratic") obj = QuadraticObjective::standard();
    else if (objective == "nonconvex") obj = NonconvexObjective::standard();
    else if (objective == "flat") obj = std::make_unique<FlatObjective>(1, 1.0);
    else if (objective == "zero") obj = std::make_unique<ZeroObjective>(3);
    else throw InvalidInputError("diagnose: unknown objective '" + objective + "'");
    TheoryConstants tc = obj->constants();
    SyntheticRunConfig rc;
    rc.T = T;
    rc.seed = 1;
    rc.optimizer.epsilon = epsilon > 0 ? epsilon : std::numeric_limits<double>::infinity();
    rc.optimizer.step = StepKind::RateOptimal;
    const double F1 = std::max(obj->F(obj->initial_point()), 1e-12);
    rc.optimizer.F1 = F1;
    rc.optimizer.L = tc.L;
    rc.optimizer.H = tc.H;
    rc.optimizer.T = T;
    rc.kappa_inject = kappa;
    if (!rc.optimizer.gradient_descent()) tc.lambda = 1.0 + tc.L / rc.optimizer.epsilon;
    rc.lambda_inject = tc.lambda;
    tc.kappa = kappa;
    const auto runs = run_synthetic_seeds(*obj, rc, seeds, Exec::Parallel);
    const RateReport rep = regret_report(runs, tc, F1);
    std::filesystem::create_directories(out);
    std::ofstream csv(out + "/curves.csv");
    csv << std::setprecision(12) << "t,lhs,rhs,regret,bound\n";
    for (Index t = 0; t < rep.lhs.size(); ++t)
        csv << t + 1 << ',' << rep.lhs(t) << ',' << rep.rhs(t) << ',' << rep.regret_empirical(t) << ','
            << rep.regret_bound(t) << '\n';
    json j{{"objective", objective},
           {"T", T},
           {"seeds", seeds},
           {"constants",
            {{"L", tc.L}, {"H", tc.H}, {"lambda", tc.lambda}, {"kappa", tc.kappa}, {"mu", tc.mu}, {"theta", tc.theta}, {"D", tc.D}}},
           {"F1", F1},
           {"rate_holds", rep.holds},
           {"binding", rep.binding},
           {"slope", rep.slope},
           {"final_lhs", rep.lhs(rep.lhs.size() - 1)},
           {"final_rhs", rep.rhs(rep.rhs.size() - 1)},
           {"final_regret", rep.regret_empirical(rep.regret_empirical.size() - 1)},
           {"final_regret_bound", rep.regret_bound(rep.regret_bound.size() - 1)}};
    write_text_file(out + "/report.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_sweep(const ConfigArgs& a, std::vector<std::uint64_t> seeds) {
    const ExperimentConfig c = a.load();
    if (seeds.empty()) seeds = c.seeds;
    const GradientModel model = make_gradient_model(c);
    std::vector<ExperimentResult> res(seeds.size());
    std::vector<std::string> errors(seeds.size());
    for_each_index(seeds.size(), Exec::Parallel, [&](std::size_t i) {
        try {
            res[i] = run_experiment(c, seeds[i], model);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    json j{{"name", c.name}, {"runs", json::array()}};
    std::vector<double> held;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        json r{{"seed", seeds[i]}};
        if (errors[i].empty()) {
            r["held_out_loss"] = std::isfinite(res[i].held_out.mean_loss) ? json(res[i].held_out.mean_loss) : json(nullptr);
            r["final_delta"] = res[i].final_delta;
            held.push_back(res[i].held_out.mean_loss);
        } else {
            r["error"] = errors[i];
        }
        j["runs"].push_back(r);
    }
    if (!held.empty()) j["median_held_out_loss"] = quantile(held, 0.5);
    write_text_file(c.output_dir + "/sweep.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online quasi-Newton learning of tracking controllers"};
    app.require_subcommand(1);

    ConfigArgs id_args, train_args, eval_args, ilc_args, pre_args, sweep_args;
    auto* identify = app.add_subcommand("identify", "frequency identification and transfer-function fit");
    id_args.add(identify);

    auto* train = app.add_subcommand("train", "one online learning run");
    train_args.add(train);
    long long seed = -1, T = 0;
    train->add_option("--seed", seed, "run seed (default: first configured seed)");
    train->add_option("--T", T, "override the number of iterations");

    auto* eval = app.add_subcommand("eval", "held-out evaluation of a checkpoint");
    eval_args.add(eval);
    std::string checkpoint;
    eval->add_option("--checkpoint", checkpoint, "checkpoint.bin")->required();

    auto* ilc = app.add_subcommand("ilc", "ideal input for one held-out reference");
    ilc_args.add(ilc);
    std::size_t ref_index = 0, ilc_iters = 300;
    double gamma = 0.5, ilc_reg = 0.03;
    ilc->add_option("--ref", ref_index, "held-out reference index");
    ilc->add_option("--gamma", gamma, "learning gain in (0, 1]");
    ilc->add_option("--reg", ilc_reg, "Tikhonov damping of the model inverse, relative to its largest singular value");
    ilc->add_option("--iters", ilc_iters, "maximum iterations");

    auto* pretrain = app.add_subcommand("pretrain", "ILC ideal inputs + ridge/SVD latent maps");
    pre_args.add(pretrain);
    std::size_t n_refs = 20, pre_iters = 300;
    Index latent = 10;
    double rho = 1e-6, pre_gamma = 0.5, pre_reg = 0.03;
    pretrain->add_option("--refs", n_refs, "number of references");
    pretrain->add_option("--latent", latent, "latent dimension");
    pretrain->add_option("--rho", rho, "ridge regularisation");
    pretrain->add_option("--gamma", pre_gamma, "ILC gain");
    pretrain->add_option("--reg", pre_reg, "ILC model-inverse damping (relative)");
    pretrain->add_option("--iters", pre_iters, "ILC iterations per reference");

    auto* diagnose = app.add_subcommand("diagnose", "rate and regret checks on synthetic objectives");
    std::string objective = "nonconvex", diag_out = "runs/diagnose";
    std::size_t diag_T = 1000, diag_seeds = 20;
    double diag_eps = 0.0, diag_kappa = 0.0;
    diagnose->add_option("--objective", objective, "quadratic | nonconvex | flat | zero");
    diagnose->add_option("--T", diag_T, "horizon");
    diagnose->add_option("--seeds", diag_seeds, "number of seeds");
    diagnose->add_option("--epsilon", diag_eps, "trust-region epsilon (0 = gradient descent)");
    diagnose->add_option("--kappa", diag_kappa, "injected modelling-error modulus");
    diagnose->add_option("-o,--out", diag_out, "output directory");

    auto* sweep = app.add_subcommand("sweep", "multi-seed runs in parallel");
    sweep_args.add(sweep);
    std::vector<std::uint64_t> sweep_seeds;
    sweep->add_option("--seeds", sweep_seeds, "seeds (default: configured seeds)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*identify) return cmd_identify(id_args);
        if (*train) return cmd_train(train_args, seed, T);
        if (*eval) return cmd_eval(eval_args, checkpoint);
        if (*ilc) return cmd_ilc(ilc_args, ref_index, gamma, ilc_reg, ilc_iters);
        if (*pretrain) return cmd_pretrain(pre_args, n_refs, latent, rho, pre_gamma, pre_reg, pre_iters);
        if (*diagnose) return cmd_diagnose(objective, diag_T, diag_seeds, diag_eps, diag_kappa, diag_out);
        if (*sweep) return cmd_sweep(sweep_args, sweep_seeds);
    } catch (const InvalidInputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
