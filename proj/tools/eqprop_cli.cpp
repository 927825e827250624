// Command-line runner for equilibrium-propagation experiments: training,
// checkpoint evaluation, seed sweeps, and gradient-oracle spot checks.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "eqprop/asymmetry.hpp"
#include "eqprop/oracle.hpp"
#include "eqprop/training.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

struct CliOptions {
    std::string config_path;
    std::string experiment = "symmetric-init";
    std::string method;
    std::string train_only;
    std::string data_dir;
    std::string out_dir;
    long hidden = -1;
    double r_str = -1.0;
    double beta = 0.0;
    double dt = 0.0;
    long n_free = 0;
    long n_nudge = 0;
    long epochs = 0;
    long batch_size = 0;
    double lr_in = -1.0;
    double lr_hid = -1.0;
    unsigned long long seed = 0;
    long train_subset = -1;
};

void add_run_options(CLI::App* cmd, CliOptions& o) {
    cmd->add_option("--config", o.config_path, "JSON config file; explicit flags override its fields");
    cmd->add_option("--experiment", o.experiment, "symmetric-init | fixed-ratio | feedforward | custom");
    cmd->add_option("--method", o.method, "EP | VF | AEP | DyadicEP");
    cmd->add_option("--hidden", o.hidden, "hidden layer size");
    cmd->add_option("--r-str", o.r_str, "structural asymmetry ratio (fixed-ratio experiment)");
    cmd->add_option("--beta", o.beta, "nudging strength");
    cmd->add_option("--dt", o.dt, "integration step");
    cmd->add_option("--n-free", o.n_free, "free-phase steps");
    cmd->add_option("--n-nudge", o.n_nudge, "nudged-phase steps");
    cmd->add_option("--epochs", o.epochs, "training epochs");
    cmd->add_option("--batch-size", o.batch_size, "mini-batch size");
    cmd->add_option("--lr-in", o.lr_in, "input->hidden learning rate");
    cmd->add_option("--lr-hid", o.lr_hid, "hidden->output learning rate");
    cmd->add_option("--seed", o.seed, "RNG seed");
    cmd->add_option("--train-only", o.train_only, "all | input-only");
    cmd->add_option("--data-dir", o.data_dir, "directory with the IDX files (or set EQPROP_DATA_DIR)");
    cmd->add_option("--out", o.out_dir, "output directory for metrics/manifest/checkpoint");
    cmd->add_option("--train-subset", o.train_subset, "limit training to the first N samples (0 = all)");
}

// Precedence: per-experiment defaults < config file fields < explicit flags.
eqprop::RunConfig build_config(const CLI::App* cmd, const CliOptions& o) {
    nlohmann::json file_obj = nlohmann::json::object();
    if (!o.config_path.empty()) {
        std::ifstream in(o.config_path);
        if (!in) throw eqprop::ConfigError("cannot open config file: " + o.config_path);
        try {
            in >> file_obj;
        } catch (const nlohmann::json::exception& e) {
            throw eqprop::ConfigError(std::string("config JSON parse failure: ") + e.what());
        }
    }
    if (cmd->count("--experiment") || !file_obj.contains("experiment")) {
        file_obj["experiment"] = o.experiment;
    }
    eqprop::RunConfig cfg = eqprop::RunConfig::from_json(file_obj.dump());
    if (cmd->count("--method")) cfg.method = eqprop::method_from_name(o.method);
    if (cmd->count("--hidden")) cfg.hidden_size = o.hidden;
    if (cmd->count("--r-str")) cfg.r_str = o.r_str;
    if (cmd->count("--beta")) cfg.beta = o.beta;
    if (cmd->count("--dt")) cfg.dt = o.dt;
    if (cmd->count("--n-free")) cfg.n_free = o.n_free;
    if (cmd->count("--n-nudge")) cfg.n_nudge = o.n_nudge;
    if (cmd->count("--epochs")) cfg.epochs = o.epochs;
    if (cmd->count("--batch-size")) cfg.batch_size = o.batch_size;
    if (cmd->count("--lr-in")) cfg.lr.input_hidden = o.lr_in;
    if (cmd->count("--lr-hid")) cfg.lr.hidden_output = o.lr_hid;
    if (cmd->count("--seed")) cfg.seed = o.seed;
    if (cmd->count("--train-only")) {
        if (o.train_only == "input-only") cfg.train_scope = eqprop::TrainScope::InputOnly;
        else if (o.train_only == "all") cfg.train_scope = eqprop::TrainScope::All;
        else throw eqprop::ConfigError("--train-only must be 'all' or 'input-only'");
    }
    if (cmd->count("--data-dir")) cfg.data_dir = o.data_dir;
    if (cmd->count("--out")) cfg.out_dir = o.out_dir;
    if (cmd->count("--train-subset")) cfg.train_subset = o.train_subset;

    if (cfg.data_dir.empty()) {
        if (const char* env = std::getenv("EQPROP_DATA_DIR")) cfg.data_dir = env;
    }
    return cfg;
}

int cmd_train(const CLI::App* cmd, const CliOptions& o) {
    const auto cfg = build_config(cmd, o);
    const auto result = eqprop::run_training(cfg);
    std::cout << "final test accuracy: " << result.final_accuracy << "\n"
              << "cumulative loss (first 5 epochs): " << result.cumulative_loss << "\n";
    if (!result.checkpoint_path.empty()) {
        std::cout << "checkpoint: " << result.checkpoint_path << "\n"
                  << "metrics:    " << result.csv_path << "\n"
                  << "manifest:   " << result.manifest_path << "\n";
    }
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint, std::string data_dir) {
    if (data_dir.empty()) {
        if (const char* env = std::getenv("EQPROP_DATA_DIR")) data_dir = env;
    }
    if (data_dir.empty()) throw eqprop::ConfigError("eval: --data-dir or EQPROP_DATA_DIR is required");
    eqprop::RunConfig cfg;
    const auto model = eqprop::load_checkpoint(checkpoint, &cfg);
    const auto test = eqprop::load_split(data_dir, false);
    const double acc = eqprop::evaluate_model(model, test, cfg.dt, cfg.n_free);
    std::cout << "test accuracy: " << acc << "\n";
    return kExitOk;
}

int cmd_sweep(const CLI::App* cmd, const CliOptions& o, int reps) {
    auto cfg = build_config(cmd, o);
    if (cfg.data_dir.empty()) throw eqprop::ConfigError("sweep: --data-dir or EQPROP_DATA_DIR is required");
    const auto train = eqprop::load_split(cfg.data_dir, true);
    const auto test = eqprop::load_split(cfg.data_dir, false);
    const auto summary = eqprop::sweep_training(cfg, reps, train, test);
    std::cout << "runs: " << reps << "\n";
    for (size_t i = 0; i < summary.accuracies.size(); ++i) {
        std::cout << "  run " << i << ": accuracy " << summary.accuracies[i] << ", cumulative loss "
                  << summary.cumulative_losses[i] << "\n";
    }
    std::cout << "accuracy mean +/- std: " << summary.mean_accuracy << " +/- " << summary.std_accuracy << "\n";
    return kExitOk;
}

// Spot check of the contrastive estimators against the implicit-differentiation
// oracle on random small asymmetric networks.
int cmd_oracle_check(int trials, long n_dyn, double beta) {
    using namespace eqprop;
    double worst_aep = 0.0, worst_dyadic = 0.0, worst_vf = 0.0;
    for (int t = 0; t < trials; ++t) {
        std::mt19937_64 rng(1000 + static_cast<std::uint64_t>(t));
        const Index n_in = 4;
        const Index n = n_dyn;
        HopfieldParams p = HopfieldParams::zeros(dense_mask(n, false), BoolMask::Constant(n, n_in, true));
        randomize_normal(p, rng, 0.4 / std::sqrt(static_cast<double>(n)));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Vector input(n_in);
        for (Index i = 0; i < n_in; ++i) input(i) = u(rng);
        const Index n_out = 2;
        Vector target = Vector::Constant(n_out, -1.0);
        target(0) = 1.0;
        const QuadraticCost cost(target, n - n_out, n);
        const HopfieldSystem sys(p, input);

        RelaxationConfig tight{0.5, 20000, 1e-13, RelaxMode::Tolerance};
        const auto free_eq = relax(sys, Vector::Zero(n), tight);
        const NudgeConfig nudge{beta, tight, NudgedSolver::EulerRelax};

        const auto oracle = exact_gradient(sys, cost, free_eq.state);
        const double onorm = oracle.grad.flatten().norm();
        auto rel = [&](const HopfieldGrad& g) { return (g.flatten() - oracle.grad.flatten()).norm() / onorm; };
        worst_aep = std::max(worst_aep, rel(aep_update(sys, cost, nudge, free_eq.state).grad));
        worst_dyadic = std::max(worst_dyadic, rel(dyadic_update(sys, cost, nudge, free_eq.state, tight).grad));
        worst_vf = std::max(worst_vf, rel(vf_update(sys, cost, nudge, free_eq.state).grad));
    }
    std::cout << "oracle check over " << trials << " random asymmetric networks (n_dyn=" << n_dyn
              << ", beta=" << beta << ")\n"
              << "  max |AEP    - exact| / |exact|: " << worst_aep << "\n"
              << "  max |Dyadic - exact| / |exact|: " << worst_dyadic << "\n"
              << "  max |VF     - exact| / |exact|: " << worst_vf << "  (biased: no Jacobian correction)\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"equilibrium-propagation training harness"};
    app.require_subcommand(1);

    CliOptions train_opts, sweep_opts;
    auto* train = app.add_subcommand("train", "train a model and write metrics/checkpoint");
    add_run_options(train, train_opts);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test set");
    std::string eval_checkpoint, eval_data_dir;
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint JSON")->required();
    eval->add_option("--data-dir", eval_data_dir, "directory with the IDX files");

    auto* sweep = app.add_subcommand("sweep", "repeat a training run over consecutive seeds");
    add_run_options(sweep, sweep_opts);
    int reps = 10;
    sweep->add_option("--reps", reps, "number of repetitions");

    auto* oracle = app.add_subcommand("oracle-check", "compare estimators against the exact gradient");
    int trials = 20;
    long oc_n = 6;
    double oc_beta = 1e-3;
    oracle->add_option("--trials", trials, "number of random networks");
    oracle->add_option("--n-dyn", oc_n, "state dimension");
    oracle->add_option("--beta", oc_beta, "nudging strength");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(train, train_opts);
        if (eval->parsed()) return cmd_eval(eval_checkpoint, eval_data_dir);
        if (sweep->parsed()) return cmd_sweep(sweep, sweep_opts, reps);
        if (oracle->parsed()) return cmd_oracle_check(trials, oc_n, oc_beta);
    } catch (const eqprop::TrainingAborted& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const eqprop::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const eqprop::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const eqprop::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
