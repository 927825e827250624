#include "eqprop/training.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "eqprop/asymmetry.hpp"

namespace eqprop {

namespace fs = std::filesystem;
using nlohmann::json;

const char* experiment_name(Experiment e) {
    switch (e) {
        case Experiment::SymmetricInit: return "symmetric-init";
        case Experiment::FixedRatio: return "fixed-ratio";
        case Experiment::Feedforward: return "feedforward";
        case Experiment::Custom: return "custom";
    }
    return "?";
}

Experiment experiment_from_name(const std::string& name) {
    if (name == "symmetric-init") return Experiment::SymmetricInit;
    if (name == "fixed-ratio") return Experiment::FixedRatio;
    if (name == "feedforward") return Experiment::Feedforward;
    if (name == "custom") return Experiment::Custom;
    throw ConfigError("unknown experiment '" + name + "'");
}

Method method_from_name(const std::string& name) {
    if (name == "EP" || name == "ep") return Method::EP;
    if (name == "VF" || name == "vf") return Method::VF;
    if (name == "AEP" || name == "aep") return Method::AEP;
    if (name == "DyadicEP" || name == "dyadic" || name == "dyadic-ep") return Method::DyadicEP;
    throw ConfigError("unknown method '" + name + "'");
}

RunConfig RunConfig::defaults_for(Experiment e) {
    RunConfig cfg;
    cfg.experiment = e;
    switch (e) {
        case Experiment::SymmetricInit:
        case Experiment::Custom:
            cfg.dt = 0.5;
            cfg.n_free = 20;
            cfg.epochs = 40;
            cfg.hidden_size = 50;
            break;
        case Experiment::Feedforward:
            cfg.dt = 0.5;
            cfg.n_free = 20;
            cfg.epochs = 20;
            cfg.hidden_size = 20;
            break;
        case Experiment::FixedRatio:
            cfg.dt = 0.3;
            cfg.n_free = 30;
            cfg.epochs = 30;
            cfg.hidden_size = 50;
            break;
    }
    return cfg;
}

void RunConfig::validate() const {
    if (hidden_size < 1 || n_out < 1) throw ConfigError("RunConfig: layer sizes must be positive");
    if (!(dt > 0.0)) throw ConfigError("RunConfig: dt must be positive");
    if (beta == 0.0) throw ConfigError("RunConfig: beta must be nonzero");
    if (n_free < 1 || n_nudge < 1) throw ConfigError("RunConfig: step counts must be positive");
    if (epochs < 1) throw ConfigError("RunConfig: epochs must be positive");
    if (batch_size < 1) throw ConfigError("RunConfig: batch_size must be positive");
    if (r_str < 0.0 || r_str > 1.0) throw ConfigError("RunConfig: r_str must lie in [0, 1]");
    if (experiment == Experiment::Feedforward && method == Method::EP) {
        throw ConfigError("RunConfig: EP requires a symmetric coupling; the feedforward experiment has none");
    }
    if (experiment == Experiment::FixedRatio && method == Method::EP) {
        throw ConfigError("RunConfig: EP is not defined for the fixed-ratio parameterization");
    }
}

namespace {

json config_to_json_obj(const RunConfig& c) {
    json j;
    j["experiment"] = experiment_name(c.experiment);
    j["method"] = method_name(c.method);
    j["hidden_size"] = c.hidden_size;
    j["r_str"] = c.r_str;
    j["beta"] = c.beta;
    j["dt"] = c.dt;
    j["n_free"] = c.n_free;
    j["n_nudge"] = c.n_nudge;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["lr_input_hidden"] = c.lr.input_hidden;
    j["lr_hidden_output"] = c.lr.hidden_output;
    j["seed"] = c.seed;
    j["train_only"] = c.train_scope == TrainScope::InputOnly ? "input-only" : "all";
    j["data_dir"] = c.data_dir;
    j["out_dir"] = c.out_dir;
    j["train_subset"] = c.train_subset;
    j["n_out"] = c.n_out;
    return j;
}

RunConfig config_from_json_obj(const json& j) {
    RunConfig base;
    if (j.contains("experiment")) base = RunConfig::defaults_for(experiment_from_name(j.at("experiment")));
    RunConfig c = base;
    if (j.contains("method")) c.method = method_from_name(j.at("method"));
    if (j.contains("hidden_size")) c.hidden_size = j.at("hidden_size");
    if (j.contains("r_str")) c.r_str = j.at("r_str");
    if (j.contains("beta")) c.beta = j.at("beta");
    if (j.contains("dt")) c.dt = j.at("dt");
    if (j.contains("n_free")) c.n_free = j.at("n_free");
    if (j.contains("n_nudge")) c.n_nudge = j.at("n_nudge");
    if (j.contains("epochs")) c.epochs = j.at("epochs");
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size");
    if (j.contains("lr_input_hidden")) c.lr.input_hidden = j.at("lr_input_hidden");
    if (j.contains("lr_hidden_output")) c.lr.hidden_output = j.at("lr_hidden_output");
    if (j.contains("seed")) c.seed = j.at("seed");
    if (j.contains("train_only")) {
        const std::string s = j.at("train_only");
        if (s == "input-only") c.train_scope = TrainScope::InputOnly;
        else if (s == "all") c.train_scope = TrainScope::All;
        else throw ConfigError("RunConfig: train_only must be 'input-only' or 'all'");
    }
    if (j.contains("data_dir")) c.data_dir = j.at("data_dir");
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir");
    if (j.contains("train_subset")) c.train_subset = j.at("train_subset");
    if (j.contains("n_out")) c.n_out = j.at("n_out");
    return c;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t sample_seed(std::uint64_t run_seed, Index epoch, Index sample_idx) {
    return splitmix64(run_seed ^ splitmix64(static_cast<std::uint64_t>(epoch) + 1) ^
                      splitmix64(static_cast<std::uint64_t>(sample_idx) * 0x5851F42D4C957F2Dull + 7));
}

// Evaluation states are keyed by the sample index only, so accuracy is a
// pure function of the model and the test set.
std::uint64_t eval_seed(Index sample_idx) {
    return splitmix64(0xE7A1C0DEull ^ (static_cast<std::uint64_t>(sample_idx) + 1));
}

Vector random_state(Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Scalar> u(-1.0, 1.0);
    Vector x(n);
    for (Index i = 0; i < n; ++i) x(i) = u(rng);
    return x;
}

json matrix_to_json(const Matrix& m) {
    json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    std::vector<Scalar> flat;
    flat.reserve(static_cast<size_t>(m.size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index c = 0; c < m.cols(); ++c) flat.push_back(m(i, c));
    j["data"] = flat;
    return j;
}

Matrix matrix_from_json(const json& j) {
    const Index rows = j.at("rows");
    const Index cols = j.at("cols");
    const std::vector<Scalar> flat = j.at("data");
    if (static_cast<Index>(flat.size()) != rows * cols) throw ParseError("checkpoint: matrix size mismatch");
    Matrix m(rows, cols);
    size_t k = 0;
    for (Index i = 0; i < rows; ++i)
        for (Index c = 0; c < cols; ++c) m(i, c) = flat[k++];
    return m;
}

json mask_to_json(const BoolMask& m) {
    json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    std::vector<int> flat;
    flat.reserve(static_cast<size_t>(m.size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index c = 0; c < m.cols(); ++c) flat.push_back(m(i, c) ? 1 : 0);
    j["data"] = flat;
    return j;
}

BoolMask mask_from_json(const json& j) {
    const Index rows = j.at("rows");
    const Index cols = j.at("cols");
    const std::vector<int> flat = j.at("data");
    if (static_cast<Index>(flat.size()) != rows * cols) throw ParseError("checkpoint: mask size mismatch");
    BoolMask m(rows, cols);
    size_t k = 0;
    for (Index i = 0; i < rows; ++i)
        for (Index c = 0; c < cols; ++c) m(i, c) = flat[k++] != 0;
    return m;
}

json vector_to_json(const Vector& v) {
    std::vector<Scalar> flat(v.data(), v.data() + v.size());
    return json(flat);
}

Vector vector_from_json(const json& j) {
    const std::vector<Scalar> flat = j;
    return Eigen::Map<const Vector>(flat.data(), static_cast<Index>(flat.size()));
}

// ----- model traits ---------------------------------------------------------

struct HopfieldTraits {
    using ModelT = HopfieldModel;
    using System = HopfieldSystem;
    using Grad = HopfieldGrad;

    static System make_system(const ModelT& m, const Vector& u) { return System(m.params, u); }
    static Grad zero_grad(const ModelT& m) { return Grad::zeros_like(m.params); }

    static void apply(ModelT& m, const Grad& g, const LearningRates& lr, TrainScope scope) {
        m.params.j_in += lr.input_hidden * g.j_in;
        if (scope == TrainScope::All) m.params.j_dyn += lr.hidden_output * g.j_dyn;
        m.params.enforce_masks();
    }

    static Scalar structural_asymmetry(const ModelT& m) { return r_str_metric(m.params.j_dyn); }
};

struct FixedRatioTraits {
    using ModelT = FixedRatioModel;
    using System = FixedRatioSystem;
    using Grad = FixedRatioGrad;

    static System make_system(const ModelT& m, const Vector& u) { return System(m.params, u); }
    static Grad zero_grad(const ModelT& m) { return Grad::zeros_like(m.params); }

    // The scale gamma trains with the hidden-output rate in both scopes; the
    // input-only regime freezes the normalized coupling parameters.
    static void apply(ModelT& m, const Grad& g, const LearningRates& lr, TrainScope scope) {
        m.params.j_in += lr.input_hidden * g.j_in;
        m.params.gamma += lr.hidden_output * g.gamma;
        if (scope == TrainScope::All) {
            m.params.theta_s += lr.hidden_output * g.theta_s;
            m.params.theta_a += lr.hidden_output * g.theta_a;
            m.params.xi += lr.hidden_output * g.xi;
        }
        m.params.enforce_masks();
    }

    static Scalar structural_asymmetry(const ModelT& m) { return r_str_metric(m.params.assemble()); }
};

template <class Traits>
struct SampleOutcome {
    typename Traits::Grad grad;
    Scalar cost = 0.0;
    bool diverged = false;
};

// Free relaxation + the configured method's estimate for one sample.
template <class Traits>
SampleOutcome<Traits> run_sample(const typename Traits::ModelT& model, const RunConfig& cfg, const Vector& u,
                                 int label, std::uint64_t state_seed) {
    const Index n_dyn = model.n_hidden + model.n_out;
    const auto sys = Traits::make_system(model, u);
    const QuadraticCost cost(mnist::signed_one_hot(label, model.n_out), model.n_hidden, n_dyn);
    const RelaxationConfig free_cfg{cfg.dt, cfg.n_free, 0.0, RelaxMode::FixedSteps};
    const NudgeConfig nudge{cfg.beta, {cfg.dt, cfg.n_nudge, 0.0, RelaxMode::FixedSteps},
                            NudgedSolver::EulerRelax};
    const Vector x0 = random_state(n_dyn, state_seed);

    SampleOutcome<Traits> out{Traits::zero_grad(model), 0.0, false};
    if (cfg.method == Method::DyadicEP) {
        auto est = dyadic_update(sys, cost, nudge, x0, free_cfg);
        out.grad = std::move(est.grad);
        out.cost = cost.value(*est.free_state);
        return out;
    }

    const EquilibriumResult free_eq = relax(sys, x0, free_cfg);
    out.cost = cost.value(free_eq.state);
    switch (cfg.method) {
        case Method::VF:
            out.grad = vf_update(sys, cost, nudge, free_eq.state).grad;
            break;
        case Method::AEP:
            out.grad = aep_update(sys, cost, nudge, free_eq.state).grad;
            break;
        case Method::EP:
            if constexpr (EnergySystem<typename Traits::System>) {
                out.grad = ep_update(sys, cost, nudge, free_eq.state).grad;
            } else {
                throw ConfigError("EP is not available for this parameterization");
            }
            break;
        default:
            throw ConfigError("run_training: unsupported method");
    }
    return out;
}

template <class Traits>
Scalar evaluate_impl(const typename Traits::ModelT& model, const mnist::Dataset& test, Scalar dt, long n_free) {
    const Index n_dyn = model.n_hidden + model.n_out;
    const RelaxationConfig cfg{dt, n_free, 0.0, RelaxMode::FixedSteps};
    const Index n = test.size();
    std::vector<char> correct(static_cast<size_t>(n), 0);
    std::exception_ptr eval_error;
#pragma omp parallel for schedule(dynamic, 64)
    for (Index i = 0; i < n; ++i) {
        try {
            const auto sys = Traits::make_system(model, test.input(i));
            const auto eq = relax(sys, random_state(n_dyn, eval_seed(i)), cfg);
            const int pred = mnist::argmax_label(eq.state.tail(model.n_out));
            correct[static_cast<size_t>(i)] = pred == test.labels(i) ? 1 : 0;
        } catch (const DivergenceError&) {
            correct[static_cast<size_t>(i)] = 0;
        } catch (...) {
#pragma omp critical
            if (!eval_error) eval_error = std::current_exception();
        }
    }
    if (eval_error) std::rethrow_exception(eval_error);
    long hits = 0;
    for (char c : correct) hits += c;
    return static_cast<Scalar>(hits) / static_cast<Scalar>(n);
}

// Mean off-diagonal Jacobian asymmetry over the free equilibria of the first
// up-to-64 test samples.
template <class Traits>
Scalar mean_r_jac(const typename Traits::ModelT& model, const mnist::Dataset& test, Scalar dt, long n_free) {
    const Index n_dyn = model.n_hidden + model.n_out;
    const RelaxationConfig cfg{dt, n_free, 0.0, RelaxMode::FixedSteps};
    const Index n = std::min<Index>(64, test.size());
    Scalar sum = 0.0;
    Index used = 0;
    for (Index i = 0; i < n; ++i) {
        const auto sys = Traits::make_system(model, test.input(i));
        try {
            const auto eq = relax(sys, random_state(n_dyn, eval_seed(i)), cfg);
            sum += r_jac_metric(system_jacobian(sys, eq.state));
            ++used;
        } catch (const std::runtime_error&) {
        }
    }
    return used > 0 ? sum / static_cast<Scalar>(used) : std::numeric_limits<Scalar>::quiet_NaN();
}

template <class Traits>
TrainResult train_impl(typename Traits::ModelT model, const RunConfig& cfg, const mnist::Dataset& train,
                       const mnist::Dataset& test) {
    using Clock = std::chrono::steady_clock;
    const auto t0 = Clock::now();
    auto wall_ms = [&] { return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count(); };

    const Index n_train = cfg.train_subset > 0 ? std::min<Index>(cfg.train_subset, train.size()) : train.size();
    TrainResult result;
    long total_diverged = 0;

    for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto plan = mnist::batch_plan(n_train, cfg.batch_size, cfg.seed, epoch);
        for (size_t b = 0; b < plan.size(); ++b) {
            const auto& batch = plan[b];
            const long bsize = static_cast<long>(batch.size());
            std::vector<SampleOutcome<Traits>> jobs(batch.size(),
                                                    SampleOutcome<Traits>{Traits::zero_grad(model), 0.0, false});
            std::exception_ptr batch_error;
#pragma omp parallel for schedule(dynamic)
            for (long k = 0; k < bsize; ++k) {
                const Index idx = batch[static_cast<size_t>(k)];
                try {
                    jobs[static_cast<size_t>(k)] =
                        run_sample<Traits>(model, cfg, train.input(idx), train.labels(idx),
                                           sample_seed(cfg.seed, epoch, idx));
                } catch (const DivergenceError&) {
                    jobs[static_cast<size_t>(k)].diverged = true;
                } catch (...) {
                    // anything else is a programming/config error; surface it
                    // after the parallel region instead of terminating
#pragma omp critical
                    if (!batch_error) batch_error = std::current_exception();
                }
            }
            if (batch_error) std::rethrow_exception(batch_error);

            long diverged = 0;
            for (const auto& j : jobs) diverged += j.diverged ? 1 : 0;
            total_diverged += diverged;
            if (static_cast<Scalar>(diverged) > 0.01 * static_cast<Scalar>(bsize)) {
                throw TrainingAborted("training aborted: " + std::to_string(diverged) + "/" +
                                          std::to_string(bsize) + " samples diverged in epoch " +
                                          std::to_string(epoch) + ", batch " + std::to_string(b),
                                      epoch, static_cast<long>(b), diverged, bsize);
            }

            // Fixed-order reduction: deterministic for any thread count.
            auto avg = Traits::zero_grad(model);
            Scalar cost_sum = 0.0;
            long used = 0;
            for (const auto& j : jobs) {
                if (j.diverged) continue;
                avg.add(j.grad);
                cost_sum += j.cost;
                ++used;
            }
            if (used > 0) {
                avg.scale(1.0 / static_cast<Scalar>(used));
                Traits::apply(model, avg, cfg.lr, cfg.train_scope);
            }

            MetricsRecord rec;
            rec.epoch = epoch;
            rec.batch = static_cast<long>(b);
            rec.cost = used > 0 ? cost_sum / static_cast<Scalar>(used) : std::numeric_limits<Scalar>::quiet_NaN();
            rec.r_str = Traits::structural_asymmetry(model);
            rec.wall_ms = wall_ms();
            result.records.push_back(rec);
        }

        MetricsRecord eval;
        eval.epoch = epoch;
        eval.batch = -1;
        eval.accuracy = evaluate_impl<Traits>(model, test, cfg.dt, cfg.n_free);
        eval.r_str = Traits::structural_asymmetry(model);
        eval.r_jac = mean_r_jac<Traits>(model, test, cfg.dt, cfg.n_free);
        eval.wall_ms = wall_ms();
        result.records.push_back(eval);
        result.final_accuracy = eval.accuracy;
    }

    result.model = std::move(model);
    result.cumulative_loss = cumulative_loss(result.records, 5);
    result.diverged_samples = total_diverged;
    return result;
}

std::string resolve_idx(const std::string& dir, const std::string& name) {
    const fs::path plain = fs::path(dir) / name;
    if (fs::exists(plain)) return plain.string();
    const fs::path gz = fs::path(dir) / (name + ".gz");
    if (fs::exists(gz)) return gz.string();
    throw ConfigError("data file not found: " + plain.string() + " (or .gz)");
}

}  // namespace

std::string RunConfig::to_json() const { return config_to_json_obj(*this).dump(2); }

RunConfig RunConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config JSON parse failure: ") + e.what());
    }
    return config_from_json_obj(j);
}

ModelVariant init_model(const RunConfig& cfg, Index n_in) {
    const Index h = cfg.hidden_size;
    const Index o = cfg.n_out;
    // parameter variance scales with the dynamical neuron count, matching the
    // fixed-ratio construction's Var[J] ~ 1/N_dyn
    const Scalar sigma = 1.0 / std::sqrt(static_cast<Scalar>(h + o));
    std::mt19937_64 rng(cfg.seed);
    switch (cfg.experiment) {
        case Experiment::SymmetricInit: {
            HopfieldModel m{HopfieldParams::zeros(layered_mask(h, o), layered_input_mask(h, o, n_in)), h, o};
            randomize_symmetric(m.params, rng, sigma);
            return m;
        }
        case Experiment::Custom: {
            HopfieldModel m{HopfieldParams::zeros(layered_mask(h, o), layered_input_mask(h, o, n_in)), h, o};
            randomize_normal(m.params, rng, sigma);
            return m;
        }
        case Experiment::Feedforward: {
            HopfieldModel m{HopfieldParams::zeros(feedforward_mask(h, o), layered_input_mask(h, o, n_in)), h, o};
            randomize_normal(m.params, rng, sigma);
            return m;
        }
        case Experiment::FixedRatio: {
            FixedRatioModel m{
                fixed_ratio_init(layered_mask(h, o), layered_input_mask(h, o, n_in), sigma, cfg.r_str, cfg.seed),
                h, o};
            return m;
        }
    }
    throw ConfigError("init_model: unknown experiment");
}

Scalar cumulative_loss(const std::vector<MetricsRecord>& records, Index epochs) {
    Scalar sum = 0.0;
    for (const auto& r : records) {
        if (r.batch >= 0 && r.epoch <= epochs && std::isfinite(r.cost)) sum += r.cost;
    }
    return sum;
}

Scalar evaluate_model(const ModelVariant& model, const mnist::Dataset& test, Scalar dt, long n_free) {
    return std::visit(
        [&](const auto& m) -> Scalar {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, HopfieldModel>) {
                return evaluate_impl<HopfieldTraits>(m, test, dt, n_free);
            } else {
                return evaluate_impl<FixedRatioTraits>(m, test, dt, n_free);
            }
        },
        model);
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write metrics CSV: " + path);
    out << kMetricsHeader << "\n";
    out.precision(17);
    auto cell = [&](Scalar v) {
        if (std::isnan(v)) return std::string();
        std::ostringstream ss;
        ss.precision(17);
        ss << v;
        return ss.str();
    };
    for (const auto& r : records) {
        out << r.epoch << ',' << r.batch << ',' << cell(r.cost) << ',' << cell(r.accuracy) << ','
            << cell(r.r_str) << ',' << cell(r.r_jac) << ',' << r.wall_ms << "\n";
    }
}

void save_checkpoint(const std::string& path, const ModelVariant& model, const RunConfig& cfg) {
    json j;
    j["format"] = "eqprop-checkpoint";
    j["version"] = kVersion;
    j["config"] = config_to_json_obj(cfg);
    std::visit(
        [&](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            json mj;
            mj["n_hidden"] = m.n_hidden;
            mj["n_out"] = m.n_out;
            if constexpr (std::is_same_v<M, HopfieldModel>) {
                mj["kind"] = "hopfield";
                mj["j_in"] = matrix_to_json(m.params.j_in);
                mj["j_dyn"] = matrix_to_json(m.params.j_dyn);
                mj["dyn_mask"] = mask_to_json(m.params.dyn_mask);
                mj["in_mask"] = mask_to_json(m.params.in_mask);
            } else {
                mj["kind"] = "fixed-ratio";
                mj["theta_s"] = vector_to_json(m.params.theta_s);
                mj["theta_a"] = vector_to_json(m.params.theta_a);
                mj["xi"] = vector_to_json(m.params.xi);
                mj["gamma"] = m.params.gamma;
                mj["r_str"] = m.params.r_str;
                mj["j_in"] = matrix_to_json(m.params.j_in);
                mj["dyn_mask"] = mask_to_json(m.params.dyn_mask);
                mj["in_mask"] = mask_to_json(m.params.in_mask);
            }
            j["model"] = std::move(mj);
        },
        model);
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write checkpoint: " + path);
    out << j.dump(1) << "\n";
}

ModelVariant load_checkpoint(const std::string& path, RunConfig* cfg_out) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open checkpoint: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint parse failure: ") + e.what());
    }
    if (j.value("format", "") != "eqprop-checkpoint") throw ParseError("not an eqprop checkpoint: " + path);
    if (cfg_out) *cfg_out = config_from_json_obj(j.at("config"));
    const json& mj = j.at("model");
    const std::string kind = mj.at("kind");
    if (kind == "hopfield") {
        HopfieldModel m;
        m.n_hidden = mj.at("n_hidden");
        m.n_out = mj.at("n_out");
        m.params.j_in = matrix_from_json(mj.at("j_in"));
        m.params.j_dyn = matrix_from_json(mj.at("j_dyn"));
        m.params.dyn_mask = mask_from_json(mj.at("dyn_mask"));
        m.params.in_mask = mask_from_json(mj.at("in_mask"));
        return m;
    }
    if (kind == "fixed-ratio") {
        FixedRatioModel m;
        m.n_hidden = mj.at("n_hidden");
        m.n_out = mj.at("n_out");
        m.params.theta_s = vector_from_json(mj.at("theta_s"));
        m.params.theta_a = vector_from_json(mj.at("theta_a"));
        m.params.xi = vector_from_json(mj.at("xi"));
        m.params.gamma = mj.at("gamma");
        m.params.r_str = mj.at("r_str");
        m.params.j_in = matrix_from_json(mj.at("j_in"));
        m.params.dyn_mask = mask_from_json(mj.at("dyn_mask"));
        m.params.in_mask = mask_from_json(mj.at("in_mask"));
        return m;
    }
    throw ParseError("checkpoint: unknown model kind '" + kind + "'");
}

mnist::Dataset load_split(const std::string& data_dir, bool train_split) {
    if (train_split) {
        return mnist::load_dataset(resolve_idx(data_dir, "train-images-idx3-ubyte"),
                                   resolve_idx(data_dir, "train-labels-idx1-ubyte"), "train");
    }
    return mnist::load_dataset(resolve_idx(data_dir, "t10k-images-idx3-ubyte"),
                               resolve_idx(data_dir, "t10k-labels-idx1-ubyte"), "test");
}

TrainResult run_training(const RunConfig& cfg) {
    if (cfg.data_dir.empty()) throw ConfigError("run_training: data_dir is required");
    return run_training(cfg, load_split(cfg.data_dir, true), load_split(cfg.data_dir, false));
}

TrainResult run_training(const RunConfig& cfg, const mnist::Dataset& train, const mnist::Dataset& test) {
    cfg.validate();
    ModelVariant model = init_model(cfg, train.input_dim());
    TrainResult result = std::visit(
        [&](auto&& m) -> TrainResult {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, HopfieldModel>) {
                return train_impl<HopfieldTraits>(std::move(m), cfg, train, test);
            } else {
                return train_impl<FixedRatioTraits>(std::move(m), cfg, train, test);
            }
        },
        std::move(model));

    if (!cfg.out_dir.empty()) {
        std::error_code ec;
        fs::create_directories(cfg.out_dir, ec);
        if (ec || !fs::is_directory(cfg.out_dir)) {
            throw ConfigError("cannot create output directory: " + cfg.out_dir);
        }
        result.csv_path = (fs::path(cfg.out_dir) / "metrics.csv").string();
        result.checkpoint_path = (fs::path(cfg.out_dir) / "checkpoint.json").string();
        result.manifest_path = (fs::path(cfg.out_dir) / "manifest.json").string();
        write_metrics_csv(result.csv_path, result.records);
        save_checkpoint(result.checkpoint_path, result.model, cfg);

        json manifest;
        manifest["config"] = config_to_json_obj(cfg);
        manifest["versions"] = {{"eqprop", kVersion},
                                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                              std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                              std::to_string(EIGEN_MINOR_VERSION)}};
        manifest["final"] = {{"accuracy", result.final_accuracy},
                             {"cumulative_loss", result.cumulative_loss},
                             {"diverged_samples", result.diverged_samples},
                             {"wall_ms", result.records.empty() ? 0 : result.records.back().wall_ms}};
        manifest["outputs"] = {{"metrics_csv", result.csv_path}, {"checkpoint", result.checkpoint_path}};
        std::ofstream out(result.manifest_path);
        if (!out) throw ConfigError("cannot write manifest: " + result.manifest_path);
        out << manifest.dump(2) << "\n";
    }
    return result;
}

SweepSummary sweep_training(RunConfig cfg, int repetitions, const mnist::Dataset& train,
                            const mnist::Dataset& test) {
    if (repetitions < 1) throw ConfigError("sweep_training: repetitions must be >= 1");
    SweepSummary s;
    const std::string base_out = cfg.out_dir;
    const std::uint64_t base_seed = cfg.seed;
    for (int r = 0; r < repetitions; ++r) {
        cfg.seed = base_seed + static_cast<std::uint64_t>(r);
        cfg.out_dir = base_out.empty() ? "" : (fs::path(base_out) / ("run_" + std::to_string(r))).string();
        const TrainResult res = run_training(cfg, train, test);
        s.accuracies.push_back(res.final_accuracy);
        s.cumulative_losses.push_back(res.cumulative_loss);
    }
    const Scalar n = static_cast<Scalar>(s.accuracies.size());
    Scalar mean = 0.0;
    for (Scalar a : s.accuracies) mean += a;
    mean /= n;
    Scalar var = 0.0;
    for (Scalar a : s.accuracies) var += (a - mean) * (a - mean);
    s.mean_accuracy = mean;
    s.std_accuracy = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
    return s;
}

}  // namespace eqprop
