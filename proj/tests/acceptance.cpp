// Acceptance suite: one check per release criterion, one PASS/FAIL line each.
// Criteria 7 and 8 train on MNIST and need the four IDX files; point
// EQPROP_DATA_DIR at the directory containing them. A subset of criterion
// numbers may be passed on the command line to run only those.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <vector>

#include "eqprop/asymmetry.hpp"
#include "eqprop/feedforward.hpp"
#include "eqprop/learners.hpp"
#include "eqprop/mnist.hpp"
#include "eqprop/oracle.hpp"
#include "eqprop/training.hpp"
#include "support/test_util.hpp"

using namespace eqprop;
using namespace eqprop::testing;

namespace {

struct CheckResult {
    bool passed = false;
    std::string detail;
};

const RelaxationConfig kTight{0.5, 20000, 1e-13, RelaxMode::Tolerance};

struct Instance {
    HopfieldParams params;
    Vector input;
    Vector x_free;
    QuadraticCost cost;
};

/// Well-conditioned random instance, or nullopt if the seed gives an
/// ill-conditioned or non-converging one.
std::optional<Instance> make_instance(std::uint64_t seed, bool layered, bool symmetric = false,
                                      Scalar sigma_scale = 0.7) {
    const Index n_hidden = 3 + static_cast<Index>(seed % 4);  // total dimension 5..10 capped below
    const Index n_out = 2 + static_cast<Index>(seed % 2);
    const Index n = std::min<Index>(n_hidden + n_out, 8);
    const Index h = n - n_out;
    auto inst = random_hopfield(seed, h, n_out, 4, layered, sigma_scale, symmetric);

    const HopfieldSystem sys(inst.params, inst.input);
    const auto eq = relax(sys, Vector::Zero(n), kTight);
    if (!eq.converged) return std::nullopt;
    const Matrix jac = sys.jacobian(eq.state);
    Eigen::PartialPivLU<Matrix> lu(jac);
    if (lu.rcond() < 1e-3) return std::nullopt;  // condition number above 1e3

    std::mt19937_64 rng(seed ^ 0xABCDEF);
    Vector target = Vector::Constant(n_out, -1.0);
    target(static_cast<Index>(rng() % static_cast<std::uint64_t>(n_out))) = 1.0;
    QuadraticCost cost(target, h, n);
    if (cost.gradient(eq.state).norm() < 1e-3) return std::nullopt;
    return Instance{std::move(inst.params), std::move(inst.input), eq.state, std::move(cost)};
}

std::vector<Instance> instance_suite(int count) {
    std::vector<Instance> suite;
    std::uint64_t seed = 1;
    while (static_cast<int>(suite.size()) < count) {
        auto inst = make_instance(seed, seed % 2 == 0);
        if (inst) suite.push_back(std::move(*inst));
        ++seed;
    }
    return suite;
}

std::string data_dir() {
    if (const char* env = std::getenv("EQPROP_DATA_DIR")) return env;
    return "";
}

bool full_scale_requested() { return std::getenv("EQPROP_ACCEPT_FULL") != nullptr; }

std::string idx_path(const std::string& dir, const std::string& name) {
    const std::string plain = dir + "/" + name;
    if (std::filesystem::exists(plain)) return plain;
    return plain + ".gz";
}

/// Loads the full train/test pair once; later criteria reuse it.
const std::pair<mnist::Dataset, mnist::Dataset>& mnist_data() {
    static const std::pair<mnist::Dataset, mnist::Dataset> data = [] {
        const std::string dir = data_dir();
        auto train = mnist::load_dataset(idx_path(dir, "train-images-idx3-ubyte"),
                                         idx_path(dir, "train-labels-idx1-ubyte"), "train");
        auto test = mnist::load_dataset(idx_path(dir, "t10k-images-idx3-ubyte"),
                                        idx_path(dir, "t10k-labels-idx1-ubyte"), "test");
        return std::make_pair(std::move(train), std::move(test));
    }();
    return data;
}

// ---------------------------------------------------------------------------

CheckResult criterion1_gradient_exactness() {
    const auto suite = instance_suite(100);
    Scalar worst_err = 0.0, min_ratio = 1e9, max_ratio = 0.0;
    for (const auto& inst : suite) {
        const HopfieldSystem sys(inst.params, inst.input);
        const auto oracle = exact_gradient(sys, inst.cost, inst.x_free);
        const Scalar onorm = oracle.grad.flatten().norm();
        const NudgeConfig n1{1e-3, kTight, NudgedSolver::EulerRelax};
        const NudgeConfig n2{5e-4, kTight, NudgedSolver::EulerRelax};
        const Scalar e1 =
            (aep_update(sys, inst.cost, n1, inst.x_free).grad.flatten() - oracle.grad.flatten()).norm() / onorm;
        const Scalar e2 =
            (aep_update(sys, inst.cost, n2, inst.x_free).grad.flatten() - oracle.grad.flatten()).norm() / onorm;
        worst_err = std::max(worst_err, e1);
        const Scalar ratio = e1 / e2;
        min_ratio = std::min(min_ratio, ratio);
        max_ratio = std::max(max_ratio, ratio);
        if (e1 > 1e-4) return {false, "relative error " + std::to_string(e1) + " exceeds 1e-4"};
        if (ratio < 3.0 || ratio > 5.0) return {false, "beta-halving ratio " + std::to_string(ratio) + " outside [3,5]"};
    }
    std::ostringstream ss;
    ss << "100 nets, worst rel err " << worst_err << ", ratio range [" << min_ratio << ", " << max_ratio << "]";
    return {true, ss.str()};
}

CheckResult criterion2_dyadic_equals_aep() {
    const auto suite = instance_suite(100);
    Scalar worst = 0.0;
    for (const auto& inst : suite) {
        const HopfieldSystem sys(inst.params, inst.input);
        const NudgeConfig nudge{1e-3, kTight, NudgedSolver::EulerRelax};
        const auto aep = aep_update(sys, inst.cost, nudge, inst.x_free);
        const auto dy = dyadic_update(sys, inst.cost, nudge, inst.x_free, kTight);
        const Scalar err = rel_error(dy.grad.flatten(), aep.grad.flatten());
        worst = std::max(worst, err);
        if (err > 1e-4) return {false, "dyadic/AEP disagreement " + std::to_string(err) + " exceeds 1e-4"};
    }
    return {true, "100 nets, worst disagreement " + std::to_string(worst)};
}

CheckResult criterion3_vf_boundary() {
    Scalar worst_sym = 0.0;
    int used = 0;
    for (std::uint64_t seed = 500; seed < 600 && used < 20; ++seed) {
        const auto inst = make_instance(seed, seed % 2 == 0, true, 0.5);
        if (!inst) continue;
        ++used;
        const HopfieldSystem sys(inst->params, inst->input);
        const auto oracle = exact_gradient(sys, inst->cost, inst->x_free);
        const auto vf = vf_update(sys, inst->cost, NudgeConfig{1e-3, kTight, NudgedSolver::EulerRelax},
                                  inst->x_free);
        const Scalar err = rel_error(vf.grad.flatten(), oracle.grad.flatten());
        worst_sym = std::max(worst_sym, err);
        if (err > 1e-4) return {false, "symmetric case error " + std::to_string(err) + " exceeds 1e-4"};
    }

    Scalar worst_anti = 0.0;
    for (std::uint64_t seed = 600; seed < 610; ++seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<Scalar> d(0.0, 0.5);
        const Index n = 4;
        Matrix m(n, n);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) m(i, j) = d(rng);
        const Matrix a = m - m.transpose();
        if (std::abs(a.determinant()) < 1e-4) continue;
        Vector c(n);
        for (Index i = 0; i < n; ++i) c(i) = d(rng);
        const LinearSystem sys(a, c);
        const Vector x0 = -a.partialPivLu().solve(c);
        const QuadraticCost cost(mnist::signed_one_hot(static_cast<int>(seed % 2), 2), n - 2, n);
        // anti-damped -beta phase: stationarity via the Newton path
        const auto vf = vf_update(sys, cost, NudgeConfig{1e-4, kTight, NudgedSolver::Newton}, x0);
        const auto oracle = exact_gradient(sys, cost, x0);
        const Scalar err = rel_error(vf.grad.flatten(), Vector(-oracle.grad.flatten()));
        worst_anti = std::max(worst_anti, err);
        if (err > 1e-6) return {false, "antisymmetric sign-flip error " + std::to_string(err) + " exceeds 1e-6"};
    }
    std::ostringstream ss;
    ss << "symmetric worst " << worst_sym << ", antisymmetric worst " << worst_anti;
    return {true, ss.str()};
}

CheckResult criterion4_bias_law() {
    Scalar worst_rel = 0.0, worst_cos = 1.0;
    for (const Scalar ratio : {0.05, 0.1}) {
        for (std::uint64_t seed = 700; seed < 705; ++seed) {
            std::mt19937_64 rng(seed);
            std::normal_distribution<Scalar> d(0.0, 0.3);
            const Index n = 5;
            Matrix r = Matrix::NullaryExpr(n, n, [&] { return d(rng); });
            const Matrix s = -(Matrix::Identity(n, n) + 0.3 * (r * r.transpose()));
            Matrix m(n, n);
            for (Index i = 0; i < n; ++i)
                for (Index j = 0; j < n; ++j) m(i, j) = d(rng);
            Matrix a = m - m.transpose();
            a *= ratio / s.partialPivLu().solve(a).jacobiSvd().singularValues()(0);
            Vector c(n);
            for (Index i = 0; i < n; ++i) c(i) = d(rng);

            const LinearSystem sys(s + a, c);
            const Vector x0 = -(s + a).partialPivLu().solve(c);
            const QuadraticCost cost(mnist::signed_one_hot(0, 2), n - 2, n);

            const auto vf = vf_update(sys, cost, NudgeConfig{1e-5, kTight, NudgedSolver::Newton}, x0);
            const auto exact = exact_gradient(sys, cost, x0);
            const Vector measured = vf.grad.flatten() - exact.grad.flatten();
            const Vector predicted =
                vf_bias_prediction(sys, sys.jacobian(x0), cost.gradient(x0), x0, 0).grad.flatten();

            const Scalar rel = (predicted - measured).norm() / measured.norm();
            const Scalar cosine = predicted.dot(measured) / (predicted.norm() * measured.norm());
            worst_rel = std::max(worst_rel, rel);
            worst_cos = std::min(worst_cos, cosine);
            if (rel > 0.10) return {false, "order-0 prediction off by " + std::to_string(rel)};
            if (cosine <= 0.99) return {false, "bias direction cosine " + std::to_string(cosine)};
        }
    }
    std::ostringstream ss;
    ss << "worst rel " << worst_rel << ", worst cosine " << worst_cos;
    return {true, ss.str()};
}

CheckResult criterion5_bptt_equivalence() {
    Scalar worst = 0.0;
    int used = 0;
    for (std::uint64_t seed = 800; seed < 830 && used < 20; ++seed) {
        const auto inst = make_instance(seed, seed % 2 == 0);
        if (!inst) continue;
        ++used;
        const HopfieldSystem sys(inst->params, inst->input);
        const auto eq = newton_fixed_point([&](const Vector& x) { return sys.force(x); },
                                           [&](const Vector& x) { return sys.jacobian(x); }, inst->x_free,
                                           1e-14);
        const auto exact = exact_gradient(sys, inst->cost, eq.state);
        const auto unrolled = bptt_gradient(sys, inst->cost, eq.state, 200, 0.5);
        const Scalar err = rel_error(unrolled.grad.flatten(), exact.grad.flatten());
        worst = std::max(worst, err);
        if (err > 1e-8) return {false, "unrolled/implicit disagreement " + std::to_string(err)};
    }
    return {true, std::to_string(used) + " nets, worst disagreement " + std::to_string(worst)};
}

CheckResult criterion6_feedforward_structure() {
    Scalar worst_vf = 0.0, min_aep = 1e9;
    for (std::uint64_t seed = 900; seed < 910; ++seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<Scalar> d(0.0, 0.35);
        FeedforwardParams p;
        p.j_in = Matrix::NullaryExpr(5, 4, [&] { return d(rng); });
        p.w = Matrix::NullaryExpr(3, 5, [&] { return d(rng); });
        const Vector u = random_vector(rng, 4);
        const FeedforwardSystem sys(p, u);
        const auto eq = relax(sys, Vector::Zero(8), kTight);
        if (!eq.converged) return {false, "free phase failed to converge"};
        const QuadraticCost cost(mnist::signed_one_hot(static_cast<int>(seed % 3), 3), 5, 8);
        const NudgeConfig nudge{0.5, kTight, NudgedSolver::EulerRelax};

        const auto vf = vf_update(sys, cost, nudge, eq.state);
        worst_vf = std::max(worst_vf, vf.grad.j_in.cwiseAbs().maxCoeff());
        if (worst_vf > 1e-10) return {false, "VF hidden/input gradient " + std::to_string(worst_vf)};

        const auto aep = aep_update(sys, cost, nudge, eq.state);
        min_aep = std::min(min_aep, aep.grad.j_in.cwiseAbs().maxCoeff());
        if (aep.grad.j_in.cwiseAbs().maxCoeff() <= 1e-10) {
            return {false, "AEP hidden gradient vanished on a generic input"};
        }
    }
    std::ostringstream ss;
    ss << "VF input-grad max " << worst_vf << ", AEP input-grad min " << min_aep;
    return {true, ss.str()};
}

CheckResult criterion7_mnist_feedforward() {
    if (data_dir().empty()) return {false, "EQPROP_DATA_DIR is not set; cannot run the MNIST check"};
    const bool full = full_scale_requested();
    const auto& [train, test] = mnist_data();
    if (train.size() != 60000 || test.size() != 10000) {
        return {false, "unexpected dataset sizes " + std::to_string(train.size()) + "/" +
                           std::to_string(test.size())};
    }

    RunConfig cfg = RunConfig::defaults_for(Experiment::Feedforward);
    cfg.seed = 1;
    if (!full) {
        // CI variant: 10k samples, 5 epochs; smaller batches spend the reduced
        // sample budget on more updates at the reference rates
        cfg.train_subset = 10000;
        cfg.epochs = 5;
        cfg.batch_size = 8;
    }
    const Scalar aep_floor = full ? 0.90 : 0.85;
    const Scalar vf_ceiling = full ? 0.70 : 0.75;

    cfg.method = Method::AEP;
    const Scalar aep_acc = run_training(cfg, train, test).final_accuracy;
    cfg.method = Method::VF;
    const Scalar vf_acc = run_training(cfg, train, test).final_accuracy;

    std::ostringstream ss;
    ss << (full ? "full-scale" : "CI-scale") << " AEP " << aep_acc << " (need >= " << aep_floor << "), VF "
       << vf_acc << " (need <= " << vf_ceiling << ")";
    if (aep_acc < aep_floor || vf_acc > vf_ceiling) return {false, ss.str()};
    return {true, ss.str()};
}

CheckResult criterion8_fixed_ratio() {
    if (data_dir().empty()) return {false, "EQPROP_DATA_DIR is not set; cannot run the MNIST check"};
    const auto& [train, test] = mnist_data();

    auto run_at = [&](Method method, Scalar r, Index epochs) {
        RunConfig cfg = RunConfig::defaults_for(Experiment::FixedRatio);
        cfg.method = method;
        cfg.r_str = r;
        cfg.epochs = epochs;
        cfg.train_subset = 10000;
        cfg.seed = 1;
        return run_training(cfg, train, test);
    };

    std::ostringstream ss;
    const auto aep_r0 = run_at(Method::AEP, 0.0, 10);
    const auto aep_r875 = run_at(Method::AEP, 0.875, 10);
    ss << "AEP acc r=0: " << aep_r0.final_accuracy << ", r=0.875: " << aep_r875.final_accuracy;
    if (std::abs(aep_r875.final_accuracy - aep_r0.final_accuracy) > 0.05) {
        return {false, ss.str() + " — spread exceeds 5 points"};
    }

    // chance-level accuracy is a noisy readout of a non-learning network, so
    // it is averaged over repetitions, mirroring the reference protocol
    RunConfig vf_cfg = RunConfig::defaults_for(Experiment::FixedRatio);
    vf_cfg.method = Method::VF;
    vf_cfg.r_str = 1.0;
    vf_cfg.epochs = 10;
    vf_cfg.train_subset = 10000;
    vf_cfg.seed = 1;
    const auto vf_r1 = sweep_training(vf_cfg, 5, train, test);
    ss << ", VF acc r=1 (mean of 5 seeds): " << vf_r1.mean_accuracy << " +/- " << vf_r1.std_accuracy;
    if (vf_r1.mean_accuracy > 0.15) return {false, ss.str() + " — VF above chance at full asymmetry"};
    Scalar vf_r1_loss = 0.0;
    for (const Scalar l : vf_r1.cumulative_losses) vf_r1_loss += l;
    vf_r1_loss /= static_cast<Scalar>(vf_r1.cumulative_losses.size());

    // cumulative loss needs only the first five epochs
    const Scalar ratios[] = {0.0, 0.5, 0.875, 1.0};
    ss << "; cum loss (AEP vs VF):";
    for (const Scalar r : ratios) {
        Scalar aep_loss, vf_loss;
        if (r == 0.0) aep_loss = cumulative_loss(aep_r0.records);
        else if (r == 0.875) aep_loss = cumulative_loss(aep_r875.records);
        else aep_loss = cumulative_loss(run_at(Method::AEP, r, 5).records);
        if (r == 1.0) vf_loss = vf_r1_loss;
        else vf_loss = cumulative_loss(run_at(Method::VF, r, 5).records);
        ss << " r=" << r << ": " << aep_loss << "/" << vf_loss;
        if (aep_loss > vf_loss) return {false, ss.str() + " — AEP slower than VF at r=" + std::to_string(r)};
    }
    return {true, ss.str()};
}

CheckResult criterion9_symmetry_conservation() {
    // 1000 batch updates of the conservative contrastive rule on a synthetic
    // task, from an exactly symmetric initialization
    RunConfig cfg = RunConfig::defaults_for(Experiment::SymmetricInit);
    cfg.method = Method::EP;
    cfg.hidden_size = 8;
    cfg.n_out = 4;
    cfg.batch_size = 8;
    cfg.epochs = 125;  // 64 samples / batch 8 -> 8 batches per epoch, 1000 total
    cfg.seed = 5;

    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    mnist::Dataset data;
    data.split = "train";
    data.images.resize(64, 16);
    for (Index i = 0; i < 64; ++i)
        for (Index j = 0; j < 16; ++j) data.images(i, j) = static_cast<float>(u(rng));
    data.labels.resize(64);
    for (Index i = 0; i < 64; ++i) data.labels(i) = static_cast<int>(rng() % 4);
    mnist::Dataset test = data;
    test.split = "test";

    const auto result = run_training(cfg, data, test);
    long batches = 0;
    for (const auto& r : result.records)
        if (r.batch >= 0) ++batches;
    const Scalar r_final = r_str_metric(std::get<HopfieldModel>(result.model).params.j_dyn);
    std::ostringstream ss;
    ss << batches << " batch updates, final structural asymmetry " << r_final;
    if (batches < 1000) return {false, ss.str() + " — fewer than 1000 updates"};
    if (r_final > 1e-10) return {false, ss.str() + " — symmetry lost"};
    return {true, ss.str()};
}

CheckResult criterion10_dyadic_manifold() {
    const auto inst = make_instance(42, false);
    if (!inst) return {false, "instance construction failed"};
    const HopfieldSystem sys(inst->params, inst->input);
    std::mt19937_64 rng(43);
    Vector z = random_vector(rng, sys.state_dim());
    Vector zp = z;
    Scalar worst = 0.0;
    for (int step = 0; step < 1000; ++step) {
        const auto [fz, fzp] = dyadic_saddle_rhs(sys, z, zp, 0.0, inst->cost);
        z += 0.5 * fz;
        zp += 0.5 * fzp;
        worst = std::max(worst, (z - zp).lpNorm<Eigen::Infinity>());
        if (worst > 1e-10) return {false, "difference grew to " + std::to_string(worst)};
    }
    std::ostringstream ss;
    ss << "1000 steps, max |d| " << worst;
    return {true, ss.str()};
}

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<CheckResult()> run;
};

}  // namespace

int main(int argc, char** argv) {
    std::vector<Criterion> criteria = {
        {1, "gradient exactness (corrected estimator vs implicit oracle)", 30, criterion1_gradient_exactness},
        {2, "doubled-state update matches the corrected update", 30, criterion2_dyadic_equals_aep},
        {3, "uncorrected update: exact on symmetric, negated on antisymmetric", 10, criterion3_vf_boundary},
        {4, "bias law: truncated series predicts the uncorrected update's error", 30, criterion4_bias_law},
        {5, "unrolled-map gradient equals the implicit gradient", 10, criterion5_bptt_equivalence},
        {6, "feedforward: uncorrected nudging cannot reach hidden layers", 5, criterion6_feedforward_structure},
        {7, "MNIST feedforward training separates the estimators", 600, criterion7_mnist_feedforward},
        {8, "MNIST fixed-asymmetry robustness and learning speed", 1800, criterion8_fixed_ratio},
        {9, "symmetric initialization is conserved by the contrastive rule", 60, criterion9_symmetry_conservation},
        {10, "free doubled-state flow stays on the diagonal manifold", 5, criterion10_dyadic_manifold},
    };

    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

    int failures = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        CheckResult result;
        try {
            result = c.run();
        } catch (const std::exception& e) {
            result = {false, std::string("exception: ") + e.what()};
        }
        const double secs =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0)
                .count() /
            1000.0;
        const bool in_budget = secs <= c.budget_seconds;
        const bool pass = result.passed && in_budget;
        std::cout << (pass ? "[PASS] " : "[FAIL] ") << c.id << ". " << c.name << " — " << result.detail;
        std::cout << " (" << secs << " s, budget " << c.budget_seconds << " s)";
        if (!in_budget) std::cout << " — over budget";
        std::cout << std::endl;
        if (!pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
