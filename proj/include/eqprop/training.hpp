#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "eqprop/fixed_ratio.hpp"
#include "eqprop/hopfield.hpp"
#include "eqprop/learners.hpp"
#include "eqprop/mnist.hpp"

namespace eqprop {

inline constexpr const char* kVersion = "1.0.0";

enum class Experiment { SymmetricInit, FixedRatio, Feedforward, Custom };
enum class TrainScope { All, InputOnly };

const char* experiment_name(Experiment e);
Experiment experiment_from_name(const std::string& name);
Method method_from_name(const std::string& name);

struct LearningRates {
    Scalar input_hidden = 0.05;
    Scalar hidden_output = 0.01;
};

/// One training run. Defaults follow the reference protocol for the chosen
/// experiment (see defaults_for).
struct RunConfig {
    Experiment experiment = Experiment::SymmetricInit;
    Method method = Method::AEP;
    Index hidden_size = 50;
    Scalar r_str = 0.0;  // fixed-ratio experiments only
    Scalar beta = 0.5;
    Scalar dt = 0.5;
    long n_free = 20;
    long n_nudge = 10;
    Index epochs = 40;
    Index batch_size = 64;
    LearningRates lr;
    std::uint64_t seed = 1;
    TrainScope train_scope = TrainScope::All;
    std::string data_dir;
    std::string out_dir;  // empty: keep everything in memory, write nothing
    Index train_subset = 0;  // 0 = full training set
    Index n_out = 10;

    static RunConfig defaults_for(Experiment e);
    void validate() const;

    std::string to_json() const;
    static RunConfig from_json(const std::string& text);
};

/// One CSV row. Batch rows carry the batch-mean free-equilibrium cost;
/// per-epoch eval rows (batch = -1) carry test accuracy and the mean
/// Jacobian asymmetry over the first test batch. Absent fields are NaN and
/// serialize as empty cells.
struct MetricsRecord {
    Index epoch = 0;
    long batch = -1;
    Scalar cost = std::numeric_limits<Scalar>::quiet_NaN();
    Scalar accuracy = std::numeric_limits<Scalar>::quiet_NaN();
    Scalar r_str = std::numeric_limits<Scalar>::quiet_NaN();
    Scalar r_jac = std::numeric_limits<Scalar>::quiet_NaN();
    long wall_ms = 0;
};

inline constexpr const char* kMetricsHeader = "epoch,batch,cost,accuracy,r_str,r_jac,wall_ms";

/// Trainable model states. The feedforward experiment trains the equivalent
/// block-masked recurrent parameterization.
struct HopfieldModel {
    HopfieldParams params;
    Index n_hidden = 0;
    Index n_out = 0;
};

struct FixedRatioModel {
    FixedRatioParams params;
    Index n_hidden = 0;
    Index n_out = 0;
};

using ModelVariant = std::variant<HopfieldModel, FixedRatioModel>;

/// Model initialization for a run (parameters ~ Normal(0, 1/N) with N the
/// total neuron count; fixed-ratio runs use the normalized construction with
/// gamma = sqrt(N_dyn)).
ModelVariant init_model(const RunConfig& cfg, Index n_in);

/// > 1% of a batch diverged; the run stops with a diagnostic summary.
struct TrainingAborted : std::runtime_error {
    TrainingAborted(const std::string& what, Index epoch, long batch, long diverged, long batch_count)
        : std::runtime_error(what), epoch(epoch), batch(batch), diverged(diverged), batch_count(batch_count) {}
    Index epoch;
    long batch;
    long diverged;
    long batch_count;
};

struct TrainResult {
    std::vector<MetricsRecord> records;
    ModelVariant model;
    Scalar final_accuracy = 0.0;
    Scalar cumulative_loss = 0.0;  // batch-mean costs summed over the first 5 epochs
    long diverged_samples = 0;
    std::string csv_path;
    std::string manifest_path;
    std::string checkpoint_path;
};

TrainResult run_training(const RunConfig& cfg);  // loads IDX files from cfg.data_dir
TrainResult run_training(const RunConfig& cfg, const mnist::Dataset& train, const mnist::Dataset& test);

/// Loads one split from a directory holding the canonical IDX files
/// (train-images-idx3-ubyte etc.), accepting .gz variants.
mnist::Dataset load_split(const std::string& data_dir, bool train_split);

/// Accuracy of the argmax readout at the free equilibrium over a dataset.
/// Pure function of the model and the data (evaluation initial states are
/// keyed by sample index only).
Scalar evaluate_model(const ModelVariant& model, const mnist::Dataset& test, Scalar dt, long n_free);

/// Sum of batch-mean costs over the first `epochs` epochs of a record stream.
Scalar cumulative_loss(const std::vector<MetricsRecord>& records, Index epochs = 5);

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records);

void save_checkpoint(const std::string& path, const ModelVariant& model, const RunConfig& cfg);
ModelVariant load_checkpoint(const std::string& path, RunConfig* cfg_out = nullptr);

struct SweepSummary {
    std::vector<Scalar> accuracies;
    std::vector<Scalar> cumulative_losses;
    Scalar mean_accuracy = 0.0;
    Scalar std_accuracy = 0.0;
};

/// Repetition driver: R runs with seeds seed, seed+1, ..., reporting
/// mean +/- std of the final accuracy.
SweepSummary sweep_training(RunConfig cfg, int repetitions, const mnist::Dataset& train,
                            const mnist::Dataset& test);

}  // namespace eqprop
