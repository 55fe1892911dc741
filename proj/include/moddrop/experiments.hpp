#pragma once

#include "moddrop/config.hpp"
#include "moddrop/network.hpp"
#include "moddrop/skeleton.hpp"
#include "moddrop/temporal.hpp"
#include "moddrop/training.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace moddrop::experiments {

inline TrainingConfig sgd(double lr, double decay, std::size_t batch, std::size_t epochs,
                          std::size_t patience, double l2) {
    TrainingConfig c;
    c.learning_rate = lr;
    c.lr_decay = decay;
    c.batch_size = batch;
    c.max_epochs = epochs;
    c.patience = patience;
    c.l2 = l2;
    return c;
}

/// "196x4-125x4-40-10": per-path input x K, per-path hidden layers x K, the
/// shared width (must equal K*N) and the class count N.
NetworkTopology parse_architecture(const std::string& spec);
std::string format_architecture(const NetworkTopology& topo);

/// Which training components a run uses.
struct TrainingMode {
    bool pretraining = true;
    bool input_dropout = true;
    bool moddrop = false;
    bool structured_init = true;  // only meaningful with pretraining

    /// "plain", "dropout", "pretrain", "pretrain+dropout", "pretrain+dropout+moddrop",
    /// optionally suffixed with "+randinit" to disable the structured init.
    static TrainingMode parse(const std::string& name);
    std::string name() const;
};

struct MnistExperimentConfig {
    std::filesystem::path data_dir = "data/mnist";
    std::string architecture = "196x4-125x4-40-10";
    std::vector<TrainingMode> modes{TrainingMode::parse("pretrain+dropout"),
                                    TrainingMode::parse("pretrain+dropout+moddrop")};
    double input_keep = 0.8;
    double moddrop_keep = 0.9;
    TrainingConfig training = sgd(0.05, 0.98, 32, 0, 30, 0.0);
    std::size_t pretrain_epochs = 50;
    std::size_t frozen_epochs = 10;
    std::size_t relaxed_epochs = 80;
    std::size_t validation_size = 10000;  // taken from the end of the training file
    std::size_t train_limit = 0;          // 0 = all remaining training images
    std::size_t test_limit = 0;           // 0 = full test set
    double pepper_rate = 0.5;
    std::vector<std::uint64_t> seeds{1};

    static MnistExperimentConfig from_config(const Config& cfg);
    void validate() const;
};

/// One row of the occlusion / noise grid. `corrupted` segments are either
/// covered (zeroed) or pepper-noised; the error is averaged over every choice
/// of that many segments.
struct GridRow {
    std::string group;      // "missing" or "pepper"
    std::string condition;  // e.g. "1 segment covered"
    std::size_t corrupted = 0;
    double error_percent = 0.0;
};

struct MnistRun {
    TrainingMode mode;
    std::uint64_t seed = 0;
    std::size_t test_errors = 0;
    std::size_t test_count = 0;
    std::vector<GridRow> grid;  // 9 rows
};

struct MnistReport {
    MnistExperimentConfig config;
    std::vector<MnistRun> runs;  // modes x seeds, mode-major
};

/// Progress lines (epochs, timings) go to `log` when given; they are not
/// part of the report.
MnistReport run_mnist_experiment(const MnistExperimentConfig& config, std::ostream* log = nullptr);

/// Evaluates the 9-row grid for a trained network.
std::vector<GridRow> evaluate_grid(const NetworkTopology& topo, const NetworkParams& params,
                                   const Dataset& test, const TrainingConfig& eval_config,
                                   double pepper_rate, std::uint64_t seed);

/// Tab-separated tables: test errors per mode and the robustness grid, as
/// means and sample standard deviations over seeds.
void write_mnist_report(std::ostream& os, const MnistReport& report);

// ---------------------------------------------------------------------------
// Synthetic gesture pipeline

struct GesturePipelineConfig {
    temporal::SyntheticConfig synthetic;
    std::size_t train_sequences = 6;
    std::size_t test_sequences = 4;
    std::vector<std::size_t> scales{2, 3, 4};
    std::vector<double> scale_weights{1.0, 1.0, 1.0};
    std::size_t gesture_hidden = 64;
    TrainingConfig gesture_training = sgd(0.02, 0.97, 32, 30, 10, 1e-4);
    temporal::MotionClassifierConfig motion{300, sgd(0.01, 0.95, 32, 15, 5, 1e-4)};
    std::size_t train_frame_stride = 2;  // subsampling of training frames
    std::size_t vicinity = 10;
    std::size_t min_interval = 5;
    skeleton::DescriptorOptions descriptor;
    std::uint64_t seed = 1;

    static GesturePipelineConfig from_config(const Config& cfg);
    void validate() const;
};

struct GesturePipelineReport {
    std::uint64_t seed = 0;
    std::size_t num_classes = 0;
    double motion_accuracy = 0.0;
    std::vector<temporal::ClassJaccard> without_localization;
    std::vector<temporal::ClassJaccard> with_localization;
    double mean_without = 0.0;
    double mean_with = 0.0;
    temporal::LabelingSet truth;
    temporal::LabelingSet predicted_without;
    temporal::LabelingSet predicted_with;
};

GesturePipelineReport run_gesture_pipeline(const GesturePipelineConfig& config);
void write_gesture_report(std::ostream& os, const GesturePipelineReport& report);

}  // namespace moddrop::experiments
