#pragma once

#include "moddrop/network.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace moddrop {

struct TrainingConfig {
    double learning_rate = 0.1;
    double lr_decay = 0.95;          // multiplied in once per epoch
    std::size_t batch_size = 64;
    std::size_t max_epochs = 100;
    std::size_t patience = 15;       // epochs without validation improvement
    double l2 = 1e-4;                // alpha in alpha * sum ||W||^2
    double input_keep = 1.0;         // per-unit input dropout keep probability
    std::vector<double> modality_keep;  // ModDrop keep probability per modality
    double hidden_keep = 1.0;        // hidden-unit dropout; 1 disables it
    std::uint64_t seed = 1;

    void validate(std::size_t modality_count) const;
    double modality_keep_for(std::size_t k) const {
        return modality_keep.empty() ? 1.0 : modality_keep.at(k);
    }
};

enum class StageKind { Pretrain, FuseFrozen, FuseRelaxed };
std::string to_string(StageKind kind);

struct Stage {
    StageKind kind = StageKind::FuseRelaxed;
    std::size_t max_epochs = 0;      // 0 falls back to TrainingConfig::max_epochs
    bool moddrop = false;
};

/// Stages run in kind order: Pretrain, FuseFrozen (gamma 0), FuseRelaxed (gamma 1).
struct StagePlan {
    std::vector<Stage> stages;

    void validate() const;
    bool has_pretraining() const;
};

/// Samples as rows; one matrix per modality.
struct Dataset {
    std::vector<Matrix> modalities;
    std::vector<std::size_t> labels;

    std::size_t size() const { return labels.size(); }
    std::size_t modality_count() const { return modalities.size(); }
    Dataset subset(std::span<const std::size_t> indices) const;
    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    std::string stage;
    double train_loss = 0.0;
    double valid_loss = 0.0;
    std::size_t valid_errors = 0;
};

/// Called once per epoch. `write_tsv_record` formats the usual log line.
using EpochLogger = std::function<void(const EpochRecord&)>;
void write_tsv_record(std::ostream& os, const EpochRecord& r);

struct Evaluation {
    double loss = 0.0;  // mean cross-entropy
    std::size_t errors = 0;
    std::size_t count = 0;
    double error_rate() const { return count ? static_cast<double>(errors) / count : 0.0; }
};

// ---------------------------------------------------------------------------
// Losses and gradients

double cross_entropy_loss(std::span<const double> posterior, std::size_t label);
/// Mean cross-entropy over rows.
double mean_cross_entropy(const Matrix& posterior, std::span<const std::size_t> labels);

/// alpha * sum of squared weights (biases excluded). Off-diagonal W1 entries
/// are counted only when gamma = 1.
double l2_penalty(const NetworkTopology& topo, const NetworkParams& params, double alpha);
double l2_penalty(const ModalityClassifier& clf, double alpha);

/// Gradient of mean cross-entropy + l2_penalty for a batch traced by
/// `forward`. Off-diagonal W1 gradients are scaled by gamma; path bias
/// gradients are zero unless the topology enables path biases.
NetworkParams backward(const NetworkTopology& topo, const NetworkParams& params,
                       const ForwardTrace& trace, std::span<const std::size_t> labels,
                       double alpha);

ModalityClassifier classifier_backward(const ModalityClassifier& clf, const ClassifierTrace& trace,
                                       std::span<const std::size_t> labels, double alpha,
                                       bool path_biases);

/// w <- w - lr * g over every parameter (gamma is left alone).
void sgd_step(NetworkParams& params, const NetworkParams& grads, double learning_rate);
void sgd_step(ModalityClassifier& clf, const ModalityClassifier& grads, double learning_rate);

NetworkParams zeros_like(const NetworkParams& params);

// ---------------------------------------------------------------------------
// Regularization

/// Zeroes each entry independently with probability 1 - keep.
Matrix apply_input_dropout(const Matrix& inputs, double keep, SeededRng& rng);
ModalitySample apply_input_dropout(const ModalitySample& sample, double keep, SeededRng& rng);

/// Drops whole modalities per sample: delta^(k) ~ Bernoulli(keep[k]); dropped
/// blocks are zeroed. Returns presence[b][k].
std::vector<std::vector<std::uint8_t>> apply_moddrop(std::vector<Matrix>& inputs,
                                                      std::span<const double> keep,
                                                      SeededRng& rng);
ModalitySample apply_moddrop(const ModalitySample& sample, std::span<const double> keep,
                             SeededRng& rng);

// ---------------------------------------------------------------------------
// Evaluation and training loops

Evaluation evaluate(const NetworkTopology& topo, const NetworkParams& params,
                    const Dataset& data, const TrainingConfig& config,
                    const std::vector<std::vector<std::uint8_t>>& presence = {});
Evaluation evaluate_classifier(const ModalityClassifier& clf, const Matrix& inputs,
                               std::span<const std::size_t> labels, const TrainingConfig& config);

/// Trains path k with its own head on modality k alone. Returns the
/// parameters with the best validation loss seen (including the initial ones).
ModalityClassifier pretrain_modality(std::size_t k, const NetworkTopology& topo,
                                     const Dataset& train, const Dataset& valid,
                                     const TrainingConfig& config,
                                     const EpochLogger& log = {});

/// Generic single-path classifier training (also used by pretraining).
ModalityClassifier train_classifier(ModalityClassifier clf, const Matrix& train_x,
                                    std::span<const std::size_t> train_y, const Matrix& valid_x,
                                    std::span<const std::size_t> valid_y,
                                    const TrainingConfig& config, bool path_biases,
                                    const std::string& stage_name, std::uint64_t stream_tag,
                                    const EpochLogger& log = {});

/// Runs the fusion stages of `plan` (Pretrain stages are skipped here).
/// Each stage sets gamma, trains with early stopping and keeps the best
/// validation parameters.
NetworkParams fuse_train(const NetworkTopology& topo, NetworkParams params, const Dataset& train,
                         const Dataset& valid, const TrainingConfig& config,
                         const StagePlan& plan, const EpochLogger& log = {});

struct PipelineResult {
    std::vector<ModalityClassifier> pretrained;  // empty without pretraining
    NetworkParams params;
};

/// Pretraining (when planned) + structured shared-layer init + fusion stages.
/// Without a Pretrain stage the whole network starts from random weights.
/// `structured_init = false` keeps pretrained paths but random shared layers.
PipelineResult train_pipeline(const NetworkTopology& topo, const Dataset& train,
                              const Dataset& valid, const TrainingConfig& config,
                              const StagePlan& plan, bool structured_init = true,
                              const EpochLogger& log = {});

}  // namespace moddrop
