#pragma once

#include "moddrop/numerics.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace moddrop {

enum class SharedActivation { Tanh, Linear };

/// One modality-specific fully connected path: input -> hidden... (tanh).
/// The last hidden size is the path output width F_k.
struct PathTopology {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden;

    std::size_t output_dim() const { return hidden.empty() ? input_dim : hidden.back(); }
};

/// K paths feeding a shared hidden layer of K*N units and an N-way softmax.
struct NetworkTopology {
    std::vector<PathTopology> paths;
    std::size_t num_classes = 0;
    SharedActivation shared_activation = SharedActivation::Tanh;
    // Without path biases an all-zero modality input yields an all-zero
    // path output, so a dropped modality is exactly a removed path.
    bool path_biases = false;

    std::size_t modality_count() const { return paths.size(); }
    std::size_t fused_width() const;                    // F = sum F_k
    std::size_t shared_width() const { return modality_count() * num_classes; }
    std::size_t path_offset(std::size_t k) const;       // first W1 row of path k
    void validate() const;
};

/// Weights are stored inputs x outputs, i.e. y = x W + b for row vectors x.
struct DenseLayer {
    Matrix weights;
    std::vector<double> bias;

    bool operator==(const DenseLayer&) const = default;
};

struct PathParams {
    std::vector<DenseLayer> layers;

    bool operator==(const PathParams&) const = default;
};

/// Shared fusion layers. W1 is F x (N*K), viewed as K x K blocks of F_k x N;
/// block (m, k) connects path m to the shared units of modality k. W2 is
/// (N*K) x N, K stacked N x N blocks. gamma scales the off-diagonal W1 blocks
/// in both the forward pass and the gradient.
struct SharedParams {
    Matrix w1;
    std::vector<double> b1;
    Matrix w2;
    std::vector<double> b2;
    int gamma = 1;

    bool operator==(const SharedParams&) const = default;
};

struct NetworkParams {
    std::vector<PathParams> paths;
    SharedParams shared;

    bool operator==(const NetworkParams&) const = default;
};

/// A path with its own N-way softmax head, as trained during pretraining.
/// The head is linear-to-softmax.
struct ModalityClassifier {
    PathParams path;
    DenseLayer head;

    bool operator==(const ModalityClassifier&) const = default;
};

/// One multi-modal example. A modality whose presence flag is 0 is treated as
/// an all-zero vector and its path contribution is removed.
struct ModalitySample {
    std::vector<std::vector<double>> features;
    std::vector<std::uint8_t> present;
    std::optional<std::size_t> label;
};

enum class Mode { Train, Eval };

struct ForwardOptions {
    Mode mode = Mode::Eval;
    // Eval only: inputs are multiplied by this (expectation of input dropout).
    double input_scale = 1.0;
    // presence[b][k]; empty means every modality present.
    std::vector<std::vector<std::uint8_t>> presence;
    // Dropout on path hidden units. Train mode draws masks from `rng`; eval
    // mode scales activations by the keep probability.
    double hidden_keep = 1.0;
    SeededRng* rng = nullptr;
};

struct PathTrace {
    std::vector<Matrix> activations;   // [0] = (masked) input, [l+1] = layer l output
    std::vector<Matrix> hidden_masks;  // per layer, empty when unused
};

/// Everything backprop needs from a batched forward pass.
struct ForwardTrace {
    std::vector<PathTrace> paths;
    std::vector<std::vector<std::uint8_t>> presence;  // [b][k]
    int gamma = 1;
    Matrix fused;      // concatenated path outputs, B x F
    Matrix shared;     // shared hidden activations, B x KN
    Matrix posterior;  // B x N
};

// ---------------------------------------------------------------------------
// Construction

PathParams init_path(const PathTopology& topo, SeededRng& rng);
DenseLayer init_dense(std::size_t in, std::size_t out, SeededRng& rng);
/// Random initialization of everything, gamma = 1 (no pretraining, no
/// structured fusion init).
NetworkParams init_network(const NetworkTopology& topo, SeededRng& rng);
ModalityClassifier init_modality_classifier(const PathTopology& topo, std::size_t num_classes,
                                            SeededRng& rng);

/// Transplants pretrained heads into the shared layers: diagonal W1 blocks get
/// head weights, b1 gets head biases, off-diagonal blocks are zeroed, gamma = 0,
/// W2 blocks become (1/K) I and b2 = 0. Path weights are copied as well.
NetworkParams init_shared_from_pretrained(const NetworkTopology& topo,
                                          const std::vector<ModalityClassifier>& pretrained);

/// Gamma must be 0 or 1. Stored weights are untouched.
void set_gamma(NetworkParams& params, int value);

/// W1 with off-diagonal blocks multiplied by gamma.
Matrix gated_w1(const NetworkTopology& topo, const SharedParams& shared);

/// True for W1 entries inside an off-diagonal block.
bool is_off_diagonal(const NetworkTopology& topo, std::size_t row, std::size_t col);

void check_params(const NetworkTopology& topo, const NetworkParams& params);

// ---------------------------------------------------------------------------
// Evaluation

/// Batched forward pass. `inputs[k]` is B x input_dim(k).
ForwardTrace forward(const NetworkTopology& topo, const NetworkParams& params,
                     const std::vector<Matrix>& inputs, const ForwardOptions& options = {});

/// Single-sample convenience wrapper around the batched pass.
std::vector<double> forward(const NetworkTopology& topo, const NetworkParams& params,
                            const ModalitySample& sample, const ForwardOptions& options = {});

struct ClassifierTrace {
    PathTrace path;
    Matrix posterior;
};

/// Path + head softmax, B x N.
ClassifierTrace classifier_forward(const ModalityClassifier& clf, const Matrix& inputs,
                                   const ForwardOptions& options = {});

/// Runs path k of a pretrained set through its own head.
std::vector<double> forward_single_modality(std::size_t k, const ModalitySample& sample,
                                            const std::vector<ModalityClassifier>& pretrained,
                                            const NetworkTopology& topo);

/// Normalized geometric mean: out_j proportional to prod_k p_j^(k)^(1/K).
std::vector<double> geometric_mean_fusion(const std::vector<std::vector<double>>& posteriors);

std::size_t argmax(std::span<const double> v);

}  // namespace moddrop
