#pragma once

#include "moddrop/numerics.hpp"

#include <cstdint>
#include <span>
#include <vector>

// Exact analysis of ModDrop on a one-layer sigmoid network: a single output
// unit o = 1 / (1 + exp(-lambda * s)), s = sum_k delta_k * sum_i w_i^(k) x_i^(k),
// trained with binary cross-entropy. Because K is small, the expectation
// over Bernoulli selectors is computed exactly by enumerating all 2^K masks.
namespace moddrop::oracle {

inline constexpr std::size_t kMaxModalities = 3;
inline constexpr std::size_t kMaxInputsPerModality = 4;

struct DerivationOracleConfig {
    double lambda = 1.0;
    std::vector<std::size_t> inputs_per_modality;

    std::size_t modality_count() const { return inputs_per_modality.size(); }
    void validate() const;
};

/// w[k][i] = weight of input i of modality k.
using ToyWeights = std::vector<std::vector<double>>;

struct ToyBatch {
    std::vector<Matrix> inputs;  // per modality, B x F_k
    std::vector<double> targets; // y in [0, 1]

    std::size_t size() const { return targets.size(); }
};

double sigmoid(double s, double lambda);
double toy_loss(const DerivationOracleConfig& cfg, const ToyWeights& w, const ToyBatch& batch,
                std::span<const std::uint8_t> delta = {});

/// Batch mean of dE/dw for one fixed selector pattern (empty = all present).
ToyWeights toy_gradient(const DerivationOracleConfig& cfg, const ToyWeights& w,
                        const ToyBatch& batch, std::span<const std::uint8_t> delta = {});

/// E_delta[dE~/dw] by exhaustive enumeration of the 2^K selector patterns.
ToyWeights expected_moddrop_gradient(const DerivationOracleConfig& cfg, const ToyWeights& w,
                                     const ToyBatch& batch, std::span<const double> keep);

/// The cross-modality part of the first-order expansion:
/// -lambda * sigma'(s) * x_i^(k) * p_k * sum_{m != k} (1 - p_m) * s_m, batch mean.
ToyWeights cross_term(const DerivationOracleConfig& cfg, const ToyWeights& w,
                      const ToyBatch& batch, std::span<const double> keep);

/// p_k * dE_full/dw_i^(k) + cross_term.
ToyWeights first_order_expected_gradient(const DerivationOracleConfig& cfg, const ToyWeights& w,
                                         const ToyBatch& batch, std::span<const double> keep);

struct ExpectationReport {
    double exact_norm = 0.0;          // ||E[dE~/dw]||
    double full_norm = 0.0;           // ||dE_full/dw||
    double cross_norm = 0.0;          // ||cross_term||
    double approximation_error = 0.0; // ||exact - first order|| / ||exact||
    double cross_ratio = 0.0;         // cross_norm / exact_norm
};

ExpectationReport moddrop_gradient_expectation_check(const DerivationOracleConfig& cfg,
                                                     const ToyWeights& w, const ToyBatch& batch,
                                                     std::span<const double> keep);

/// Gradient descent on the exact expected ModDrop gradient.
ToyWeights descend_expected_gradient(const DerivationOracleConfig& cfg, ToyWeights w,
                                     const ToyBatch& batch, std::span<const double> keep,
                                     double learning_rate, std::size_t steps);

double norm(const ToyWeights& w);
ToyWeights difference(const ToyWeights& a, const ToyWeights& b);

}  // namespace moddrop::oracle
