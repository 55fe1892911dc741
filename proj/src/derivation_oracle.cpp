#include "moddrop/derivation_oracle.hpp"

#include "moddrop/error.hpp"

#include <algorithm>
#include <cmath>

namespace moddrop::oracle {

namespace {

void check_inputs(const DerivationOracleConfig& cfg, const ToyWeights& w, const ToyBatch& batch) {
    cfg.validate();
    const std::size_t K = cfg.modality_count();
    require(w.size() == K && batch.inputs.size() == K, "oracle: modality count mismatch");
    for (std::size_t k = 0; k < K; ++k) {
        require(w[k].size() == cfg.inputs_per_modality[k], "oracle: weight length mismatch");
        require(batch.inputs[k].rows() == batch.size() &&
                    batch.inputs[k].cols() == cfg.inputs_per_modality[k],
                "oracle: input shape mismatch for modality " + std::to_string(k));
    }
}

void check_keep(std::span<const double> keep, std::size_t K) {
    require(keep.size() == K, "oracle: need one keep probability per modality");
    for (double p : keep) require(p >= 0.0 && p <= 1.0, "oracle: keep probability outside [0,1]");
}

// s_m for sample b: the contribution of modality m to the pre-activation.
double partial_sum(const ToyWeights& w, const ToyBatch& batch, std::size_t m, std::size_t b) {
    double s = 0.0;
    const auto x = batch.inputs[m].row(b);
    for (std::size_t i = 0; i < x.size(); ++i) s += w[m][i] * x[i];
    return s;
}

ToyWeights zeros(const DerivationOracleConfig& cfg) {
    ToyWeights z;
    for (auto f : cfg.inputs_per_modality) z.emplace_back(f, 0.0);
    return z;
}

}  // namespace

void DerivationOracleConfig::validate() const {
    require(lambda > 0.0, "oracle: lambda must be positive");
    require(!inputs_per_modality.empty(), "oracle: at least one modality required");
    require(inputs_per_modality.size() <= kMaxModalities,
            "oracle: " + std::to_string(inputs_per_modality.size()) +
                " modalities is too many to enumerate (max " + std::to_string(kMaxModalities) + ")");
    for (auto f : inputs_per_modality)
        require(f >= 1 && f <= kMaxInputsPerModality,
                "oracle: inputs per modality must be in [1, " +
                    std::to_string(kMaxInputsPerModality) + "]");
}

double sigmoid(double s, double lambda) { return 1.0 / (1.0 + std::exp(-lambda * s)); }

double toy_loss(const DerivationOracleConfig& cfg, const ToyWeights& w, const ToyBatch& batch,
                std::span<const std::uint8_t> delta) {
    check_inputs(cfg, w, batch);
    const std::size_t K = cfg.modality_count();
    double loss = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        double s = 0.0;
        for (std::size_t m = 0; m < K; ++m)
            if (delta.empty() || delta[m]) s += partial_sum(w, batch, m, b);
        const double o = sigmoid(s, cfg.lambda), y = batch.targets[b];
        loss -= y * std::log(std::max(o, 1e-300)) + (1.0 - y) * std::log(std::max(1.0 - o, 1e-300));
    }
    return loss / static_cast<double>(batch.size());
}

ToyWeights toy_gradient(const DerivationOracleConfig& cfg, const ToyWeights& w,
                        const ToyBatch& batch, std::span<const std::uint8_t> delta) {
    check_inputs(cfg, w, batch);
    const std::size_t K = cfg.modality_count();
    require(delta.empty() || delta.size() == K, "oracle: selector length mismatch");
    ToyWeights g = zeros(cfg);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        double s = 0.0;
        for (std::size_t m = 0; m < K; ++m)
            if (delta.empty() || delta[m]) s += partial_sum(w, batch, m, b);
        // dE/dw = -lambda (y - o) ds/dw
        const double r = -cfg.lambda * (batch.targets[b] - sigmoid(s, cfg.lambda)) * inv_b;
        for (std::size_t k = 0; k < K; ++k) {
            if (!delta.empty() && !delta[k]) continue;
            const auto x = batch.inputs[k].row(b);
            for (std::size_t i = 0; i < x.size(); ++i) g[k][i] += r * x[i];
        }
    }
    return g;
}

ToyWeights expected_moddrop_gradient(const DerivationOracleConfig& cfg, const ToyWeights& w,
                                     const ToyBatch& batch, std::span<const double> keep) {
    check_inputs(cfg, w, batch);
    const std::size_t K = cfg.modality_count();
    check_keep(keep, K);
    ToyWeights total = zeros(cfg);
    std::vector<std::uint8_t> delta(K);
    for (std::size_t pattern = 0; pattern < (std::size_t{1} << K); ++pattern) {
        double prob = 1.0;
        for (std::size_t k = 0; k < K; ++k) {
            delta[k] = (pattern >> k) & 1U;
            prob *= delta[k] ? keep[k] : 1.0 - keep[k];
        }
        if (prob == 0.0) continue;
        const auto g = toy_gradient(cfg, w, batch, delta);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t i = 0; i < g[k].size(); ++i) total[k][i] += prob * g[k][i];
    }
    return total;
}

ToyWeights cross_term(const DerivationOracleConfig& cfg, const ToyWeights& w,
                      const ToyBatch& batch, std::span<const double> keep) {
    check_inputs(cfg, w, batch);
    const std::size_t K = cfg.modality_count();
    check_keep(keep, K);
    ToyWeights c = zeros(cfg);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    std::vector<double> parts(K);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        double s = 0.0;
        for (std::size_t m = 0; m < K; ++m) s += parts[m] = partial_sum(w, batch, m, b);
        const double o = sigmoid(s, cfg.lambda);
        const double slope = cfg.lambda * o * (1.0 - o);  // d sigma / ds
        for (std::size_t k = 0; k < K; ++k) {
            double others = 0.0;
            for (std::size_t m = 0; m < K; ++m)
                if (m != k) others += (1.0 - keep[m]) * parts[m];
            const double coef = -cfg.lambda * slope * keep[k] * others * inv_b;
            const auto x = batch.inputs[k].row(b);
            for (std::size_t i = 0; i < x.size(); ++i) c[k][i] += coef * x[i];
        }
    }
    return c;
}

ToyWeights first_order_expected_gradient(const DerivationOracleConfig& cfg, const ToyWeights& w,
                                         const ToyBatch& batch, std::span<const double> keep) {
    auto g = toy_gradient(cfg, w, batch);
    const auto c = cross_term(cfg, w, batch, keep);
    for (std::size_t k = 0; k < g.size(); ++k)
        for (std::size_t i = 0; i < g[k].size(); ++i) g[k][i] = keep[k] * g[k][i] + c[k][i];
    return g;
}

ExpectationReport moddrop_gradient_expectation_check(const DerivationOracleConfig& cfg,
                                                     const ToyWeights& w, const ToyBatch& batch,
                                                     std::span<const double> keep) {
    const auto exact = expected_moddrop_gradient(cfg, w, batch, keep);
    const auto approx = first_order_expected_gradient(cfg, w, batch, keep);
    ExpectationReport r;
    r.exact_norm = norm(exact);
    r.full_norm = norm(toy_gradient(cfg, w, batch));
    r.cross_norm = norm(cross_term(cfg, w, batch, keep));
    const double diff = norm(difference(exact, approx));
    r.approximation_error = r.exact_norm > 0.0 ? diff / r.exact_norm : diff;
    r.cross_ratio = r.exact_norm > 0.0 ? r.cross_norm / r.exact_norm : r.cross_norm;
    return r;
}

ToyWeights descend_expected_gradient(const DerivationOracleConfig& cfg, ToyWeights w,
                                     const ToyBatch& batch, std::span<const double> keep,
                                     double learning_rate, std::size_t steps) {
    for (std::size_t t = 0; t < steps; ++t) {
        const auto g = expected_moddrop_gradient(cfg, w, batch, keep);
        for (std::size_t k = 0; k < w.size(); ++k)
            for (std::size_t i = 0; i < w[k].size(); ++i) w[k][i] -= learning_rate * g[k][i];
    }
    return w;
}

double norm(const ToyWeights& w) {
    double s = 0.0;
    for (const auto& v : w)
        for (double x : v) s += x * x;
    return std::sqrt(s);
}

ToyWeights difference(const ToyWeights& a, const ToyWeights& b) {
    require(a.size() == b.size(), "difference: shape mismatch");
    ToyWeights d = a;
    for (std::size_t k = 0; k < a.size(); ++k) {
        require(a[k].size() == b[k].size(), "difference: shape mismatch");
        for (std::size_t i = 0; i < a[k].size(); ++i) d[k][i] -= b[k][i];
    }
    return d;
}

}  // namespace moddrop::oracle
