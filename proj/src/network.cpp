#include "moddrop/network.hpp"

#include "moddrop/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace moddrop {

std::size_t NetworkTopology::fused_width() const {
    std::size_t f = 0;
    for (const auto& p : paths) f += p.output_dim();
    return f;
}

std::size_t NetworkTopology::path_offset(std::size_t k) const {
    require(k < paths.size(), "path_offset: modality " + std::to_string(k) + " out of range");
    std::size_t off = 0;
    for (std::size_t m = 0; m < k; ++m) off += paths[m].output_dim();
    return off;
}

void NetworkTopology::validate() const {
    require(!paths.empty(), "topology: at least one modality path required");
    require(num_classes >= 2, "topology: at least two classes required");
    for (std::size_t k = 0; k < paths.size(); ++k) {
        require(paths[k].input_dim > 0,
                "topology: path " + std::to_string(k) + " has zero input dimension");
        for (auto h : paths[k].hidden)
            require(h > 0, "topology: path " + std::to_string(k) + " has an empty layer");
    }
}

namespace {

std::size_t block_of_row(const NetworkTopology& topo, std::size_t row) {
    std::size_t off = 0;
    for (std::size_t m = 0; m < topo.paths.size(); ++m) {
        off += topo.paths[m].output_dim();
        if (row < off) return m;
    }
    throw InvalidArgument("W1 row " + std::to_string(row) + " out of range");
}

void expect_shape(const Matrix& m, std::size_t r, std::size_t c, const std::string& what) {
    if (m.rows() != r || m.cols() != c)
        throw InvalidArgument(what + ": expected " + std::to_string(r) + "x" + std::to_string(c) +
                              ", got " + m.shape_string());
}

void expect_len(const std::vector<double>& v, std::size_t n, const std::string& what) {
    if (v.size() != n)
        throw InvalidArgument(what + ": expected length " + std::to_string(n) + ", got " +
                              std::to_string(v.size()));
}

void check_path(const PathTopology& topo, const PathParams& p, const std::string& what) {
    require(p.layers.size() == topo.hidden.size(),
            what + ": expected " + std::to_string(topo.hidden.size()) + " layers, got " +
                std::to_string(p.layers.size()));
    std::size_t in = topo.input_dim;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const auto tag = what + " layer " + std::to_string(l);
        expect_shape(p.layers[l].weights, in, topo.hidden[l], tag);
        expect_len(p.layers[l].bias, topo.hidden[l], tag + " bias");
        in = topo.hidden[l];
    }
}

// Scales rows of `m` by the modality presence flag.
void gate_rows(Matrix& m, const std::vector<std::vector<std::uint8_t>>& presence,
               std::size_t k) {
    if (presence.empty()) return;
    for (std::size_t b = 0; b < m.rows(); ++b)
        if (!presence[b][k]) std::fill(m.row(b).begin(), m.row(b).end(), 0.0);
}

PathTrace path_forward(const PathParams& path, const Matrix& input,
                       const std::vector<std::vector<std::uint8_t>>& presence, std::size_t k,
                       const ForwardOptions& opt) {
    PathTrace trace;
    Matrix x = input;
    gate_rows(x, presence, k);
    if (opt.mode == Mode::Eval && opt.input_scale != 1.0)
        for (double& v : x.data()) v *= opt.input_scale;
    trace.activations.push_back(std::move(x));
    for (std::size_t l = 0; l < path.layers.size(); ++l) {
        const auto& layer = path.layers[l];
        Matrix z = matmul(trace.activations.back(), layer.weights);
        add_row_vector(z, layer.bias);
        Matrix a = apply_tanh(z);
        Matrix mask;
        if (opt.hidden_keep < 1.0) {
            if (opt.mode == Mode::Train) {
                require(opt.rng != nullptr, "forward: hidden dropout needs an rng in train mode");
                mask = Matrix(a.rows(), a.cols());
                for (double& v : mask.data()) v = opt.rng->bernoulli(opt.hidden_keep) ? 1.0 : 0.0;
                for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] *= mask.data()[i];
            } else {
                for (double& v : a.data()) v *= opt.hidden_keep;
            }
        }
        trace.hidden_masks.push_back(std::move(mask));
        trace.activations.push_back(std::move(a));
    }
    gate_rows(trace.activations.back(), presence, k);
    return trace;
}

}  // namespace

bool is_off_diagonal(const NetworkTopology& topo, std::size_t row, std::size_t col) {
    return block_of_row(topo, row) != col / topo.num_classes;
}

Matrix gated_w1(const NetworkTopology& topo, const SharedParams& shared) {
    Matrix w1 = shared.w1;
    if (shared.gamma == 1) return w1;
    for (std::size_t r = 0; r < w1.rows(); ++r) {
        const std::size_t m = block_of_row(topo, r);
        for (std::size_t c = 0; c < w1.cols(); ++c)
            if (c / topo.num_classes != m) w1(r, c) *= shared.gamma;
    }
    return w1;
}

void check_params(const NetworkTopology& topo, const NetworkParams& params) {
    topo.validate();
    require(params.paths.size() == topo.modality_count(),
            "params: expected " + std::to_string(topo.modality_count()) + " paths, got " +
                std::to_string(params.paths.size()));
    for (std::size_t k = 0; k < params.paths.size(); ++k)
        check_path(topo.paths[k], params.paths[k], "path " + std::to_string(k));
    const auto& s = params.shared;
    expect_shape(s.w1, topo.fused_width(), topo.shared_width(), "W1");
    expect_len(s.b1, topo.shared_width(), "b1");
    expect_shape(s.w2, topo.shared_width(), topo.num_classes, "W2");
    expect_len(s.b2, topo.num_classes, "b2");
    require(s.gamma == 0 || s.gamma == 1, "gamma must be 0 or 1");
}

DenseLayer init_dense(std::size_t in, std::size_t out, SeededRng& rng) {
    DenseLayer layer{Matrix(in, out), std::vector<double>(out, 0.0)};
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& w : layer.weights.data()) w = rng.uniform(-limit, limit);
    return layer;
}

PathParams init_path(const PathTopology& topo, SeededRng& rng) {
    PathParams p;
    std::size_t in = topo.input_dim;
    for (auto h : topo.hidden) {
        p.layers.push_back(init_dense(in, h, rng));
        in = h;
    }
    return p;
}

NetworkParams init_network(const NetworkTopology& topo, SeededRng& rng) {
    topo.validate();
    NetworkParams params;
    for (const auto& p : topo.paths) params.paths.push_back(init_path(p, rng));
    auto l1 = init_dense(topo.fused_width(), topo.shared_width(), rng);
    auto l2 = init_dense(topo.shared_width(), topo.num_classes, rng);
    params.shared = {std::move(l1.weights), std::move(l1.bias), std::move(l2.weights),
                     std::move(l2.bias), 1};
    return params;
}

ModalityClassifier init_modality_classifier(const PathTopology& topo, std::size_t num_classes,
                                            SeededRng& rng) {
    ModalityClassifier clf;
    clf.path = init_path(topo, rng);
    clf.head = init_dense(topo.output_dim(), num_classes, rng);
    return clf;
}

NetworkParams init_shared_from_pretrained(const NetworkTopology& topo,
                                          const std::vector<ModalityClassifier>& pretrained) {
    topo.validate();
    const std::size_t K = topo.modality_count(), N = topo.num_classes;
    require(pretrained.size() == K, "init_shared_from_pretrained: expected " + std::to_string(K) +
                                        " pretrained paths, got " +
                                        std::to_string(pretrained.size()));
    NetworkParams params;
    SharedParams& s = params.shared;
    s.w1 = Matrix(topo.fused_width(), topo.shared_width());
    s.b1.assign(topo.shared_width(), 0.0);
    s.w2 = Matrix(topo.shared_width(), N);
    s.b2.assign(N, 0.0);
    s.gamma = 0;
    for (std::size_t k = 0; k < K; ++k) {
        const auto tag = "pretrained path " + std::to_string(k);
        check_path(topo.paths[k], pretrained[k].path, tag);
        const auto& head = pretrained[k].head;
        const std::size_t fk = topo.paths[k].output_dim();
        expect_shape(head.weights, fk, N, tag + " head");
        expect_len(head.bias, N, tag + " head bias");
        params.paths.push_back(pretrained[k].path);
        const std::size_t r0 = topo.path_offset(k);
        for (std::size_t i = 0; i < fk; ++i)
            for (std::size_t j = 0; j < N; ++j) s.w1(r0 + i, k * N + j) = head.weights(i, j);
        for (std::size_t j = 0; j < N; ++j) {
            s.b1[k * N + j] = head.bias[j];
            s.w2(k * N + j, j) = 1.0 / static_cast<double>(K);
        }
    }
    return params;
}

void set_gamma(NetworkParams& params, int value) {
    require(value == 0 || value == 1, "set_gamma: gamma must be 0 or 1, got " +
                                          std::to_string(value));
    params.shared.gamma = value;
}

ForwardTrace forward(const NetworkTopology& topo, const NetworkParams& params,
                     const std::vector<Matrix>& inputs, const ForwardOptions& options) {
    check_params(topo, params);
    const std::size_t K = topo.modality_count();
    require(inputs.size() == K, "forward: expected " + std::to_string(K) +
                                    " modality inputs, got " + std::to_string(inputs.size()));
    const std::size_t B = inputs[0].rows();
    for (std::size_t k = 0; k < K; ++k)
        expect_shape(inputs[k], B, topo.paths[k].input_dim, "modality " + std::to_string(k));
    if (!options.presence.empty()) {
        require(options.presence.size() == B, "forward: presence mask needs one row per sample");
        for (const auto& row : options.presence)
            require(row.size() == K, "forward: presence row length must equal modality count");
    }

    ForwardTrace trace;
    trace.presence = options.presence;
    trace.gamma = params.shared.gamma;
    trace.fused = Matrix(B, topo.fused_width());
    for (std::size_t k = 0; k < K; ++k) {
        trace.paths.push_back(path_forward(params.paths[k], inputs[k], options.presence, k, options));
        const Matrix& out = trace.paths.back().activations.back();
        const std::size_t off = topo.path_offset(k);
        for (std::size_t b = 0; b < B; ++b)
            std::copy(out.row(b).begin(), out.row(b).end(), trace.fused.row(b).begin() + off);
    }

    const SharedParams& s = params.shared;
    Matrix pre = s.gamma == 1 ? matmul(trace.fused, s.w1) : matmul(trace.fused, gated_w1(topo, s));
    add_row_vector(pre, s.b1);
    trace.shared = topo.shared_activation == SharedActivation::Tanh ? apply_tanh(pre) : pre;
    Matrix logits = matmul(trace.shared, s.w2);
    add_row_vector(logits, s.b2);
    trace.posterior = apply_softmax_rows(logits);
    return trace;
}

std::vector<double> forward(const NetworkTopology& topo, const NetworkParams& params,
                            const ModalitySample& sample, const ForwardOptions& options) {
    const std::size_t K = topo.modality_count();
    require(sample.features.size() == K, "forward: sample has " +
                                             std::to_string(sample.features.size()) +
                                             " modalities, topology has " + std::to_string(K));
    std::vector<Matrix> inputs;
    for (std::size_t k = 0; k < K; ++k)
        inputs.emplace_back(1, sample.features[k].size(), sample.features[k]);
    ForwardOptions opt = options;
    if (!sample.present.empty()) {
        require(sample.present.size() == K, "forward: presence mask length must equal K");
        opt.presence = {sample.present};
    }
    auto trace = forward(topo, params, inputs, opt);
    return {trace.posterior.data().begin(), trace.posterior.data().end()};
}

ClassifierTrace classifier_forward(const ModalityClassifier& clf, const Matrix& inputs,
                                   const ForwardOptions& options) {
    ClassifierTrace trace;
    trace.path = path_forward(clf.path, inputs, {}, 0, options);
    Matrix logits = matmul(trace.path.activations.back(), clf.head.weights);
    add_row_vector(logits, clf.head.bias);
    trace.posterior = apply_softmax_rows(logits);
    return trace;
}

std::vector<double> forward_single_modality(std::size_t k, const ModalitySample& sample,
                                            const std::vector<ModalityClassifier>& pretrained,
                                            const NetworkTopology& topo) {
    require(k < topo.modality_count() && k < pretrained.size() && k < sample.features.size(),
            "forward_single_modality: modality " + std::to_string(k) + " does not exist");
    check_path(topo.paths[k], pretrained[k].path, "path " + std::to_string(k));
    const auto& x = sample.features[k];
    require(x.size() == topo.paths[k].input_dim, "forward_single_modality: input length mismatch");
    auto trace = classifier_forward(pretrained[k], Matrix(1, x.size(), x));
    return {trace.posterior.data().begin(), trace.posterior.data().end()};
}

std::vector<double> geometric_mean_fusion(const std::vector<std::vector<double>>& posteriors) {
    require(!posteriors.empty(), "geometric_mean_fusion: no posteriors");
    const std::size_t N = posteriors[0].size();
    const double inv_k = 1.0 / static_cast<double>(posteriors.size());
    std::vector<double> log_score(N, 0.0);
    for (const auto& p : posteriors) {
        require(p.size() == N, "geometric_mean_fusion: posterior lengths differ");
        for (std::size_t j = 0; j < N; ++j)
            log_score[j] += inv_k * std::log(std::max(p[j], 1e-300));
    }
    return softmax(log_score);
}

std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace moddrop
