#include "moddrop/training.hpp"

#include "moddrop/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace moddrop {

namespace {

// Purpose tags for independent random streams.
enum : std::uint64_t { kShuffle = 1, kInputDropout = 2, kModDrop = 3, kHiddenDropout = 4 };

constexpr std::size_t kEvalBatch = 500;

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
    Matrix out(idx.size(), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto src = m.row(idx[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

void add_scaled(Matrix& g, const Matrix& w, double scale) {
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += scale * w.data()[i];
}

double sum_squares(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) s += v * v;
    return s;
}

Matrix output_delta(const Matrix& posterior, std::span<const std::size_t> labels) {
    const std::size_t B = posterior.rows();
    require(labels.size() == B, "backward: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(B) + " traced samples");
    Matrix d = posterior;
    const double inv_b = 1.0 / static_cast<double>(B);
    for (std::size_t b = 0; b < B; ++b) {
        require(labels[b] < posterior.cols(), "backward: label out of range");
        d(b, labels[b]) -= 1.0;
        for (double& v : d.row(b)) v *= inv_b;
    }
    return d;
}

PathParams path_backward(const PathParams& path, const PathTrace& trace, Matrix d_out,
                         bool biases, double alpha) {
    const std::size_t L = path.layers.size();
    require(trace.activations.size() == L + 1, "backward: trace does not match path depth");
    PathParams grads;
    grads.layers.resize(L);
    Matrix da = std::move(d_out);
    for (std::size_t l = L; l-- > 0;) {
        const Matrix& a = trace.activations[l + 1];
        require(a.rows() == da.rows() && a.cols() == da.cols(),
                "backward: trace/params mismatch at path layer " + std::to_string(l));
        Matrix dz = std::move(da);
        const Matrix& mask = trace.hidden_masks[l];
        for (std::size_t i = 0; i < dz.size(); ++i) {
            const double av = a.data()[i];
            dz.data()[i] *= 1.0 - av * av;
            if (!mask.empty()) dz.data()[i] *= mask.data()[i];
        }
        const auto& layer = path.layers[l];
        auto& g = grads.layers[l];
        g.weights = matmul_at_b(trace.activations[l], dz);
        if (alpha != 0.0) add_scaled(g.weights, layer.weights, 2.0 * alpha);
        g.bias = biases ? column_sums(dz) : std::vector<double>(layer.bias.size(), 0.0);
        if (l > 0) da = matmul_a_bt(dz, layer.weights);
    }
    return grads;
}

void step_layer(DenseLayer& p, const DenseLayer& g, double lr) {
    require(p.weights.size() == g.weights.size() && p.bias.size() == g.bias.size(),
            "sgd_step: parameter/gradient shape mismatch");
    for (std::size_t i = 0; i < p.weights.size(); ++i) p.weights.data()[i] -= lr * g.weights.data()[i];
    for (std::size_t i = 0; i < p.bias.size(); ++i) p.bias[i] -= lr * g.bias[i];
}

std::vector<std::size_t> iota_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

bool improved(const Evaluation& e, const Evaluation& best) { return e.loss < best.loss; }

}  // namespace

void TrainingConfig::validate(std::size_t modality_count) const {
    require(learning_rate >= 0.0, "config: learning rate must be non-negative");
    require(lr_decay > 0.0, "config: learning rate decay must be positive");
    require(batch_size >= 1, "config: batch size must be at least 1");
    require(patience >= 1, "config: patience must be at least 1");
    require(l2 >= 0.0, "config: L2 weight must be non-negative");
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    require(prob(input_keep), "config: input keep probability outside [0,1]");
    require(prob(hidden_keep), "config: hidden keep probability outside [0,1]");
    require(modality_keep.empty() || modality_keep.size() == modality_count,
            "config: need one ModDrop keep probability per modality");
    for (double p : modality_keep) require(prob(p), "config: ModDrop probability outside [0,1]");
}

std::string to_string(StageKind kind) {
    switch (kind) {
        case StageKind::Pretrain: return "pretrain";
        case StageKind::FuseFrozen: return "fuse_frozen";
        case StageKind::FuseRelaxed: return "fuse_relaxed";
    }
    return "unknown";
}

void StagePlan::validate() const {
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (i > 0 && static_cast<int>(stages[i].kind) < static_cast<int>(stages[i - 1].kind))
            throw InvalidArgument("stage plan: " + to_string(stages[i].kind) + " may not follow " +
                                  to_string(stages[i - 1].kind));
        require(!(stages[i].kind == StageKind::Pretrain && stages[i].moddrop),
                "stage plan: ModDrop cannot be enabled during pretraining");
    }
}

bool StagePlan::has_pretraining() const {
    return std::any_of(stages.begin(), stages.end(),
                       [](const Stage& s) { return s.kind == StageKind::Pretrain; });
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    for (const auto& m : modalities) out.modalities.push_back(gather_rows(m, indices));
    for (auto i : indices) out.labels.push_back(labels.at(i));
    return out;
}

void Dataset::validate() const {
    require(!modalities.empty(), "dataset: no modalities");
    for (const auto& m : modalities)
        require(m.rows() == labels.size(), "dataset: modality rows do not match label count");
}

void write_tsv_record(std::ostream& os, const EpochRecord& r) {
    os << r.epoch << '\t' << r.stage << '\t' << r.train_loss << '\t' << r.valid_loss << '\t'
       << r.valid_errors << '\n';
}

double cross_entropy_loss(std::span<const double> posterior, std::size_t label) {
    require(label < posterior.size(), "cross_entropy_loss: label " + std::to_string(label) +
                                          " out of range for " +
                                          std::to_string(posterior.size()) + " classes");
    return -std::log(std::max(posterior[label], 1e-300));
}

double mean_cross_entropy(const Matrix& posterior, std::span<const std::size_t> labels) {
    require(labels.size() == posterior.rows(), "mean_cross_entropy: label count mismatch");
    double s = 0.0;
    for (std::size_t b = 0; b < labels.size(); ++b) s += cross_entropy_loss(posterior.row(b), labels[b]);
    return labels.empty() ? 0.0 : s / static_cast<double>(labels.size());
}

double l2_penalty(const NetworkTopology& topo, const NetworkParams& params, double alpha) {
    double s = 0.0;
    for (const auto& p : params.paths)
        for (const auto& l : p.layers) s += sum_squares(l.weights);
    s += sum_squares(gated_w1(topo, params.shared));
    s += sum_squares(params.shared.w2);
    return alpha * s;
}

double l2_penalty(const ModalityClassifier& clf, double alpha) {
    double s = sum_squares(clf.head.weights);
    for (const auto& l : clf.path.layers) s += sum_squares(l.weights);
    return alpha * s;
}

NetworkParams backward(const NetworkTopology& topo, const NetworkParams& params,
                       const ForwardTrace& trace, std::span<const std::size_t> labels,
                       double alpha) {
    check_params(topo, params);
    const std::size_t K = topo.modality_count();
    require(trace.paths.size() == K, "backward: trace has wrong number of paths");
    require(trace.gamma == params.shared.gamma, "backward: gamma changed since forward");
    require(trace.shared.cols() == topo.shared_width() && trace.fused.cols() == topo.fused_width(),
            "backward: trace/params mismatch");
    const SharedParams& s = params.shared;
    NetworkParams g;
    g.shared.gamma = s.gamma;

    Matrix dz2 = output_delta(trace.posterior, labels);
    g.shared.w2 = matmul_at_b(trace.shared, dz2);
    if (alpha != 0.0) add_scaled(g.shared.w2, s.w2, 2.0 * alpha);
    g.shared.b2 = column_sums(dz2);

    Matrix dz1 = matmul_a_bt(dz2, s.w2);
    if (topo.shared_activation == SharedActivation::Tanh)
        for (std::size_t i = 0; i < dz1.size(); ++i) {
            const double h = trace.shared.data()[i];
            dz1.data()[i] *= 1.0 - h * h;
        }
    const Matrix w1 = gated_w1(topo, s);
    g.shared.w1 = matmul_at_b(trace.fused, dz1);
    if (alpha != 0.0) add_scaled(g.shared.w1, w1, 2.0 * alpha);
    if (s.gamma != 1) {
        SharedParams mask = s;
        mask.w1.fill(1.0);
        const Matrix gate = gated_w1(topo, mask);
        for (std::size_t i = 0; i < gate.size(); ++i) g.shared.w1.data()[i] *= gate.data()[i];
    }
    g.shared.b1 = column_sums(dz1);

    const Matrix d_fused = matmul_a_bt(dz1, w1);
    const std::size_t B = d_fused.rows();
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t off = topo.path_offset(k), fk = topo.paths[k].output_dim();
        Matrix d_out(B, fk);
        for (std::size_t b = 0; b < B; ++b) {
            if (!trace.presence.empty() && !trace.presence[b][k]) continue;
            auto src = d_fused.row(b).subspan(off, fk);
            std::copy(src.begin(), src.end(), d_out.row(b).begin());
        }
        g.paths.push_back(path_backward(params.paths[k], trace.paths[k], std::move(d_out),
                                        topo.path_biases, alpha));
    }
    return g;
}

ModalityClassifier classifier_backward(const ModalityClassifier& clf, const ClassifierTrace& trace,
                                       std::span<const std::size_t> labels, double alpha,
                                       bool path_biases) {
    ModalityClassifier g;
    Matrix dz = output_delta(trace.posterior, labels);
    const Matrix& feat = trace.path.activations.back();
    g.head.weights = matmul_at_b(feat, dz);
    if (alpha != 0.0) add_scaled(g.head.weights, clf.head.weights, 2.0 * alpha);
    g.head.bias = column_sums(dz);
    Matrix d_out = matmul_a_bt(dz, clf.head.weights);
    g.path = path_backward(clf.path, trace.path, std::move(d_out), path_biases, alpha);
    return g;
}

void sgd_step(NetworkParams& params, const NetworkParams& grads, double learning_rate) {
    require(params.paths.size() == grads.paths.size(), "sgd_step: path count mismatch");
    for (std::size_t k = 0; k < params.paths.size(); ++k) {
        require(params.paths[k].layers.size() == grads.paths[k].layers.size(),
                "sgd_step: layer count mismatch");
        for (std::size_t l = 0; l < params.paths[k].layers.size(); ++l)
            step_layer(params.paths[k].layers[l], grads.paths[k].layers[l], learning_rate);
    }
    DenseLayer l1{params.shared.w1, params.shared.b1};
    DenseLayer l2{params.shared.w2, params.shared.b2};
    step_layer(l1, {grads.shared.w1, grads.shared.b1}, learning_rate);
    step_layer(l2, {grads.shared.w2, grads.shared.b2}, learning_rate);
    params.shared.w1 = std::move(l1.weights);
    params.shared.b1 = std::move(l1.bias);
    params.shared.w2 = std::move(l2.weights);
    params.shared.b2 = std::move(l2.bias);
}

void sgd_step(ModalityClassifier& clf, const ModalityClassifier& grads, double learning_rate) {
    require(clf.path.layers.size() == grads.path.layers.size(), "sgd_step: layer count mismatch");
    for (std::size_t l = 0; l < clf.path.layers.size(); ++l)
        step_layer(clf.path.layers[l], grads.path.layers[l], learning_rate);
    step_layer(clf.head, grads.head, learning_rate);
}

NetworkParams zeros_like(const NetworkParams& params) {
    NetworkParams z = params;
    for (auto& p : z.paths)
        for (auto& l : p.layers) {
            l.weights.fill(0.0);
            std::fill(l.bias.begin(), l.bias.end(), 0.0);
        }
    z.shared.w1.fill(0.0);
    z.shared.w2.fill(0.0);
    std::fill(z.shared.b1.begin(), z.shared.b1.end(), 0.0);
    std::fill(z.shared.b2.begin(), z.shared.b2.end(), 0.0);
    return z;
}

Matrix apply_input_dropout(const Matrix& inputs, double keep, SeededRng& rng) {
    require(keep >= 0.0 && keep <= 1.0, "apply_input_dropout: keep probability outside [0,1]");
    Matrix out = inputs;
    if (keep == 1.0) return out;
    for (double& v : out.data())
        if (!rng.bernoulli(keep)) v = 0.0;
    return out;
}

ModalitySample apply_input_dropout(const ModalitySample& sample, double keep, SeededRng& rng) {
    require(keep >= 0.0 && keep <= 1.0, "apply_input_dropout: keep probability outside [0,1]");
    ModalitySample out = sample;
    if (keep == 1.0) return out;
    for (auto& f : out.features)
        for (double& v : f)
            if (!rng.bernoulli(keep)) v = 0.0;
    return out;
}

std::vector<std::vector<std::uint8_t>> apply_moddrop(std::vector<Matrix>& inputs,
                                                      std::span<const double> keep,
                                                      SeededRng& rng) {
    const std::size_t K = inputs.size();
    require(keep.size() == K, "apply_moddrop: need one keep probability per modality");
    for (double p : keep) require(p >= 0.0 && p <= 1.0, "apply_moddrop: probability outside [0,1]");
    const std::size_t B = K ? inputs[0].rows() : 0;
    std::vector<std::vector<std::uint8_t>> presence(B, std::vector<std::uint8_t>(K, 1));
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < K; ++k) {
            presence[b][k] = rng.bernoulli(keep[k]) ? 1 : 0;
            if (!presence[b][k]) std::fill(inputs[k].row(b).begin(), inputs[k].row(b).end(), 0.0);
        }
    return presence;
}

ModalitySample apply_moddrop(const ModalitySample& sample, std::span<const double> keep,
                             SeededRng& rng) {
    std::vector<Matrix> inputs;
    for (const auto& f : sample.features) inputs.emplace_back(1, f.size(), f);
    auto presence = apply_moddrop(inputs, keep, rng);
    ModalitySample out = sample;
    out.present = presence[0];
    if (!sample.present.empty())
        for (std::size_t k = 0; k < out.present.size(); ++k) out.present[k] &= sample.present[k];
    for (std::size_t k = 0; k < inputs.size(); ++k) out.features[k] = inputs[k].data();
    return out;
}

Evaluation evaluate(const NetworkTopology& topo, const NetworkParams& params, const Dataset& data,
                    const TrainingConfig& config,
                    const std::vector<std::vector<std::uint8_t>>& presence) {
    data.validate();
    require(presence.empty() || presence.size() == data.size(),
            "evaluate: presence mask needs one row per sample");
    Evaluation ev;
    ev.count = data.size();
    double loss = 0.0;
    for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
        const std::size_t n = std::min(kEvalBatch, data.size() - start);
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), start);
        std::vector<Matrix> inputs;
        for (const auto& m : data.modalities) inputs.push_back(gather_rows(m, idx));
        ForwardOptions opt;
        opt.mode = Mode::Eval;
        opt.input_scale = config.input_keep;
        opt.hidden_keep = config.hidden_keep;
        if (!presence.empty())
            opt.presence.assign(presence.begin() + static_cast<long>(start),
                                presence.begin() + static_cast<long>(start + n));
        const auto trace = forward(topo, params, inputs, opt);
        for (std::size_t b = 0; b < n; ++b) {
            const std::size_t y = data.labels[start + b];
            loss += cross_entropy_loss(trace.posterior.row(b), y);
            if (argmax(trace.posterior.row(b)) != y) ++ev.errors;
        }
    }
    ev.loss = ev.count ? loss / static_cast<double>(ev.count) : 0.0;
    return ev;
}

Evaluation evaluate_classifier(const ModalityClassifier& clf, const Matrix& inputs,
                               std::span<const std::size_t> labels, const TrainingConfig& config) {
    require(inputs.rows() == labels.size(), "evaluate_classifier: label count mismatch");
    Evaluation ev;
    ev.count = labels.size();
    double loss = 0.0;
    for (std::size_t start = 0; start < labels.size(); start += kEvalBatch) {
        const std::size_t n = std::min(kEvalBatch, labels.size() - start);
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), start);
        ForwardOptions opt;
        opt.input_scale = config.input_keep;
        opt.hidden_keep = config.hidden_keep;
        const auto trace = classifier_forward(clf, gather_rows(inputs, idx), opt);
        for (std::size_t b = 0; b < n; ++b) {
            loss += cross_entropy_loss(trace.posterior.row(b), labels[start + b]);
            if (argmax(trace.posterior.row(b)) != labels[start + b]) ++ev.errors;
        }
    }
    ev.loss = ev.count ? loss / static_cast<double>(ev.count) : 0.0;
    return ev;
}

ModalityClassifier train_classifier(ModalityClassifier clf, const Matrix& train_x,
                                    std::span<const std::size_t> train_y, const Matrix& valid_x,
                                    std::span<const std::size_t> valid_y,
                                    const TrainingConfig& config, bool path_biases,
                                    const std::string& stage_name, std::uint64_t stream_tag,
                                    const EpochLogger& log) {
    // ModDrop has no meaning for a single path.
    TrainingConfig single = config;
    single.modality_keep.clear();
    single.validate(1);
    require(!train_y.empty(), "train_classifier: empty training set");
    require(train_x.rows() == train_y.size(), "train_classifier: label count mismatch");
    ModalityClassifier best = clf;
    Evaluation best_eval = evaluate_classifier(clf, valid_x, valid_y, config);
    std::size_t stale = 0;
    double lr = config.learning_rate;
    auto order = iota_indices(train_y.size());
    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        const std::uint64_t tag = (stream_tag << 32) | epoch;
        auto shuffle_rng = SeededRng::stream(config.seed, tag, 0, kShuffle);
        shuffle_rng.shuffle(order);
        double train_loss = 0.0;
        for (std::size_t start = 0, batch = 0; start < order.size();
             start += config.batch_size, ++batch) {
            const std::size_t n = std::min(config.batch_size, order.size() - start);
            std::span<const std::size_t> idx(order.data() + start, n);
            std::vector<std::size_t> y(n);
            for (std::size_t i = 0; i < n; ++i) y[i] = train_y[idx[i]];
            Matrix x = gather_rows(train_x, idx);
            if (config.input_keep < 1.0) {
                auto rng = SeededRng::stream(config.seed, tag, batch, kInputDropout);
                x = apply_input_dropout(x, config.input_keep, rng);
            }
            auto hidden_rng = SeededRng::stream(config.seed, tag, batch, kHiddenDropout);
            ForwardOptions opt;
            opt.mode = Mode::Train;
            opt.hidden_keep = config.hidden_keep;
            opt.rng = &hidden_rng;
            const auto trace = classifier_forward(clf, x, opt);
            train_loss += mean_cross_entropy(trace.posterior, y) * static_cast<double>(n);
            sgd_step(clf, classifier_backward(clf, trace, y, config.l2, path_biases), lr);
        }
        const auto ev = evaluate_classifier(clf, valid_x, valid_y, config);
        if (log)
            log({epoch + 1, stage_name, train_loss / static_cast<double>(order.size()), ev.loss,
                 ev.errors});
        if (improved(ev, best_eval)) {
            best = clf;
            best_eval = ev;
            stale = 0;
        } else if (++stale >= config.patience) {
            break;
        }
        lr *= config.lr_decay;
    }
    return best;
}

ModalityClassifier pretrain_modality(std::size_t k, const NetworkTopology& topo,
                                     const Dataset& train, const Dataset& valid,
                                     const TrainingConfig& config, const EpochLogger& log) {
    topo.validate();
    require(k < topo.modality_count(), "pretrain_modality: modality " + std::to_string(k) +
                                           " does not exist");
    require(train.size() > 0, "pretrain_modality: empty dataset");
    require(k < train.modality_count() && k < valid.modality_count(),
            "pretrain_modality: dataset lacks modality " + std::to_string(k));
    auto rng = SeededRng::stream(config.seed, 0xC1A55 + k);
    auto clf = init_modality_classifier(topo.paths[k], topo.num_classes, rng);
    return train_classifier(std::move(clf), train.modalities[k], train.labels,
                            valid.modalities[k], valid.labels, config, topo.path_biases,
                            "pretrain[" + std::to_string(k) + "]", 100 + k, log);
}

NetworkParams fuse_train(const NetworkTopology& topo, NetworkParams params, const Dataset& train,
                         const Dataset& valid, const TrainingConfig& config,
                         const StagePlan& plan, const EpochLogger& log) {
    plan.validate();
    check_params(topo, params);
    train.validate();
    valid.validate();
    const std::size_t K = topo.modality_count();
    config.validate(K);
    require(train.size() > 0, "fuse_train: empty training set");
    require(train.modality_count() == K, "fuse_train: dataset modality count mismatch");
    std::vector<double> keep(K);
    for (std::size_t k = 0; k < K; ++k) keep[k] = config.modality_keep_for(k);

    auto order = iota_indices(train.size());
    for (std::size_t si = 0; si < plan.stages.size(); ++si) {
        const Stage& stage = plan.stages[si];
        if (stage.kind == StageKind::Pretrain) continue;
        set_gamma(params, stage.kind == StageKind::FuseFrozen ? 0 : 1);
        const std::size_t epochs = stage.max_epochs ? stage.max_epochs : config.max_epochs;
        const std::string name = to_string(stage.kind) + (stage.moddrop ? "+moddrop" : "");
        NetworkParams best = params;
        Evaluation best_eval = evaluate(topo, params, valid, config);
        std::size_t stale = 0;
        double lr = config.learning_rate;
        for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
            const std::uint64_t tag = (static_cast<std::uint64_t>(si + 1) << 32) | epoch;
            auto shuffle_rng = SeededRng::stream(config.seed, tag, 0, kShuffle);
            shuffle_rng.shuffle(order);
            double train_loss = 0.0;
            for (std::size_t start = 0, batch = 0; start < order.size();
                 start += config.batch_size, ++batch) {
                const std::size_t n = std::min(config.batch_size, order.size() - start);
                std::span<const std::size_t> idx(order.data() + start, n);
                std::vector<std::size_t> y(n);
                for (std::size_t i = 0; i < n; ++i) y[i] = train.labels[idx[i]];
                std::vector<Matrix> inputs;
                for (std::size_t k = 0; k < K; ++k) {
                    inputs.push_back(gather_rows(train.modalities[k], idx));
                    if (config.input_keep < 1.0) {
                        auto rng = SeededRng::stream(config.seed, tag, batch, kInputDropout + 16 * k);
                        inputs[k] = apply_input_dropout(inputs[k], config.input_keep, rng);
                    }
                }
                ForwardOptions opt;
                opt.mode = Mode::Train;
                if (stage.moddrop) {
                    auto rng = SeededRng::stream(config.seed, tag, batch, kModDrop);
                    opt.presence = apply_moddrop(inputs, keep, rng);
                }
                auto hidden_rng = SeededRng::stream(config.seed, tag, batch, kHiddenDropout);
                opt.hidden_keep = config.hidden_keep;
                opt.rng = &hidden_rng;
                const auto trace = forward(topo, params, inputs, opt);
                train_loss += mean_cross_entropy(trace.posterior, y) * static_cast<double>(n);
                sgd_step(params, backward(topo, params, trace, y, config.l2), lr);
            }
            const auto ev = evaluate(topo, params, valid, config);
            if (log)
                log({epoch + 1, name, train_loss / static_cast<double>(order.size()), ev.loss,
                     ev.errors});
            if (improved(ev, best_eval)) {
                best = params;
                best_eval = ev;
                stale = 0;
            } else if (++stale >= config.patience) {
                break;
            }
            lr *= config.lr_decay;
        }
        params = std::move(best);
    }
    return params;
}

PipelineResult train_pipeline(const NetworkTopology& topo, const Dataset& train,
                              const Dataset& valid, const TrainingConfig& config,
                              const StagePlan& plan, bool structured_init,
                              const EpochLogger& log) {
    plan.validate();
    topo.validate();
    config.validate(topo.modality_count());
    PipelineResult result;
    auto rng = SeededRng::stream(config.seed, 0x1417);
    if (plan.has_pretraining()) {
        TrainingConfig pre = config;
        for (const auto& s : plan.stages)
            if (s.kind == StageKind::Pretrain && s.max_epochs) pre.max_epochs = s.max_epochs;
        for (std::size_t k = 0; k < topo.modality_count(); ++k)
            result.pretrained.push_back(pretrain_modality(k, topo, train, valid, pre, log));
        if (structured_init) {
            result.params = init_shared_from_pretrained(topo, result.pretrained);
        } else {
            result.params = init_network(topo, rng);
            for (std::size_t k = 0; k < topo.modality_count(); ++k)
                result.params.paths[k] = result.pretrained[k].path;
        }
    } else {
        result.params = init_network(topo, rng);
    }
    result.params = fuse_train(topo, std::move(result.params), train, valid, config, plan, log);
    return result;
}

}  // namespace moddrop
