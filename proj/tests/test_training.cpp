#include "moddrop/error.hpp"
#include "moddrop/training.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

using namespace moddrop;

namespace {

NetworkTopology toy_topology(SharedActivation act = SharedActivation::Tanh, bool biases = false) {
    NetworkTopology t;
    t.paths = {{4, {5}}, {3, {4, 3}}, {2, {3}}};
    t.num_classes = 3;
    t.shared_activation = act;
    t.path_biases = biases;
    return t;
}

std::vector<Matrix> random_inputs(const NetworkTopology& t, std::size_t B, SeededRng& rng) {
    std::vector<Matrix> in;
    for (const auto& p : t.paths) {
        Matrix m(B, p.input_dim);
        for (double& v : m.data()) v = rng.uniform(-1.0, 1.0);
        in.push_back(std::move(m));
    }
    return in;
}

// Every trainable parameter as (group name, pointer) pairs. Path biases are
// frozen at zero unless the topology enables them.
std::vector<std::pair<std::string, double*>> parameter_slots(NetworkParams& p, bool path_biases) {
    std::vector<std::pair<std::string, double*>> out;
    for (std::size_t k = 0; k < p.paths.size(); ++k)
        for (std::size_t l = 0; l < p.paths[k].layers.size(); ++l) {
            const auto name = "path" + std::to_string(k) + ".layer" + std::to_string(l);
            for (double& v : p.paths[k].layers[l].weights.data()) out.push_back({name + ".W", &v});
            if (path_biases)
                for (double& v : p.paths[k].layers[l].bias) out.push_back({name + ".b", &v});
        }
    for (double& v : p.shared.w1.data()) out.push_back({"W1", &v});
    for (double& v : p.shared.b1) out.push_back({"b1", &v});
    for (double& v : p.shared.w2.data()) out.push_back({"W2", &v});
    for (double& v : p.shared.b2) out.push_back({"b2", &v});
    return out;
}

struct GradCheckResult {
    double worst_relative = 0.0;
    std::string worst_group;
    std::size_t checked = 0;
};

// Central differences of (mean cross-entropy + L2) against backward().
GradCheckResult gradient_check(const NetworkTopology& t, NetworkParams p,
                               const std::vector<Matrix>& x, const std::vector<std::size_t>& y,
                               const ForwardOptions& opt, double alpha, std::uint64_t mask_seed) {
    auto objective = [&](const NetworkParams& q) {
        SeededRng rng(mask_seed);
        ForwardOptions o = opt;
        o.rng = &rng;
        const auto tr = forward(t, q, x, o);
        return mean_cross_entropy(tr.posterior, y) + l2_penalty(t, q, alpha);
    };
    SeededRng rng(mask_seed);
    ForwardOptions o = opt;
    o.rng = &rng;
    const auto trace = forward(t, p, x, o);
    auto g = backward(t, p, trace, y, alpha);
    auto slots = parameter_slots(p, t.path_biases);
    const auto gslots = parameter_slots(g, t.path_biases);
    REQUIRE(slots.size() == gslots.size());
    GradCheckResult r;
    const double eps = 1e-5;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        double* v = slots[i].second;
        const double saved = *v;
        *v = saved + eps;
        const double up = objective(p);
        *v = saved - eps;
        const double down = objective(p);
        *v = saved;
        const double numeric = (up - down) / (2 * eps);
        const double analytic = *gslots[i].second;
        const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
        const double rel = std::abs(numeric - analytic) / denom;
        ++r.checked;
        if (rel > r.worst_relative) {
            r.worst_relative = rel;
            r.worst_group = slots[i].first;
        }
    }
    return r;
}

}  // namespace

TEST_CASE("cross-entropy values") {
    CHECK(cross_entropy_loss(std::vector<double>{0, 1, 0}, 1) == 0.0);
    CHECK(std::abs(cross_entropy_loss(std::vector<double>(10, 0.1), 3) - 2.302585092994046) < 1e-12);
    CHECK(std::abs(cross_entropy_loss(std::vector<double>{0.25, 0.75}, 0) - 1.3862943611198906) < 1e-12);
    CHECK(std::isfinite(cross_entropy_loss(std::vector<double>{0.0, 1.0}, 0)));
    CHECK_THROWS_AS(cross_entropy_loss(std::vector<double>{0.5, 0.5}, 2), InvalidArgument);
}

TEST_CASE("finite-difference gradient check") {
    SeededRng rng(31);
    const std::vector<std::size_t> y{0, 2, 1, 1, 0};
    struct Case {
        std::string name;
        SharedActivation act;
        bool biases;
        int gamma;
        bool masked;
        double hidden_keep;
    };
    const Case cases[] = {
        {"tanh gamma=1", SharedActivation::Tanh, false, 1, false, 1.0},
        {"tanh gamma=0", SharedActivation::Tanh, false, 0, false, 1.0},
        {"delta-masked gamma=1", SharedActivation::Tanh, false, 1, true, 1.0},
        {"delta-masked gamma=0", SharedActivation::Tanh, false, 0, true, 1.0},
        {"linear with path biases", SharedActivation::Linear, true, 1, true, 1.0},
        {"hidden dropout", SharedActivation::Tanh, true, 1, false, 0.7},
    };
    for (const auto& c : cases) {
        CAPTURE(c.name);
        const auto t = toy_topology(c.act, c.biases);
        auto p = init_network(t, rng);
        for (auto& path : p.paths)
            for (auto& l : path.layers)
                for (double& b : l.bias) b = c.biases ? rng.uniform(-0.3, 0.3) : 0.0;
        for (double& b : p.shared.b1) b = rng.uniform(-0.3, 0.3);
        set_gamma(p, c.gamma);
        auto x = random_inputs(t, y.size(), rng);
        ForwardOptions opt;
        opt.mode = Mode::Train;
        opt.hidden_keep = c.hidden_keep;
        if (c.masked) {
            opt.presence = {{1, 0, 1}, {0, 1, 1}, {1, 1, 0}, {0, 0, 1}, {1, 1, 1}};
            for (std::size_t b = 0; b < y.size(); ++b)
                for (std::size_t k = 0; k < 3; ++k)
                    if (!opt.presence[b][k])
                        std::fill(x[k].row(b).begin(), x[k].row(b).end(), 0.0);
        }
        const auto r = gradient_check(t, p, x, y, opt, 1e-3, 77);
        CAPTURE(r.worst_group);
        CHECK(r.checked > 100);
        CHECK(r.worst_relative < 1e-4);
    }
}

TEST_CASE("gate zeroes off-diagonal gradients") {
    SeededRng rng(32);
    const auto t = toy_topology();
    auto p = init_network(t, rng);
    const auto x = random_inputs(t, 6, rng);
    const std::vector<std::size_t> y{0, 1, 2, 0, 1, 2};
    set_gamma(p, 0);
    auto g = backward(t, p, forward(t, p, x), y, 1e-3);
    bool any_nonzero_diag = false;
    for (std::size_t r = 0; r < g.shared.w1.rows(); ++r)
        for (std::size_t c = 0; c < g.shared.w1.cols(); ++c) {
            if (is_off_diagonal(t, r, c)) CHECK(g.shared.w1(r, c) == 0.0);
            else any_nonzero_diag |= g.shared.w1(r, c) != 0.0;
        }
    CHECK(any_nonzero_diag);
    set_gamma(p, 1);
    g = backward(t, p, forward(t, p, x), y, 1e-3);
    double off = 0.0;
    for (std::size_t r = 0; r < g.shared.w1.rows(); ++r)
        for (std::size_t c = 0; c < g.shared.w1.cols(); ++c)
            if (is_off_diagonal(t, r, c)) off += std::abs(g.shared.w1(r, c));
    CHECK(off > 1e-6);
}

TEST_CASE("dropped modality has zero path gradients and matches the reduced network") {
    SeededRng rng(33);
    const auto t = toy_topology();
    auto p = init_network(t, rng);
    auto x = random_inputs(t, 4, rng);
    const std::vector<std::size_t> y{2, 0, 1, 1};
    ForwardOptions opt;
    opt.presence.assign(4, {1, 0, 1});
    for (std::size_t b = 0; b < 4; ++b) std::fill(x[1].row(b).begin(), x[1].row(b).end(), 0.0);
    const auto g = backward(t, p, forward(t, p, x, opt), y, 0.0);
    for (const auto& l : g.paths[1].layers) {
        for (double v : l.weights.data()) CHECK(v == 0.0);
        for (double v : l.bias) CHECK(v == 0.0);
    }
    // Same gradients for the other groups as with zero inputs and no mask.
    const auto g2 = backward(t, p, forward(t, p, x), y, 0.0);
    CHECK(g.shared.w2 == g2.shared.w2);
    CHECK(g.paths[0] == g2.paths[0]);
    CHECK(g.paths[2] == g2.paths[2]);
}

TEST_CASE("zero input and zero weights give zero input-layer gradients") {
    SeededRng rng(34);
    const auto t = toy_topology();
    auto p = init_network(t, rng);
    p = zeros_like(p);
    std::vector<Matrix> x;
    for (const auto& path : t.paths) x.emplace_back(3, path.input_dim);
    const auto g = backward(t, p, forward(t, p, x), std::vector<std::size_t>{0, 1, 2}, 0.0);
    for (const auto& path : g.paths)
        for (double v : path.layers.front().weights.data()) CHECK(v == 0.0);
}

TEST_CASE("L2 gradient is 2 alpha W") {
    SeededRng rng(35);
    const auto t = toy_topology();
    auto p = init_network(t, rng);
    const auto x = random_inputs(t, 3, rng);
    const std::vector<std::size_t> y{0, 1, 2};
    const auto tr = forward(t, p, x);
    const auto g0 = backward(t, p, tr, y, 0.0);
    const double alpha = 0.01;
    const auto g1 = backward(t, p, tr, y, alpha);
    for (std::size_t i = 0; i < p.shared.w2.size(); ++i)
        CHECK(g1.shared.w2.data()[i] - g0.shared.w2.data()[i] ==
              doctest::Approx(2 * alpha * p.shared.w2.data()[i]).epsilon(1e-12));
    const auto& w = p.paths[0].layers[0].weights.data();
    for (std::size_t i = 0; i < w.size(); ++i)
        CHECK(g1.paths[0].layers[0].weights.data()[i] - g0.paths[0].layers[0].weights.data()[i] ==
              doctest::Approx(2 * alpha * w[i]).epsilon(1e-12));
}

TEST_CASE("sgd step") {
    ModalityClassifier c;
    c.head = {Matrix{{1.0}}, {0.0}};
    ModalityClassifier g;
    g.head = {Matrix{{2.0}}, {0.0}};
    sgd_step(c, g, 0.1);
    CHECK(c.head.weights(0, 0) == doctest::Approx(0.8).epsilon(1e-15));

    ModalityClassifier h;
    h.head = {Matrix{{1.0, 2.0}, {3.0, 4.0}}, {0.5, -0.5}};
    ModalityClassifier gh;
    gh.head = {Matrix{{0.5, -1.0}, {2.0, 0.0}}, {1.0, 1.0}};
    sgd_step(h, gh, 0.5);
    CHECK(h.head.weights == Matrix{{0.75, 2.5}, {2.0, 4.0}});
    CHECK(h.head.bias == std::vector<double>{0.0, -1.0});

    SeededRng rng(36);
    const auto t = toy_topology();
    auto p = init_network(t, rng);
    const auto before = p;
    sgd_step(p, zeros_like(p), 0.3);
    CHECK(p == before);
}

TEST_CASE("input dropout") {
    SeededRng rng(37);
    Matrix x(100, 1000, 1.0);
    CHECK(apply_input_dropout(x, 1.0, rng) == x);
    const auto z = apply_input_dropout(x, 0.0, rng);
    for (double v : z.data()) CHECK(v == 0.0);
    const auto d = apply_input_dropout(x, 0.8, rng);
    const double kept = std::accumulate(d.data().begin(), d.data().end(), 0.0) / 1e5;
    CHECK(kept >= 0.79);
    CHECK(kept <= 0.81);
}

TEST_CASE("eval-time scaling matches the dropout expectation of a linear probe") {
    // Probe: y = w . (mask * x). E[y] = p * w . x, which eval mode computes.
    SeededRng rng(38);
    const std::size_t d = 20;
    const double keep = 0.8;
    std::vector<double> w(d), x(d);
    for (auto& v : w) v = rng.uniform(-1, 1);
    for (auto& v : x) v = rng.uniform(-1, 1);
    double expected = 0.0;
    for (std::size_t i = 0; i < d; ++i) expected += keep * w[i] * x[i];

    Matrix xs(1, d, x);
    const int n = 10000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto m = apply_input_dropout(xs, keep, rng);
        double y = 0.0;
        for (std::size_t j = 0; j < d; ++j) y += w[j] * m(0, j);
        sum += y;
        sq += y * y;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sq / n - mean * mean);
    CHECK(std::abs(mean - expected) < 3 * sd / std::sqrt(static_cast<double>(n)));

    // The network's eval path scales inputs by the keep probability.
    NetworkTopology t;
    t.paths = {{d, {}}};
    t.num_classes = 2;
    t.shared_activation = SharedActivation::Linear;
    auto p = init_network(t, rng);
    ForwardOptions eval;
    eval.input_scale = keep;
    Matrix scaled = xs;
    for (double& v : scaled.data()) v *= keep;
    CHECK(forward(t, p, {xs}, eval).posterior == forward(t, p, {scaled}).posterior);
}

TEST_CASE("ModDrop masks") {
    SeededRng rng(39);
    const std::size_t B = 100000;
    std::vector<Matrix> in(4, Matrix(B, 1, 1.0));
    const std::vector<double> all{1, 1, 1, 1};
    auto copy = in;
    auto pres = apply_moddrop(copy, all, rng);
    for (const auto& r : pres)
        for (auto v : r) CHECK(v == 1);
    const std::vector<double> keep{0.9, 0.9, 0.9, 0.9};
    pres = apply_moddrop(in, keep, rng);
    for (std::size_t k = 0; k < 4; ++k) {
        std::size_t dropped = 0;
        for (std::size_t b = 0; b < B; ++b) {
            dropped += pres[b][k] == 0;
            CHECK((in[k](b, 0) == 0.0) == (pres[b][k] == 0));
        }
        const double frac = static_cast<double>(dropped) / B;
        CHECK(frac >= 0.09);
        CHECK(frac <= 0.11);
    }
}

TEST_CASE("config and plan validation") {
    TrainingConfig c;
    CHECK_NOTHROW(c.validate(3));
    c.input_keep = 1.2;
    CHECK_THROWS_AS(c.validate(3), InvalidArgument);
    c = {};
    c.modality_keep = {0.9, 0.9};
    CHECK_THROWS_AS(c.validate(3), InvalidArgument);
    c = {};
    c.patience = 0;
    CHECK_THROWS_AS(c.validate(1), InvalidArgument);

    StagePlan bad{{{StageKind::FuseRelaxed, 1, false}, {StageKind::FuseFrozen, 1, false}}};
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    StagePlan pre_md{{{StageKind::Pretrain, 1, true}}};
    CHECK_THROWS_AS(pre_md.validate(), InvalidArgument);
}

namespace {

// Two Gaussian blobs per modality, linearly separable.
Dataset separable(std::size_t n, SeededRng& rng) {
    Dataset d;
    d.modalities = {Matrix(n, 2), Matrix(n, 3)};
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = i % 2;
        const double c = y ? 1.0 : -1.0;
        for (auto& m : d.modalities)
            for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = c + 0.3 * rng.normal();
        d.labels.push_back(y);
    }
    return d;
}

NetworkTopology two_modalities() {
    NetworkTopology t;
    t.paths = {{2, {4}}, {3, {4}}};
    t.num_classes = 2;
    return t;
}

}  // namespace

TEST_CASE("pretraining separates a separable toy set") {
    SeededRng rng(40);
    const auto train = separable(200, rng), valid = separable(100, rng);
    const auto t = two_modalities();
    TrainingConfig c;
    c.learning_rate = 0.2;
    c.max_epochs = 40;
    c.batch_size = 10;
    const auto clf = pretrain_modality(0, t, train, valid, c);
    const auto ev = evaluate_classifier(clf, train.modalities[0], train.labels, c);
    CHECK(ev.errors == 0);
    CHECK_THROWS_AS(pretrain_modality(0, t, Dataset{{Matrix(0, 2), Matrix(0, 3)}, {}}, valid, c),
                    InvalidArgument);
}

TEST_CASE("learning rate zero leaves parameters unchanged") {
    SeededRng rng(41);
    const auto train = separable(50, rng), valid = separable(20, rng);
    const auto t = two_modalities();
    TrainingConfig c;
    c.learning_rate = 0.0;
    c.max_epochs = 3;
    auto init_rng = SeededRng::stream(c.seed, 0xC1A55);
    const auto init = init_modality_classifier(t.paths[0], 2, init_rng);
    CHECK(pretrain_modality(0, t, train, valid, c) == init);
}

TEST_CASE("fusion training: determinism, validation loss, baseline comparison") {
    SeededRng rng(42);
    const auto train = separable(300, rng), valid = separable(200, rng);
    const auto t = two_modalities();
    TrainingConfig c;
    c.learning_rate = 0.1;
    c.max_epochs = 5;
    c.batch_size = 16;
    c.modality_keep = {0.9, 0.9};
    const StagePlan plan{{{StageKind::Pretrain, 5, false},
                          {StageKind::FuseFrozen, 3, false},
                          {StageKind::FuseRelaxed, 3, true}}};
    const auto a = train_pipeline(t, train, valid, c, plan);
    const auto b = train_pipeline(t, train, valid, c, plan);
    CHECK(a.params == b.params);

    // Frozen fusion starting from the structured init never ends with a
    // worse validation loss than the geometric-mean fusion it starts from.
    const auto init = init_shared_from_pretrained(t, a.pretrained);
    const StagePlan frozen{{{StageKind::FuseFrozen, 4, false}}};
    TrainingConfig nc = c;
    nc.modality_keep.clear();
    const auto fused = fuse_train(t, init, train, valid, nc, frozen);
    const auto e0 = evaluate(t, init, valid, nc), e1 = evaluate(t, fused, valid, nc);
    CHECK(e1.loss <= e0.loss);
    CHECK(e1.errors <= e0.errors + 1);

    StagePlan out_of_order{{{StageKind::FuseRelaxed, 1, false}, {StageKind::FuseFrozen, 1, false}}};
    CHECK_THROWS_AS(fuse_train(t, init, train, valid, nc, out_of_order), InvalidArgument);
}

TEST_CASE("epoch log lines are tab separated") {
    std::ostringstream os;
    write_tsv_record(os, {3, "fuse_frozen", 0.5, 0.25, 12});
    CHECK(os.str() == "3\tfuse_frozen\t0.5\t0.25\t12\n");
}
