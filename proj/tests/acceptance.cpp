// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [criterion numbers...]  (default: all)

#include "moddrop/derivation_oracle.hpp"
#include "moddrop/experiments.hpp"
#include "moddrop/mnist.hpp"
#include "moddrop/network.hpp"
#include "moddrop/skeleton.hpp"
#include "moddrop/temporal.hpp"
#include "moddrop/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

using namespace moddrop;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------------------
// MNIST (criteria 1-3 share one experiment)

struct MnistResults {
    bool available = false;
    std::string error;
    double seconds = 0.0;
    const experiments::MnistRun* dropout = nullptr;
    const experiments::MnistRun* moddrop = nullptr;
    experiments::MnistReport report;
};

MnistResults& mnist_results() {
    static MnistResults r = [] {
        MnistResults res;
        const fs::path dir = MODDROP_MNIST_DIR;
        if (!fs::exists(dir / "train-images-idx3-ubyte") || !fs::exists(dir / "t10k-images-idx3-ubyte")) {
            res.error = "MNIST files not found in " + dir.string();
            return res;
        }
        experiments::MnistExperimentConfig cfg;
        cfg.data_dir = dir;
        cfg.modes = {experiments::TrainingMode::parse("pretrain+dropout"),
                     experiments::TrainingMode::parse("pretrain+dropout+moddrop")};
        const auto t0 = std::chrono::steady_clock::now();
        try {
            res.report = experiments::run_mnist_experiment(cfg, &std::cerr);
        } catch (const std::exception& e) {
            res.error = e.what();
            return res;
        }
        res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (const auto& run : res.report.runs)
            (run.mode.moddrop ? res.moddrop : res.dropout) = &run;
        res.available = res.dropout && res.moddrop;
        std::ostringstream os;
        experiments::write_mnist_report(os, res.report);
        std::cerr << os.str();
        return res;
    }();
    return r;
}

double grid_value(const experiments::MnistRun& run, const std::string& condition) {
    for (const auto& row : run.grid)
        if (row.condition == condition) return row.error_percent;
    throw std::runtime_error("grid row missing: " + condition);
}

Outcome criterion1() {
    const auto& m = mnist_results();
    if (!m.available) return {false, m.error};
    const auto d = m.dropout->test_errors, md = m.moddrop->test_errors;
    const bool ok = d <= 130 && md <= 135 && m.seconds < 1800.0;
    return {ok, fmt("pretrain+dropout %zu errors (<= 130), +moddrop %zu errors (<= 135), both modes %.0f s (< 1800 s)",
                    d, md, m.seconds)};
}

Outcome criterion2() {
    const auto& m = mnist_results();
    if (!m.available) return {false, m.error};
    bool ok = true;
    std::string detail;
    for (int n = 1; n <= 3; ++n) {
        const auto cond = std::to_string(n) + (n == 1 ? " segment covered" : " segments covered");
        const double a = grid_value(*m.dropout, cond), b = grid_value(*m.moddrop, cond);
        ok &= b < a;
        detail += fmt("%d covered: moddrop %.2f%% vs dropout %.2f%%; ", n, b, a);
    }
    const double gap = grid_value(*m.dropout, "1 segment covered") - grid_value(*m.moddrop, "1 segment covered");
    const double one = grid_value(*m.moddrop, "1 segment covered");
    ok &= gap >= 4.0 && one <= 6.0;
    detail += fmt("1-segment gap %.2f pp (>= 4), moddrop 1-segment %.2f%% (<= 6%%)", gap, one);
    return {ok, detail};
}

Outcome criterion3() {
    const auto& m = mnist_results();
    if (!m.available) return {false, m.error};
    bool ok = true;
    std::string detail;
    for (const auto& row : m.dropout->grid) {
        if (row.group != "pepper") continue;
        const double b = grid_value(*m.moddrop, row.condition);
        ok &= b <= row.error_percent;
        detail += fmt("%s: %.2f%% vs %.2f%%; ", row.condition.c_str(), b, row.error_percent);
    }
    const double all = grid_value(*m.moddrop, "All segments corrupted");
    ok &= all <= 8.0;
    detail += fmt("moddrop all corrupted %.2f%% (<= 8%%)", all);
    return {ok, detail};
}

// ---------------------------------------------------------------------------
// Criterion 4: structured init of a linear shared layer is geometric-mean fusion

Outcome criterion4() {
    SeededRng rng(404);
    NetworkTopology t;
    t.paths = {{7, {5}}, {4, {6, 3}}, {9, {4}}};
    t.num_classes = 5;
    t.shared_activation = SharedActivation::Linear;
    std::vector<ModalityClassifier> pre;
    for (const auto& p : t.paths) {
        auto c = init_modality_classifier(p, t.num_classes, rng);
        for (double& b : c.head.bias) b = rng.uniform(-0.5, 0.5);
        pre.push_back(c);
    }
    const auto params = init_shared_from_pretrained(t, pre);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        ModalitySample s;
        for (const auto& p : t.paths) {
            std::vector<double> x(p.input_dim);
            for (double& v : x) v = rng.uniform(-2.0, 2.0);
            s.features.push_back(x);
        }
        s.present.assign(t.modality_count(), 1);
        // Oracle: per-class product of per-modality posteriors, renormalized.
        std::vector<double> prod(t.num_classes, 1.0);
        for (std::size_t k = 0; k < t.modality_count(); ++k) {
            const auto pk = forward_single_modality(k, s, pre, t);
            for (std::size_t j = 0; j < prod.size(); ++j) prod[j] *= std::pow(pk[j], 1.0 / 3.0);
        }
        double z = 0.0;
        for (double v : prod) z += v;
        const auto fused = forward(t, params, s);
        for (std::size_t j = 0; j < prod.size(); ++j) worst = std::max(worst, std::abs(fused[j] - prod[j] / z));
    }
    return {worst < 1e-9, fmt("max |posterior - geometric mean| = %.3e over 100 samples (< 1e-9)", worst)};
}

// ---------------------------------------------------------------------------
// Criterion 5: analytic vs central finite-difference gradients

double gradient_check(const NetworkTopology& t, NetworkParams p, const std::vector<Matrix>& x,
                      const std::vector<std::size_t>& y, const ForwardOptions& opt, double alpha,
                      std::string& worst_group) {
    auto objective = [&](const NetworkParams& q) {
        return mean_cross_entropy(forward(t, q, x, opt).posterior, y) + l2_penalty(t, q, alpha);
    };
    const auto g = backward(t, p, forward(t, p, x, opt), y, alpha);
    struct Group {
        std::string name;
        std::vector<double>* values;
        const std::vector<double>* grads;
    };
    std::vector<Group> groups;
    for (std::size_t k = 0; k < p.paths.size(); ++k)
        for (std::size_t l = 0; l < p.paths[k].layers.size(); ++l)
            groups.push_back({fmt("path%zu.W%zu", k, l), &p.paths[k].layers[l].weights.data(),
                              &g.paths[k].layers[l].weights.data()});
    groups.push_back({"W1", &p.shared.w1.data(), &g.shared.w1.data()});
    groups.push_back({"b1", &p.shared.b1, &g.shared.b1});
    groups.push_back({"W2", &p.shared.w2.data(), &g.shared.w2.data()});
    groups.push_back({"b2", &p.shared.b2, &g.shared.b2});
    double worst = 0.0;
    const double eps = 1e-5;
    for (auto& grp : groups) {
        // Relative error of the whole group: ||numeric - analytic|| / ||numeric||.
        double diff = 0.0, norm = 0.0;
        for (std::size_t i = 0; i < grp.values->size(); ++i) {
            double& v = (*grp.values)[i];
            const double saved = v;
            v = saved + eps;
            const double up = objective(p);
            v = saved - eps;
            const double down = objective(p);
            v = saved;
            const double numeric = (up - down) / (2 * eps);
            diff += std::pow(numeric - (*grp.grads)[i], 2);
            norm += numeric * numeric;
        }
        const double rel = norm > 0 ? std::sqrt(diff / norm) : std::sqrt(diff);
        if (rel >= worst) worst = rel, worst_group = grp.name;
    }
    return worst;
}

Outcome criterion5() {
    SeededRng rng(505);
    NetworkTopology t;
    t.paths = {{4, {5}}, {3, {4, 3}}, {2, {3}}};
    t.num_classes = 3;
    const std::vector<std::size_t> y{0, 2, 1, 1, 0, 2};
    bool ok = true;
    std::string detail;
    for (int cfg = 0; cfg < 4; ++cfg) {
        const int gamma = cfg % 2;
        const bool masked = cfg >= 2;
        auto p = init_network(t, rng);
        for (double& b : p.shared.b1) b = rng.uniform(-0.3, 0.3);
        set_gamma(p, gamma);
        std::vector<Matrix> x;
        for (const auto& path : t.paths) {
            Matrix m(y.size(), path.input_dim);
            for (double& v : m.data()) v = rng.uniform(-1.0, 1.0);
            x.push_back(m);
        }
        ForwardOptions opt;
        if (masked) {
            opt.presence = {{1, 0, 1}, {0, 1, 1}, {1, 1, 0}, {0, 0, 1}, {1, 1, 1}, {1, 0, 0}};
            for (std::size_t b = 0; b < y.size(); ++b)
                for (std::size_t k = 0; k < 3; ++k)
                    if (!opt.presence[b][k]) std::fill(x[k].row(b).begin(), x[k].row(b).end(), 0.0);
        }
        std::string group;
        const double worst = gradient_check(t, p, x, y, opt, 1e-3, group);
        ok &= worst < 1e-4;
        detail += fmt("gamma=%d%s: %.2e (%s); ", gamma, masked ? " delta-masked" : "", worst, group.c_str());
    }
    detail += "bound 1e-4";
    return {ok, detail};
}

// ---------------------------------------------------------------------------
// Criterion 6: ModDrop expectation oracle

Outcome criterion6() {
    using namespace oracle;
    SeededRng rng(606);
    DerivationOracleConfig cfg{1.0, {4, 3, 2}};
    ToyWeights w, teacher;
    for (auto f : cfg.inputs_per_modality) {
        std::vector<double> a(f), b(f);
        for (double& v : a) v = 0.3 * rng.normal();
        for (double& v : b) v = rng.normal();
        w.push_back(a);
        teacher.push_back(b);
    }
    ToyBatch batch;
    const std::size_t n = 10000;
    for (auto f : cfg.inputs_per_modality) batch.inputs.emplace_back(n, f);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t j = 0; j < cfg.inputs_per_modality[k]; ++j) {
                batch.inputs[k](i, j) = rng.normal();
                s += teacher[k][j] * batch.inputs[k](i, j);
            }
        batch.targets.push_back(s > 0 ? 1.0 : 0.0);
    }
    const std::vector<double> ones{1, 1, 1}, keep{0.9, 0.9, 0.9};
    const bool exact = expected_moddrop_gradient(cfg, w, batch, ones) == toy_gradient(cfg, w, batch);
    const auto rep = moddrop_gradient_expectation_check(cfg, w, batch, keep);
    const bool small = rep.cross_ratio < 0.05;

    // Correlated pair: both inputs carry z, the target follows z.
    DerivationOracleConfig pair{1.0, {1, 1}};
    ToyBatch cb;
    cb.inputs = {Matrix(2000, 1), Matrix(2000, 1)};
    for (std::size_t i = 0; i < 2000; ++i) {
        const double z = rng.normal();
        cb.inputs[0](i, 0) = z + 0.2 * rng.normal();
        cb.inputs[1](i, 0) = z + 0.2 * rng.normal();
        cb.targets.push_back(sigmoid(z, 0.5));
    }
    bool sign = true;
    std::string sign_detail;
    for (double p : {0.5, 0.9}) {
        const std::vector<double> kp{p, p};
        const auto end = descend_expected_gradient(pair, {{1.0}, {-0.5}}, cb, kp, 1.0, 100);
        const double product = end[0][0] * end[1][0];
        sign &= product > 0.0;
        sign_detail += fmt("p=%.1f w1*w2=%.3f; ", p, product);
    }
    return {exact && small && sign,
            fmt("p=1 exact: %s; cross-term ratio %.4f (< 0.05); ", exact ? "yes" : "no", rep.cross_ratio) +
                sign_detail + "product must be > 0"};
}

// ---------------------------------------------------------------------------
// Criterion 7: Jaccard against a set-counting oracle

Outcome criterion7() {
    SeededRng rng(707);
    using temporal::LabelingSet;
    using temporal::SegmentLabeling;
    auto random_labeling = [&](std::size_t frames) {
        SegmentLabeling l;
        l.frames = frames;
        const std::size_t n = rng.index(4);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t a = rng.index(frames), b = rng.index(frames);
            l.intervals.push_back({rng.index(4), std::min(a, b), std::max(a, b)});
        }
        return l;
    };
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        LabelingSet truth, pred;
        const std::size_t seqs = 1 + rng.index(3);
        for (std::size_t s = 0; s < seqs; ++s) {
            const std::size_t frames = 1 + rng.index(50);
            const auto id = "s" + std::to_string(s);
            truth[id] = random_labeling(frames);
            if (rng.uniform() < 0.9) pred[id] = random_labeling(frames);
        }
        double sum = 0.0;
        std::size_t pairs = 0;
        for (const auto& [id, gt] : truth) {
            std::map<std::size_t, std::set<std::size_t>> g, p;
            for (const auto& iv : gt.intervals)
                for (auto t = iv.start; t <= iv.end; ++t) g[iv.label].insert(t);
            if (pred.contains(id))
                for (const auto& iv : pred.at(id).intervals)
                    for (auto t = iv.start; t <= iv.end; ++t) p[iv.label].insert(t);
            std::set<std::size_t> labels;
            for (const auto& [c, _] : g) labels.insert(c);
            for (const auto& [c, _] : p) labels.insert(c);
            for (auto c : labels) {
                std::set<std::size_t> uni = g[c];
                uni.insert(p[c].begin(), p[c].end());
                std::size_t inter = 0;
                for (auto t : g[c]) inter += p[c].count(t);
                sum += static_cast<double>(inter) / static_cast<double>(uni.size());
                ++pairs;
            }
        }
        const double want = pairs ? sum / static_cast<double>(pairs) : 0.0;
        mismatches += temporal::mean_jaccard(truth, pred) != want;
    }
    std::vector<std::uint8_t> a(20, 0), b(20, 0);
    for (int t = 1; t <= 10; ++t) a[t] = 1;
    for (int t = 6; t <= 15; ++t) b[t] = 1;
    const double j = temporal::jaccard_index(a, b);
    return {mismatches == 0 && j == 1.0 / 3.0,
            fmt("%zu/1000 mismatches vs set-counting oracle (exact); J(1-10, 6-15) = %.17g (exactly 1/3)",
                mismatches, j)};
}

// ---------------------------------------------------------------------------
// Criterion 8: pose pipeline properties and localization benefit

Outcome criterion8() {
    using namespace skeleton;
    const auto seq = temporal::generate_synthetic_sequence(808, {});
    const auto tree = SkeletonTree::fit(seq.frames);
    const auto desc = compute_descriptors(seq.frames, tree);
    const bool sizes = desc.cols() == 183 && make_dynamic_pose(desc, 40, 4).size() == 915;

    // Coordinates on a 2^-16 grid and an integer shift: every translated
    // coordinate is exactly representable, so invariance is checked bit for bit.
    std::vector<SkeletonFrame> grid, shifted;
    for (const auto& f : seq.frames) {
        SkeletonFrame g;
        for (std::size_t j = 0; j < kJoints; ++j) {
            g.joints[j] = (f.joints[j] * 65536.0).array().round() / 65536.0;
        }
        grid.push_back(g);
        SkeletonFrame s = g;
        for (auto& p : s.joints) p += Vec3(1.0, -2.0, 3.0);
        shifted.push_back(s);
    }
    const bool invariant = compute_descriptors(grid, tree) == compute_descriptors(shifted, tree);

    double bone_err = 0.0;
    for (const auto& f : seq.frames) {
        const auto n = normalize_skeleton(f, tree);
        for (std::size_t i = 0; i < kBones; ++i)
            bone_err = std::max(bone_err, std::abs(bone_length(n, SkeletonTree::bones()[i]) - tree.target_lengths[i]));
    }

    std::size_t better_or_equal = 0;
    double sum_with = 0.0, sum_without = 0.0;
    for (std::uint64_t s = 1; s <= 20; ++s) {
        experiments::GesturePipelineConfig cfg;
        cfg.seed = s;
        const auto r = experiments::run_gesture_pipeline(cfg);
        better_or_equal += r.mean_with >= r.mean_without;
        sum_with += r.mean_with;
        sum_without += r.mean_without;
        std::cerr << "pipeline seed " << s << ": without " << r.mean_without << ", with " << r.mean_with << '\n';
    }
    const bool ok = sizes && invariant && bone_err < 1e-9 && better_or_equal == 20;
    return {ok, fmt("sizes 183/915: %s; translation invariance exact: %s; max bone error %.2e (< 1e-9); "
                    "localization >= baseline in %zu/20 runs (mean %.3f vs %.3f)",
                    sizes ? "yes" : "no", invariant ? "yes" : "no", bone_err, better_or_equal,
                    sum_with / 20, sum_without / 20)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4,
                                                         criterion5, criterion6, criterion7, criterion8};
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.contains(id)) continue;
        Outcome o;
        try {
            o = criteria[i]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << o.detail << std::endl;
    }
    return failures ? 1 : 0;
}
