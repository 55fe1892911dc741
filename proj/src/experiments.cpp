#include "moddrop/experiments.hpp"

#include "moddrop/error.hpp"
#include "moddrop/mnist.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace moddrop::experiments {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

std::size_t parse_count(const std::string& s, const std::string& spec) {
    std::size_t used = 0;
    std::size_t v = 0;
    try {
        v = std::stoul(s, &used);
    } catch (const std::logic_error&) {
        used = 0;
    }
    if (used == 0 || used != s.size() || v == 0)
        throw InvalidArgument("architecture '" + spec + "': bad number '" + s + "'");
    return v;
}

// "196x4" -> (196, 4); "40" -> (40, 1).
std::pair<std::size_t, std::size_t> parse_term(const std::string& term, const std::string& spec) {
    const auto x = term.find('x');
    if (x == std::string::npos) return {parse_count(term, spec), 1};
    return {parse_count(term.substr(0, x), spec), parse_count(term.substr(x + 1), spec)};
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

// Every subset of {0..K-1} of size m, in lexicographic bitmask order.
std::vector<std::vector<std::size_t>> subsets_of_size(std::size_t K, std::size_t m) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t mask = 0; mask < (std::size_t{1} << K); ++mask) {
        std::vector<std::size_t> s;
        for (std::size_t k = 0; k < K; ++k)
            if (mask >> k & 1) s.push_back(k);
        if (s.size() == m) out.push_back(std::move(s));
    }
    return out;
}

std::string segments_label(std::size_t m, const char* verb) {
    return std::to_string(m) + (m == 1 ? " segment " : " segments ") + verb;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

NetworkTopology parse_architecture(const std::string& spec) {
    const auto terms = split(spec, '-');
    if (terms.size() < 3) throw InvalidArgument("architecture '" + spec + "': too few layers");
    const auto [input, K] = parse_term(terms.front(), spec);
    NetworkTopology topo;
    topo.num_classes = parse_term(terms.back(), spec).first;
    const auto [shared, shared_mult] = parse_term(terms[terms.size() - 2], spec);
    if (shared_mult != 1) throw InvalidArgument("architecture '" + spec + "': shared layer is not per-path");
    std::vector<std::size_t> hidden;
    for (std::size_t i = 1; i + 2 < terms.size(); ++i) {
        const auto [h, mult] = parse_term(terms[i], spec);
        if (mult != K)
            throw InvalidArgument("architecture '" + spec + "': path layer '" + terms[i] +
                                  "' must repeat " + std::to_string(K) + " times");
        hidden.push_back(h);
    }
    for (std::size_t k = 0; k < K; ++k) topo.paths.push_back({input, hidden});
    if (shared != topo.shared_width())
        throw InvalidArgument("architecture '" + spec + "': shared width " + std::to_string(shared) +
                              " must equal paths x classes = " +
                              std::to_string(topo.shared_width()));
    topo.validate();
    return topo;
}

std::string format_architecture(const NetworkTopology& topo) {
    const std::size_t K = topo.modality_count();
    std::ostringstream os;
    os << topo.paths.front().input_dim << 'x' << K;
    for (auto h : topo.paths.front().hidden) os << '-' << h << 'x' << K;
    os << '-' << topo.shared_width() << '-' << topo.num_classes;
    return os.str();
}

TrainingMode TrainingMode::parse(const std::string& name) {
    TrainingMode m{false, false, false, true};
    if (name != "plain") {
        for (const auto& part : split(name, '+')) {
            if (part == "pretrain") m.pretraining = true;
            else if (part == "dropout") m.input_dropout = true;
            else if (part == "moddrop") m.moddrop = true;
            else if (part == "randinit") m.structured_init = false;
            else throw InvalidArgument("unknown training mode component '" + part + "' in '" + name + "'");
        }
    }
    return m;
}

std::string TrainingMode::name() const {
    std::vector<std::string> parts;
    if (pretraining) parts.push_back("pretrain");
    if (input_dropout) parts.push_back("dropout");
    if (moddrop) parts.push_back("moddrop");
    if (pretraining && !structured_init) parts.push_back("randinit");
    if (parts.empty()) return "plain";
    std::string out = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) out += "+" + parts[i];
    return out;
}

MnistExperimentConfig MnistExperimentConfig::from_config(const Config& cfg) {
    MnistExperimentConfig c;
    c.data_dir = cfg.get_string("mnist.data_dir", c.data_dir.string());
    c.architecture = cfg.get_string("mnist.architecture", c.architecture);
    if (cfg.has("mnist.modes")) {
        c.modes.clear();
        for (const auto& name : split(cfg.get_string("mnist.modes", ""), ',')) {
            const auto b = name.find_first_not_of(' ');
            const auto e = name.find_last_not_of(' ');
            if (b != std::string::npos) c.modes.push_back(TrainingMode::parse(name.substr(b, e - b + 1)));
        }
    }
    c.input_keep = cfg.get_double("mnist.input_keep", c.input_keep);
    c.moddrop_keep = cfg.get_double("mnist.moddrop_keep", c.moddrop_keep);
    c.pretrain_epochs = cfg.get_size("mnist.pretrain_epochs", c.pretrain_epochs);
    c.frozen_epochs = cfg.get_size("mnist.frozen_epochs", c.frozen_epochs);
    c.relaxed_epochs = cfg.get_size("mnist.relaxed_epochs", c.relaxed_epochs);
    c.validation_size = cfg.get_size("mnist.validation_size", c.validation_size);
    c.train_limit = cfg.get_size("mnist.train_limit", c.train_limit);
    c.test_limit = cfg.get_size("mnist.test_limit", c.test_limit);
    c.pepper_rate = cfg.get_double("mnist.pepper_rate", c.pepper_rate);
    c.seeds = cfg.get_u64_list("mnist.seeds", c.seeds);
    auto& t = c.training;
    t.learning_rate = cfg.get_double("training.learning_rate", t.learning_rate);
    t.lr_decay = cfg.get_double("training.lr_decay", t.lr_decay);
    t.batch_size = cfg.get_size("training.batch_size", t.batch_size);
    t.patience = cfg.get_size("training.patience", t.patience);
    t.l2 = cfg.get_double("training.l2", t.l2);
    t.hidden_keep = cfg.get_double("training.hidden_keep", t.hidden_keep);
    return c;
}

void MnistExperimentConfig::validate() const {
    const auto topo = parse_architecture(architecture);
    require(topo.modality_count() == mnist::kQuarters && topo.paths.front().input_dim == mnist::kQuarterPixels &&
                topo.num_classes == 10,
            "mnist: architecture must have 4 paths of 196 inputs and 10 classes");
    require(!modes.empty(), "mnist: no training modes");
    require(!seeds.empty(), "mnist: no seeds");
    require(input_keep > 0.0 && input_keep <= 1.0, "mnist: input_keep outside (0,1]");
    require(moddrop_keep >= 0.0 && moddrop_keep <= 1.0, "mnist: moddrop_keep outside [0,1]");
    require(pepper_rate >= 0.0 && pepper_rate <= 1.0, "mnist: pepper_rate outside [0,1]");
    require(validation_size >= 1, "mnist: validation_size must be positive");
    require(frozen_epochs + relaxed_epochs >= 1, "mnist: no fusion epochs");
    training.validate(topo.modality_count());
}

std::vector<GridRow> evaluate_grid(const NetworkTopology& topo, const NetworkParams& params,
                                   const Dataset& test, const TrainingConfig& eval_config,
                                   double pepper_rate, std::uint64_t seed) {
    const std::size_t K = topo.modality_count();
    std::vector<GridRow> rows;
    const double clean = 100.0 * evaluate(topo, params, test, eval_config).error_rate();
    rows.push_back({"missing", "All segments visible", 0, clean});
    for (std::size_t m = 1; m < K; ++m) {
        double sum = 0.0;
        const auto choices = subsets_of_size(K, m);
        for (const auto& segs : choices)
            sum += evaluate(topo, params, mnist::occlude(test, segs), eval_config).error_rate();
        rows.push_back({"missing", segments_label(m, "covered"), m,
                        100.0 * sum / static_cast<double>(choices.size())});
    }
    rows.push_back({"pepper", "All clean", 0, clean});
    for (std::size_t m = 1; m <= K; ++m) {
        double sum = 0.0;
        const auto choices = subsets_of_size(K, m);
        for (std::size_t c = 0; c < choices.size(); ++c) {
            auto rng = SeededRng::stream(seed, 0x9E99E8, m, c);
            sum += evaluate(topo, params, mnist::pepper_noise(test, choices[c], pepper_rate, rng),
                            eval_config)
                       .error_rate();
        }
        rows.push_back({"pepper", m == K ? "All segments corrupted" : segments_label(m, "corrupted"),
                        m, 100.0 * sum / static_cast<double>(choices.size())});
    }
    return rows;
}

MnistReport run_mnist_experiment(const MnistExperimentConfig& config, std::ostream* log) {
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const auto topo = parse_architecture(config.architecture);
    const std::size_t K = topo.modality_count();

    const auto train_set = mnist::load_idx(config.data_dir, "train");
    const auto test_set = mnist::load_idx(config.data_dir, "t10k");
    const Dataset full = mnist::to_quartered_dataset(train_set);
    require(config.validation_size < full.size(), "mnist: validation split larger than training data");
    const std::size_t valid_begin = full.size() - config.validation_size;
    std::size_t train_end = valid_begin;
    if (config.train_limit) train_end = std::min(train_end, config.train_limit);
    std::vector<std::size_t> train_idx = all_indices(train_end), valid_idx;
    for (std::size_t i = valid_begin; i < full.size(); ++i) valid_idx.push_back(i);
    const Dataset train = full.subset(train_idx);
    const Dataset valid = full.subset(valid_idx);
    Dataset test = mnist::to_quartered_dataset(test_set);
    if (config.test_limit && config.test_limit < test.size()) {
        const auto idx = all_indices(config.test_limit);
        test = test.subset(idx);
    }
    if (log) *log << "# data loaded: train " << train.size() << ", valid " << valid.size()
                  << ", test " << test.size() << '\n';

    EpochLogger epoch_log;
    if (log)
        epoch_log = [&](const EpochRecord& r) {
            *log << std::fixed << std::setprecision(1) << seconds_since(t0) << "s\t"
                 << std::defaultfloat << std::setprecision(6);
            write_tsv_record(*log, r);
            log->flush();
        };

    // Pretrained paths depend only on (seed, input dropout); modes share them.
    std::map<std::pair<std::uint64_t, bool>, std::vector<ModalityClassifier>> pretrained_cache;

    MnistReport report;
    report.config = config;
    for (const auto& mode : config.modes) {
        for (const auto seed : config.seeds) {
            TrainingConfig tc = config.training;
            tc.seed = seed;
            tc.input_keep = mode.input_dropout ? config.input_keep : 1.0;
            if (mode.moddrop) tc.modality_keep.assign(K, config.moddrop_keep);
            if (log) *log << "# mode " << mode.name() << " seed " << seed << '\n';

            NetworkParams params;
            StagePlan plan;
            if (mode.pretraining) {
                const auto key = std::make_pair(seed, mode.input_dropout);
                auto it = pretrained_cache.find(key);
                if (it == pretrained_cache.end()) {
                    TrainingConfig pre = tc;
                    pre.max_epochs = config.pretrain_epochs;
                    std::vector<ModalityClassifier> clfs;
                    for (std::size_t k = 0; k < K; ++k)
                        clfs.push_back(pretrain_modality(k, topo, train, valid, pre, epoch_log));
                    it = pretrained_cache.emplace(key, std::move(clfs)).first;
                }
                if (mode.structured_init) {
                    params = init_shared_from_pretrained(topo, it->second);
                } else {
                    auto rng = SeededRng::stream(seed, 0x1417);
                    params = init_network(topo, rng);
                    for (std::size_t k = 0; k < K; ++k) params.paths[k] = it->second[k].path;
                }
                if (config.frozen_epochs)
                    plan.stages.push_back({StageKind::FuseFrozen, config.frozen_epochs, false});
                if (config.relaxed_epochs)
                    plan.stages.push_back({StageKind::FuseRelaxed, config.relaxed_epochs, mode.moddrop});
            } else {
                auto rng = SeededRng::stream(seed, 0x1417);
                params = init_network(topo, rng);
                plan.stages.push_back({StageKind::FuseRelaxed,
                                       config.frozen_epochs + config.relaxed_epochs, mode.moddrop});
            }
            params = fuse_train(topo, std::move(params), train, valid, tc, plan, epoch_log);

            MnistRun run;
            run.mode = mode;
            run.seed = seed;
            const auto ev = evaluate(topo, params, test, tc);
            run.test_errors = ev.errors;
            run.test_count = ev.count;
            run.grid = evaluate_grid(topo, params, test, tc, config.pepper_rate, seed);
            if (log) *log << "# test errors " << run.test_errors << " / " << run.test_count
                          << " after " << seconds_since(t0) << "s\n";
            report.runs.push_back(std::move(run));
        }
    }
    return report;
}

namespace {

struct Stats {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation; 0 for a single value
};

Stats stats(const std::vector<double>& v) {
    Stats s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

}  // namespace

void write_mnist_report(std::ostream& os, const MnistReport& report) {
    const auto& c = report.config;
    os << std::fixed;
    os << "# mnist-experiment\tarchitecture=" << c.architecture << "\tseeds=";
    for (std::size_t i = 0; i < c.seeds.size(); ++i) os << (i ? "," : "") << c.seeds[i];
    os << "\tinput_keep=" << std::setprecision(2) << c.input_keep
       << "\tmoddrop_keep=" << c.moddrop_keep << "\tpepper_rate=" << c.pepper_rate << '\n';

    os << "\n# training modes (test errors)\n";
    os << "mode\tpretraining\tdropout\tmoddrop\terrors_mean\terrors_std\terrors_per_seed\n";
    for (const auto& mode : c.modes) {
        std::vector<double> errs;
        std::string per_seed;
        for (const auto& r : report.runs) {
            if (r.mode.name() != mode.name()) continue;
            errs.push_back(static_cast<double>(r.test_errors));
            per_seed += (per_seed.empty() ? "" : ",") + std::to_string(r.test_errors);
        }
        const auto s = stats(errs);
        os << mode.name() << '\t' << (mode.pretraining ? "yes" : "no") << '\t'
           << (mode.input_dropout ? "yes" : "no") << '\t' << (mode.moddrop ? "yes" : "no") << '\t'
           << std::setprecision(1) << s.mean << '\t' << s.stddev << '\t' << per_seed << '\n';
    }

    os << "\n# robustness grid (test error, %)\n";
    os << "group\tcondition\tcorrupted";
    for (const auto& mode : c.modes) os << '\t' << mode.name() << "_mean\t" << mode.name() << "_std";
    os << '\n';
    const auto* first = report.runs.empty() ? nullptr : &report.runs.front();
    if (!first) return;
    for (std::size_t row = 0; row < first->grid.size(); ++row) {
        const auto& g = first->grid[row];
        os << g.group << '\t' << g.condition << '\t' << g.corrupted;
        for (const auto& mode : c.modes) {
            std::vector<double> v;
            for (const auto& r : report.runs)
                if (r.mode.name() == mode.name()) v.push_back(r.grid[row].error_percent);
            const auto s = stats(v);
            os << '\t' << std::setprecision(2) << s.mean << '\t' << s.stddev;
        }
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// Synthetic gesture pipeline

GesturePipelineConfig GesturePipelineConfig::from_config(const Config& cfg) {
    GesturePipelineConfig c;
    auto& s = c.synthetic;
    s.num_classes = cfg.get_size("synthetic.num_classes", s.num_classes);
    s.gestures = cfg.get_size("synthetic.gestures", s.gestures);
    s.gesture_min_frames = cfg.get_size("synthetic.gesture_min_frames", s.gesture_min_frames);
    s.gesture_max_frames = cfg.get_size("synthetic.gesture_max_frames", s.gesture_max_frames);
    s.rest_min_frames = cfg.get_size("synthetic.rest_min_frames", s.rest_min_frames);
    s.rest_max_frames = cfg.get_size("synthetic.rest_max_frames", s.rest_max_frames);
    s.noise = cfg.get_double("synthetic.noise", s.noise);
    c.train_sequences = cfg.get_size("pipeline.train_sequences", c.train_sequences);
    c.test_sequences = cfg.get_size("pipeline.test_sequences", c.test_sequences);
    c.scales = cfg.get_size_list("pipeline.scales", c.scales);
    if (cfg.has("pipeline.scale_weight")) {
        c.scale_weights.assign(c.scales.size(), cfg.get_double("pipeline.scale_weight", 1.0));
    } else {
        c.scale_weights.assign(c.scales.size(), 1.0);
    }
    c.gesture_hidden = cfg.get_size("pipeline.gesture_hidden", c.gesture_hidden);
    c.gesture_training.max_epochs = cfg.get_size("pipeline.gesture_epochs", c.gesture_training.max_epochs);
    c.gesture_training.learning_rate =
        cfg.get_double("pipeline.gesture_learning_rate", c.gesture_training.learning_rate);
    c.motion.hidden = cfg.get_size("pipeline.motion_hidden", c.motion.hidden);
    c.motion.training.max_epochs = cfg.get_size("pipeline.motion_epochs", c.motion.training.max_epochs);
    c.motion.training.learning_rate =
        cfg.get_double("pipeline.motion_learning_rate", c.motion.training.learning_rate);
    c.train_frame_stride = cfg.get_size("pipeline.train_frame_stride", c.train_frame_stride);
    c.vicinity = cfg.get_size("pipeline.vicinity", c.vicinity);
    c.min_interval = cfg.get_size("pipeline.min_interval", c.min_interval);
    c.descriptor.smoothing_sigma = cfg.get_double("pipeline.smoothing_sigma", c.descriptor.smoothing_sigma);
    c.descriptor.smoothing_window = cfg.get_size("pipeline.smoothing_window", c.descriptor.smoothing_window);
    c.seed = cfg.get_u64("pipeline.seed", c.seed);
    return c;
}

void GesturePipelineConfig::validate() const {
    synthetic.validate();
    require(train_sequences >= 1 && test_sequences >= 1, "pipeline: need train and test sequences");
    require(!scales.empty() && scales.size() == scale_weights.size(),
            "pipeline: one weight per scale required");
    for (auto s : scales) require(s >= 1, "pipeline: scales must be positive");
    require(train_frame_stride >= 1, "pipeline: train_frame_stride must be positive");
    require(gesture_hidden >= 1, "pipeline: gesture_hidden must be positive");
}

namespace {

struct PreparedSequence {
    std::string id;
    Matrix descriptors;
    temporal::SegmentLabeling truth;
    std::vector<std::size_t> frame_class;  // 0 = rest, c + 1 = gesture c
};

std::vector<PreparedSequence> prepare(const std::vector<temporal::SyntheticSequence>& seqs,
                                      const std::string& prefix, const skeleton::SkeletonTree& tree,
                                      const skeleton::DescriptorOptions& options) {
    std::vector<PreparedSequence> out;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        PreparedSequence p;
        std::ostringstream id;
        id << prefix << std::setw(3) << std::setfill('0') << i;
        p.id = id.str();
        p.descriptors = skeleton::compute_descriptors(seqs[i].frames, tree, options);
        p.truth = seqs[i].truth;
        p.frame_class.assign(seqs[i].frames.size(), 0);
        for (const auto& iv : p.truth.intervals)
            for (std::size_t t = iv.start; t <= iv.end; ++t) p.frame_class[t] = iv.label + 1;
        out.push_back(std::move(p));
    }
    return out;
}

// Dynamic poses at `stride` for every frame with enough history, every
// `step`-th one; labels from `label_of`.
template <typename LabelFn>
void collect_poses(const std::vector<PreparedSequence>& seqs, std::size_t stride, std::size_t step,
                   LabelFn label_of, Matrix& x, std::vector<std::size_t>& y) {
    std::vector<double> data;
    y.clear();
    const std::size_t first = (skeleton::kDynamicPoseFrames - 1) * stride;
    for (const auto& s : seqs) {
        for (std::size_t t = first; t < s.descriptors.rows(); t += step) {
            const auto pose = skeleton::make_dynamic_pose(s.descriptors, t, stride);
            data.insert(data.end(), pose.begin(), pose.end());
            y.push_back(label_of(s, t));
        }
    }
    x = Matrix(y.size(), skeleton::kDynamicPoseSize, std::move(data));
}

Matrix poses_of(const PreparedSequence& s, std::size_t stride, std::size_t first) {
    Matrix x(s.descriptors.rows() - first, skeleton::kDynamicPoseSize);
    for (std::size_t t = first; t < s.descriptors.rows(); ++t) {
        const auto pose = skeleton::make_dynamic_pose(s.descriptors, t, stride);
        std::copy(pose.begin(), pose.end(), x.row(t - first).begin());
    }
    return x;
}

struct ScaleModel {
    std::size_t stride = 0;
    skeleton::FeatureStandardizer standardizer;
    ModalityClassifier network;
};

}  // namespace

GesturePipelineReport run_gesture_pipeline(const GesturePipelineConfig& config) {
    config.validate();
    const auto& syn = config.synthetic;
    std::vector<temporal::SyntheticSequence> train_raw, test_raw;
    for (std::size_t i = 0; i < config.train_sequences; ++i)
        train_raw.push_back(temporal::generate_synthetic_sequence(
            splitmix64(config.seed * 0x100 + i), syn));
    for (std::size_t i = 0; i < config.test_sequences; ++i)
        test_raw.push_back(temporal::generate_synthetic_sequence(
            splitmix64(config.seed * 0x100 + 0x80 + i), syn));

    std::vector<skeleton::SkeletonFrame> all_train_frames;
    for (const auto& s : train_raw)
        all_train_frames.insert(all_train_frames.end(), s.frames.begin(), s.frames.end());
    const auto tree = skeleton::SkeletonTree::fit(all_train_frames);
    const auto train = prepare(train_raw, "train", tree, config.descriptor);
    const auto test = prepare(test_raw, "seq", tree, config.descriptor);

    // Gesture classifiers, one per temporal scale.
    std::vector<ScaleModel> models;
    for (std::size_t si = 0; si < config.scales.size(); ++si) {
        ScaleModel m;
        m.stride = config.scales[si];
        Matrix x;
        std::vector<std::size_t> y;
        collect_poses(train, m.stride, config.train_frame_stride,
                      [](const PreparedSequence& s, std::size_t t) { return s.frame_class[t]; }, x, y);
        m.standardizer.fit(x);
        x = m.standardizer.apply(x);
        TrainingConfig tc = config.gesture_training;
        tc.seed = splitmix64(config.seed + 17 * (si + 1));
        auto rng = SeededRng::stream(tc.seed, 0x6E57);
        auto clf = init_modality_classifier({skeleton::kDynamicPoseSize, {config.gesture_hidden}},
                                            syn.num_classes + 1, rng);
        // Early stopping on every fifth sample.
        std::vector<std::size_t> fit_idx, hold_idx;
        for (std::size_t i = 0; i < y.size(); ++i) (i % 5 == 4 ? hold_idx : fit_idx).push_back(i);
        auto rows = [&](const std::vector<std::size_t>& idx, std::vector<std::size_t>& labels) {
            Matrix out(idx.size(), x.cols());
            labels.resize(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const auto r = x.row(idx[i]);
                std::copy(r.begin(), r.end(), out.row(i).begin());
                labels[i] = y[idx[i]];
            }
            return out;
        };
        std::vector<std::size_t> fy, hy;
        const Matrix fx = rows(fit_idx, fy), hx = rows(hold_idx, hy);
        m.network = train_classifier(std::move(clf), fx, fy, hx, hy, tc, false,
                                     "gesture[s=" + std::to_string(m.stride) + "]", 0x6E57 + si);
        models.push_back(std::move(m));
    }

    // Motion / rest classifier at stride 1.
    Matrix mx;
    std::vector<std::size_t> my;
    collect_poses(train, 1, config.train_frame_stride,
                  [](const PreparedSequence& s, std::size_t t) { return s.frame_class[t] ? 1u : 0u; },
                  mx, my);
    auto motion_cfg = config.motion;
    motion_cfg.training.seed = splitmix64(config.seed + 0x4D07);
    const auto motion = temporal::train_motion_classifier(mx, my, motion_cfg);

    GesturePipelineReport report;
    report.seed = config.seed;
    report.num_classes = syn.num_classes;
    report.motion_accuracy = motion.holdout_accuracy;
    for (const auto& s : test) {
        const std::size_t T = s.descriptors.rows();
        temporal::ScoreSequence scores;
        scores.scales = config.scales;
        scores.weights = config.scale_weights;
        for (const auto& m : models) {
            const std::size_t first = (skeleton::kDynamicPoseFrames - 1) * m.stride;
            Matrix sc(T, syn.num_classes + 1);
            std::vector<std::uint8_t> avail(T, 0);
            if (first < T) {
                const Matrix post = classifier_forward(
                    m.network, m.standardizer.apply(poses_of(s, m.stride, first))).posterior;
                for (std::size_t t = first; t < T; ++t) {
                    std::copy(post.row(t - first).begin(), post.row(t - first).end(), sc.row(t).begin());
                    avail[t] = 1;
                }
            }
            scores.scores.push_back(std::move(sc));
            scores.available.push_back(std::move(avail));
        }
        const auto labels = temporal::frame_labels(scores);
        const auto raw = temporal::intervals_from_frame_labels(labels, config.min_interval);

        std::vector<std::uint8_t> moving(T, 0);
        const std::size_t first = skeleton::kDynamicPoseFrames - 1;
        if (first < T) {
            const Matrix post = temporal::motion_posteriors(motion, poses_of(s, 1, first));
            for (std::size_t t = first; t < T; ++t) moving[t] = post(t - first, 1) > post(t - first, 0);
        }
        const auto switches = temporal::switch_points(moving);
        const auto refined = temporal::refine_boundaries(raw, switches, config.vicinity);

        report.truth[s.id] = s.truth;
        report.predicted_without[s.id] = {T, raw};
        report.predicted_with[s.id] = {T, refined};
    }
    report.without_localization = temporal::per_class_jaccard(report.truth, report.predicted_without);
    report.with_localization = temporal::per_class_jaccard(report.truth, report.predicted_with);
    report.mean_without = temporal::mean_jaccard(report.truth, report.predicted_without);
    report.mean_with = temporal::mean_jaccard(report.truth, report.predicted_with);
    return report;
}

void write_gesture_report(std::ostream& os, const GesturePipelineReport& report) {
    os << std::fixed << std::setprecision(6);
    os << "# pipeline-run\tseed=" << report.seed << "\tclasses=" << report.num_classes
       << "\tmotion_holdout_accuracy=" << report.motion_accuracy << '\n';
    os << "class\tjaccard_without_localization\tjaccard_with_localization\n";
    // Classes that occur in neither truth nor prediction print as "-".
    auto cell = [&](const std::vector<temporal::ClassJaccard>& v, std::size_t c) {
        for (const auto& x : v)
            if (x.label == c) {
                std::ostringstream s;
                s << std::fixed << std::setprecision(6) << x.mean;
                return s.str();
            }
        return std::string("-");
    };
    for (std::size_t c = 0; c < report.num_classes; ++c)
        os << c << '\t' << cell(report.without_localization, c) << '\t'
           << cell(report.with_localization, c) << '\n';
    os << "mean\t" << report.mean_without << '\t' << report.mean_with << '\n';
}

}  // namespace moddrop::experiments
