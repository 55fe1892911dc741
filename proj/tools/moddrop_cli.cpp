#include "moddrop/config.hpp"
#include "moddrop/error.hpp"
#include "moddrop/experiments.hpp"
#include "moddrop/mnist.hpp"
#include "moddrop/model_io.hpp"
#include "moddrop/skeleton.hpp"
#include "moddrop/temporal.hpp"
#include "moddrop/training.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

using namespace moddrop;

namespace {

struct CommonOptions {
    std::optional<std::uint64_t> seed;
    std::string config_path;
    std::string data_dir;
    std::string out;
};

const std::set<std::string> kKnownKeys = {
    "mnist.data_dir",          "mnist.architecture",         "mnist.modes",
    "mnist.input_keep",        "mnist.moddrop_keep",         "mnist.pretrain_epochs",
    "mnist.frozen_epochs",     "mnist.relaxed_epochs",       "mnist.validation_size",
    "mnist.train_limit",       "mnist.test_limit",           "mnist.pepper_rate",
    "mnist.seeds",             "training.learning_rate",     "training.lr_decay",
    "training.batch_size",     "training.patience",          "training.l2",
    "training.hidden_keep",    "synthetic.num_classes",      "synthetic.gestures",
    "synthetic.gesture_min_frames", "synthetic.gesture_max_frames", "synthetic.rest_min_frames",
    "synthetic.rest_max_frames", "synthetic.noise",          "pipeline.train_sequences",
    "pipeline.test_sequences", "pipeline.scales",            "pipeline.scale_weight",
    "pipeline.gesture_hidden", "pipeline.gesture_epochs",    "pipeline.gesture_learning_rate",
    "pipeline.motion_hidden",  "pipeline.motion_epochs",     "pipeline.motion_learning_rate",
    "pipeline.train_frame_stride", "pipeline.vicinity",      "pipeline.min_interval",
    "pipeline.smoothing_sigma", "pipeline.smoothing_window", "pipeline.seed",
};

Config load_config(const CommonOptions& o) {
    Config cfg;
    if (!o.config_path.empty()) cfg = Config::load(o.config_path);
    cfg.reject_unknown(kKnownKeys);
    if (!o.data_dir.empty()) cfg.set("mnist.data_dir", o.data_dir);
    if (o.seed) {
        cfg.set("mnist.seeds", std::to_string(*o.seed));
        cfg.set("pipeline.seed", std::to_string(*o.seed));
    }
    return cfg;
}

// Writes `text` to --out, or stdout when no path is given.
void emit(const CommonOptions& o, const std::string& text) {
    if (o.out.empty()) {
        std::cout << text;
        return;
    }
    io::write_file(o.out, text);
}

struct MnistData {
    NetworkTopology topo;
    Dataset train, valid, test;
};

MnistData load_mnist(const experiments::MnistExperimentConfig& c) {
    MnistData d;
    d.topo = experiments::parse_architecture(c.architecture);
    const auto full = mnist::to_quartered_dataset(mnist::load_idx(c.data_dir, "train"));
    require(c.validation_size < full.size(), "validation split larger than training data");
    const std::size_t vb = full.size() - c.validation_size;
    const std::size_t te = c.train_limit ? std::min(vb, c.train_limit) : vb;
    std::vector<std::size_t> ti, vi;
    for (std::size_t i = 0; i < te; ++i) ti.push_back(i);
    for (std::size_t i = vb; i < full.size(); ++i) vi.push_back(i);
    d.train = full.subset(ti);
    d.valid = full.subset(vi);
    d.test = mnist::to_quartered_dataset(mnist::load_idx(c.data_dir, "t10k"));
    if (c.test_limit && c.test_limit < d.test.size()) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < c.test_limit; ++i) idx.push_back(i);
        d.test = d.test.subset(idx);
    }
    return d;
}

TrainingConfig mode_training(const experiments::MnistExperimentConfig& c,
                             const experiments::TrainingMode& mode, std::size_t K) {
    TrainingConfig t = c.training;
    t.seed = c.seeds.front();
    t.input_keep = mode.input_dropout ? c.input_keep : 1.0;
    if (mode.moddrop) t.modality_keep.assign(K, c.moddrop_keep);
    return t;
}

EpochLogger stderr_log() {
    return [](const EpochRecord& r) { write_tsv_record(std::cerr, r); };
}

int cmd_pretrain(const CommonOptions& o, const std::string& mode_name) {
    const auto c = experiments::MnistExperimentConfig::from_config(load_config(o));
    c.validate();
    require(!o.out.empty(), "pretrain: --out is required");
    const auto mode = experiments::TrainingMode::parse(mode_name);
    const auto d = load_mnist(c);
    TrainingConfig t = mode_training(c, mode, d.topo.modality_count());
    t.max_epochs = c.pretrain_epochs;
    std::vector<ModalityClassifier> clfs;
    for (std::size_t k = 0; k < d.topo.modality_count(); ++k)
        clfs.push_back(pretrain_modality(k, d.topo, d.train, d.valid, t, stderr_log()));
    io::save_classifiers(o.out, d.topo, clfs);
    return 0;
}

int cmd_fuse(const CommonOptions& o, const std::string& mode_name, const std::string& model) {
    const auto c = experiments::MnistExperimentConfig::from_config(load_config(o));
    c.validate();
    require(!o.out.empty(), "fuse: --out is required");
    const auto mode = experiments::TrainingMode::parse(mode_name);
    const auto d = load_mnist(c);
    const auto saved = io::load_model(model);
    require(!saved.classifiers.empty(), "fuse: " + model + " does not hold pretrained classifiers");
    require(saved.topology.paths.size() == d.topo.paths.size(), "fuse: topology mismatch");
    auto params = init_shared_from_pretrained(saved.topology, saved.classifiers);
    StagePlan plan;
    if (c.frozen_epochs) plan.stages.push_back({StageKind::FuseFrozen, c.frozen_epochs, false});
    if (c.relaxed_epochs) plan.stages.push_back({StageKind::FuseRelaxed, c.relaxed_epochs, mode.moddrop});
    const auto t = mode_training(c, mode, d.topo.modality_count());
    params = fuse_train(saved.topology, std::move(params), d.train, d.valid, t, plan, stderr_log());
    io::save_model(o.out, saved.topology, params);
    return 0;
}

int cmd_eval(const CommonOptions& o, const std::string& model, double input_keep) {
    const auto c = experiments::MnistExperimentConfig::from_config(load_config(o));
    const auto saved = io::load_model(model);
    require(saved.network.has_value(), "eval: " + model + " does not hold a fused network");
    const auto d = load_mnist(c);
    TrainingConfig t = c.training;
    t.input_keep = input_keep;
    const auto grid = experiments::evaluate_grid(saved.topology, *saved.network, d.test, t,
                                                 c.pepper_rate, c.seeds.front());
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "group\tcondition\tcorrupted\terror_percent\n";
    for (const auto& r : grid)
        os << r.group << '\t' << r.condition << '\t' << r.corrupted << '\t' << r.error_percent << '\n';
    emit(o, os.str());
    return 0;
}

int cmd_mnist_experiment(const CommonOptions& o) {
    const auto c = experiments::MnistExperimentConfig::from_config(load_config(o));
    const auto report = experiments::run_mnist_experiment(c, &std::cerr);
    std::ostringstream os;
    experiments::write_mnist_report(os, report);
    emit(o, os.str());
    return 0;
}

int cmd_pose_extract(const CommonOptions& o, const std::string& input) {
    const auto cfg = experiments::GesturePipelineConfig::from_config(load_config(o));
    const auto frames = skeleton::read_skeleton_stream(input);
    const auto tree = skeleton::SkeletonTree::fit(frames);
    const auto desc = skeleton::compute_descriptors(frames, tree, cfg.descriptor);
    std::ostringstream os;
    os << std::setprecision(17);
    for (std::size_t t = 0; t < desc.rows(); ++t) {
        const auto r = desc.row(t);
        for (std::size_t j = 0; j < r.size(); ++j) os << (j ? "\t" : "") << r[j];
        os << '\n';
    }
    emit(o, os.str());
    return 0;
}

int cmd_pipeline_run(const CommonOptions& o, const std::string& labels_dir) {
    const auto c = experiments::GesturePipelineConfig::from_config(load_config(o));
    const auto report = experiments::run_gesture_pipeline(c);
    if (!labels_dir.empty()) {
        std::filesystem::create_directories(labels_dir);
        const std::filesystem::path dir(labels_dir);
        temporal::write_labelings(dir / "truth.txt", report.truth);
        temporal::write_labelings(dir / "predicted_without_localization.txt", report.predicted_without);
        temporal::write_labelings(dir / "predicted_with_localization.txt", report.predicted_with);
    }
    std::ostringstream os;
    experiments::write_gesture_report(os, report);
    emit(o, os.str());
    return 0;
}

int cmd_report(const CommonOptions& o, const std::string& truth_path, const std::string& pred_path) {
    const auto truth = temporal::read_labelings(truth_path);
    const auto pred = temporal::read_labelings(pred_path);
    std::ostringstream os;
    os << std::fixed << std::setprecision(6);
    os << "class\tpairs\tjaccard\n";
    for (const auto& c : temporal::per_class_jaccard(truth, pred))
        os << c.label << '\t' << c.pairs << '\t' << c.mean << '\n';
    os << "mean\t-\t" << temporal::mean_jaccard(truth, pred) << '\n';
    emit(o, os.str());
    return 0;
}

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--seed", o.seed, "Random seed (overrides config seeds)");
    cmd->add_option("--config", o.config_path, "Config file (key = value, [sections])");
    cmd->add_option("--data-dir", o.data_dir, "Directory with the MNIST IDX files");
    cmd->add_option("--out", o.out, "Output file (default: stdout)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"moddrop: multi-modal fusion training, MNIST quarters and gesture pipeline"};
    app.require_subcommand(1);
    CommonOptions o;
    std::string mode = "pretrain+dropout", model, input, labels_dir, truth, pred;
    double input_keep = 0.8;

    auto* pretrain = app.add_subcommand("pretrain", "Pretrain one classifier per MNIST quarter");
    add_common(pretrain, o);
    pretrain->add_option("--mode", mode, "Training mode, e.g. pretrain+dropout");

    auto* fuse = app.add_subcommand("fuse", "Fuse pretrained classifiers and train the shared layers");
    add_common(fuse, o);
    fuse->add_option("--mode", mode, "Training mode, e.g. pretrain+dropout+moddrop");
    fuse->add_option("--model", model, "Pretrained classifiers file")->required();

    auto* eval = app.add_subcommand("eval", "Evaluate a fused network on the occlusion/noise grid");
    add_common(eval, o);
    eval->add_option("--model", model, "Fused network file")->required();
    eval->add_option("--input-keep", input_keep, "Input keep probability used in training");

    auto* exp = app.add_subcommand("mnist-experiment", "Train and evaluate the configured modes");
    add_common(exp, o);

    auto* pose = app.add_subcommand("pose-extract", "Per-frame pose descriptors of a skeleton stream");
    add_common(pose, o);
    pose->add_option("--input", input, "Skeleton stream (33 reals per line)")->required();

    auto* pipe = app.add_subcommand("pipeline-run", "Synthetic gesture pipeline with Jaccard scoring");
    add_common(pipe, o);
    pipe->add_option("--labels-dir", labels_dir, "Also write truth and prediction labelings here");

    auto* report = app.add_subcommand("report", "Mean Jaccard of prediction vs truth labeling files");
    add_common(report, o);
    report->add_option("--truth", truth, "Ground-truth labeling file")->required();
    report->add_option("--pred", pred, "Prediction labeling file")->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (*pretrain) return cmd_pretrain(o, mode);
        if (*fuse) return cmd_fuse(o, mode, model);
        if (*eval) return cmd_eval(o, model, input_keep);
        if (*exp) return cmd_mnist_experiment(o);
        if (*pose) return cmd_pose_extract(o, input);
        if (*pipe) return cmd_pipeline_run(o, labels_dir);
        if (*report) return cmd_report(o, truth, pred);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
