#include "moddrop/config.hpp"
#include "moddrop/error.hpp"
#include "moddrop/experiments.hpp"
#include "moddrop/mnist.hpp"
#include "moddrop/model_io.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace moddrop;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "moddrop_harness_test";
    fs::create_directories(dir);
    return dir / name;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string error_of(auto&& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

mnist::IdxImages tiny_images(std::size_t n) {
    mnist::IdxImages im;
    im.count = n;
    im.rows = 28;
    im.cols = 28;
    for (std::size_t i = 0; i < n * 784; ++i) im.pixels.push_back(static_cast<std::uint8_t>(i * 7 % 256));
    return im;
}

int run_cli(const std::string& args, const fs::path& stdout_file) {
    const std::string cmd = std::string(MODDROP_CLI_PATH) + " " + args + " > " + stdout_file.string() + " 2>/dev/null";
    return std::system(cmd.c_str());
}

NetworkTopology small_topology() {
    NetworkTopology t;
    t.paths = {{5, {4}}, {3, {2, 3}}};
    t.num_classes = 3;
    return t;
}

}  // namespace

TEST_CASE("IDX round trip") {
    const auto im = tiny_images(3);
    const auto bytes = mnist::encode_idx_images(im);
    CHECK(bytes.size() == 16 + 3 * 784);
    const auto back = mnist::parse_idx_images(bytes);
    CHECK(back.count == 3);
    CHECK(back.pixels == im.pixels);
    const std::vector<std::uint8_t> labels{7, 0, 9};
    CHECK(mnist::parse_idx_labels(mnist::encode_idx_labels(labels)) == labels);
}

TEST_CASE("IDX errors carry byte offsets") {
    auto bytes = mnist::encode_idx_images(tiny_images(2));
    bytes.resize(bytes.size() - 10);
    const auto msg = error_of([&] { mnist::parse_idx_images(bytes); });
    CHECK(msg.find("byte offset") != std::string::npos);
    CHECK(msg.find(std::to_string(16 + 2 * 784)) != std::string::npos);
    CHECK(msg.find(std::to_string(bytes.size())) != std::string::npos);

    auto bad = mnist::encode_idx_images(tiny_images(1));
    bad[3] = 0x01;
    CHECK(error_of([&] { mnist::parse_idx_images(bad); }).find("magic") != std::string::npos);
    CHECK_THROWS_AS(mnist::parse_idx_images(std::vector<std::uint8_t>{0, 0, 8}), FormatError);
    CHECK_THROWS_AS(mnist::parse_idx_labels(mnist::encode_idx_images(tiny_images(1))), FormatError);
}

TEST_CASE("IDX files on disk") {
    const auto dir = scratch("idx");
    fs::create_directories(dir);
    const auto im = tiny_images(4);
    std::ofstream(dir / "t10k-images-idx3-ubyte", std::ios::binary)
        .write(reinterpret_cast<const char*>(mnist::encode_idx_images(im).data()), 16 + 4 * 784);
    const std::vector<std::uint8_t> labels{1, 2, 3, 4};
    const auto lb = mnist::encode_idx_labels(labels);
    std::ofstream(dir / "t10k-labels-idx1-ubyte", std::ios::binary)
        .write(reinterpret_cast<const char*>(lb.data()), static_cast<std::streamsize>(lb.size()));
    const auto set = mnist::load_idx(dir, "t10k");
    CHECK(set.images.rows() == 4);
    CHECK(set.images.cols() == 784);
    CHECK(set.labels == std::vector<std::size_t>{1, 2, 3, 4});
    CHECK(set.images(0, 1) == doctest::Approx(7.0 / 255.0));
    for (double v : set.images.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK_THROWS_AS(mnist::load_idx(dir, "train"), FormatError);
}

TEST_CASE("quarter split") {
    std::vector<double> img(784);
    for (std::size_t i = 0; i < 784; ++i) img[i] = static_cast<double>(i);
    const auto q = mnist::quarter_split(img, 5);
    CHECK(q.label == 5);
    CHECK(q.quarters[0][0] == 0.0);
    CHECK(q.quarters[1][0] == 14.0);
    CHECK(q.quarters[2][0] == 14.0 * 28);
    CHECK(q.quarters[3][195] == 783.0);
    CHECK(mnist::reassemble(q) == img);
    CHECK_THROWS_AS(mnist::quarter_split(std::vector<double>(100)), InvalidArgument);
}

TEST_CASE("quarter split over the full test set" * doctest::skip(!fs::exists(fs::path(MODDROP_MNIST_DIR) / "t10k-images-idx3-ubyte"))) {
    const auto test = mnist::load_idx(MODDROP_MNIST_DIR, "t10k");
    CHECK(test.images.rows() == 10000);
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < test.images.rows(); ++i) {
        const auto row = test.images.row(i);
        const auto back = mnist::reassemble(mnist::quarter_split(row, test.labels[i]));
        mismatches += !std::equal(back.begin(), back.end(), row.begin());
    }
    CHECK(mismatches == 0);
}

TEST_CASE("occlusion and pepper noise") {
    std::vector<double> img(784, 1.0);
    const auto q = mnist::quarter_split(img);
    CHECK(mnist::reassemble(mnist::occlude(q, std::vector<std::size_t>{})) == img);
    const auto all = mnist::occlude(q, std::vector<std::size_t>{0, 1, 2, 3});
    for (const auto& part : all.quarters)
        for (double v : part) CHECK(v == 0.0);
    const auto one = mnist::occlude(q, std::vector<std::size_t>{2});
    CHECK(one.quarters[1] == q.quarters[1]);

    SeededRng rng(80);
    const std::vector<std::size_t> seg{1};
    CHECK(mnist::reassemble(mnist::pepper_noise(q, seg, 0.0, rng)) == img);
    for (double v : mnist::pepper_noise(q, seg, 1.0, rng).quarters[1]) CHECK(v == 0.0);

    std::size_t zeroed = 0, total = 0;
    while (total < 100000) {
        const auto n = mnist::pepper_noise(q, seg, 0.5, rng);
        for (double v : n.quarters[1]) zeroed += v == 0.0;
        total += 196;
    }
    const double frac = static_cast<double>(zeroed) / static_cast<double>(total);
    CHECK(frac >= 0.49);
    CHECK(frac <= 0.51);
    CHECK_THROWS_AS(mnist::pepper_noise(q, seg, 1.5, rng), InvalidArgument);
}

TEST_CASE("model files") {
    SeededRng rng(81);
    const auto topo = small_topology();
    auto params = init_network(topo, rng);
    set_gamma(params, 0);
    const auto path = scratch("net.bin"), path2 = scratch("net2.bin");
    io::save_model(path, topo, params);
    const auto loaded = io::load_model(path);
    REQUIRE(loaded.network.has_value());
    CHECK(*loaded.network == params);
    io::save_model(path2, loaded.topology, *loaded.network);
    CHECK(slurp(path) == slurp(path2));

    std::vector<Matrix> x{Matrix(4, 5, 0.3), Matrix(4, 3, -0.2)};
    CHECK(forward(topo, params, x).posterior == forward(loaded.topology, *loaded.network, x).posterior);

    std::vector<ModalityClassifier> clfs;
    for (const auto& p : topo.paths) clfs.push_back(init_modality_classifier(p, 3, rng));
    io::save_classifiers(path, topo, clfs);
    CHECK(io::load_model(path).classifiers == clfs);

    auto bytes = io::serialize_network(topo, params);
    auto version_bad = bytes;
    version_bad.replace(version_bad.find(" 1\n"), 3, " 7\n");
    CHECK(error_of([&] { io::deserialize_model(version_bad); }).find("'version'") != std::string::npos);
    auto classes_bad = bytes;
    classes_bad.replace(classes_bad.find("classes 3"), 9, "classes x");
    CHECK(error_of([&] { io::deserialize_model(classes_bad); }).find("'classes'") != std::string::npos);
    auto magic_bad = bytes;
    magic_bad[0] = 'X';
    CHECK(error_of([&] { io::deserialize_model(magic_bad); }).find("'magic'") != std::string::npos);
    CHECK_THROWS_AS(io::deserialize_model(bytes.substr(0, bytes.size() - 3)), FormatError);
    CHECK_THROWS_AS(io::deserialize_model(bytes + "x"), FormatError);

    Matrix m{{1.5, -2.0}, {0.0, 1e-300}};
    CHECK(io::deserialize_matrix(io::serialize_matrix(m)) == m);
}

TEST_CASE("config files") {
    const auto cfg = Config::parse(
        "top = 1\n# comment\n[mnist]\nseeds = 1, 2,3\ninput_keep = 0.75 ; note\n\n[pipeline]\nseed=9\n");
    CHECK(cfg.get_size("top", 0) == 1);
    CHECK(cfg.get_u64_list("mnist.seeds", {}) == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(cfg.get_double("mnist.input_keep", 0) == 0.75);
    CHECK(cfg.get_u64("pipeline.seed", 0) == 9);
    CHECK(cfg.get_string("missing.key", "dflt") == "dflt");
    CHECK_THROWS_AS(Config::parse("[a]\nx=1\nx=2\n"), InvalidArgument);
    CHECK_THROWS_AS(Config::parse("no equals sign\n"), InvalidArgument);
    CHECK_THROWS_AS(cfg.get_double("mnist.seeds", 0), InvalidArgument);
    CHECK_THROWS_AS(cfg.reject_unknown({"top", "mnist.seeds"}), InvalidArgument);
    CHECK_NOTHROW(cfg.reject_unknown({"top", "mnist.seeds", "mnist.input_keep", "pipeline.seed"}));

    const auto e = experiments::MnistExperimentConfig::from_config(
        Config::parse("[mnist]\nmodes = plain, pretrain+dropout+moddrop\nseeds = 4\n"));
    REQUIRE(e.modes.size() == 2);
    CHECK_FALSE(e.modes[0].pretraining);
    CHECK(e.modes[1].moddrop);
    CHECK(e.seeds == std::vector<std::uint64_t>{4});
}

TEST_CASE("architecture strings and modes") {
    const auto t = experiments::parse_architecture("196x4-125x4-40-10");
    CHECK(t.modality_count() == 4);
    CHECK(t.paths[0].input_dim == 196);
    CHECK(t.paths[3].hidden == std::vector<std::size_t>{125});
    CHECK(t.num_classes == 10);
    CHECK(experiments::format_architecture(t) == "196x4-125x4-40-10");
    CHECK_THROWS_AS(experiments::parse_architecture("196x4-125x4-30-10"), InvalidArgument);
    CHECK_THROWS_AS(experiments::parse_architecture("nonsense"), InvalidArgument);

    CHECK(experiments::TrainingMode::parse("pretrain+dropout+moddrop").name() == "pretrain+dropout+moddrop");
    const auto plain = experiments::TrainingMode::parse("plain");
    CHECK_FALSE(plain.pretraining);
    CHECK_FALSE(plain.input_dropout);
    CHECK_THROWS_AS(experiments::TrainingMode::parse("pretrain+bogus"), InvalidArgument);
}

TEST_CASE("evaluation grid has the nine perturbation rows") {
    SeededRng rng(82);
    NetworkTopology topo;
    topo.paths.assign(4, {196, {8}});
    topo.num_classes = 10;
    const auto params = init_network(topo, rng);
    Dataset test;
    for (int k = 0; k < 4; ++k) {
        Matrix m(30, 196);
        for (double& v : m.data()) v = rng.uniform();
        test.modalities.push_back(m);
    }
    for (std::size_t i = 0; i < 30; ++i) test.labels.push_back(i % 10);
    const auto grid = experiments::evaluate_grid(topo, params, test, TrainingConfig{}, 0.5, 1);
    REQUIRE(grid.size() == 9);
    const std::vector<std::string> want{
        "All segments visible", "1 segment covered", "2 segments covered", "3 segments covered",
        "All clean", "1 segment corrupted", "2 segments corrupted", "3 segments corrupted",
        "All segments corrupted"};
    std::set<std::string> seen;
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(grid[i].condition == want[i]);
        seen.insert(grid[i].group + "/" + grid[i].condition);
        CHECK(grid[i].error_percent >= 0.0);
        CHECK(grid[i].error_percent <= 100.0);
    }
    CHECK(seen.size() == 9);
    CHECK(grid[0].error_percent == grid[4].error_percent);

    experiments::MnistReport report;
    experiments::MnistRun run;
    run.mode = experiments::TrainingMode::parse("pretrain+dropout");
    run.seed = 1;
    run.test_errors = 120;
    run.test_count = 10000;
    run.grid = grid;
    report.runs = {run};
    std::ostringstream os;
    experiments::write_mnist_report(os, report);
    for (const auto& w : want) CHECK(os.str().find(w) != std::string::npos);
}

TEST_CASE("gesture pipeline report") {
    experiments::GesturePipelineConfig cfg;
    cfg.train_sequences = 3;
    cfg.test_sequences = 2;
    cfg.gesture_hidden = 16;
    cfg.gesture_training.max_epochs = 5;
    cfg.motion.hidden = 16;
    cfg.motion.training.max_epochs = 4;
    cfg.seed = 3;
    const auto a = experiments::run_gesture_pipeline(cfg);
    const auto b = experiments::run_gesture_pipeline(cfg);
    std::ostringstream ra, rb;
    experiments::write_gesture_report(ra, a);
    experiments::write_gesture_report(rb, b);
    CHECK(ra.str() == rb.str());
    CHECK(a.truth.size() == 2);
    CHECK(a.mean_with >= 0.0);
    CHECK(a.mean_with <= 1.0);
    CHECK(ra.str().find("mean") != std::string::npos);
    for (std::size_t c = 0; c < cfg.synthetic.num_classes; ++c)
        CHECK(ra.str().find("\n" + std::to_string(c) + "\t") != std::string::npos);
}

TEST_CASE("CLI reports are byte-identical for identical flags") {
    const auto dir = scratch("cli");
    fs::create_directories(dir);
    {
        std::ofstream cfg(dir / "small.ini");
        cfg << "[pipeline]\ntrain_sequences = 2\ntest_sequences = 1\ngesture_hidden = 8\n"
               "gesture_epochs = 3\nmotion_hidden = 8\nmotion_epochs = 2\n";
    }
    const auto cfg = (dir / "small.ini").string();
    REQUIRE(run_cli("pipeline-run --seed 4 --config " + cfg + " --labels-dir " + (dir / "labels").string(),
                    dir / "run1.tsv") == 0);
    REQUIRE(run_cli("pipeline-run --seed 4 --config " + cfg, dir / "run2.tsv") == 0);
    CHECK(slurp(dir / "run1.tsv") == slurp(dir / "run2.tsv"));
    CHECK_FALSE(slurp(dir / "run1.tsv").empty());

    const auto truth = (dir / "labels" / "truth.txt").string();
    const auto pred = (dir / "labels" / "predicted_with_localization.txt").string();
    REQUIRE(run_cli("report --truth " + truth + " --pred " + pred, dir / "rep1.tsv") == 0);
    REQUIRE(run_cli("report --truth " + truth + " --pred " + pred, dir / "rep2.tsv") == 0);
    CHECK(slurp(dir / "rep1.tsv") == slurp(dir / "rep2.tsv"));

    const auto seq = temporal::generate_synthetic_sequence(2, {});
    skeleton::write_skeleton_stream(dir / "stream.txt", seq.frames);
    REQUIRE(run_cli("pose-extract --input " + (dir / "stream.txt").string(), dir / "pose1.tsv") == 0);
    REQUIRE(run_cli("pose-extract --input " + (dir / "stream.txt").string(), dir / "pose2.tsv") == 0);
    CHECK(slurp(dir / "pose1.tsv") == slurp(dir / "pose2.tsv"));

    CHECK(run_cli("pipeline-run --config " + (dir / "missing.ini").string(), dir / "err.tsv") != 0);
    {
        std::ofstream bad(dir / "bad.ini");
        bad << "[pipeline]\nno_such_key = 1\n";
    }
    CHECK(run_cli("pipeline-run --config " + (dir / "bad.ini").string(), dir / "err.tsv") != 0);
}

TEST_CASE("CLI MNIST report is deterministic" * doctest::skip(!fs::exists(fs::path(MODDROP_MNIST_DIR) / "t10k-images-idx3-ubyte"))) {
    const auto dir = scratch("cli_mnist");
    fs::create_directories(dir);
    {
        std::ofstream cfg(dir / "tiny.ini");
        cfg << "[mnist]\nmodes = pretrain+dropout+moddrop\ntrain_limit = 600\nvalidation_size = 200\n"
               "test_limit = 300\npretrain_epochs = 2\nfrozen_epochs = 1\nrelaxed_epochs = 2\n";
    }
    const std::string args = "mnist-experiment --seed 2 --data-dir " + std::string(MODDROP_MNIST_DIR) +
                             " --config " + (dir / "tiny.ini").string();
    REQUIRE(run_cli(args, dir / "a.tsv") == 0);
    REQUIRE(run_cli(args, dir / "b.tsv") == 0);
    const auto a = slurp(dir / "a.tsv");
    CHECK(a == slurp(dir / "b.tsv"));
    CHECK(a.find("1 segment covered") != std::string::npos);
}
