#include "moddrop/temporal.hpp"

#include "moddrop/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace moddrop::temporal {

bool ScoreSequence::has(std::size_t i, std::size_t t) const {
    return available.empty() || available[i][t] != 0;
}

void ScoreSequence::validate() const {
    require(!scores.empty(), "ScoreSequence: no scales");
    require(scales.size() == scores.size() && weights.size() == scores.size(),
            "ScoreSequence: scales, weights and scores must have equal counts");
    require(available.empty() || available.size() == scores.size(),
            "ScoreSequence: availability needs one mask per scale");
    for (std::size_t i = 0; i < scores.size(); ++i) {
        require(scores[i].rows() == frames() && scores[i].cols() == classes(),
                "ScoreSequence: scale " + std::to_string(scales[i]) + " has shape " +
                    scores[i].shape_string());
        require(scores[i].all_finite(), "ScoreSequence: non-finite score");
        require(available.empty() || available[i].size() == frames(),
                "ScoreSequence: availability length mismatch");
    }
}

std::vector<double> aggregate_scores(const ScoreSequence& seq, std::size_t t) {
    seq.validate();
    require(t < seq.frames(), "aggregate_scores: frame " + std::to_string(t) + " out of range");
    std::vector<double> out(seq.classes(), 0.0);
    for (std::size_t i = 0; i < seq.scores.size(); ++i) {
        const std::size_t reach = 4 * seq.scales[i];
        const std::size_t first = t >= reach ? t - reach : 0;
        for (std::size_t u = first; u <= t; ++u) {
            if (!seq.has(i, u)) continue;
            const auto row = seq.scores[i].row(u);
            for (std::size_t k = 0; k < out.size(); ++k) out[k] += seq.weights[i] * row[k];
        }
    }
    return out;
}

std::vector<std::size_t> frame_labels(const ScoreSequence& seq) {
    std::vector<std::size_t> labels(seq.frames());
    for (std::size_t t = 0; t < labels.size(); ++t) labels[t] = argmax(aggregate_scores(seq, t));
    return labels;
}

std::size_t SegmentLabeling::extent() const {
    std::size_t n = frames;
    for (const auto& iv : intervals) n = std::max(n, iv.end + 1);
    return n;
}

void SegmentLabeling::validate() const {
    for (const auto& iv : intervals) {
        require(iv.start <= iv.end, "interval start " + std::to_string(iv.start) + " after end " +
                                        std::to_string(iv.end));
        require(frames == 0 || iv.end < frames,
                "interval end " + std::to_string(iv.end) + " beyond sequence length " +
                    std::to_string(frames));
    }
}

std::vector<std::uint8_t> SegmentLabeling::binary(std::size_t label, std::size_t length) const {
    std::vector<std::uint8_t> v(length, 0);
    for (const auto& iv : intervals) {
        if (iv.label != label) continue;
        require(iv.end < length, "interval exceeds requested length");
        std::fill(v.begin() + static_cast<std::ptrdiff_t>(iv.start),
                  v.begin() + static_cast<std::ptrdiff_t>(iv.end) + 1, 1);
    }
    return v;
}

double jaccard_index(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    require(a.size() == b.size(), "jaccard_index: lengths differ (" + std::to_string(a.size()) +
                                      " vs " + std::to_string(b.size()) + ")");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += (a[i] && b[i]);
        uni += (a[i] || b[i]);
    }
    return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

namespace {

struct PairScore {
    std::string sequence;
    std::size_t label;
    double jaccard;
};

std::vector<PairScore> pair_scores(const LabelingSet& truth, const LabelingSet& predicted) {
    for (const auto& [id, _] : predicted)
        if (!truth.contains(id)) throw InvalidArgument("mean_jaccard: unknown sequence id '" + id + "'");
    static const SegmentLabeling empty;
    std::vector<PairScore> out;
    for (const auto& [id, gt] : truth) {
        gt.validate();
        auto it = predicted.find(id);
        const SegmentLabeling& pr = it == predicted.end() ? empty : it->second;
        pr.validate();
        require(gt.frames == 0 || pr.extent() <= gt.frames,
                "mean_jaccard: prediction for '" + id + "' exceeds the sequence length");
        const std::size_t length = std::max(gt.extent(), pr.extent());
        std::set<std::size_t> labels;
        for (const auto& iv : gt.intervals) labels.insert(iv.label);
        for (const auto& iv : pr.intervals) labels.insert(iv.label);
        for (std::size_t c : labels)
            out.push_back({id, c, jaccard_index(gt.binary(c, length), pr.binary(c, length))});
    }
    return out;
}

}  // namespace

double mean_jaccard(const LabelingSet& truth, const LabelingSet& predicted) {
    const auto pairs = pair_scores(truth, predicted);
    if (pairs.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& p : pairs) sum += p.jaccard;
    return sum / static_cast<double>(pairs.size());
}

std::vector<ClassJaccard> per_class_jaccard(const LabelingSet& truth, const LabelingSet& predicted) {
    std::map<std::size_t, ClassJaccard> by_class;
    for (const auto& p : pair_scores(truth, predicted)) {
        auto& c = by_class[p.label];
        c.label = p.label;
        c.mean += p.jaccard;
        ++c.pairs;
    }
    std::vector<ClassJaccard> out;
    for (auto& [_, c] : by_class) {
        c.mean /= static_cast<double>(c.pairs);
        out.push_back(c);
    }
    return out;
}

std::vector<Interval> intervals_from_frame_labels(std::span<const std::size_t> labels,
                                                  std::size_t min_length) {
    std::vector<Interval> out;
    std::size_t t = 0;
    while (t < labels.size()) {
        std::size_t u = t;
        while (u + 1 < labels.size() && labels[u + 1] == labels[t]) ++u;
        if (labels[t] != 0 && u - t + 1 >= min_length) out.push_back({labels[t] - 1, t, u});
        t = u + 1;
    }
    return out;
}

std::vector<std::size_t> switch_points(std::span<const std::uint8_t> motion) {
    std::vector<std::size_t> out;
    for (std::size_t p = 1; p < motion.size(); ++p)
        if ((motion[p] != 0) != (motion[p - 1] != 0)) out.push_back(p);
    return out;
}

namespace {

std::size_t snap(std::size_t x, std::span<const std::size_t> switches, std::size_t vicinity) {
    auto it = std::lower_bound(switches.begin(), switches.end(), x);
    std::size_t best = x, best_d = vicinity + 1;
    if (it != switches.begin()) {
        const std::size_t d = x - *(it - 1);
        if (d <= vicinity) best = *(it - 1), best_d = d;
    }
    if (it != switches.end()) {
        const std::size_t d = *it - x;
        if (d <= vicinity && d < best_d) best = *it;
    }
    return best;
}

}  // namespace

std::vector<Interval> refine_boundaries(std::span<const Interval> intervals,
                                        std::span<const std::size_t> switches,
                                        std::size_t vicinity) {
    require(std::is_sorted(switches.begin(), switches.end()),
            "refine_boundaries: switch points must be sorted");
    std::vector<Interval> out;
    for (const auto& iv : intervals) {
        const std::size_t s = snap(iv.start, switches, vicinity);
        const std::size_t stop = snap(iv.end + 1, switches, vicinity);
        if (stop > s) out.push_back({iv.label, s, stop - 1});
    }
    return out;
}

// ---------------------------------------------------------------------------

MotionClassifier train_motion_classifier(const Matrix& poses, std::span<const std::size_t> labels,
                                         const MotionClassifierConfig& config) {
    require(poses.rows() == labels.size(), "train_motion_classifier: label count mismatch");
    require(poses.cols() == skeleton::kDynamicPoseSize,
            "train_motion_classifier: inputs must be 915-value dynamic poses");
    require(config.holdout_every >= 2, "train_motion_classifier: holdout_every must be >= 2");
    std::size_t positives = 0;
    for (auto y : labels) {
        require(y <= 1, "train_motion_classifier: labels must be 0 or 1");
        positives += y;
    }
    if (positives == 0 || positives == labels.size())
        throw InvalidArgument("train_motion_classifier: training set has a single class");

    std::vector<std::size_t> fit_idx, hold_idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
        (i % config.holdout_every == config.holdout_every - 1 ? hold_idx : fit_idx).push_back(i);
    auto take = [&](const std::vector<std::size_t>& idx, Matrix& x, std::vector<std::size_t>& y) {
        x = Matrix(idx.size(), poses.cols());
        y.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const auto r = poses.row(idx[i]);
            std::copy(r.begin(), r.end(), x.row(i).begin());
            y[i] = labels[idx[i]];
        }
    };
    Matrix fit_x, hold_x;
    std::vector<std::size_t> fit_y, hold_y;
    take(fit_idx, fit_x, fit_y);
    take(hold_idx, hold_x, hold_y);

    MotionClassifier mc;
    mc.standardizer.fit(fit_x);
    fit_x = mc.standardizer.apply(fit_x);
    hold_x = mc.standardizer.apply(hold_x);
    auto rng = SeededRng::stream(config.training.seed, 0x4D07);
    const PathTopology topo{skeleton::kDynamicPoseSize, {config.hidden}};
    mc.network = train_classifier(init_modality_classifier(topo, 2, rng), fit_x, fit_y, hold_x,
                                  hold_y, config.training, false, "motion", 0x4D07);
    const auto ev = evaluate_classifier(mc.network, hold_x, hold_y, config.training);
    mc.holdout_accuracy = 1.0 - ev.error_rate();
    return mc;
}

Matrix motion_posteriors(const MotionClassifier& clf, const Matrix& poses) {
    return classifier_forward(clf.network, clf.standardizer.apply(poses)).posterior;
}

// ---------------------------------------------------------------------------

LabelingSet read_labelings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    LabelingSet set;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        std::string id, extra;
        long long c = -1, s = -1, e = -1;
        if (!(ls >> id >> c >> s >> e) || (ls >> extra) || c < 0 || s < 0 || e < s)
            throw FormatError(path.string() + ":" + std::to_string(lineno) +
                              ": expected 'sequence_id class start end'");
        set[id].intervals.push_back({static_cast<std::size_t>(c), static_cast<std::size_t>(s),
                                     static_cast<std::size_t>(e)});
    }
    return set;
}

void write_labelings(const std::filesystem::path& path, const LabelingSet& set) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    for (const auto& [id, lab] : set)
        for (const auto& iv : lab.intervals)
            out << id << ' ' << iv.label << ' ' << iv.start << ' ' << iv.end << '\n';
}

// ---------------------------------------------------------------------------

void SyntheticConfig::validate() const {
    require(num_classes >= 1, "synthetic: need at least one gesture class");
    require(gesture_min_frames >= 2 && gesture_min_frames <= gesture_max_frames,
            "synthetic: bad gesture length range");
    require(rest_min_frames >= 1 && rest_min_frames <= rest_max_frames,
            "synthetic: bad rest length range");
    require(noise >= 0.0, "synthetic: noise must be non-negative");
}

namespace {

using skeleton::SkeletonFrame;
using skeleton::Vec3;

SkeletonFrame rest_pose() {
    using namespace skeleton;
    SkeletonFrame f;
    f[Head] = {0.0, 0.72, 0.0};
    f[ShoulderCenter] = {0.0, 0.50, 0.0};
    f[HipCenter] = {0.0, 0.0, 0.0};
    f[HipLeft] = {0.10, -0.06, 0.0};
    f[HipRight] = {-0.10, -0.06, 0.0};
    f[ShoulderLeft] = {0.18, 0.45, 0.0};
    f[ShoulderRight] = {-0.18, 0.45, 0.0};
    f[ElbowLeft] = {0.22, 0.20, 0.03};
    f[ElbowRight] = {-0.22, 0.20, 0.03};
    f[HandLeft] = {0.22, -0.02, 0.10};
    f[HandRight] = {-0.22, -0.02, 0.10};
    return f;
}

// Hand displacement of gesture `c` at phase u in [0, 1]; zero at both ends.
std::pair<Vec3, Vec3> gesture_offsets(std::size_t c, double u) {
    const double pi = std::numbers::pi;
    const double bump = std::sin(pi * u);
    const double amp = 1.0 + 0.3 * static_cast<double>(c / 4);
    Vec3 left = Vec3::Zero(), right = Vec3::Zero();
    switch (c % 4) {
        case 0:  // raise right hand
            right = {0.0, 0.6 * bump, 0.1 * bump};
            break;
        case 1:  // circle with the right hand
            right = {0.15 * std::sin(2 * pi * u), 0.15 * (1 - std::cos(2 * pi * u)) + 0.3 * bump,
                     0.25 * bump};
            break;
        case 2:  // wave with the left hand
            left = {0.15 * std::sin(4 * pi * u), 0.45 * bump, 0.1 * bump};
            break;
        default:  // push forward with both hands
            left = {0.0, 0.3 * bump, 0.4 * bump};
            right = left;
            break;
    }
    return {amp * left, amp * right};
}

}  // namespace

SyntheticSequence generate_synthetic_sequence(std::uint64_t seed, const SyntheticConfig& config) {
    using namespace skeleton;
    config.validate();
    SeededRng rng(seed);
    auto length = [&](std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); };

    const Vec3 origin(rng.uniform(-0.5, 0.5), rng.uniform(-0.2, 0.2), rng.uniform(2.0, 3.0));
    const double scale = rng.uniform(0.9, 1.1);
    const SkeletonFrame base = rest_pose();

    SyntheticSequence seq;
    auto emit = [&](const Vec3& dl, const Vec3& dr) {
        SkeletonFrame f = base;
        f[HandLeft] += dl;
        f[HandRight] += dr;
        f[ElbowLeft] += 0.5 * dl;
        f[ElbowRight] += 0.5 * dr;
        for (auto& j : f.joints) {
            j = origin + scale * j;
            if (config.noise > 0.0)
                j += config.noise * Vec3(rng.normal(), rng.normal(), rng.normal());
        }
        seq.frames.push_back(f);
    };
    auto rest = [&] {
        const std::size_t n = length(config.rest_min_frames, config.rest_max_frames);
        for (std::size_t i = 0; i < n; ++i) emit(Vec3::Zero(), Vec3::Zero());
    };

    rest();
    for (std::size_t g = 0; g < config.gestures; ++g) {
        const std::size_t c = rng.index(config.num_classes);
        const std::size_t n = length(config.gesture_min_frames, config.gesture_max_frames);
        const std::size_t start = seq.frames.size();
        for (std::size_t i = 0; i < n; ++i) {
            const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
            const auto [dl, dr] = gesture_offsets(c, u);
            emit(dl, dr);
        }
        seq.truth.intervals.push_back({c, start, start + n - 1});
        rest();
    }
    seq.truth.frames = seq.frames.size();
    return seq;
}

}  // namespace moddrop::temporal
