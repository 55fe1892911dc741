#pragma once

#include "moddrop/network.hpp"
#include "moddrop/numerics.hpp"
#include "moddrop/skeleton.hpp"
#include "moddrop/training.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace moddrop::temporal {

/// Per-frame class scores at several temporal scales. scores[i] is T x N for
/// scale scales[i]; available[i][t] = 0 marks frames without a score at that
/// scale (e.g. too little history for a dynamic pose).
struct ScoreSequence {
    std::vector<std::size_t> scales;
    std::vector<double> weights;  // mu_s, one per scale
    std::vector<Matrix> scores;
    std::vector<std::vector<std::uint8_t>> available;  // empty = all available

    std::size_t frames() const { return scores.empty() ? 0 : scores.front().rows(); }
    std::size_t classes() const { return scores.empty() ? 0 : scores.front().cols(); }
    bool has(std::size_t i, std::size_t t) const;
    void validate() const;
};

/// o_k(t) = sum_s mu_s sum_{j=-4s..0} o_{s,k}(t+j). Terms for frames before 0
/// or without a score are skipped.
std::vector<double> aggregate_scores(const ScoreSequence& seq, std::size_t t);
/// argmax_k o_k(t) for every frame.
std::vector<std::size_t> frame_labels(const ScoreSequence& seq);

/// Closed frame interval [start, end].
struct Interval {
    std::size_t label = 0;
    std::size_t start = 0;
    std::size_t end = 0;

    bool operator==(const Interval&) const = default;
};

struct SegmentLabeling {
    std::size_t frames = 0;  // sequence length; 0 = unknown
    std::vector<Interval> intervals;

    /// 1 for frames covered by an interval of `label`.
    std::vector<std::uint8_t> binary(std::size_t label, std::size_t length) const;
    std::size_t extent() const;  // max(frames, last end + 1)
    void validate() const;
};

/// Keyed by sequence id.
using LabelingSet = std::map<std::string, SegmentLabeling>;

/// |a and b| / |a or b|; 0 when both are empty.
double jaccard_index(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// Mean of J over all (sequence, class) pairs occurring in the ground truth
/// or the predictions. Truth sequences missing from `predicted` count as
/// empty predictions.
double mean_jaccard(const LabelingSet& truth, const LabelingSet& predicted);

struct ClassJaccard {
    std::size_t label = 0;
    double mean = 0.0;
    std::size_t pairs = 0;
};
/// Per-class means over sequences, in label order.
std::vector<ClassJaccard> per_class_jaccard(const LabelingSet& truth, const LabelingSet& predicted);

/// Runs of equal nonzero labels; label 0 is background. The interval label is
/// frame_label - 1. Runs shorter than min_length are dropped.
std::vector<Interval> intervals_from_frame_labels(std::span<const std::size_t> labels,
                                                  std::size_t min_length = 1);

/// Frames p where motion[p] != motion[p-1].
std::vector<std::size_t> switch_points(std::span<const std::uint8_t> motion);

/// An interval [s, e] has boundaries s and e + 1. Each boundary moves to the
/// nearest switch point within +-vicinity frames (the earlier one on ties);
/// intervals that become empty are dropped.
std::vector<Interval> refine_boundaries(std::span<const Interval> intervals,
                                        std::span<const std::size_t> switches,
                                        std::size_t vicinity = 10);

// ---------------------------------------------------------------------------
// Motion / rest classifier

struct MotionClassifierConfig {
    std::size_t hidden = 300;
    TrainingConfig training;
    std::size_t holdout_every = 5;  // every n-th sample is held out
};

struct MotionClassifier {
    skeleton::FeatureStandardizer standardizer;
    ModalityClassifier network;
    double holdout_accuracy = 0.0;
};

/// Rows of `poses` are stride-1 dynamic poses (915 values); labels are 1 for
/// activity, 0 for rest.
MotionClassifier train_motion_classifier(const Matrix& poses, std::span<const std::size_t> labels,
                                         const MotionClassifierConfig& config);
/// T x 2 posteriors (rest, motion).
Matrix motion_posteriors(const MotionClassifier& clf, const Matrix& poses);

// ---------------------------------------------------------------------------
// Labeling files: "sequence_id class start end" per line.

LabelingSet read_labelings(const std::filesystem::path& path);
void write_labelings(const std::filesystem::path& path, const LabelingSet& set);

// ---------------------------------------------------------------------------
// Synthetic gesture streams

struct SyntheticConfig {
    std::size_t num_classes = 4;
    std::size_t gestures = 6;  // per sequence
    std::size_t gesture_min_frames = 30;
    std::size_t gesture_max_frames = 50;
    std::size_t rest_min_frames = 20;
    std::size_t rest_max_frames = 40;
    double noise = 0.005;  // joint jitter std (metres)

    void validate() const;
};

struct SyntheticSequence {
    std::vector<skeleton::SkeletonFrame> frames;
    SegmentLabeling truth;
};

/// Rest, gesture, rest, ... , rest. Each gesture is a smooth hand/elbow
/// trajectory departing from and returning to the rest pose.
SyntheticSequence generate_synthetic_sequence(std::uint64_t seed, const SyntheticConfig& config);

}  // namespace moddrop::temporal
