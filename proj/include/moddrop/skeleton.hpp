#pragma once

#include "moddrop/numerics.hpp"

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace moddrop::skeleton {

using Vec3 = Eigen::Vector3d;

/// Upper-body joints. The numeric values fix the on-disk order of the 33
/// coordinates per frame (x, y, z per joint).
enum Joint : std::size_t {
    Head = 0,
    ShoulderCenter,
    HipCenter,
    HipLeft,
    HipRight,
    ShoulderLeft,
    ShoulderRight,
    ElbowLeft,
    ElbowRight,
    HandLeft,
    HandRight,
};

inline constexpr std::size_t kJoints = 11;
inline constexpr std::size_t kBones = 10;
inline constexpr std::size_t kCoords = 3 * kJoints;

inline constexpr std::size_t kInclinationCount = 9;
inline constexpr std::size_t kAzimuthCount = 9;
inline constexpr std::size_t kBendingCount = kJoints;
inline constexpr std::size_t kDistanceCount = kJoints * (kJoints - 1) / 2;
inline constexpr std::size_t kDescriptorSize =
    3 * kCoords + kInclinationCount + kAzimuthCount + kBendingCount + kDistanceCount;
inline constexpr std::size_t kDynamicPoseFrames = 5;
inline constexpr std::size_t kDynamicPoseSize = kDynamicPoseFrames * kDescriptorSize;

static_assert(kDistanceCount == 55);
static_assert(kDescriptorSize == 183);
static_assert(kDynamicPoseSize == 915);

/// Offsets of the descriptor subsets, in concatenation order.
struct DescriptorLayout {
    static constexpr std::size_t positions = 0;
    static constexpr std::size_t velocities = positions + kCoords;
    static constexpr std::size_t accelerations = velocities + kCoords;
    static constexpr std::size_t inclination = accelerations + kCoords;
    static constexpr std::size_t azimuth = inclination + kInclinationCount;
    static constexpr std::size_t bending = azimuth + kAzimuthCount;
    static constexpr std::size_t distances = bending + kBendingCount;
};

struct SkeletonFrame {
    std::array<Vec3, kJoints> joints;

    const Vec3& operator[](Joint j) const { return joints[j]; }
    Vec3& operator[](Joint j) { return joints[j]; }
    std::array<double, kCoords> flatten() const;
    static SkeletonFrame from_flat(std::span<const double> coords);
};

struct Bone {
    Joint parent;
    Joint child;
};

/// Kinematic tree rooted at HipCenter, with target bone lengths.
struct SkeletonTree {
    /// Bones listed parent-before-child (root to leaves).
    static const std::array<Bone, kBones>& bones();
    static Joint parent_of(Joint j);  // HipCenter is its own parent

    std::array<double, kBones> target_lengths{};

    /// Average bone lengths over training frames.
    static SkeletonTree fit(std::span<const SkeletonFrame> frames);
};

/// Joint triples (a, b, c); the angle is measured at b. The first seven are
/// anatomical, the last two virtual (hand-elbow-shoulder center).
const std::array<std::array<Joint, 3>, kInclinationCount>& angle_triples();

/// Per-joint values with a flag for degenerate geometry (value set to 0).
template <std::size_t N>
struct FlaggedValues {
    std::array<double, N> values{};
    std::array<bool, N> degenerate{};

    bool any_degenerate() const {
        for (bool d : degenerate)
            if (d) return true;
        return false;
    }
};

/// Orthonormal body frame from PCA of the torso joints.
struct BodyFrame {
    Vec3 up;     // first principal axis, towards the shoulders
    Vec3 left;   // second principal axis, towards the left shoulder
    Vec3 front;  // up x left
};

SkeletonFrame normalize_skeleton(const SkeletonFrame& frame, const SkeletonTree& tree);
double bone_length(const SkeletonFrame& frame, const Bone& bone);

/// Central differences in the interior, one-sided at the ends. Rows are
/// frames, columns the 33 flattened coordinates.
std::pair<Matrix, Matrix> joint_dynamics(const Matrix& positions);

FlaggedValues<kInclinationCount> inclination_angles(const SkeletonFrame& frame);
BodyFrame torso_frame(const SkeletonFrame& frame);
FlaggedValues<kAzimuthCount> azimuth_angles(const SkeletonFrame& frame);
FlaggedValues<kBendingCount> bending_angles(const SkeletonFrame& frame);
std::array<double, kDistanceCount> pairwise_distances(const SkeletonFrame& frame);

/// Signed angle in (-pi, pi] between the projections of `v` and `ref` on the
/// plane orthogonal to `axis`; 0 (and *degenerate set) when either projection vanishes.
double projected_angle(const Vec3& v, const Vec3& ref, const Vec3& axis, bool* degenerate = nullptr);

struct DescriptorOptions {
    double smoothing_sigma = 1.0;
    std::size_t smoothing_window = 5;
};

/// Full per-frame pipeline: normalize, smooth, differentiate, and assemble the
/// 183-value descriptors. Rows are frames.
Matrix compute_descriptors(std::span<const SkeletonFrame> frames, const SkeletonTree& tree,
                           const DescriptorOptions& options = {});

/// Concatenates descriptor rows t-4s, t-3s, ..., t.
std::vector<double> make_dynamic_pose(const Matrix& descriptors, std::size_t t, std::size_t stride);

/// Sum over consecutive samples of |dx| + |dy| (image-plane trajectory length).
double active_hand_delta(std::span<const Vec3> track);

enum class Hand { Left, Right };
/// Hand with the longer trajectory; ties go to the right hand.
Hand active_hand(std::span<const Vec3> left_track, std::span<const Vec3> right_track);

class FeatureStandardizer {
public:
    void fit(const Matrix& samples);
    std::vector<double> apply(std::span<const double> x) const;
    Matrix apply(const Matrix& samples) const;

    bool fitted() const { return fitted_; }
    const std::vector<double>& mean() const { return mean_; }
    const std::vector<double>& stddev() const { return std_; }
    /// Features whose training variance was zero (passed through with std 1).
    const std::vector<std::size_t>& constant_features() const { return constant_; }

private:
    bool fitted_ = false;
    std::vector<double> mean_, std_;
    std::vector<std::size_t> constant_;
};

/// One frame per line, 33 whitespace-separated reals in Joint order.
std::vector<SkeletonFrame> read_skeleton_stream(const std::filesystem::path& path);
void write_skeleton_stream(const std::filesystem::path& path, std::span<const SkeletonFrame> frames);

}  // namespace moddrop::skeleton
