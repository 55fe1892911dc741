#include "moddrop/skeleton.hpp"

#include "moddrop/error.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace moddrop::skeleton {

namespace {

constexpr double kTiny = 1e-12;

double angle_between(const Vec3& u, const Vec3& v, bool& degenerate) {
    const double nu = u.norm(), nv = v.norm();
    if (nu < kTiny || nv < kTiny) {
        degenerate = true;
        return 0.0;
    }
    const double c = std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
    return std::acos(c);
}

}  // namespace

std::array<double, kCoords> SkeletonFrame::flatten() const {
    std::array<double, kCoords> out{};
    for (std::size_t j = 0; j < kJoints; ++j)
        for (std::size_t d = 0; d < 3; ++d) out[3 * j + d] = joints[j][static_cast<Eigen::Index>(d)];
    return out;
}

SkeletonFrame SkeletonFrame::from_flat(std::span<const double> coords) {
    require(coords.size() == kCoords, "skeleton frame needs 33 coordinates, got " +
                                          std::to_string(coords.size()));
    SkeletonFrame f;
    for (std::size_t j = 0; j < kJoints; ++j) f.joints[j] = Vec3(coords[3 * j], coords[3 * j + 1], coords[3 * j + 2]);
    return f;
}

const std::array<Bone, kBones>& SkeletonTree::bones() {
    static const std::array<Bone, kBones> b{{
        {HipCenter, ShoulderCenter},
        {HipCenter, HipLeft},
        {HipCenter, HipRight},
        {ShoulderCenter, Head},
        {ShoulderCenter, ShoulderLeft},
        {ShoulderCenter, ShoulderRight},
        {ShoulderLeft, ElbowLeft},
        {ShoulderRight, ElbowRight},
        {ElbowLeft, HandLeft},
        {ElbowRight, HandRight},
    }};
    return b;
}

Joint SkeletonTree::parent_of(Joint j) {
    for (const auto& b : bones())
        if (b.child == j) return b.parent;
    return HipCenter;
}

SkeletonTree SkeletonTree::fit(std::span<const SkeletonFrame> frames) {
    require(!frames.empty(), "SkeletonTree::fit: no frames");
    SkeletonTree tree;
    for (std::size_t i = 0; i < kBones; ++i) {
        double sum = 0.0;
        for (const auto& f : frames) sum += bone_length(f, bones()[i]);
        tree.target_lengths[i] = sum / static_cast<double>(frames.size());
    }
    return tree;
}

const std::array<std::array<Joint, 3>, kInclinationCount>& angle_triples() {
    static const std::array<std::array<Joint, 3>, kInclinationCount> t{{
        {HipCenter, ShoulderCenter, Head},
        {HipCenter, ShoulderCenter, ShoulderLeft},
        {HipCenter, ShoulderCenter, ShoulderRight},
        {ShoulderCenter, ShoulderLeft, ElbowLeft},
        {ShoulderCenter, ShoulderRight, ElbowRight},
        {ShoulderLeft, ElbowLeft, HandLeft},
        {ShoulderRight, ElbowRight, HandRight},
        {HandLeft, ElbowLeft, ShoulderCenter},
        {HandRight, ElbowRight, ShoulderCenter},
    }};
    return t;
}

double bone_length(const SkeletonFrame& frame, const Bone& bone) {
    return (frame[bone.child] - frame[bone.parent]).norm();
}

SkeletonFrame normalize_skeleton(const SkeletonFrame& frame, const SkeletonTree& tree) {
    SkeletonFrame centered;
    const Vec3 root = frame[HipCenter];
    for (std::size_t j = 0; j < kJoints; ++j) centered.joints[j] = frame.joints[j] - root;
    SkeletonFrame out;
    out[HipCenter] = Vec3::Zero();
    const auto& bones = SkeletonTree::bones();
    for (std::size_t i = 0; i < kBones; ++i) {
        const Vec3 d = centered[bones[i].child] - centered[bones[i].parent];
        const double len = d.norm();
        if (len < kTiny)
            throw InvalidArgument("normalize_skeleton: zero-length bone " +
                                  std::to_string(bones[i].parent) + "->" +
                                  std::to_string(bones[i].child));
        // Parent already placed; the child subtree follows rigidly because
        // every descendant is positioned from its own (original) direction.
        out[bones[i].child] = out[bones[i].parent] + d * (tree.target_lengths[i] / len);
    }
    return out;
}

std::pair<Matrix, Matrix> joint_dynamics(const Matrix& x) {
    const std::size_t T = x.rows();
    require(T >= 3, "joint_dynamics: need at least 3 frames, got " + std::to_string(T));
    Matrix v(T, x.cols()), a(T, x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) {
        for (std::size_t t = 1; t + 1 < T; ++t) {
            v(t, c) = (x(t + 1, c) - x(t - 1, c)) / 2.0;
            a(t, c) = x(t + 1, c) - 2.0 * x(t, c) + x(t - 1, c);
        }
        v(0, c) = x(1, c) - x(0, c);
        v(T - 1, c) = x(T - 1, c) - x(T - 2, c);
        a(0, c) = x(2, c) - 2.0 * x(1, c) + x(0, c);
        a(T - 1, c) = x(T - 1, c) - 2.0 * x(T - 2, c) + x(T - 3, c);
    }
    return {std::move(v), std::move(a)};
}

FlaggedValues<kInclinationCount> inclination_angles(const SkeletonFrame& frame) {
    FlaggedValues<kInclinationCount> out;
    const auto& triples = angle_triples();
    for (std::size_t i = 0; i < triples.size(); ++i) {
        const auto [a, b, c] = triples[i];
        bool deg = false;
        out.values[i] = angle_between(frame[a] - frame[b], frame[c] - frame[b], deg);
        out.degenerate[i] = deg;
    }
    return out;
}

BodyFrame torso_frame(const SkeletonFrame& f) {
    const std::array<Vec3, 6> pts{f[Head],         f[ShoulderCenter], f[ShoulderLeft],
                                  f[ShoulderRight], f[HipCenter],     (f[HipLeft] + f[HipRight]) / 2.0};
    Vec3 mean = Vec3::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    // Eigenvalues ascending: column 2 is the principal axis.
    const auto& lambda = eig.eigenvalues();
    if (lambda(1) <= 1e-9 * std::max(lambda(2), 1.0) || lambda(2) <= kTiny)
        throw InvalidArgument("torso_frame: torso joints are rank deficient");
    BodyFrame bf;
    bf.up = eig.eigenvectors().col(2);
    bf.left = eig.eigenvectors().col(1);
    if (bf.up.dot(f[ShoulderCenter] - f[HipCenter]) < 0.0) bf.up = -bf.up;
    if (bf.left.dot(f[ShoulderLeft] - f[ShoulderRight]) < 0.0) bf.left = -bf.left;
    bf.front = bf.up.cross(bf.left);
    return bf;
}

double projected_angle(const Vec3& v, const Vec3& ref, const Vec3& axis, bool* degenerate) {
    const double na = axis.norm();
    if (na < kTiny) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    const Vec3 n = axis / na;
    const Vec3 vp = v - v.dot(n) * n;
    const Vec3 rp = ref - ref.dot(n) * n;
    if (vp.norm() < kTiny || rp.norm() < kTiny) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    double ang = std::atan2(n.dot(rp.cross(vp)), rp.dot(vp));
    if (ang <= -std::numbers::pi) ang = std::numbers::pi;
    return ang;
}

FlaggedValues<kAzimuthCount> azimuth_angles(const SkeletonFrame& frame) {
    const BodyFrame body = torso_frame(frame);
    FlaggedValues<kAzimuthCount> out;
    const auto& triples = angle_triples();
    for (std::size_t i = 0; i < triples.size(); ++i) {
        const auto [a, b, c] = triples[i];
        const Vec3 parent = frame[b] - frame[a];
        const Vec3 child = frame[c] - frame[b];
        // Reference: the torso normal, or the up axis when the parent bone
        // is (nearly) along the normal.
        const Vec3 n = parent.normalized();
        const Vec3 ref = (body.front - body.front.dot(n) * n).norm() > 1e-6 ? body.front : body.up;
        bool deg = false;
        out.values[i] = projected_angle(child, ref, parent, &deg);
        out.degenerate[i] = deg;
    }
    return out;
}

FlaggedValues<kBendingCount> bending_angles(const SkeletonFrame& frame) {
    const BodyFrame body = torso_frame(frame);
    FlaggedValues<kBendingCount> out;
    const Vec3 root = frame[HipCenter];
    for (std::size_t j = 0; j < kJoints; ++j) {
        bool deg = false;
        out.values[j] = angle_between(body.front, frame.joints[j] - root, deg);
        out.degenerate[j] = deg;
    }
    return out;
}

std::array<double, kDistanceCount> pairwise_distances(const SkeletonFrame& frame) {
    std::array<double, kDistanceCount> out{};
    std::size_t n = 0;
    for (std::size_t i = 0; i < kJoints; ++i)
        for (std::size_t j = i + 1; j < kJoints; ++j) out[n++] = (frame.joints[i] - frame.joints[j]).norm();
    return out;
}

Matrix compute_descriptors(std::span<const SkeletonFrame> frames, const SkeletonTree& tree,
                           const DescriptorOptions& options) {
    const std::size_t T = frames.size();
    require(T >= 3, "compute_descriptors: need at least 3 frames");
    Matrix positions(T, kCoords);
    for (std::size_t t = 0; t < T; ++t) {
        const auto flat = normalize_skeleton(frames[t], tree).flatten();
        std::copy(flat.begin(), flat.end(), positions.row(t).begin());
    }
    positions = gaussian_smooth_temporal(positions, options.smoothing_sigma, options.smoothing_window);
    const auto [vel, acc] = joint_dynamics(positions);

    using L = DescriptorLayout;
    Matrix out(T, kDescriptorSize);
    for (std::size_t t = 0; t < T; ++t) {
        auto row = out.row(t);
        const auto p = positions.row(t);
        std::copy(p.begin(), p.end(), row.begin() + L::positions);
        std::copy(vel.row(t).begin(), vel.row(t).end(), row.begin() + L::velocities);
        std::copy(acc.row(t).begin(), acc.row(t).end(), row.begin() + L::accelerations);
        const auto frame = SkeletonFrame::from_flat(p);
        const auto inc = inclination_angles(frame).values;
        const auto az = azimuth_angles(frame).values;
        const auto bend = bending_angles(frame).values;
        const auto dist = pairwise_distances(frame);
        std::copy(inc.begin(), inc.end(), row.begin() + L::inclination);
        std::copy(az.begin(), az.end(), row.begin() + L::azimuth);
        std::copy(bend.begin(), bend.end(), row.begin() + L::bending);
        std::copy(dist.begin(), dist.end(), row.begin() + L::distances);
    }
    return out;
}

std::vector<double> make_dynamic_pose(const Matrix& descriptors, std::size_t t, std::size_t stride) {
    require(stride >= 1, "make_dynamic_pose: stride must be positive");
    require(descriptors.cols() == kDescriptorSize, "make_dynamic_pose: descriptors must have 183 columns");
    const std::size_t span = (kDynamicPoseFrames - 1) * stride;
    require(t < descriptors.rows() && t >= span,
            "make_dynamic_pose: frame " + std::to_string(t) + " lacks " + std::to_string(span) +
                " frames of history");
    std::vector<double> out;
    out.reserve(kDynamicPoseSize);
    for (std::size_t i = 0; i < kDynamicPoseFrames; ++i) {
        const auto row = descriptors.row(t - span + i * stride);
        out.insert(out.end(), row.begin(), row.end());
    }
    return out;
}

double active_hand_delta(std::span<const Vec3> track) {
    double delta = 0.0;
    for (std::size_t t = 1; t < track.size(); ++t)
        delta += std::abs(track[t].x() - track[t - 1].x()) + std::abs(track[t].y() - track[t - 1].y());
    return delta;
}

Hand active_hand(std::span<const Vec3> left_track, std::span<const Vec3> right_track) {
    return active_hand_delta(left_track) > active_hand_delta(right_track) ? Hand::Left : Hand::Right;
}

void FeatureStandardizer::fit(const Matrix& samples) {
    require(samples.rows() >= 1, "FeatureStandardizer::fit: no samples");
    const std::size_t n = samples.rows(), d = samples.cols();
    mean_ = column_sums(samples);
    for (double& m : mean_) m /= static_cast<double>(n);
    std_.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double e = samples(i, j) - mean_[j];
            std_[j] += e * e;
        }
    constant_.clear();
    for (std::size_t j = 0; j < d; ++j) {
        std_[j] = std::sqrt(std_[j] / static_cast<double>(n));
        if (std_[j] <= kTiny * std::max(1.0, std::abs(mean_[j]))) {
            std_[j] = 1.0;
            constant_.push_back(j);
        }
    }
    fitted_ = true;
}

std::vector<double> FeatureStandardizer::apply(std::span<const double> x) const {
    require(fitted_, "FeatureStandardizer::apply called before fit");
    require(x.size() == mean_.size(), "FeatureStandardizer::apply: dimension mismatch");
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean_[j]) / std_[j];
    return out;
}

Matrix FeatureStandardizer::apply(const Matrix& samples) const {
    Matrix out(samples.rows(), samples.cols());
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        const auto r = apply(samples.row(i));
        std::copy(r.begin(), r.end(), out.row(i).begin());
    }
    return out;
}

std::vector<SkeletonFrame> read_skeleton_stream(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::vector<SkeletonFrame> frames;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        std::vector<double> coords;
        double v = 0.0;
        while (ls >> v) coords.push_back(v);
        if (!ls.eof() || coords.size() != kCoords)
            throw FormatError(path.string() + ":" + std::to_string(lineno) +
                              ": expected 33 numbers, got " + std::to_string(coords.size()));
        frames.push_back(SkeletonFrame::from_flat(coords));
    }
    return frames;
}

void write_skeleton_stream(const std::filesystem::path& path, std::span<const SkeletonFrame> frames) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << std::setprecision(17);
    for (const auto& f : frames) {
        const auto flat = f.flatten();
        for (std::size_t i = 0; i < flat.size(); ++i) out << (i ? " " : "") << flat[i];
        out << '\n';
    }
}

}  // namespace moddrop::skeleton
