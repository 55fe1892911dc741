#pragma once

#include "moddrop/numerics.hpp"
#include "moddrop/training.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace moddrop::mnist {

inline constexpr std::size_t kSide = 28;
inline constexpr std::size_t kPixels = kSide * kSide;
inline constexpr std::size_t kQuarterSide = 14;
inline constexpr std::size_t kQuarterPixels = kQuarterSide * kQuarterSide;
inline constexpr std::size_t kQuarters = 4;

inline constexpr std::uint32_t kImageMagic = 0x00000803;
inline constexpr std::uint32_t kLabelMagic = 0x00000801;

/// Raw IDX content. Pixels keep their original bytes.
struct IdxImages {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;  // count * rows * cols
};

IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);
IdxImages parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_idx_images(const IdxImages& images);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);

/// Images scaled to [0,1], one 784-vector per row.
struct ImageSet {
    Matrix images;
    std::vector<std::size_t> labels;
};

/// Loads `<prefix>-images-idx3-ubyte` / `<prefix>-labels-idx1-ubyte` from dir,
/// prefix being "train" or "t10k".
ImageSet load_idx(const std::filesystem::path& dir, const std::string& prefix);

/// Quarters in order top-left, top-right, bottom-left, bottom-right; each
/// quarter is row-major 14x14.
struct QuarteredImage {
    std::array<std::vector<double>, kQuarters> quarters;
    std::size_t label = 0;
};

QuarteredImage quarter_split(std::span<const double> image, std::size_t label = 0);
std::vector<double> reassemble(const QuarteredImage& q);

/// Four-modality dataset from an image set.
Dataset to_quartered_dataset(const ImageSet& set);

/// Segment indices are 0-based quarter ids.
QuarteredImage occlude(const QuarteredImage& q, std::span<const std::size_t> segments);
/// Each pixel of the listed segments is set to 0 with probability `rate`.
QuarteredImage pepper_noise(const QuarteredImage& q, std::span<const std::size_t> segments,
                            double rate, SeededRng& rng);

/// Dataset-level versions used by the evaluation grid.
Dataset occlude(const Dataset& data, std::span<const std::size_t> segments);
Dataset pepper_noise(const Dataset& data, std::span<const std::size_t> segments, double rate,
                     SeededRng& rng);

}  // namespace moddrop::mnist
