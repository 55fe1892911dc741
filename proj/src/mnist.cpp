#include "moddrop/mnist.hpp"

#include "moddrop/error.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

namespace moddrop::mnist {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    if (bytes.size() < offset + 4)
        throw FormatError("IDX header truncated at byte offset " + std::to_string(offset) +
                          ": expected " + std::to_string(offset + 4) + " bytes, have " +
                          std::to_string(bytes.size()));
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void check_magic(std::uint32_t got, std::uint32_t want) {
    if (got != want) {
        std::ostringstream os;
        os << "IDX bad magic at byte offset 0: expected 0x" << std::hex << want << ", got 0x"
           << got;
        throw FormatError(os.str());
    }
}

void check_payload(std::size_t have, std::size_t header, std::size_t payload) {
    if (have < header + payload)
        throw FormatError("IDX payload truncated at byte offset " + std::to_string(have) +
                          ": expected " + std::to_string(header + payload) + " bytes, have " +
                          std::to_string(have));
}

constexpr std::size_t quarter_of(std::size_t r, std::size_t c) {
    return (r < kQuarterSide ? 0 : 2) + (c < kQuarterSide ? 0 : 1);
}

}  // namespace

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
    check_magic(read_be32(bytes, 0), kImageMagic);
    IdxImages img;
    img.count = read_be32(bytes, 4);
    img.rows = read_be32(bytes, 8);
    img.cols = read_be32(bytes, 12);
    const std::size_t payload = img.count * img.rows * img.cols;
    check_payload(bytes.size(), 16, payload);
    img.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(payload));
    return img;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
    check_magic(read_be32(bytes, 0), kLabelMagic);
    const std::size_t count = read_be32(bytes, 4);
    check_payload(bytes.size(), 8, count);
    return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<long>(count)};
}

std::vector<std::uint8_t> encode_idx_images(const IdxImages& images) {
    std::vector<std::uint8_t> out;
    put_be32(out, kImageMagic);
    put_be32(out, static_cast<std::uint32_t>(images.count));
    put_be32(out, static_cast<std::uint32_t>(images.rows));
    put_be32(out, static_cast<std::uint32_t>(images.cols));
    out.insert(out.end(), images.pixels.begin(), images.pixels.end());
    return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
    std::vector<std::uint8_t> out;
    put_be32(out, kLabelMagic);
    put_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

IdxImages read_idx_images(const std::filesystem::path& path) {
    try {
        return parse_idx_images(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
    try {
        return parse_idx_labels(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

ImageSet load_idx(const std::filesystem::path& dir, const std::string& prefix) {
    const auto images = read_idx_images(dir / (prefix + "-images-idx3-ubyte"));
    const auto labels = read_idx_labels(dir / (prefix + "-labels-idx1-ubyte"));
    if (images.rows != kSide || images.cols != kSide)
        throw FormatError("expected 28x28 images, got " + std::to_string(images.rows) + "x" +
                          std::to_string(images.cols));
    if (images.count != labels.size())
        throw FormatError("image/label count mismatch: " + std::to_string(images.count) + " vs " +
                          std::to_string(labels.size()));
    ImageSet set;
    set.images = Matrix(images.count, kPixels);
    for (std::size_t i = 0; i < images.pixels.size(); ++i)
        set.images.data()[i] = images.pixels[i] / 255.0;
    set.labels.assign(labels.begin(), labels.end());
    return set;
}

QuarteredImage quarter_split(std::span<const double> image, std::size_t label) {
    require(image.size() == kPixels, "quarter_split: expected 784 pixels, got " +
                                         std::to_string(image.size()));
    QuarteredImage q;
    q.label = label;
    for (auto& v : q.quarters) v.reserve(kQuarterPixels);
    for (std::size_t r = 0; r < kSide; ++r)
        for (std::size_t c = 0; c < kSide; ++c) q.quarters[quarter_of(r, c)].push_back(image[r * kSide + c]);
    return q;
}

std::vector<double> reassemble(const QuarteredImage& q) {
    for (const auto& v : q.quarters)
        require(v.size() == kQuarterPixels, "reassemble: quarter must hold 196 pixels");
    std::vector<double> image(kPixels);
    for (std::size_t r = 0; r < kSide; ++r)
        for (std::size_t c = 0; c < kSide; ++c)
            image[r * kSide + c] =
                q.quarters[quarter_of(r, c)][(r % kQuarterSide) * kQuarterSide + c % kQuarterSide];
    return image;
}

Dataset to_quartered_dataset(const ImageSet& set) {
    Dataset d;
    const std::size_t n = set.images.rows();
    require(set.images.cols() == kPixels, "to_quartered_dataset: images must have 784 columns");
    for (std::size_t k = 0; k < kQuarters; ++k) d.modalities.emplace_back(n, kQuarterPixels);
    for (std::size_t i = 0; i < n; ++i) {
        const auto q = quarter_split(set.images.row(i));
        for (std::size_t k = 0; k < kQuarters; ++k)
            std::copy(q.quarters[k].begin(), q.quarters[k].end(), d.modalities[k].row(i).begin());
    }
    d.labels = set.labels;
    return d;
}

QuarteredImage occlude(const QuarteredImage& q, std::span<const std::size_t> segments) {
    QuarteredImage out = q;
    for (auto s : segments) {
        require(s < kQuarters, "occlude: segment index " + std::to_string(s) + " out of range");
        std::fill(out.quarters[s].begin(), out.quarters[s].end(), 0.0);
    }
    return out;
}

QuarteredImage pepper_noise(const QuarteredImage& q, std::span<const std::size_t> segments,
                            double rate, SeededRng& rng) {
    require(rate >= 0.0 && rate <= 1.0, "pepper_noise: rate outside [0,1]");
    QuarteredImage out = q;
    for (auto s : segments) {
        require(s < kQuarters, "pepper_noise: segment index " + std::to_string(s) + " out of range");
        for (double& v : out.quarters[s])
            if (rng.bernoulli(rate)) v = 0.0;
    }
    return out;
}

Dataset occlude(const Dataset& data, std::span<const std::size_t> segments) {
    Dataset out = data;
    for (auto s : segments) {
        require(s < out.modality_count(), "occlude: segment index out of range");
        out.modalities[s].fill(0.0);
    }
    return out;
}

Dataset pepper_noise(const Dataset& data, std::span<const std::size_t> segments, double rate,
                     SeededRng& rng) {
    require(rate >= 0.0 && rate <= 1.0, "pepper_noise: rate outside [0,1]");
    Dataset out = data;
    for (std::size_t i = 0; i < out.size(); ++i)
        for (auto s : segments) {
            require(s < out.modality_count(), "pepper_noise: segment index out of range");
            for (double& v : out.modalities[s].row(i))
                if (rng.bernoulli(rate)) v = 0.0;
        }
    return out;
}

}  // namespace moddrop::mnist
