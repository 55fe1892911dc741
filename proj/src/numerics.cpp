#include "moddrop/numerics.hpp"

#include "moddrop/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace moddrop {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows * cols, "Matrix: data length " + std::to_string(data_.size()) +
                                             " does not match " + shape_string());
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        require(r.size() == cols_, "Matrix: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

namespace {

void check_inner(const char* op, const Matrix& a, const Matrix& b, std::size_t ka,
                 std::size_t kb) {
    if (ka != kb) {
        std::ostringstream os;
        os << op << ": dimension mismatch " << a.shape_string() << " vs " << b.shape_string();
        throw InvalidArgument(os.str());
    }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_inner("matmul", a, b, a.cols(), b.rows());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Matrix c(m, n);
    const double* bp = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a.data().data() + i * k;
        double* ci = c.data().data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double s = ai[p];
            if (s == 0.0) continue;
            const double* bk = bp + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += s * bk[j];
        }
    }
    return c;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    check_inner("matmul_at_b", a, b, a.rows(), b.rows());
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    Matrix c(m, n);
    double* cp = c.data().data();
    for (std::size_t p = 0; p < k; ++p) {
        const double* ap = a.data().data() + p * m;
        const double* bp = b.data().data() + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double s = ap[i];
            if (s == 0.0) continue;
            double* ci = cp + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += s * bp[j];
        }
    }
    return c;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    check_inner("matmul_a_bt", a, b, a.cols(), b.cols());
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    Matrix c(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a.data().data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b.data().data() + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            c(i, j) = acc;
        }
    }
    return c;
}

void add_row_vector(Matrix& m, std::span<const double> bias) {
    require(bias.size() == m.cols(), "add_row_vector: bias length " +
                                         std::to_string(bias.size()) + " vs " +
                                         m.shape_string());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
    }
}

std::vector<double> column_sums(const Matrix& m) {
    std::vector<double> out(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) out[j] += r[j];
    }
    return out;
}

Matrix apply_tanh(const Matrix& x) {
    Matrix y = x;
    for (double& v : y.data()) v = std::tanh(v);
    return y;
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.size());
    if (logits.empty()) return out;
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        out[j] = std::exp(logits[j] - mx);
        sum += out[j];
    }
    for (double& v : out) v /= sum;
    return out;
}

Matrix apply_softmax_rows(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto s = softmax(x.row(i));
        std::copy(s.begin(), s.end(), y.row(i).begin());
    }
    return y;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

SeededRng SeededRng::stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                            std::uint64_t c) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ (b + 0x632BE59BD9B4E019ULL));
    h = splitmix64(h ^ (c + 0x8CB92BA72F3D8DD7ULL));
    return SeededRng(h);
}

double SeededRng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SeededRng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::size_t SeededRng::index(std::size_t n) {
    require(n > 0, "SeededRng::index: empty range");
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::size_t>(x % n);
}

std::vector<std::uint8_t> bernoulli_mask(SeededRng& rng, std::size_t n, double p_keep) {
    require(p_keep >= 0.0 && p_keep <= 1.0,
            "bernoulli_mask: p_keep must be in [0,1], got " + std::to_string(p_keep));
    std::vector<std::uint8_t> mask(n);
    for (auto& m : mask) m = rng.uniform() < p_keep ? 1 : 0;
    return mask;
}

std::vector<double> gaussian_kernel(double sigma, std::size_t window) {
    require(window % 2 == 1, "gaussian_kernel: window must be odd, got " + std::to_string(window));
    require(sigma > 0.0, "gaussian_kernel: sigma must be positive");
    const auto half = static_cast<long>(window / 2);
    std::vector<double> k(window);
    double sum = 0.0;
    for (long i = -half; i <= half; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + half)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

Matrix gaussian_smooth_temporal(const Matrix& seq, double sigma, std::size_t window) {
    const auto kernel = gaussian_kernel(sigma, window);
    require(seq.rows() >= 1, "gaussian_smooth_temporal: empty sequence");
    const auto half = static_cast<long>(window / 2);
    const auto len = static_cast<long>(seq.rows());
    Matrix out(seq.rows(), seq.cols());
    for (long t = 0; t < len; ++t) {
        double wsum = 0.0;
        auto o = out.row(static_cast<std::size_t>(t));
        for (long j = -half; j <= half; ++j) {
            const long s = t + j;
            if (s < 0 || s >= len) continue;
            const double w = kernel[static_cast<std::size_t>(j + half)];
            wsum += w;
            auto in = seq.row(static_cast<std::size_t>(s));
            for (std::size_t c = 0; c < o.size(); ++c) o[c] += w * in[c];
        }
        for (double& v : o) v /= wsum;
    }
    return out;
}

}  // namespace moddrop
