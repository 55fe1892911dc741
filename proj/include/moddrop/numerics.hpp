#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace moddrop {

/// Dense row-major matrix of doubles.
///
/// All products below accumulate in a fixed order (row-major, ascending inner
/// index), so a given build produces bit-identical results for identical
/// inputs.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double value);
    bool all_finite() const;
    std::string shape_string() const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// a (m×k) · b (k×n)
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ · b for a (k×m), b (k×n). Rows of `a` that are zero are skipped.
Matrix matmul_at_b(const Matrix& a, const Matrix& b);
/// a · bᵀ for a (m×k), b (n×k).
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

/// Adds `bias` to every row.
void add_row_vector(Matrix& m, std::span<const double> bias);
/// Column sums, accumulated top to bottom.
std::vector<double> column_sums(const Matrix& m);

Matrix apply_tanh(const Matrix& x);
/// Row-wise softmax with max subtraction.
Matrix apply_softmax_rows(const Matrix& x);
std::vector<double> softmax(std::span<const double> logits);

/// Deterministic random source.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Floating-point draws are derived from raw engine words here
/// rather than through <random> distributions, whose algorithms are
/// implementation-defined. Independent streams are obtained with
/// `SeededRng::stream`, which hashes (seed, tags...) through SplitMix64.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed);

    /// Stream for (seed, a, b, c): e.g. (seed, epoch, batch, purpose).
    static SeededRng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                            std::uint64_t c = 0);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller.
    double normal();
    bool bernoulli(double p_true) { return uniform() < p_true; }
    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// n independent 0/1 entries, each 1 with probability p_keep.
std::vector<std::uint8_t> bernoulli_mask(SeededRng& rng, std::size_t n, double p_keep);

/// Normalized Gaussian taps, `window` odd, centered.
std::vector<double> gaussian_kernel(double sigma, std::size_t window);

/// Per-column 1-D Gaussian convolution along rows (time). Taps falling outside
/// the sequence are dropped and the remaining weights renormalized.
Matrix gaussian_smooth_temporal(const Matrix& seq, double sigma, std::size_t window);

}  // namespace moddrop
