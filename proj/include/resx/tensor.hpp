#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace resx {

// Thrown when operand shapes are incompatible.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Thrown when an evaluation produces a non-finite value. `index` identifies
// the failing stage (graph node or residual block, depending on caller).
class OverflowError : public std::runtime_error {
public:
    OverflowError(const std::string& what, std::size_t index)
        : std::runtime_error(what), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

// Dense rank-1 or rank-2 tensor of doubles, row-major. Immutable by
// convention once built (ops return fresh tensors).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::size_t len);
    static Tensor zeros(std::size_t rows, std::size_t cols);
    static Tensor vector(std::initializer_list<double> values);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Tensor identity(std::size_t dim);
    static Tensor basis(std::size_t dim, std::size_t index);

    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t rows() const;
    std::size_t cols() const;
    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    double operator()(std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t i) { return data_[i]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    bool all_finite() const noexcept;
    std::string shape_str() const;

    // Column j as a rank-1 tensor (rank-2 only).
    Tensor col(std::size_t j) const;

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    std::vector<std::size_t> shape_;
    std::size_t cols_ = 0;  // cached for rank-2 indexing
    std::vector<double> data_;
};

// Product of a rank-2 matrix with a rank-1 vector or rank-2 matrix.
// Accumulation is fixed left-to-right over the inner index, so results are
// reproducible bit-for-bit.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor transpose(const Tensor& a);
Tensor outer(const Tensor& u, const Tensor& v);  // u v^T
double dot(const Tensor& a, const Tensor& b);

double frobenius_norm_sq(const Tensor& a);
double norm2(const Tensor& a);

// Counter-based PRNG (SplitMix64, Steele et al. 2014). The draw sequence is
// a pure function of (seed, counter), so identical seeds give bit-identical
// streams and independent substreams come from split() without sequencing.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    double uniform();   // [0, 1)
    double gaussian();  // N(0, 1)

    // Independent stream derived from (this stream's seed, index).
    Rng split(std::uint64_t index) const;

    std::uint64_t seed() const noexcept { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// i.i.d. N(0, stddev^2) entries. stddev = 0 gives an all-zero tensor.
Tensor gaussian(Rng& rng, std::size_t len, double stddev);
Tensor gaussian(Rng& rng, std::size_t rows, std::size_t cols, double stddev);

namespace detail {
// Natural log built from IEEE-exact primitives (frexp, +, *, /) so gaussian
// draws do not depend on the platform's libm. Accurate to ~1 ulp over
// (0, inf); inputs <= 0 are the caller's bug.
double portable_log(double x);
}  // namespace detail

}  // namespace resx
