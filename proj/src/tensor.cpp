#include "resx/tensor.hpp"

#include <cmath>
#include <numeric>
#include <utility>

namespace resx {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t p = 1;
    for (std::size_t d : shape) p *= d;
    return p;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
    }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty() || shape_.size() > 2) {
        throw ShapeError("tensor rank must be 1 or 2");
    }
    for (std::size_t d : shape_) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive");
    }
    if (data_.size() != shape_product(shape_)) {
        throw ShapeError("data length does not match shape");
    }
    cols_ = shape_.size() == 2 ? shape_[1] : 0;
}

Tensor Tensor::zeros(std::size_t len) {
    return Tensor({len}, std::vector<double>(len, 0.0));
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
    return Tensor({rows, cols}, std::vector<double>(rows * cols, 0.0));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
    std::size_t len = values.size();
    return Tensor({len}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::identity(std::size_t dim) {
    Tensor t = zeros(dim, dim);
    for (std::size_t i = 0; i < dim; ++i) t(i, i) = 1.0;
    return t;
}

Tensor Tensor::basis(std::size_t dim, std::size_t index) {
    Tensor t = zeros(dim);
    t(index) = 1.0;
    return t;
}

std::size_t Tensor::rows() const {
    return shape_.empty() ? 0 : shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ShapeError("cols() requires a rank-2 tensor");
    return shape_[1];
}

bool Tensor::all_finite() const noexcept {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape_[i]);
    }
    return s + ")";
}

Tensor Tensor::col(std::size_t j) const {
    if (rank() != 2) throw ShapeError("col() requires a rank-2 tensor");
    Tensor out = zeros(rows());
    for (std::size_t i = 0; i < rows(); ++i) out(i) = (*this)(i, j);
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2) throw ShapeError("matmul: left operand must be rank 2");
    const std::size_t m = a.rows();
    const std::size_t k = a.cols();
    if (b.rank() == 1) {
        if (b.size() != k) {
            throw ShapeError("matmul: inner dimensions disagree " + a.shape_str() +
                             " vs " + b.shape_str());
        }
        Tensor out = Tensor::zeros(m);
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a(i, p) * b(p);
            out(i) = acc;
        }
        return out;
    }
    if (b.rows() != k) {
        throw ShapeError("matmul: inner dimensions disagree " + a.shape_str() +
                         " vs " + b.shape_str());
    }
    const std::size_t n = b.cols();
    Tensor out = Tensor::zeros(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a(i, p) * b(p, j);
            out(i, j) = acc;
        }
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    auto ob = b.data();
    auto oo = out.data();
    for (std::size_t i = 0; i < oo.size(); ++i) oo[i] += ob[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    auto ob = b.data();
    auto oo = out.data();
    for (std::size_t i = 0; i < oo.size(); ++i) oo[i] -= ob[i];
    return out;
}

Tensor scale(const Tensor& a, double factor) {
    Tensor out = a;
    for (double& v : out.data()) v *= factor;
    return out;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose requires a rank-2 tensor");
    Tensor out = Tensor::zeros(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    }
    return out;
}

Tensor outer(const Tensor& u, const Tensor& v) {
    if (u.rank() != 1 || v.rank() != 1) throw ShapeError("outer requires rank-1 operands");
    Tensor out = Tensor::zeros(u.size(), v.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        for (std::size_t j = 0; j < v.size(); ++j) out(i, j) = u(i) * v(j);
    }
    return out;
}

double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double acc = 0.0;
    auto da = a.data();
    auto db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) acc += da[i] * db[i];
    return acc;
}

double frobenius_norm_sq(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v * v;
    return acc;
}

double norm2(const Tensor& a) {
    return std::sqrt(frobenius_norm_sq(a));
}

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

namespace detail {

double portable_log(double x) {
    // x = m * 2^e with m in [0.5, 1); shift m into [sqrt(1/2), sqrt(2)) and
    // use log(m) = 2 atanh((m-1)/(m+1)) with a fixed-length series. Every
    // operation is IEEE-exact, so the result is platform-independent.
    constexpr double kLn2 = 0.6931471805599453094172321214581766;
    int e = 0;
    double m = std::frexp(x, &e);
    if (m < 0.70710678118654752440) {
        m *= 2.0;
        e -= 1;
    }
    const double t = (m - 1.0) / (m + 1.0);
    const double t2 = t * t;
    double series = 1.0 / 21.0;
    series = series * t2 + 1.0 / 19.0;
    series = series * t2 + 1.0 / 17.0;
    series = series * t2 + 1.0 / 15.0;
    series = series * t2 + 1.0 / 13.0;
    series = series * t2 + 1.0 / 11.0;
    series = series * t2 + 1.0 / 9.0;
    series = series * t2 + 1.0 / 7.0;
    series = series * t2 + 1.0 / 5.0;
    series = series * t2 + 1.0 / 3.0;
    series = series * t2 + 1.0;
    return 2.0 * t * series + static_cast<double>(e) * kLn2;
}

}  // namespace detail

Rng::Rng(std::uint64_t seed) : seed_(seed), state_(mix64(seed ^ kGolden)) {}

std::uint64_t Rng::next_u64() {
    state_ += kGolden;
    return mix64(state_);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Marsaglia polar method; needs only sqrt and portable_log, both of
    // which are bit-reproducible.
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * detail::portable_log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

Rng Rng::split(std::uint64_t index) const {
    return Rng(mix64(seed_ + kGolden * (index + 1)));
}

Tensor gaussian(Rng& rng, std::size_t len, double stddev) {
    Tensor out = Tensor::zeros(len);
    if (stddev == 0.0) return out;
    for (double& v : out.data()) v = stddev * rng.gaussian();
    return out;
}

Tensor gaussian(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
    Tensor out = Tensor::zeros(rows, cols);
    if (stddev == 0.0) return out;
    for (double& v : out.data()) v = stddev * rng.gaussian();
    return out;
}

}  // namespace resx
