#pragma once

// Dense row-major linear algebra, the reproducible random stream, and the
// small numeric helpers shared by every other header.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "spikereg/errors.hpp"

namespace spikereg {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data))
    {
        if (data_.size() != rows_ * cols_)
            throw ShapeError("matrix data length " + std::to_string(data_.size()) + " != " +
                             std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    Matrix(std::initializer_list<std::initializer_list<double>> rows)
        : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0)
    {
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_)
                throw ShapeError("ragged matrix initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n)
    {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const
    {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline bool same_shape(const Matrix& a, const Matrix& b) noexcept
{
    return a.rows() == b.rows() && a.cols() == b.cols();
}

inline Matrix transpose(const Matrix& m)
{
    Matrix t(m.cols(), m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c)
            t(c, r) = m(r, c);
    return t;
}

// Strided views used by the GEMM kernel; `ld` is the distance between rows.
struct ConstView {
    const double* data = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t ld = 0;
    double operator()(std::size_t r, std::size_t c) const { return data[r * ld + c]; }
};

struct MutableView {
    double* data = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t ld = 0;
    double& operator()(std::size_t r, std::size_t c) const { return data[r * ld + c]; }
    operator ConstView() const noexcept { return {data, rows, cols, ld}; }
};

inline ConstView view(const Matrix& m) { return {m.data(), m.rows(), m.cols(), m.cols()}; }
inline MutableView view(Matrix& m) { return {m.data(), m.rows(), m.cols(), m.cols()}; }

// Column block [col0, col0 + ncols) of a matrix.
inline ConstView column_block(const Matrix& m, std::size_t col0, std::size_t ncols)
{
    return {m.data() + col0, m.rows(), ncols, m.cols()};
}

// Row block [row0, row0 + nrows).
inline ConstView row_block(ConstView v, std::size_t row0, std::size_t nrows)
{
    return {v.data + row0 * v.ld, nrows, v.cols, v.ld};
}
inline MutableView row_block(MutableView v, std::size_t row0, std::size_t nrows)
{
    return {v.data + row0 * v.ld, nrows, v.cols, v.ld};
}

// Worker count for the GEMM row partition. Rows of C are computed
// independently, so any value yields identical results.
inline std::size_t& gemm_threads() noexcept
{
    static std::size_t n = 1;
    return n;
}

enum class Transpose { No, Yes };

namespace detail {

inline constexpr std::size_t kMr = 4;
inline constexpr std::size_t kNr = 8;
inline constexpr std::size_t kKc = 256;
inline constexpr std::size_t kMc = 64;
inline constexpr std::size_t kNc = 512;

// op(A)(i, k) for the two supported layouts.
inline double a_at(ConstView a, Transpose ta, std::size_t i, std::size_t k)
{
    return ta == Transpose::No ? a(i, k) : a(k, i);
}

inline void pack_a(ConstView a, Transpose ta, std::size_t i0, std::size_t mc, std::size_t k0,
                   std::size_t kc, double* out)
{
    for (std::size_t ip = 0; ip < mc; ip += kMr) {
        const std::size_t mr = std::min(kMr, mc - ip);
        for (std::size_t k = 0; k < kc; ++k) {
            for (std::size_t r = 0; r < mr; ++r)
                out[r] = a_at(a, ta, i0 + ip + r, k0 + k);
            for (std::size_t r = mr; r < kMr; ++r)
                out[r] = 0.0;
            out += kMr;
        }
    }
}

inline void pack_b(ConstView b, std::size_t k0, std::size_t kc, std::size_t j0, std::size_t nc,
                   double* out)
{
    for (std::size_t jp = 0; jp < nc; jp += kNr) {
        const std::size_t nr = std::min(kNr, nc - jp);
        for (std::size_t k = 0; k < kc; ++k) {
            const double* src = b.data + (k0 + k) * b.ld + j0 + jp;
            for (std::size_t c = 0; c < nr; ++c)
                out[c] = src[c];
            for (std::size_t c = nr; c < kNr; ++c)
                out[c] = 0.0;
            out += kNr;
        }
    }
}

// acc(r, c) = C(r, c) + sum_k ap[k][r] * bp[k][c], added one k at a time.
inline void micro_kernel(std::size_t kc, const double* __restrict ap, const double* __restrict bp,
                         double* c, std::size_t ldc, std::size_t mr, std::size_t nr)
{
    alignas(64) double acc[kMr][kNr];
    for (std::size_t r = 0; r < kMr; ++r)
        for (std::size_t q = 0; q < kNr; ++q)
            acc[r][q] = (r < mr && q < nr) ? c[r * ldc + q] : 0.0;
    for (std::size_t k = 0; k < kc; ++k) {
        const double* bk = bp + k * kNr;
        const double* ak = ap + k * kMr;
#pragma GCC unroll 4
        for (std::size_t r = 0; r < kMr; ++r) {
            const double av = ak[r];
#pragma GCC unroll 8
            for (std::size_t q = 0; q < kNr; ++q)
                acc[r][q] += av * bk[q];
        }
    }
    for (std::size_t r = 0; r < mr; ++r)
        for (std::size_t q = 0; q < nr; ++q)
            c[r * ldc + q] = acc[r][q];
}

inline void gemm_rows(Transpose ta, ConstView a, ConstView b, MutableView c, std::size_t i_begin,
                      std::size_t i_end, std::size_t k_dim)
{
    thread_local std::vector<double> apack(kMc * kKc);
    thread_local std::vector<double> bpack(kKc * kNc);
    for (std::size_t k0 = 0; k0 < k_dim; k0 += kKc) {
        const std::size_t kc = std::min(kKc, k_dim - k0);
        for (std::size_t j0 = 0; j0 < c.cols; j0 += kNc) {
            const std::size_t nc = std::min(kNc, c.cols - j0);
            pack_b(b, k0, kc, j0, nc, bpack.data());
            for (std::size_t i0 = i_begin; i0 < i_end; i0 += kMc) {
                const std::size_t mc = std::min(kMc, i_end - i0);
                pack_a(a, ta, i0, mc, k0, kc, apack.data());
                for (std::size_t ip = 0; ip < mc; ip += kMr) {
                    const std::size_t mr = std::min(kMr, mc - ip);
                    for (std::size_t jp = 0; jp < nc; jp += kNr) {
                        const std::size_t nr = std::min(kNr, nc - jp);
                        micro_kernel(kc, apack.data() + ip * kc, bpack.data() + jp * kc,
                                     c.data + (i0 + ip) * c.ld + j0 + jp, c.ld, mr, nr);
                    }
                }
            }
        }
    }
}

// Unblocked i-k-j loop for small products; same per-element order.
inline void gemm_small(Transpose ta, ConstView a, ConstView b, MutableView c, std::size_t m,
                       std::size_t k_dim)
{
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c.data + i * c.ld;
        for (std::size_t k = 0; k < k_dim; ++k) {
            const double av = a_at(a, ta, i, k);
            const double* bk = b.data + k * b.ld;
            for (std::size_t j = 0; j < c.cols; ++j)
                ci[j] += av * bk[j];
        }
    }
}

} // namespace detail

// C = op(A) * B (or C += op(A) * B when accumulate is set). Every element of
// C receives its products in increasing k order, starting from its previous
// value (or zero), so the result equals the naive triple loop bit for bit.
inline void gemm(Transpose ta, ConstView a, ConstView b, MutableView c, bool accumulate)
{
    const std::size_t m = ta == Transpose::No ? a.rows : a.cols;
    const std::size_t k = ta == Transpose::No ? a.cols : a.rows;
    if (b.rows != k || c.rows != m || c.cols != b.cols)
        throw ShapeError("gemm: op(A) is " + std::to_string(m) + "x" + std::to_string(k) +
                         ", B is " + std::to_string(b.rows) + "x" + std::to_string(b.cols) +
                         ", C is " + std::to_string(c.rows) + "x" + std::to_string(c.cols));
    if (!accumulate)
        for (std::size_t i = 0; i < m; ++i)
            std::fill_n(c.data + i * c.ld, c.cols, 0.0);
    if (m == 0 || k == 0 || c.cols == 0)
        return;

    if (m * k * c.cols <= 16384) {
        detail::gemm_small(ta, a, b, c, m, k);
        return;
    }
    const std::size_t workers = std::min(gemm_threads(), (m + detail::kMc - 1) / detail::kMc);
    if (workers <= 1) {
        detail::gemm_rows(ta, a, b, c, 0, m, k);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (m + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(m, lo + chunk);
        if (lo >= hi)
            break;
        pool.emplace_back([=] { detail::gemm_rows(ta, a, b, c, lo, hi, k); });
    }
    for (auto& t : pool)
        t.join();
}

inline Matrix matmul(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    Matrix c(a.rows(), b.cols());
    gemm(Transpose::No, view(a), view(b), view(c), false);
    return c;
}

// Time-major sequence [steps x batch x units]; row t * batch + b of the
// backing matrix holds sample b at step t.
class StateSequence {
public:
    StateSequence() = default;
    StateSequence(std::size_t steps, std::size_t batch, std::size_t units, double fill = 0.0)
        : steps_(steps), batch_(batch), values_(steps * batch, units, fill) {}

    std::size_t steps() const noexcept { return steps_; }
    std::size_t batch() const noexcept { return batch_; }
    std::size_t units() const noexcept { return values_.cols(); }
    bool empty() const noexcept { return values_.empty(); }

    std::span<double> at(std::size_t t, std::size_t b) { return values_.row(t * batch_ + b); }
    std::span<const double> at(std::size_t t, std::size_t b) const { return values_.row(t * batch_ + b); }

    // All samples of step t, contiguous.
    std::span<double> step(std::size_t t)
    {
        return {values_.data() + t * batch_ * units(), batch_ * units()};
    }
    std::span<const double> step(std::size_t t) const
    {
        return {values_.data() + t * batch_ * units(), batch_ * units()};
    }

    Matrix& matrix() noexcept { return values_; }
    const Matrix& matrix() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_.values(); }
    std::span<const double> values() const noexcept { return values_.values(); }

    bool operator==(const StateSequence&) const = default;

private:
    std::size_t steps_ = 0;
    std::size_t batch_ = 0;
    Matrix values_;
};

// xoshiro256** seeded through splitmix64:
//   splitmix64: x += 0x9e3779b97f4a7c15; z = x;
//               z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9;
//               z = (z ^ (z >> 27)) * 0x94d049bb133111eb; return z ^ (z >> 31)
//   state s[0..3] = four successive splitmix64 outputs of the seed
//   next: out = rotl(s1 * 5, 7) * 9; t = s1 << 17; s2 ^= s0; s3 ^= s1;
//         s1 ^= s2; s0 ^= s3; s2 ^= t; s3 = rotl(s3, 45)
//   uniform(): (next() >> 11) * 2^-53, in [0, 1)
class SeededRng {
public:
    using result_type = std::uint64_t;

    explicit SeededRng(std::uint64_t seed = 0) : seed_(seed)
    {
        std::uint64_t x = seed;
        for (auto& s : state_)
            s = splitmix64(x);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
        const std::uint64_t out = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return out;
    }

    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    // Integer in [0, n).
    std::size_t below(std::size_t n) noexcept
    {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n));
    }

    std::uint64_t seed() const noexcept { return seed_; }

    // Independent stream for (seed, stream id): seeded with the splitmix64
    // image of seed + (stream + 1) * 0x9e3779b97f4a7c15.
    static SeededRng stream(std::uint64_t seed, std::uint64_t stream_id) noexcept
    {
        std::uint64_t x = seed + (stream_id + 1) * 0x9e3779b97f4a7c15ULL;
        return SeededRng(splitmix64(x));
    }

    static std::uint64_t splitmix64(std::uint64_t& x) noexcept
    {
        std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_{};
};

// Fisher-Yates driven by SeededRng::below, so the permutation is
// reproducible from the recurrence above.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, SeededRng& rng)
{
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i)
        idx[i] = i;
    for (std::size_t i = n; i > 1; --i)
        std::swap(idx[i - 1], idx[rng.below(i)]);
    return idx;
}

inline Matrix uniform_init(std::size_t rows, std::size_t cols, double bound, SeededRng& rng)
{
    if (!(bound > 0.0))
        throw ConfigError("uniform_init: bound must be positive");
    Matrix m(rows, cols);
    for (auto& v : m.values())
        v = rng.uniform(-bound, bound);
    return m;
}

struct Moments {
    double mean = 0.0;
    double std = 0.0; // population standard deviation
};

inline Moments moments(std::span<const double> data)
{
    Moments m;
    if (data.empty())
        return m;
    double sum = 0.0;
    for (double v : data)
        sum += v;
    m.mean = sum / static_cast<double>(data.size());
    double sq = 0.0;
    for (double v : data)
        sq += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(sq / static_cast<double>(data.size()));
    return m;
}

inline void check_scale(double std)
{
    if (!(std > 0.0) || !std::isfinite(std))
        throw DegenerateScaleError("standardization scale must be positive, got " + std::to_string(std));
}

inline std::vector<double> standardize(std::span<const double> data, double mean, double std)
{
    check_scale(std);
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        out[i] = (data[i] - mean) / std;
    return out;
}

inline std::vector<double> destandardize(std::span<const double> data, double mean, double std)
{
    check_scale(std);
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        out[i] = data[i] * std + mean;
    return out;
}

} // namespace spikereg
