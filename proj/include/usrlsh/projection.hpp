#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "usrlsh/common.hpp"
#include "usrlsh/random.hpp"

namespace usrlsh {

/// A d x d orthogonal matrix stored row-major in double precision.
class OrthogonalMatrix {
public:
    OrthogonalMatrix() = default;
    OrthogonalMatrix(std::size_t dim, std::uint64_t seed, std::vector<double> entries)
        : dim_(dim), seed_(seed), entries_(std::move(entries)) {}

    std::size_t dim() const noexcept { return dim_; }
    std::uint64_t seed() const noexcept { return seed_; }
    double operator()(std::size_t row, std::size_t col) const noexcept { return entries_[row * dim_ + col]; }
    std::span<const double> entries() const noexcept { return entries_; }

    friend bool operator==(const OrthogonalMatrix&, const OrthogonalMatrix&) = default;

private:
    std::size_t dim_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<double> entries_;
};

/// Left singular vectors of a seeded d x d standard-Gaussian matrix.
inline OrthogonalMatrix random_rotation(std::size_t dim, std::uint64_t seed) {
    if (dim == 0) throw DimensionError("rotation dimension must be positive");
    Rng rng(seed);
    Eigen::MatrixXd gaussian(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (Eigen::Index r = 0; r < gaussian.rows(); ++r) {
        for (Eigen::Index c = 0; c < gaussian.cols(); ++c) gaussian(r, c) = rng.normal();
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(gaussian, Eigen::ComputeFullU);
    const Eigen::MatrixXd& u = svd.matrixU();
    std::vector<double> entries(dim * dim);
    for (std::size_t r = 0; r < dim; ++r) {
        for (std::size_t c = 0; c < dim; ++c) {
            entries[r * dim + c] = u(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        }
    }
    return OrthogonalMatrix(dim, seed, std::move(entries));
}

/// W = (1/sqrt(m)) [R_1 ... R_m], a d x md matrix with W W^T = I_d.
///
/// W is never materialized. Products are applied rotation by rotation:
/// encode computes W^T x (block i is R_i^T x / sqrt(m)) and decode computes
/// W y = sum_i R_i y_i / sqrt(m). Rotation i is generated from
/// derive_seed(seed, i).
///
/// The interleaved batch routines work on B points at once in a
/// "point-minor" layout: element k of point b lives at index k * B + b.
/// Per output element the summation order is the same for every B, so a
/// batch of one produces bit-identical results to a larger batch.
class StackedProjection {
public:
    StackedProjection() = default;

    StackedProjection(std::size_t dim, std::size_t stacks, std::uint64_t seed) : dim_(dim), seed_(seed) {
        if (dim == 0) throw DimensionError("projection input dimension must be positive");
        if (stacks == 0) throw DimensionError("stacking count m must be positive");
        rotations_.reserve(stacks);
        for (std::size_t i = 0; i < stacks; ++i) rotations_.push_back(random_rotation(dim, derive_seed(seed, i)));
        scale_ = 1.0 / std::sqrt(static_cast<double>(stacks));
    }

    /// Stack of caller-supplied rotations (all d x d, d > 0).
    explicit StackedProjection(std::vector<OrthogonalMatrix> rotations, std::uint64_t seed = 0)
        : seed_(seed), rotations_(std::move(rotations)) {
        if (rotations_.empty()) throw DimensionError("stacking count m must be positive");
        dim_ = rotations_[0].dim();
        if (dim_ == 0) throw DimensionError("projection input dimension must be positive");
        for (const auto& r : rotations_) {
            if (r.dim() != dim_ || r.entries().size() != dim_ * dim_) {
                throw DimensionError("all rotations must be " + std::to_string(dim_) + " x " + std::to_string(dim_));
            }
        }
        scale_ = 1.0 / std::sqrt(static_cast<double>(rotations_.size()));
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t stacks() const noexcept { return rotations_.size(); }
    std::size_t code_dim() const noexcept { return dim_ * rotations_.size(); }
    std::uint64_t seed() const noexcept { return seed_; }
    double scale() const noexcept { return scale_; }
    const OrthogonalMatrix& rotation(std::size_t i) const { return rotations_.at(i); }

    std::vector<double> encode(std::span<const float> x) const {
        require_dim(x.size(), dim_, "encode input");
        std::vector<double> in(x.begin(), x.end());
        std::vector<double> out(code_dim());
        encode_interleaved(in.data(), 1, out.data());
        return out;
    }

    std::vector<double> decode(std::span<const double> y) const {
        require_dim(y.size(), code_dim(), "decode input");
        std::vector<double> out(dim_);
        decode_interleaved(y.data(), 1, out.data());
        return out;
    }

    /// out (md x B) = W^T in (d x B), both interleaved.
    void encode_interleaved(const double* in, std::size_t batch, double* out) const {
        const std::size_t d = dim_;
        for (std::size_t i = 0; i < rotations_.size(); ++i) {
            double* block = out + i * d * batch;
            for (std::size_t e = 0; e < d * batch; ++e) block[e] = 0.0;
            accumulate<true>(rotations_[i].entries().data(), in, batch, block);
            for (std::size_t e = 0; e < d * batch; ++e) block[e] *= scale_;
        }
    }

    /// out (d x B) = W in (md x B), both interleaved.
    void decode_interleaved(const double* in, std::size_t batch, double* out) const {
        const std::size_t d = dim_;
        for (std::size_t e = 0; e < d * batch; ++e) out[e] = 0.0;
        for (std::size_t i = 0; i < rotations_.size(); ++i) {
            accumulate<false>(rotations_[i].entries().data(), in + i * d * batch, batch, out);
        }
        for (std::size_t e = 0; e < d * batch; ++e) out[e] *= scale_;
    }

private:
    // acc (d x B) += A in (d x B) with A = R^T when Transposed, else R.
    // Every element is updated in ascending k order starting from its current
    // value, both in the register-tiled body and in the scalar tails.
    template <bool Transposed>
    void accumulate(const double* rot, const double* in, std::size_t batch, double* acc) const {
        constexpr std::size_t kRows = 2;
        constexpr std::size_t kCols = 32;
        const std::size_t d = dim_;
        auto coeff = [rot, d](std::size_t j, std::size_t k) { return Transposed ? rot[k * d + j] : rot[j * d + k]; };

        const std::size_t row_end = d - d % kRows;
        const std::size_t col_end = batch - batch % kCols;
        for (std::size_t j0 = 0; j0 < row_end; j0 += kRows) {
            for (std::size_t b0 = 0; b0 < col_end; b0 += kCols) {
                double tile[kRows][kCols];
                for (std::size_t r = 0; r < kRows; ++r)
                    for (std::size_t c = 0; c < kCols; ++c) tile[r][c] = acc[(j0 + r) * batch + b0 + c];
                for (std::size_t k = 0; k < d; ++k) {
                    const double* src = in + k * batch + b0;
#pragma GCC unroll 8
                    for (std::size_t r = 0; r < kRows; ++r) {
                        const double a = coeff(j0 + r, k);
#pragma GCC unroll 16
                        for (std::size_t c = 0; c < kCols; ++c) tile[r][c] += a * src[c];
                    }
                }
                for (std::size_t r = 0; r < kRows; ++r)
                    for (std::size_t c = 0; c < kCols; ++c) acc[(j0 + r) * batch + b0 + c] = tile[r][c];
            }
        }
        auto scalar = [&](std::size_t j, std::size_t b) {
            double v = acc[j * batch + b];
            for (std::size_t k = 0; k < d; ++k) v += coeff(j, k) * in[k * batch + b];
            acc[j * batch + b] = v;
        };
        for (std::size_t j = 0; j < row_end; ++j)
            for (std::size_t b = col_end; b < batch; ++b) scalar(j, b);
        for (std::size_t j = row_end; j < d; ++j)
            for (std::size_t b = 0; b < batch; ++b) scalar(j, b);
    }

    std::size_t dim_ = 0;
    std::uint64_t seed_ = 0;
    double scale_ = 1.0;
    std::vector<OrthogonalMatrix> rotations_;
};

inline StackedProjection build_projection(std::size_t dim, std::size_t stacks, std::uint64_t seed) {
    return StackedProjection(dim, stacks, seed);
}

}  // namespace usrlsh
