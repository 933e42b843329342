#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "usrlsh/binary_code.hpp"
#include "usrlsh/common.hpp"
#include "usrlsh/projection.hpp"
#include "usrlsh/random.hpp"
#include "usrlsh/usr_hasher.hpp"

namespace usrlsh {

/// n_bits x d matrix of i.i.d. N(0, 1) entries (simHash hyperplanes).
class GaussianProjection {
public:
    GaussianProjection() = default;
    GaussianProjection(std::size_t n_bits, std::size_t dim, std::uint64_t seed)
        : n_bits_(n_bits), dim_(dim), seed_(seed), entries_(n_bits * dim) {
        if (n_bits == 0 || dim == 0) throw DimensionError("gaussian projection needs positive n_bits and d");
        Rng rng(seed);
        for (double& e : entries_) e = rng.normal();
    }

    std::size_t bits() const noexcept { return n_bits_; }
    std::size_t dim() const noexcept { return dim_; }
    std::uint64_t seed() const noexcept { return seed_; }
    double operator()(std::size_t row, std::size_t col) const noexcept { return entries_[row * dim_ + col]; }

    /// G x, accumulated in double.
    void project(std::span<const float> x, std::span<double> out) const {
        require_dim(x.size(), dim_, "simhash input");
        require_dim(out.size(), n_bits_, "simhash output");
        for (std::size_t r = 0; r < n_bits_; ++r) {
            const double* row = entries_.data() + r * dim_;
            double acc = 0.0;
            for (std::size_t k = 0; k < dim_; ++k) acc += row[k] * static_cast<double>(x[k]);
            out[r] = acc;
        }
    }

private:
    std::size_t n_bits_ = 0;
    std::size_t dim_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<double> entries_;
};

inline BinaryCode simhash_code(std::span<const float> x, const GaussianProjection& g) {
    require_finite(x, "simhash input");
    std::vector<double> values(g.bits());
    g.project(x, values);
    return pack_signs(values);
}

/// Super-Bit LSH: sign of the first n_bits coordinates of W^T x, where W
/// stacks ceil(n_bits / d) random rotations.
class SuperBitProjection {
public:
    SuperBitProjection() = default;
    SuperBitProjection(std::size_t n_bits, std::size_t dim, std::uint64_t seed)
        : n_bits_(n_bits),
          projection_(dim, dim == 0 ? 1 : std::max<std::size_t>(1, (n_bits + dim - 1) / dim), seed) {
        if (n_bits == 0) throw DimensionError("super-bit projection needs positive n_bits");
    }

    /// Uses the first n_bits rows of W^T from an existing stack.
    SuperBitProjection(StackedProjection stack, std::size_t n_bits) : n_bits_(n_bits), projection_(std::move(stack)) {
        if (n_bits == 0) throw DimensionError("super-bit projection needs positive n_bits");
        if (n_bits > projection_.code_dim()) {
            throw ConfigError("n_bits exceeds m * d of the rotation stack");
        }
    }

    std::size_t bits() const noexcept { return n_bits_; }
    std::size_t dim() const noexcept { return projection_.dim(); }
    const StackedProjection& stack() const noexcept { return projection_; }

    /// Interleaved batch: x (d x B) -> out (n_bits x B).
    void project_interleaved(const double* x, std::size_t batch, double* out, std::vector<double>& scratch) const {
        scratch.resize(projection_.code_dim() * batch);
        projection_.encode_interleaved(x, batch, scratch.data());
        std::copy_n(scratch.data(), n_bits_ * batch, out);
    }

private:
    std::size_t n_bits_ = 0;
    StackedProjection projection_;
};

inline BinaryCode sblsh_code(std::span<const float> x, const SuperBitProjection& p) {
    require_dim(x.size(), p.dim(), "super-bit input");
    require_finite(x, "super-bit input");
    std::vector<double> in(x.begin(), x.end());
    std::vector<double> out(p.bits());
    std::vector<double> scratch;
    p.project_interleaved(in.data(), 1, out.data(), scratch);
    return pack_signs(out);
}

}  // namespace usrlsh
