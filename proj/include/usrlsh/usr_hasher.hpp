#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "usrlsh/binary_code.hpp"
#include "usrlsh/common.hpp"
#include "usrlsh/dataset.hpp"
#include "usrlsh/projection.hpp"

namespace usrlsh {

inline constexpr std::size_t kDefaultIterations = 17;

struct HasherConfig {
    std::size_t d = 0;
    std::size_t m = 1;
    std::size_t T = kDefaultIterations;
    double alpha = 1.0;

    std::size_t code_dim() const noexcept { return m * d; }

    void validate(const StackedProjection& p) const {
        if (T == 0) throw ConfigError("iteration count T must be at least 1");
        if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a positive finite number");
        if (d != p.dim() || m != p.stacks()) throw ConfigError("hasher config does not match the projection");
    }
};

/// alpha = sqrt(md) / (2 * mean_norm).
inline double compute_alpha(std::size_t code_dim, double mean_norm) {
    if (!(mean_norm > 0.0) || !std::isfinite(mean_norm)) {
        throw DegenerateDatasetError("mean Euclidean norm must be positive to derive alpha");
    }
    return std::sqrt(static_cast<double>(code_dim)) / (2.0 * mean_norm);
}

namespace detail {

inline constexpr std::size_t kHashBatch = 32;

/// Runs the unfolded update on B interleaved inputs. `x` is d x B,
/// `y` receives md x B. y_0 = 0 and
///   y_t = tanh(alpha * W^T x + (y_{t-1} - W^T (W y_{t-1}))).
inline void usr_iterate_interleaved(const StackedProjection& p, std::size_t iterations, double alpha,
                                    const double* x, std::size_t batch, double* y) {
    const std::size_t md = p.code_dim();
    std::vector<double> drive(md * batch);
    std::vector<double> decoded(p.dim() * batch);
    std::vector<double> back(md * batch);

    p.encode_interleaved(x, batch, drive.data());
    for (double& v : drive) v *= alpha;

    // First step: y_0 = 0 so the residual term vanishes.
    for (std::size_t e = 0; e < md * batch; ++e) y[e] = std::tanh(drive[e]);
    for (std::size_t t = 1; t < iterations; ++t) {
        p.decode_interleaved(y, batch, decoded.data());
        p.encode_interleaved(decoded.data(), batch, back.data());
        for (std::size_t e = 0; e < md * batch; ++e) y[e] = std::tanh(drive[e] + (y[e] - back[e]));
    }
}

/// Transposes rows [first, first + batch) of a row-major float matrix into
/// interleaved doubles, validating each row.
inline void gather_interleaved(std::span<const float> rows, std::size_t dim, std::size_t first, std::size_t batch,
                               double* out) {
    for (std::size_t b = 0; b < batch; ++b) {
        const float* src = rows.data() + (first + b) * dim;
        for (std::size_t k = 0; k < dim; ++k) {
            if (!std::isfinite(src[k])) {
                throw InvalidArgumentError("vector at index " + std::to_string(first + b) +
                                           " contains a non-finite value");
            }
            out[k * batch + b] = static_cast<double>(src[k]);
        }
    }
}

}  // namespace detail

/// Real hash values for `count` row-major points; `out` is count x md row-major.
inline void hash_values_batch(std::span<const float> rows, std::size_t count, const StackedProjection& p,
                              const HasherConfig& cfg, std::span<double> out) {
    cfg.validate(p);
    const std::size_t d = p.dim();
    const std::size_t md = p.code_dim();
    require_dim(rows.size(), count * d, "batch input");
    require_dim(out.size(), count * md, "batch output");

    std::vector<double> xin(d * detail::kHashBatch);
    std::vector<double> yout(md * detail::kHashBatch);
    for (std::size_t first = 0; first < count; first += detail::kHashBatch) {
        const std::size_t batch = std::min(detail::kHashBatch, count - first);
        detail::gather_interleaved(rows, d, first, batch, xin.data());
        detail::usr_iterate_interleaved(p, cfg.T, cfg.alpha, xin.data(), batch, yout.data());
        for (std::size_t b = 0; b < batch; ++b) {
            double* dst = out.data() + (first + b) * md;
            for (std::size_t j = 0; j < md; ++j) dst[j] = yout[j * batch + b];
        }
    }
}

inline std::vector<double> hash_value(std::span<const float> x, const StackedProjection& p, const HasherConfig& cfg) {
    require_dim(x.size(), p.dim(), "hash input");
    std::vector<double> y(p.code_dim());
    hash_values_batch(x, 1, p, cfg, y);
    return y;
}

inline BinaryCode hash_code(std::span<const float> x, const StackedProjection& p, const HasherConfig& cfg) {
    return pack_signs(hash_value(x, p, cfg));
}

inline std::vector<BinaryCode> batch_hash(const Dataset& xs, const StackedProjection& p, const HasherConfig& cfg) {
    std::vector<BinaryCode> codes;
    if (xs.empty()) return codes;
    require_dim(xs.dim(), p.dim(), "batch input dimension");
    std::vector<double> values(xs.size() * p.code_dim());
    hash_values_batch(xs.values(), xs.size(), p, cfg, values);
    codes.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        codes.push_back(pack_signs(std::span<const double>(values).subspan(i * p.code_dim(), p.code_dim())));
    }
    return codes;
}

inline std::vector<BinaryCode> batch_hash(std::span<const DenseVector> xs, const StackedProjection& p,
                                          const HasherConfig& cfg) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].size() != p.dim()) {
            throw DimensionError("vector at index " + std::to_string(i) + " has length " +
                                 std::to_string(xs[i].size()) + ", expected " + std::to_string(p.dim()));
        }
    }
    return batch_hash(Dataset::from_rows(xs), p, cfg);
}

}  // namespace usrlsh
