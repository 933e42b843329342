#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "usrlsh/usrlsh.hpp"

namespace testutil {

using usrlsh::Dataset;
using usrlsh::DenseVector;
using usrlsh::StackedProjection;

// Test-side randomness uses the standard engine directly, independent of the library's Rng.
inline std::vector<float> random_floats(std::mt19937_64& gen, std::size_t n, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<float> out(n);
    for (float& v : out) v = static_cast<float>(u(gen));
    return out;
}

inline Dataset random_dataset(std::size_t n, std::size_t d, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 gen(seed);
    return Dataset(d, random_floats(gen, n * d, scale));
}

/// Materialized W (d x md, row-major) built straight from the rotation entries.
struct DenseW {
    std::size_t d;
    std::size_t md;
    std::vector<double> w;

    explicit DenseW(const StackedProjection& p) : d(p.dim()), md(p.code_dim()), w(d * md) {
        const double s = 1.0 / std::sqrt(static_cast<double>(p.stacks()));
        for (std::size_t i = 0; i < p.stacks(); ++i) {
            for (std::size_t r = 0; r < d; ++r) {
                for (std::size_t c = 0; c < d; ++c) w[r * md + i * d + c] = s * p.rotation(i)(r, c);
            }
        }
    }

    double at(std::size_t r, std::size_t c) const { return w[r * md + c]; }

    std::vector<double> encode(std::span<const double> x) const {
        std::vector<double> y(md, 0.0);
        for (std::size_t j = 0; j < md; ++j) {
            long double acc = 0;
            for (std::size_t r = 0; r < d; ++r) acc += static_cast<long double>(at(r, j)) * x[r];
            y[j] = static_cast<double>(acc);
        }
        return y;
    }

    std::vector<double> decode(std::span<const double> y) const {
        std::vector<double> x(d, 0.0);
        for (std::size_t r = 0; r < d; ++r) {
            long double acc = 0;
            for (std::size_t j = 0; j < md; ++j) acc += static_cast<long double>(at(r, j)) * y[j];
            x[r] = static_cast<double>(acc);
        }
        return x;
    }

    /// Unfolded update written with an explicit md x md matrix (I - W^T W).
    std::vector<double> iterate(std::span<const float> xf, double alpha, std::size_t T) const {
        std::vector<double> x(xf.begin(), xf.end());
        std::vector<double> drive = encode(x);
        for (double& v : drive) v *= alpha;
        std::vector<double> residual(md * md);
        for (std::size_t a = 0; a < md; ++a) {
            for (std::size_t b = 0; b < md; ++b) {
                long double acc = 0;
                for (std::size_t r = 0; r < d; ++r) acc += static_cast<long double>(at(r, a)) * at(r, b);
                residual[a * md + b] = (a == b ? 1.0 : 0.0) - static_cast<double>(acc);
            }
        }
        std::vector<double> y(md, 0.0);
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<double> next(md);
            for (std::size_t a = 0; a < md; ++a) {
                long double acc = drive[a];
                for (std::size_t b = 0; b < md; ++b) acc += static_cast<long double>(residual[a * md + b]) * y[b];
                next[a] = std::tanh(static_cast<double>(acc));
            }
            y = next;
        }
        return y;
    }
};

inline usrlsh::OrthogonalMatrix identity_rotation(std::size_t d) {
    std::vector<double> e(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) e[i * d + i] = 1.0;
    return usrlsh::OrthogonalMatrix(d, 0, std::move(e));
}

/// Naive ranking oracle: every distance, then a sort on (distance, id).
inline std::vector<std::pair<std::size_t, usrlsh::PointId>> naive_rank(const usrlsh::BinaryCode& q,
                                                                       const std::vector<usrlsh::BinaryCode>& codes,
                                                                       const std::vector<usrlsh::PointId>& ids,
                                                                       std::size_t k) {
    std::vector<std::pair<std::size_t, usrlsh::PointId>> all;
    for (std::size_t i = 0; i < codes.size(); ++i) {
        std::size_t dist = 0;
        for (std::size_t j = 0; j < q.size(); ++j) dist += q.bit(j) != codes[i].bit(j);
        all.emplace_back(dist, ids[i]);
    }
    std::stable_sort(all.begin(), all.end());
    all.resize(std::min(k, all.size()));
    return all;
}

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("usrlsh_test_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace testutil
