#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "usrlsh/common.hpp"

namespace usrlsh {

using DenseVector = std::vector<float>;

/// Row-major N x d float32 matrix; row i is point i.
class Dataset {
public:
    Dataset() = default;
    explicit Dataset(std::size_t dim) : dim_(dim) {}
    Dataset(std::size_t dim, std::vector<float> values) : dim_(dim), values_(std::move(values)) {
        if (dim_ == 0 && !values_.empty()) throw DimensionError("dataset with values must have positive dimension");
        if (dim_ != 0 && values_.size() % dim_ != 0) throw DimensionError("dataset value count is not a multiple of d");
    }

    static Dataset from_rows(std::span<const DenseVector> rows) {
        if (rows.empty()) return Dataset();
        Dataset out(rows.front().size());
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r);
        return out;
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return dim_ == 0 ? 0 : values_.size() / dim_; }
    bool empty() const noexcept { return values_.empty(); }

    std::span<const float> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
    std::span<float> row(std::size_t i) { return {values_.data() + i * dim_, dim_}; }
    std::span<const float> values() const noexcept { return values_; }

    void reserve(std::size_t n) { values_.reserve(n * dim_); }
    void push_back(std::span<const float> x) {
        require_dim(x.size(), dim_, "dataset row");
        values_.insert(values_.end(), x.begin(), x.end());
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<float> values_;
};

}  // namespace usrlsh
