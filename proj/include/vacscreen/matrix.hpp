#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vacscreen/error.hpp"

namespace vacscreen {

struct SparseVector {
  std::vector<std::uint32_t> indices;  // strictly increasing
  std::vector<double> values;

  std::size_t nnz() const { return indices.size(); }
};

struct DenseVector {
  std::vector<double> values;
  bool all_oov = false;  // set by averaging when no token had a vector
};

// Row-compressed feature matrix. Dense representations are stored with every
// column present; absent entries read as 0 everywhere.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  explicit FeatureMatrix(std::size_t cols) : cols_(cols) {}

  std::size_t rows() const { return indptr_.size() - 1; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return indices_.size(); }

  void add_row(const SparseVector& v) {
    for (std::size_t k = 0; k < v.indices.size(); ++k) {
      if (v.indices[k] >= cols_) throw InputError("features", "sparse index out of range");
      if (k > 0 && v.indices[k] <= v.indices[k - 1])
        throw InputError("features", "sparse indices must be strictly increasing");
      if (!std::isfinite(v.values[k])) throw InputError("features", "non-finite feature value");
    }
    indices_.insert(indices_.end(), v.indices.begin(), v.indices.end());
    values_.insert(values_.end(), v.values.begin(), v.values.end());
    indptr_.push_back(indices_.size());
  }

  void add_dense_row(std::span<const double> v) {
    if (v.size() != cols_)
      throw InputError("features", "dense row of dimension " + std::to_string(v.size()) + ", expected " +
                                       std::to_string(cols_));
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (!std::isfinite(v[j])) throw InputError("features", "non-finite feature value");
      indices_.push_back(static_cast<std::uint32_t>(j));
      values_.push_back(v[j]);
    }
    indptr_.push_back(indices_.size());
  }

  std::span<const std::uint32_t> row_indices(std::size_t r) const {
    return {indices_.data() + indptr_[r], indptr_[r + 1] - indptr_[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {values_.data() + indptr_[r], indptr_[r + 1] - indptr_[r]};
  }

  // Value at (r, c); binary search within the row.
  double at(std::size_t r, std::uint32_t c) const {
    auto idx = row_indices(r);
    auto it = std::lower_bound(idx.begin(), idx.end(), c);
    if (it == idx.end() || *it != c) return 0.0;
    return values_[indptr_[r] + static_cast<std::size_t>(it - idx.begin())];
  }

  double dot(std::size_t r, std::span<const double> w) const {
    double s = 0.0;
    for (std::size_t k = indptr_[r]; k < indptr_[r + 1]; ++k) s += values_[k] * w[indices_[k]];
    return s;
  }

  FeatureMatrix select_rows(std::span<const std::size_t> rows) const {
    FeatureMatrix out(cols_);
    for (auto r : rows) {
      out.indices_.insert(out.indices_.end(), indices_.begin() + static_cast<std::ptrdiff_t>(indptr_[r]),
                          indices_.begin() + static_cast<std::ptrdiff_t>(indptr_[r + 1]));
      out.values_.insert(out.values_.end(), values_.begin() + static_cast<std::ptrdiff_t>(indptr_[r]),
                         values_.begin() + static_cast<std::ptrdiff_t>(indptr_[r + 1]));
      out.indptr_.push_back(out.indices_.size());
    }
    return out;
  }

  static FeatureMatrix from_dense(const std::vector<std::vector<double>>& rows, std::size_t cols) {
    FeatureMatrix m(cols);
    for (const auto& r : rows) m.add_dense_row(r);
    return m;
  }

 private:
  std::size_t cols_ = 0;
  std::vector<std::size_t> indptr_{0};
  std::vector<std::uint32_t> indices_;
  std::vector<double> values_;
};

}  // namespace vacscreen
