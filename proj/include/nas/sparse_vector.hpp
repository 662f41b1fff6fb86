#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nas/error.hpp"

namespace nas {

template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using DenseVectorf = DenseVector<float>;

/// 64-bit dense accumulator used for every pooling sum.
using Accumulator = Eigen::VectorXd;

/// A point in a (possibly huge) latent space stored as sorted
/// (index, value) pairs.
///
/// Invariants, enforced on construction: dimension > 0, indices strictly
/// increasing and below dimension, no stored value equal to zero, every
/// value finite. An all-zero vector is an empty entry list.
template <typename Scalar>
class SparseVector {
 public:
  using Index = std::uint32_t;

  struct Entry {
    Index index;
    Scalar value;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  /// All-zero vector of the given dimension.
  explicit SparseVector(Index dimension) : dimension_(dimension) {
    if (dimension == 0) {
      throw std::invalid_argument("SparseVector: dimension must be positive");
    }
  }

  SparseVector(Index dimension, std::vector<Entry> entries)
      : dimension_(dimension), entries_(std::move(entries)) {
    if (dimension == 0) {
      throw std::invalid_argument("SparseVector: dimension must be positive");
    }
    validate();
  }

  /// Keeps every nonzero coefficient of a dense vector.
  template <typename Derived>
  static SparseVector from_dense(const Eigen::MatrixBase<Derived>& dense) {
    SparseVector out(static_cast<Index>(dense.size()));
    for (Eigen::Index i = 0; i < dense.size(); ++i) {
      const auto v = static_cast<Scalar>(dense(i));
      if (v != Scalar(0)) out.entries_.push_back({static_cast<Index>(i), v});
    }
    out.validate();
    return out;
  }

  Index dimension() const noexcept { return dimension_; }
  std::size_t nnz() const noexcept { return entries_.size(); }
  bool is_zero() const noexcept { return entries_.empty(); }
  std::span<const Entry> entries() const noexcept { return entries_; }

  /// Value at a coordinate (zero when not stored).
  Scalar coeff(Index i) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), i,
                               [](const Entry& e, Index k) { return e.index < k; });
    return (it != entries_.end() && it->index == i) ? it->value : Scalar(0);
  }

  DenseVector<Scalar> to_dense() const {
    DenseVector<Scalar> out = DenseVector<Scalar>::Zero(dimension_);
    for (const auto& e : entries_) out(e.index) = e.value;
    return out;
  }

  /// Converts the value type; entries that narrow to zero are dropped.
  template <typename Other>
  SparseVector<Other> cast() const {
    std::vector<typename SparseVector<Other>::Entry> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) {
      const auto v = static_cast<Other>(e.value);
      if (v != Other(0)) out.push_back({e.index, v});
    }
    return SparseVector<Other>(dimension_, std::move(out));
  }

  friend bool operator==(const SparseVector&, const SparseVector&) = default;

 private:
  void validate() const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& e = entries_[i];
      if (e.index >= dimension_) {
        throw ValidationError("SparseVector: index " + std::to_string(e.index) +
                              " out of range for dimension " + std::to_string(dimension_));
      }
      if (i > 0 && entries_[i - 1].index >= e.index) {
        throw ValidationError("SparseVector: indices not strictly increasing at position " +
                              std::to_string(i));
      }
      if (e.value == Scalar(0)) {
        throw ValidationError("SparseVector: explicit zero stored at index " +
                              std::to_string(e.index));
      }
      if (!std::isfinite(e.value)) {
        throw ValidationError("SparseVector: non-finite value at index " +
                              std::to_string(e.index));
      }
    }
  }

  Index dimension_;
  std::vector<Entry> entries_;
};

using SparseVectorf = SparseVector<float>;

/// acc += weight * v over the stored entries of v.
template <typename Scalar>
void accumulate(Accumulator& acc, const SparseVector<Scalar>& v, double weight) {
  if (acc.size() != static_cast<Eigen::Index>(v.dimension())) {
    throw std::invalid_argument("accumulate: accumulator dimension " + std::to_string(acc.size()) +
                                " != vector dimension " + std::to_string(v.dimension()));
  }
  for (const auto& e : v.entries()) acc(e.index) += weight * static_cast<double>(e.value);
}

/// Narrows an accumulator to a sparse vector, dropping |value| <= epsilon.
template <typename Scalar = float, typename Derived>
SparseVector<Scalar> finalize_sparse(const Eigen::MatrixBase<Derived>& acc, double epsilon = 0.0) {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("finalize_sparse: epsilon must be >= 0");
  if (acc.size() <= 0 || acc.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument("finalize_sparse: accumulator dimension out of range");
  }
  using Entry = typename SparseVector<Scalar>::Entry;
  std::vector<Entry> entries;
  for (Eigen::Index i = 0; i < acc.size(); ++i) {
    const double x = static_cast<double>(acc(i));
    if (std::abs(x) <= epsilon) continue;
    const auto v = static_cast<Scalar>(x);
    if (v == Scalar(0)) continue;
    if (!std::isfinite(v)) {
      throw ValidationError("finalize_sparse: value at index " + std::to_string(i) +
                            " is not representable");
    }
    entries.push_back({static_cast<typename SparseVector<Scalar>::Index>(i), v});
  }
  return SparseVector<Scalar>(static_cast<std::uint32_t>(acc.size()), std::move(entries));
}

}  // namespace nas
