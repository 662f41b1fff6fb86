#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "nas/sparse_vector.hpp"

namespace nas {

/// Keeps the K largest coefficients of `v` by signed value and zeroes the
/// rest. Ties at the K-th value keep the lower index. Kept coefficients
/// that are exactly zero are not stored, so the result may hold fewer than
/// K entries.
template <typename Derived>
SparseVector<typename Derived::Scalar> topk(const Eigen::MatrixBase<Derived>& v, std::size_t k) {
  using Scalar = typename Derived::Scalar;
  using Index = typename SparseVector<Scalar>::Index;
  const auto n = static_cast<std::size_t>(v.size());
  if (k == 0) throw std::invalid_argument("topk: K must be positive");
  if (n == 0) throw std::invalid_argument("topk: empty input vector");

  const auto ranks_before = [&v](Index a, Index b) {
    const Scalar va = v(a);
    const Scalar vb = v(b);
    return va > vb || (va == vb && a < b);
  };

  std::vector<Index> positive;
  std::vector<Index> negative;
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar x = v(static_cast<Eigen::Index>(i));
    if (!std::isfinite(x)) throw std::invalid_argument("topk: non-finite input value");
    if (x > Scalar(0)) {
      positive.push_back(static_cast<Index>(i));
    } else if (x < Scalar(0)) {
      negative.push_back(static_cast<Index>(i));
    } else {
      ++zeros;
    }
  }

  std::vector<Index> kept;
  if (positive.size() >= k) {
    std::nth_element(positive.begin(), positive.begin() + static_cast<std::ptrdiff_t>(k - 1),
                     positive.end(), ranks_before);
    positive.resize(k);
    kept = std::move(positive);
  } else {
    kept = std::move(positive);
    // Zeros outrank every negative; they take slots but are never stored.
    const std::size_t slots = k - kept.size();
    if (zeros < slots && !negative.empty()) {
      const std::size_t take = std::min(slots - zeros, negative.size());
      std::nth_element(negative.begin(), negative.begin() + static_cast<std::ptrdiff_t>(take - 1),
                       negative.end(), ranks_before);
      kept.insert(kept.end(), negative.begin(),
                  negative.begin() + static_cast<std::ptrdiff_t>(take));
    }
  }

  std::sort(kept.begin(), kept.end());
  std::vector<typename SparseVector<Scalar>::Entry> entries;
  entries.reserve(kept.size());
  for (Index i : kept) entries.push_back({i, v(i)});
  return SparseVector<Scalar>(static_cast<Index>(n), std::move(entries));
}

}  // namespace nas
