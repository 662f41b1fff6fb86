#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "nas/sparse_vector.hpp"

namespace nas {

namespace detail {

template <typename Scalar>
void require_same_dimension(const SparseVector<Scalar>& a, const SparseVector<Scalar>& b,
                            const char* who) {
  if (a.dimension() != b.dimension()) {
    throw std::invalid_argument(std::string(who) + ": dimension mismatch (" +
                                std::to_string(a.dimension()) + " vs " +
                                std::to_string(b.dimension()) + ")");
  }
}

/// Visits the union of both supports in increasing index order, calling
/// f(a_value, b_value) in double precision. Absent coordinates read as 0.
template <typename Scalar, typename F>
void for_each_union(const SparseVector<Scalar>& a, const SparseVector<Scalar>& b, F&& f) {
  const auto ea = a.entries();
  const auto eb = b.entries();
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < ea.size() || j < eb.size()) {
    if (j == eb.size() || (i < ea.size() && ea[i].index < eb[j].index)) {
      f(static_cast<double>(ea[i++].value), 0.0);
    } else if (i == ea.size() || eb[j].index < ea[i].index) {
      f(0.0, static_cast<double>(eb[j++].value));
    } else {
      f(static_cast<double>(ea[i++].value), static_cast<double>(eb[j++].value));
    }
  }
}

template <typename Scalar>
void require_non_negative(const SparseVector<Scalar>& v) {
  for (const auto& e : v.entries()) {
    if (e.value < Scalar(0)) {
      throw std::domain_error("generalized Jaccard is undefined for negative weights (index " +
                              std::to_string(e.index) + ")");
    }
  }
}

}  // namespace detail

/// Generalized Jaccard similarity: sum of coordinate minima over sum of
/// coordinate maxima. Two all-zero vectors are identical (1.0); exactly one
/// all-zero vector gives 0.0.
template <typename Scalar>
double jaccard_similarity(const SparseVector<Scalar>& a, const SparseVector<Scalar>& b) {
  detail::require_same_dimension(a, b, "jaccard_similarity");
  detail::require_non_negative(a);
  detail::require_non_negative(b);
  if (a.is_zero() && b.is_zero()) return 1.0;
  double min_sum = 0.0;
  double max_sum = 0.0;
  detail::for_each_union(a, b, [&](double x, double y) {
    min_sum += std::min(x, y);
    max_sum += std::max(x, y);
  });
  return min_sum / max_sum;
}

template <typename Scalar>
double cosine_similarity(const SparseVector<Scalar>& a, const SparseVector<Scalar>& b) {
  detail::require_same_dimension(a, b, "cosine_similarity");
  double dot = 0.0;
  double norm_a = 0.0;
  double norm_b = 0.0;
  detail::for_each_union(a, b, [&](double x, double y) {
    dot += x * y;
    norm_a += x * x;
    norm_b += y * y;
  });
  if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(norm_a * norm_b), -1.0, 1.0);
}

template <typename Scalar>
double euclidean_distance(const SparseVector<Scalar>& a, const SparseVector<Scalar>& b) {
  detail::require_same_dimension(a, b, "euclidean_distance");
  double sum = 0.0;
  detail::for_each_union(a, b, [&](double x, double y) {
    const double diff = x - y;
    sum += diff * diff;
  });
  return std::sqrt(sum);
}

}  // namespace nas
