#pragma once

#include <Eigen/Dense>

#include <string>

#include "nas/sparse_vector.hpp"

namespace nas {

/// Hidden states of one sample, one row per token.
using ActivationMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TokenActivationBlock {
  std::string sample_id;
  ActivationMatrix activations;

  Eigen::Index n_tokens() const noexcept { return activations.rows(); }
  Eigen::Index dim() const noexcept { return activations.cols(); }

  /// Throws ValidationError on an empty id, an id with a newline, zero
  /// tokens, or a non-finite activation.
  void validate() const;
};

/// Mean-pooled sparse latent activations of one sample.
struct NasEmbedding {
  std::string sample_id;
  SparseVectorf vector;

  friend bool operator==(const NasEmbedding&, const NasEmbedding&) = default;
};

/// Sample ids are opaque strings; the only constraints are non-empty and
/// newline-free. Throws ValidationError otherwise.
void validate_sample_id(const std::string& id);

}  // namespace nas
