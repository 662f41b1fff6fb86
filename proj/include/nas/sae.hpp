#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "nas/sparse_vector.hpp"
#include "nas/types.hpp"

namespace nas {

/// Encoder rows are latent units; each row is streamed once per token.
using EncoderMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Encoder half of a pretrained k-sparse autoencoder.
struct SaeWeights {
  std::uint32_t d = 0;
  std::uint32_t d_latent = 0;
  std::uint32_t k = 0;
  DenseVectorf b_pre;
  EncoderMatrix w_enc;  // d_latent x d
  std::optional<std::int32_t> layer_index;

  /// Shape, sparsity and finiteness checks. Throws ValidationError.
  /// d_latent < d is legal but reported by `is_expanding()`.
  void validate() const;
  bool is_expanding() const noexcept { return d_latent >= d; }

  friend bool operator==(const SaeWeights&, const SaeWeights&);
};

enum class NegativityPolicy { clamp, error, allow };
enum class DedupPolicy { error, skip };
enum class Pooling { mean, max, last_token };

NegativityPolicy parse_negativity_policy(std::string_view name);
DedupPolicy parse_dedup_policy(std::string_view name);
Pooling parse_pooling(std::string_view name);
std::string_view to_string(NegativityPolicy p);

struct EncoderConfig {
  std::optional<std::uint32_t> k_override;
  NegativityPolicy negativity = NegativityPolicy::clamp;
  DedupPolicy dedup = DedupPolicy::error;
  /// Only mean pooling is implemented; the others are rejected.
  Pooling pooling = Pooling::mean;

  /// Sparsity actually used for `w`. Throws std::invalid_argument when the
  /// override exceeds w.d_latent.
  std::uint32_t effective_k(const SaeWeights& w) const;
};

/// Reads and validates a SAEW file.
SaeWeights load_sae_weights(const std::filesystem::path& path);

/// z = TopK(policy(W_enc (h - b_pre))), accumulated in double precision.
SparseVectorf encode_token(const SaeWeights& w, const Eigen::Ref<const DenseVectorf>& h,
                           const EncoderConfig& cfg);

/// encode_token applied to each row of `tokens`, in order. Bitwise equal to
/// calling encode_token row by row.
std::vector<SparseVectorf> encode_tokens(const SaeWeights& w,
                                         const Eigen::Ref<const ActivationMatrix>& tokens,
                                         const EncoderConfig& cfg);

inline std::vector<SparseVectorf> encode_tokens(const SaeWeights& w,
                                                const TokenActivationBlock& block,
                                                const EncoderConfig& cfg) {
  return encode_tokens(w, block.activations, cfg);
}

}  // namespace nas
