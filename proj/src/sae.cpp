#include "nas/sae.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <string>

#include "nas/error.hpp"
#include "nas/io_formats.hpp"
#include "nas/topk.hpp"

namespace nas {

namespace {

using RowMatrixd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Upper bound on the per-tile latent buffer (tokens x d_latent doubles).
constexpr std::size_t kTileBytes = std::size_t{16} << 20;
constexpr Eigen::Index kMaxTileTokens = 64;

// Fixed summation order independent of alignment and call site. Every
// encoder coefficient goes through this one function.
[[gnu::noinline]] double dot_fixed(const double* w, const double* x, std::size_t n) {
  constexpr std::size_t kLanes = 8;
  double acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) acc[j] += w[i + j] * x[i + j];
  }
  for (std::size_t j = 0; i < n; ++i, ++j) acc[j] += w[i] * x[i];
  for (std::size_t width = kLanes / 2; width > 0; width /= 2) {
    for (std::size_t j = 0; j < width; ++j) acc[j] += acc[j + width];
  }
  return acc[0];
}

SparseVectorf sparsify_latent(Eigen::Ref<Eigen::RowVectorXd> u, std::size_t k,
                              NegativityPolicy policy) {
  if (policy == NegativityPolicy::clamp) u = u.cwiseMax(0.0);
  const auto kept = topk(u.transpose(), k);
  if (policy == NegativityPolicy::error) {
    for (const auto& e : kept.entries()) {
      if (e.value < 0.0) {
        throw std::domain_error("negative latent activation " + std::to_string(e.value) +
                                " at index " + std::to_string(e.index) +
                                " under negativity policy 'error'");
      }
    }
  }
  return kept.cast<float>();
}

}  // namespace

void SaeWeights::validate() const {
  if (d == 0 || d_latent == 0) throw ValidationError("SAE weights: d and d_latent must be positive");
  if (k == 0 || k > d_latent) {
    throw ValidationError("SAE weights: K=" + std::to_string(k) + " outside [1, d_latent=" +
                          std::to_string(d_latent) + "]");
  }
  if (b_pre.size() != static_cast<Eigen::Index>(d)) {
    throw ValidationError("SAE weights: b_pre has length " + std::to_string(b_pre.size()) +
                          ", expected d=" + std::to_string(d));
  }
  if (w_enc.rows() != static_cast<Eigen::Index>(d_latent) ||
      w_enc.cols() != static_cast<Eigen::Index>(d)) {
    throw ValidationError("SAE weights: W_enc is " + std::to_string(w_enc.rows()) + "x" +
                          std::to_string(w_enc.cols()) + ", expected " + std::to_string(d_latent) +
                          "x" + std::to_string(d));
  }
  if (!b_pre.allFinite()) throw ValidationError("SAE weights: b_pre contains NaN/Inf");
  if (!w_enc.allFinite()) throw ValidationError("SAE weights: W_enc contains NaN/Inf");
  if (layer_index && *layer_index < 0) {
    throw ValidationError("SAE weights: negative layer index " + std::to_string(*layer_index));
  }
}

bool operator==(const SaeWeights& a, const SaeWeights& b) {
  return a.d == b.d && a.d_latent == b.d_latent && a.k == b.k && a.layer_index == b.layer_index &&
         a.b_pre.size() == b.b_pre.size() && a.w_enc.rows() == b.w_enc.rows() &&
         a.w_enc.cols() == b.w_enc.cols() && (a.b_pre.array() == b.b_pre.array()).all() &&
         (a.w_enc.array() == b.w_enc.array()).all();
}

NegativityPolicy parse_negativity_policy(std::string_view name) {
  if (name == "clamp") return NegativityPolicy::clamp;
  if (name == "error") return NegativityPolicy::error;
  if (name == "allow") return NegativityPolicy::allow;
  throw std::invalid_argument("unknown negativity policy '" + std::string(name) + "'");
}

DedupPolicy parse_dedup_policy(std::string_view name) {
  if (name == "error") return DedupPolicy::error;
  if (name == "skip") return DedupPolicy::skip;
  throw std::invalid_argument("unknown dedup policy '" + std::string(name) + "'");
}

Pooling parse_pooling(std::string_view name) {
  if (name == "mean") return Pooling::mean;
  if (name == "max") return Pooling::max;
  if (name == "last") return Pooling::last_token;
  throw std::invalid_argument("unknown pooling '" + std::string(name) + "'");
}

std::string_view to_string(NegativityPolicy p) {
  switch (p) {
    case NegativityPolicy::clamp: return "clamp";
    case NegativityPolicy::error: return "error";
    case NegativityPolicy::allow: return "allow";
  }
  return "?";
}

std::uint32_t EncoderConfig::effective_k(const SaeWeights& w) const {
  if (!k_override) return w.k;
  if (*k_override == 0 || *k_override > w.d_latent) {
    throw std::invalid_argument("K override " + std::to_string(*k_override) +
                                " outside [1, d_latent=" + std::to_string(w.d_latent) + "]");
  }
  return *k_override;
}

SaeWeights load_sae_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open SAE weights file '" + path.string() + "'");
  return read_saew(in);
}

std::vector<SparseVectorf> encode_tokens(const SaeWeights& w,
                                         const Eigen::Ref<const ActivationMatrix>& tokens,
                                         const EncoderConfig& cfg) {
  if (tokens.cols() != static_cast<Eigen::Index>(w.d)) {
    throw std::invalid_argument("hidden state length " + std::to_string(tokens.cols()) +
                                " does not match SAE input dimension d=" + std::to_string(w.d));
  }
  if (tokens.rows() == 0) throw std::invalid_argument("token block has no rows");
  const std::size_t k = cfg.effective_k(w);
  const Eigen::Index n = tokens.rows();
  const Eigen::Index d = w.d;
  const Eigen::Index d_latent = w.d_latent;
  const Eigen::Index tile = std::clamp<Eigen::Index>(
      static_cast<Eigen::Index>(kTileBytes / (sizeof(double) * static_cast<std::size_t>(d_latent))),
      1, std::min(kMaxTileTokens, std::max<Eigen::Index>(n, 1)));

  const Eigen::RowVectorXd bias = w.b_pre.cast<double>().transpose();
  RowMatrixd centered(tile, d);
  RowMatrixd latent(tile, d_latent);
  Eigen::VectorXd row(d);

  std::vector<SparseVectorf> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index start = 0; start < n; start += tile) {
    const Eigen::Index m = std::min(tile, n - start);
    for (Eigen::Index t = 0; t < m; ++t) {
      centered.row(t) = tokens.row(start + t).cast<double>() - bias;
    }
    for (Eigen::Index r = 0; r < d_latent; ++r) {
      row = w.w_enc.row(r).cast<double>().transpose();
      for (Eigen::Index t = 0; t < m; ++t) {
        latent(t, r) = dot_fixed(row.data(), centered.row(t).data(), static_cast<std::size_t>(d));
      }
    }
    for (Eigen::Index t = 0; t < m; ++t) {
      out.push_back(sparsify_latent(latent.row(t), k, cfg.negativity));
    }
  }
  return out;
}

SparseVectorf encode_token(const SaeWeights& w, const Eigen::Ref<const DenseVectorf>& h,
                           const EncoderConfig& cfg) {
  if (h.size() != static_cast<Eigen::Index>(w.d)) {
    throw std::invalid_argument("hidden state length " + std::to_string(h.size()) +
                                " does not match SAE input dimension d=" + std::to_string(w.d));
  }
  const ActivationMatrix single = h.transpose();
  return std::move(encode_tokens(w, single, cfg).front());
}

}  // namespace nas
