#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "nas/sae.hpp"
#include "nas/sparse_vector.hpp"
#include "nas/types.hpp"
#include "oracle.hpp"

namespace fixtures {

using Rng = std::mt19937_64;

/// Random non-negative sparse vector with up to max_nnz entries.
inline nas::SparseVectorf random_sparse(Rng& rng, std::uint32_t dim, std::size_t max_nnz,
                                        float max_value = 4.0f) {
  std::uniform_int_distribution<std::size_t> nnz_dist(0, std::min<std::size_t>(max_nnz, dim));
  std::uniform_int_distribution<std::uint32_t> idx(0, dim - 1);
  std::uniform_real_distribution<float> val(1e-3f, max_value);
  const std::size_t nnz = nnz_dist(rng);
  std::vector<std::uint32_t> indices;
  while (indices.size() < nnz) {
    const auto i = idx(rng);
    if (std::find(indices.begin(), indices.end(), i) == indices.end()) indices.push_back(i);
  }
  std::sort(indices.begin(), indices.end());
  std::vector<nas::SparseVectorf::Entry> entries;
  for (auto i : indices) entries.push_back({i, val(rng)});
  return nas::SparseVectorf(dim, std::move(entries));
}

inline oracle::Dense to_oracle(const nas::SparseVectorf& v) {
  oracle::Dense d(v.dimension(), 0.0);
  for (const auto& e : v.entries()) d[e.index] = e.value;
  return d;
}

inline nas::SaeWeights random_weights(Rng& rng, std::uint32_t d, std::uint32_t d_latent,
                                      std::uint32_t k, float bias_scale = 0.1f) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  nas::SaeWeights w;
  w.d = d;
  w.d_latent = d_latent;
  w.k = k;
  w.b_pre = nas::DenseVectorf(d);
  for (auto& x : w.b_pre) x = bias_scale * n(rng);
  w.w_enc = nas::EncoderMatrix(d_latent, d);
  const float scale = 1.0f / std::sqrt(static_cast<float>(d));
  for (Eigen::Index i = 0; i < w.w_enc.size(); ++i) w.w_enc.data()[i] = scale * n(rng);
  return w;
}

inline nas::TokenActivationBlock random_block(Rng& rng, const std::string& id, Eigen::Index n,
                                              Eigen::Index d) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  nas::TokenActivationBlock b{id, nas::ActivationMatrix(n, d)};
  for (Eigen::Index i = 0; i < b.activations.size(); ++i) b.activations.data()[i] = g(rng);
  return b;
}

inline std::vector<float> to_vector(const Eigen::Ref<const nas::DenseVectorf>& v) {
  return std::vector<float>(v.data(), v.data() + v.size());
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("nas-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixtures
