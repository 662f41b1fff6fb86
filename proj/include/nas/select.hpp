#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nas/sparse_vector.hpp"
#include "nas/types.hpp"

namespace nas {

enum class MetricKind { jaccard, cosine, euclidean };

MetricKind parse_metric(std::string_view name);
std::string_view to_string(MetricKind m);

/// Mean embedding of the target examples.
struct TargetRepresentation {
  SparseVectorf vector;
  std::size_t m_samples = 0;
  std::vector<std::string> source_ids;
};

struct RankedSample {
  std::string sample_id;
  double distance = 0.0;
  std::size_t rank = 0;  // 1-based

  friend bool operator==(const RankedSample&, const RankedSample&) = default;
};

struct SelectionResult {
  std::vector<RankedSample> ranked;
  std::size_t budget_k = 0;
  MetricKind metric = MetricKind::jaccard;
  std::size_t total_scanned = 0;
};

/// Pull-style stream of embeddings; nullopt ends the stream.
using EmbeddingSource = std::function<std::optional<NasEmbedding>()>;

EmbeddingSource span_source(std::span<const NasEmbedding> embeddings);

TargetRepresentation build_target(const EmbeddingSource& source);
TargetRepresentation build_target(std::span<const NasEmbedding> embeddings);

/// Lower is closer for every metric: 1 - Jaccard, 1 - cosine, or the
/// Euclidean distance.
double metric_distance(const SparseVectorf& a, const SparseVectorf& b, MetricKind metric);
double score_sample(const NasEmbedding& e, const TargetRepresentation& t, MetricKind metric);

/// Exactly one of `k` and `ratio` must be set. The ratio budget is
/// ceil(ratio * total); products within 1e-9 relative of an integer are
/// treated as that integer so that e.g. 0.07 * 100 yields 7.
std::size_t resolve_budget(std::size_t total, std::optional<std::int64_t> k,
                           std::optional<double> ratio);

/// Bounded max-heap keeping the `budget` smallest (distance, id, arrival)
/// keys seen so far.
class TopkSelector {
 public:
  explicit TopkSelector(std::size_t budget);

  void offer(std::string_view id, double distance);
  std::size_t offered() const noexcept { return offered_; }

  /// Kept samples sorted ascending by (distance, id), ranks assigned.
  std::vector<RankedSample> finish() &&;

 private:
  struct Candidate {
    double distance;
    std::string id;
    std::uint64_t arrival;
  };
  static bool before(const Candidate& a, double distance, std::string_view id,
                     std::uint64_t arrival);
  static bool before(const Candidate& a, const Candidate& b);

  std::size_t budget_;
  std::uint64_t offered_ = 0;
  std::vector<Candidate> heap_;
};

/// Scores every embedding against the target and keeps the `budget`
/// nearest. Output is independent of `threads`; scoring errors are
/// rethrown with the offending sample id prepended.
SelectionResult select_topk(const EmbeddingSource& source, const TargetRepresentation& target,
                            MetricKind metric, std::size_t budget, unsigned threads = 1);
SelectionResult select_topk(std::span<const NasEmbedding> embeddings,
                            const TargetRepresentation& target, MetricKind metric,
                            std::size_t budget, unsigned threads = 1);

}  // namespace nas
