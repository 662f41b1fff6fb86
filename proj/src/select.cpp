#include "nas/select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "nas/error.hpp"
#include "nas/metrics.hpp"
#include "parallel.hpp"

namespace nas {

MetricKind parse_metric(std::string_view name) {
  if (name == "jaccard") return MetricKind::jaccard;
  if (name == "cosine") return MetricKind::cosine;
  if (name == "euclidean") return MetricKind::euclidean;
  throw std::invalid_argument("unknown metric '" + std::string(name) + "'");
}

std::string_view to_string(MetricKind m) {
  switch (m) {
    case MetricKind::jaccard: return "jaccard";
    case MetricKind::cosine: return "cosine";
    case MetricKind::euclidean: return "euclidean";
  }
  return "?";
}

EmbeddingSource span_source(std::span<const NasEmbedding> embeddings) {
  return [embeddings, i = std::size_t{0}]() mutable -> std::optional<NasEmbedding> {
    if (i == embeddings.size()) return std::nullopt;
    return embeddings[i++];
  };
}

TargetRepresentation build_target(const EmbeddingSource& source) {
  std::optional<Accumulator> acc;
  std::vector<std::string> ids;
  while (auto e = source()) {
    if (!acc) {
      acc = Accumulator::Zero(e->vector.dimension());
    } else if (acc->size() != static_cast<Eigen::Index>(e->vector.dimension())) {
      throw ValidationError("target embedding '" + e->sample_id + "' has dimension " +
                            std::to_string(e->vector.dimension()) + ", expected " +
                            std::to_string(acc->size()));
    }
    accumulate(*acc, e->vector, 1.0);
    ids.push_back(std::move(e->sample_id));
  }
  if (!acc) throw std::invalid_argument("build_target: no target embeddings");
  *acc /= static_cast<double>(ids.size());
  return TargetRepresentation{finalize_sparse(*acc, 0.0), ids.size(), std::move(ids)};
}

TargetRepresentation build_target(std::span<const NasEmbedding> embeddings) {
  return build_target(span_source(embeddings));
}

double metric_distance(const SparseVectorf& a, const SparseVectorf& b, MetricKind metric) {
  switch (metric) {
    case MetricKind::jaccard: return 1.0 - jaccard_similarity(a, b);
    case MetricKind::cosine: return 1.0 - cosine_similarity(a, b);
    case MetricKind::euclidean: return euclidean_distance(a, b);
  }
  throw std::invalid_argument("unknown metric");
}

double score_sample(const NasEmbedding& e, const TargetRepresentation& t, MetricKind metric) {
  return metric_distance(e.vector, t.vector, metric);
}

std::size_t resolve_budget(std::size_t total, std::optional<std::int64_t> k,
                           std::optional<double> ratio) {
  if (k.has_value() == ratio.has_value()) {
    throw std::invalid_argument("exactly one of budget k and selection ratio must be given");
  }
  if (k) {
    if (*k < 0) throw std::invalid_argument("budget k must be non-negative");
    return std::min<std::size_t>(static_cast<std::size_t>(*k), total);
  }
  const double r = *ratio;
  if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("selection ratio must lie in [0, 1]");
  const double exact = r * static_cast<double>(total);
  const double nearest = std::nearbyint(exact);
  const double budget =
      std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact) ? nearest : std::ceil(exact);
  return std::min<std::size_t>(static_cast<std::size_t>(budget), total);
}

// ---------------------------------------------------------------- TopkSelector

TopkSelector::TopkSelector(std::size_t budget) : budget_(budget) {}

bool TopkSelector::before(const Candidate& a, double distance, std::string_view id,
                          std::uint64_t arrival) {
  if (a.distance != distance) return a.distance < distance;
  if (a.id != id) return a.id < id;
  return a.arrival < arrival;
}

bool TopkSelector::before(const Candidate& a, const Candidate& b) {
  return before(a, b.distance, b.id, b.arrival);
}

void TopkSelector::offer(std::string_view id, double distance) {
  const std::uint64_t arrival = offered_++;
  if (budget_ == 0) return;
  const auto cmp = [](const Candidate& a, const Candidate& b) { return before(a, b); };
  if (heap_.size() < budget_) {
    heap_.push_back({distance, std::string(id), arrival});
    std::push_heap(heap_.begin(), heap_.end(), cmp);
    return;
  }
  // heap_.front() is the worst kept candidate.
  if (!before(heap_.front(), distance, id, arrival)) {
    std::pop_heap(heap_.begin(), heap_.end(), cmp);
    heap_.back() = {distance, std::string(id), arrival};
    std::push_heap(heap_.begin(), heap_.end(), cmp);
  }
}

std::vector<RankedSample> TopkSelector::finish() && {
  std::sort(heap_.begin(), heap_.end(),
            [](const Candidate& a, const Candidate& b) { return before(a, b); });
  std::vector<RankedSample> out;
  out.reserve(heap_.size());
  for (auto& c : heap_) out.push_back({std::move(c.id), c.distance, out.size() + 1});
  heap_.clear();
  return out;
}

// ---------------------------------------------------------------- select_topk

namespace {

void score_batch(std::span<const NasEmbedding> batch, const TargetRepresentation& target,
                 MetricKind metric, unsigned workers, std::vector<double>& distances) {
  distances.resize(batch.size());
  detail::parallel_for(batch.size(), workers, [&](std::size_t i) {
    try {
      distances[i] = score_sample(batch[i], target, metric);
    } catch (const std::domain_error& err) {
      throw std::domain_error("sample '" + batch[i].sample_id + "': " + err.what());
    } catch (const std::invalid_argument& err) {
      throw std::invalid_argument("sample '" + batch[i].sample_id + "': " + err.what());
    }
  });
}

std::size_t batch_size_for(unsigned workers) {
  return std::max<std::size_t>(1024, std::size_t{256} * workers);
}

SelectionResult make_result(TopkSelector&& selector, MetricKind metric, std::size_t budget) {
  SelectionResult result;
  result.budget_k = budget;
  result.metric = metric;
  result.total_scanned = selector.offered();
  result.ranked = std::move(selector).finish();
  return result;
}

}  // namespace

// Scoring runs in parallel per batch; offers happen in input order, so the
// heap contents never depend on the worker count.

SelectionResult select_topk(const EmbeddingSource& source, const TargetRepresentation& target,
                            MetricKind metric, std::size_t budget, unsigned threads) {
  const unsigned workers = std::max(1u, threads);
  const std::size_t batch_size = batch_size_for(workers);
  TopkSelector selector(budget);
  std::vector<NasEmbedding> batch;
  std::vector<double> distances;
  bool done = false;
  while (!done) {
    batch.clear();
    while (batch.size() < batch_size) {
      auto e = source();
      if (!e) {
        done = true;
        break;
      }
      batch.push_back(std::move(*e));
    }
    score_batch(batch, target, metric, workers, distances);
    for (std::size_t i = 0; i < batch.size(); ++i) selector.offer(batch[i].sample_id, distances[i]);
  }
  return make_result(std::move(selector), metric, budget);
}

SelectionResult select_topk(std::span<const NasEmbedding> embeddings,
                            const TargetRepresentation& target, MetricKind metric,
                            std::size_t budget, unsigned threads) {
  const unsigned workers = std::max(1u, threads);
  const std::size_t batch_size = batch_size_for(workers);
  TopkSelector selector(budget);
  std::vector<double> distances;
  for (std::size_t start = 0; start < embeddings.size(); start += batch_size) {
    const auto batch = embeddings.subspan(start, std::min(batch_size, embeddings.size() - start));
    score_batch(batch, target, metric, workers, distances);
    for (std::size_t i = 0; i < batch.size(); ++i) selector.offer(batch[i].sample_id, distances[i]);
  }
  return make_result(std::move(selector), metric, budget);
}

}  // namespace nas
