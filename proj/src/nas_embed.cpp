#include "nas/nas_embed.hpp"

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "nas/error.hpp"
#include "nas/io_formats.hpp"
#include "parallel.hpp"

namespace nas {

void validate_sample_id(const std::string& id) {
  if (id.empty()) throw ValidationError("sample id must be non-empty");
  if (id.find_first_of("\r\n") != std::string::npos) {
    throw ValidationError("sample id contains a newline");
  }
}

void TokenActivationBlock::validate() const {
  validate_sample_id(sample_id);
  if (n_tokens() < 1) throw ValidationError("sample '" + sample_id + "' has no tokens");
  if (dim() < 1) throw ValidationError("sample '" + sample_id + "' has zero hidden size");
  if (!activations.allFinite()) {
    throw ValidationError("sample '" + sample_id + "' has non-finite activations");
  }
}

NasEmbedding embed_sample(const SaeWeights& w, const TokenActivationBlock& block,
                          const EncoderConfig& cfg) {
  if (cfg.pooling != Pooling::mean) {
    throw std::invalid_argument("only mean pooling is supported");
  }
  block.validate();
  const auto codes = encode_tokens(w, block.activations, cfg);
  Accumulator acc = Accumulator::Zero(w.d_latent);
  const double weight = 1.0 / static_cast<double>(codes.size());
  for (const auto& z : codes) accumulate(acc, z, weight);
  return NasEmbedding{block.sample_id, finalize_sparse(acc, 0.0)};
}

CorpusStats embed_corpus(const SaeWeights& w, std::istream& dump, std::ostream& out,
                         const EncoderConfig& cfg, unsigned threads, const WarningSink& warn) {
  if (cfg.pooling != Pooling::mean) {
    throw std::invalid_argument("only mean pooling is supported");
  }
  cfg.effective_k(w);
  NasdReader reader(dump);
  if (reader.header().d != w.d) {
    throw ValidationError("dump hidden size d=" + std::to_string(reader.header().d) +
                          " does not match SAE weights d=" + std::to_string(w.d));
  }
  NaseWriter writer(out, w.d_latent);

  const unsigned workers = std::max(1u, threads);
  const std::size_t batch_size = workers == 1 ? 1 : std::size_t{4} * workers;
  std::unordered_set<std::string> seen;
  std::vector<TokenActivationBlock> batch;
  std::vector<std::optional<NasEmbedding>> encoded;
  CorpusStats stats;

  bool done = false;
  while (!done) {
    batch.clear();
    while (batch.size() < batch_size) {
      auto block = reader.next();
      if (!block) {
        done = true;
        break;
      }
      if (!seen.insert(block->sample_id).second) {
        if (cfg.dedup == DedupPolicy::error) {
          throw ValidationError("duplicate sample id '" + block->sample_id + "'");
        }
        ++stats.skipped_duplicates;
        if (warn) warn("skipping duplicate sample id '" + block->sample_id + "'");
        continue;
      }
      batch.push_back(std::move(*block));
    }
    encoded.assign(batch.size(), std::nullopt);
    detail::parallel_for(batch.size(), workers,
                         [&](std::size_t i) { encoded[i] = embed_sample(w, batch[i], cfg); });
    for (auto& e : encoded) {
      writer.write(*e);
      ++stats.embedded;
    }
  }
  out.flush();
  if (!out) throw IoError("write failed while embedding corpus");
  return stats;
}

CorpusStats embed_corpus(const SaeWeights& w, const std::filesystem::path& dump_path,
                         const std::filesystem::path& out_path, const EncoderConfig& cfg,
                         unsigned threads, const WarningSink& warn) {
  auto in = open_input(dump_path);
  auto out = open_output(out_path);
  return embed_corpus(w, in, out, cfg, threads, warn);
}

}  // namespace nas
