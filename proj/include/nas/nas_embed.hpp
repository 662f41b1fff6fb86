#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>

#include "nas/sae.hpp"
#include "nas/types.hpp"

namespace nas {

/// Encodes every token and mean-pools the sparse codes in token order with
/// a 64-bit accumulator.
NasEmbedding embed_sample(const SaeWeights& w, const TokenActivationBlock& block,
                          const EncoderConfig& cfg);

struct CorpusStats {
  std::size_t embedded = 0;
  std::size_t skipped_duplicates = 0;
};

using WarningSink = std::function<void(const std::string&)>;

/// Streams a NASD dump into a NASE file, preserving input order. At most
/// `4 * threads` blocks are held in memory at once.
CorpusStats embed_corpus(const SaeWeights& w, std::istream& dump, std::ostream& out,
                         const EncoderConfig& cfg, unsigned threads = 1,
                         const WarningSink& warn = {});
CorpusStats embed_corpus(const SaeWeights& w, const std::filesystem::path& dump_path,
                         const std::filesystem::path& out_path, const EncoderConfig& cfg,
                         unsigned threads = 1, const WarningSink& warn = {});

}  // namespace nas
