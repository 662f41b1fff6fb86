#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nas/sae.hpp"
#include "nas/select.hpp"
#include "nas/types.hpp"

// Binary formats shared by the extractor and every engine stage. All
// integers and floats are little-endian, fixed width, uncompressed.
//
//   NASD  "NASD" | version u32 | d u32 | dtype u8 | layer_index i32 | 3 zero bytes
//         then to EOF: id_len u32 | id | n_tokens u32 | n_tokens*d f32 (row-major)
//   SAEW  "SAEW" | version u32 | d u32 | d_latent u32 | K u32 | layer_index i32
//         | b_pre d*f32 | W_enc d_latent*d f32 (row-major)
//   NASE  "NASE" | version u32 | d_latent u32
//         then to EOF: id_len u32 | id | nnz u32 | nnz*(index u32, value f32)
//
// Readers validate every invariant on ingest: FormatError for header
// problems, IoError for short reads, ValidationError for bad contents.

namespace nas {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kNasdHeaderBytes = 20;
inline constexpr std::size_t kSaewHeaderBytes = 24;
inline constexpr std::size_t kNaseHeaderBytes = 12;

std::ifstream open_input(const std::filesystem::path& path);
std::ofstream open_output(const std::filesystem::path& path);

struct NasdHeader {
  std::uint32_t d = 0;
  std::uint8_t dtype = 0;  // 0 = float32, the only supported payload type
  std::optional<std::int32_t> layer_index;

  friend bool operator==(const NasdHeader&, const NasdHeader&) = default;
};

/// Streaming reader over a token activation dump; holds one block at a time.
class NasdReader {
 public:
  explicit NasdReader(std::istream& in);

  const NasdHeader& header() const noexcept { return header_; }
  /// Next block, or nullopt at a clean end of stream.
  std::optional<TokenActivationBlock> next();
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::istream& in_;
  NasdHeader header_;
  std::uint64_t offset_ = 0;
};

class NasdWriter {
 public:
  NasdWriter(std::ostream& out, const NasdHeader& header);
  void write(const TokenActivationBlock& block);

 private:
  std::ostream& out_;
  NasdHeader header_;
};

SaeWeights read_saew(std::istream& in);
void write_saew(std::ostream& out, const SaeWeights& w);

/// Streaming reader over sparse embeddings.
class NaseReader {
 public:
  explicit NaseReader(std::istream& in);

  std::uint32_t d_latent() const noexcept { return d_latent_; }
  std::optional<NasEmbedding> next();
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::istream& in_;
  std::uint32_t d_latent_ = 0;
  std::uint64_t offset_ = 0;
};

class NaseWriter {
 public:
  NaseWriter(std::ostream& out, std::uint32_t d_latent);
  void write(const NasEmbedding& e);

 private:
  std::ostream& out_;
  std::uint32_t d_latent_;
};

struct NaseFile {
  std::uint32_t d_latent = 0;
  std::vector<NasEmbedding> records;
};

NaseFile read_nase_file(const std::filesystem::path& path);
void write_nase_file(const std::filesystem::path& path, std::uint32_t d_latent,
                     std::span<const NasEmbedding> records);

/// One line of a selection records file.
struct SelectionRecord {
  std::string id;
  std::size_t rank = 0;
  double distance = 0.0;
};

/// Line-delimited records (one flat JSON object per selected sample, in rank
/// order) and a separate JSON summary document. Distances are narrowed to
/// float32 and printed with enough digits to round-trip that value.
/// `config_json` must be a serialized JSON object; it is embedded verbatim
/// under "config".
void write_selection(const SelectionResult& result, std::ostream& records, std::ostream& summary,
                     const std::string& config_json = "{}");

std::vector<SelectionRecord> read_selection_records(std::istream& in);

}  // namespace nas
