#include "nas/io_formats.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <string_view>

#include <json.hpp>

#include "nas/error.hpp"

namespace nas {

namespace {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

// Large payloads are read in bounded chunks so that a corrupt length field
// fails with a short read rather than a giant allocation.
constexpr std::size_t kReadChunkBytes = std::size_t{4} << 20;

void append_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void append_i32(std::string& buf, std::int32_t v) { append_u32(buf, std::bit_cast<std::uint32_t>(v)); }

void append_f32(std::string& buf, float v) { append_u32(buf, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t decode_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_bytes(std::ostream& out, std::string_view bytes, const char* what) {
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(std::string("write failed: ") + what);
}

void write_floats(std::ostream& out, const float* data, std::size_t count, const char* what) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
    if (!out) throw IoError(std::string("write failed: ") + what);
  } else {
    std::string buf;
    buf.reserve(count * 4);
    for (std::size_t i = 0; i < count; ++i) append_f32(buf, data[i]);
    write_bytes(out, buf, what);
  }
}

/// Byte-offset-tracking reader.
class Input {
 public:
  Input(std::istream& in, std::uint64_t& offset, const char* format)
      : in_(in), offset_(offset), format_(format) {}

  /// Reads exactly n bytes or throws IoError naming expected vs. actual.
  void exact(void* dst, std::size_t n, const std::string& what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    const std::uint64_t at = offset_;
    offset_ += got;
    if (got != n) {
      throw IoError(std::string(format_) + ": truncated " + what + " at byte offset " +
                    std::to_string(at) + ": expected " + std::to_string(n) + " bytes, got " +
                    std::to_string(got));
    }
  }

  /// Like exact(), but a clean end of stream before the first byte returns
  /// false.
  bool exact_or_end(void* dst, std::size_t n, const std::string& what) {
    if (in_.peek() == std::char_traits<char>::eof()) {
      in_.clear(in_.rdstate() & ~std::ios::failbit);
      return false;
    }
    exact(dst, n, what);
    return true;
  }

  std::uint32_t u32(const std::string& what) {
    unsigned char b[4];
    exact(b, 4, what);
    return decode_u32(b);
  }

  std::int32_t i32(const std::string& what) { return std::bit_cast<std::int32_t>(u32(what)); }

  std::string string(std::uint32_t len, const std::string& what) {
    std::string s;
    std::size_t done = 0;
    while (done < len) {
      const std::size_t step = std::min<std::size_t>(kReadChunkBytes, len - done);
      s.resize(done + step);
      exact(s.data() + done, step, what);
      done += step;
    }
    return s;
  }

  std::vector<float> floats(std::uint64_t count, const std::string& what) {
    std::vector<float> v;
    const std::uint64_t total = count * 4;
    std::uint64_t done = 0;
    while (done < total) {
      const std::size_t step = static_cast<std::size_t>(std::min<std::uint64_t>(kReadChunkBytes, total - done));
      v.resize(static_cast<std::size_t>((done + step) / 4));
      exact(reinterpret_cast<char*>(v.data()) + done, step, what);
      done += step;
    }
    if constexpr (std::endian::native != std::endian::little) {
      for (auto& f : v) {
        unsigned char b[4];
        std::memcpy(b, &f, 4);
        f = std::bit_cast<float>(decode_u32(b));
      }
    }
    return v;
  }

  void magic(std::string_view expected) {
    char m[4];
    exact(m, 4, "header magic");
    if (std::string_view(m, 4) != expected) {
      throw FormatError(std::string(format_) + ": bad magic '" + printable(std::string_view(m, 4)) +
                        "', expected '" + std::string(expected) + "'");
    }
    const std::uint32_t version = u32("header version");
    if (version != kFormatVersion) {
      throw FormatError(std::string(format_) + ": unsupported version " + std::to_string(version));
    }
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  static std::string printable(std::string_view s) {
    std::string out;
    for (char c : s) out.push_back((c >= 0x20 && c < 0x7f) ? c : '?');
    return out;
  }

  std::istream& in_;
  std::uint64_t& offset_;
  const char* format_;
};

std::optional<std::int32_t> decode_layer(std::int32_t raw, const char* format) {
  if (raw == -1) return std::nullopt;
  if (raw < 0) {
    throw FormatError(std::string(format) + ": invalid layer_index " + std::to_string(raw));
  }
  return raw;
}

std::int32_t encode_layer(const std::optional<std::int32_t>& layer) { return layer ? *layer : -1; }

}  // namespace

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

// ---------------------------------------------------------------- NASD

NasdReader::NasdReader(std::istream& in) : in_(in) {
  Input input(in_, offset_, "NASD");
  input.magic("NASD");
  header_.d = input.u32("header d");
  unsigned char tail[8];
  input.exact(tail, sizeof tail, "header");
  header_.dtype = tail[0];
  const auto layer = std::bit_cast<std::int32_t>(decode_u32(tail + 1));
  if (header_.d == 0) throw FormatError("NASD: hidden size d must be positive");
  if (header_.dtype != 0) {
    throw FormatError("NASD: unsupported dtype " + std::to_string(header_.dtype) +
                      " (only 0 = float32)");
  }
  header_.layer_index = decode_layer(layer, "NASD");
  if (tail[5] != 0 || tail[6] != 0 || tail[7] != 0) {
    throw FormatError("NASD: reserved header bytes must be zero");
  }
}

std::optional<TokenActivationBlock> NasdReader::next() {
  Input input(in_, offset_, "NASD");
  const std::uint64_t record_start = offset_;
  unsigned char len_bytes[4];
  if (!input.exact_or_end(len_bytes, 4, "record id length")) return std::nullopt;
  const std::uint32_t id_len = decode_u32(len_bytes);
  TokenActivationBlock block;
  block.sample_id = input.string(id_len, "record id");
  validate_sample_id(block.sample_id);
  const std::uint32_t n_tokens = input.u32("token count of '" + block.sample_id + "'");
  if (n_tokens == 0) {
    throw ValidationError("NASD: record '" + block.sample_id + "' at byte offset " +
                          std::to_string(record_start) + " has zero tokens");
  }
  const std::uint64_t count = std::uint64_t{n_tokens} * header_.d;
  const auto values = input.floats(count, "activations of '" + block.sample_id + "'");
  block.activations = Eigen::Map<const ActivationMatrix>(values.data(), n_tokens, header_.d);
  block.validate();
  return block;
}

NasdWriter::NasdWriter(std::ostream& out, const NasdHeader& header) : out_(out), header_(header) {
  if (header.d == 0) throw std::invalid_argument("NASD: hidden size d must be positive");
  if (header.dtype != 0) throw std::invalid_argument("NASD: only dtype 0 (float32) is supported");
  if (header.layer_index && *header.layer_index < 0) {
    throw std::invalid_argument("NASD: layer_index must be non-negative");
  }
  std::string buf = "NASD";
  append_u32(buf, kFormatVersion);
  append_u32(buf, header.d);
  buf.push_back(static_cast<char>(header.dtype));
  append_i32(buf, encode_layer(header.layer_index));
  buf.append(3, '\0');
  write_bytes(out_, buf, "NASD header");
}

void NasdWriter::write(const TokenActivationBlock& block) {
  block.validate();
  if (block.dim() != static_cast<Eigen::Index>(header_.d)) {
    throw std::invalid_argument("NASD: block '" + block.sample_id + "' has d=" +
                                std::to_string(block.dim()) + ", header has d=" +
                                std::to_string(header_.d));
  }
  std::string buf;
  append_u32(buf, static_cast<std::uint32_t>(block.sample_id.size()));
  buf += block.sample_id;
  append_u32(buf, static_cast<std::uint32_t>(block.n_tokens()));
  write_bytes(out_, buf, "NASD record");
  write_floats(out_, block.activations.data(), static_cast<std::size_t>(block.activations.size()),
               "NASD activations");
}

// ---------------------------------------------------------------- SAEW

SaeWeights read_saew(std::istream& in) {
  std::uint64_t offset = 0;
  Input input(in, offset, "SAEW");
  input.magic("SAEW");
  SaeWeights w;
  w.d = input.u32("header d");
  w.d_latent = input.u32("header d_latent");
  w.k = input.u32("header K");
  w.layer_index = decode_layer(input.i32("header layer_index"), "SAEW");
  if (w.d == 0 || w.d_latent == 0) {
    throw FormatError("SAEW: d and d_latent must be positive");
  }
  if (w.k == 0 || w.k > w.d_latent) {
    throw ValidationError("SAEW: K=" + std::to_string(w.k) + " outside [1, d_latent=" +
                          std::to_string(w.d_latent) + "]");
  }
  const auto bias = input.floats(w.d, "b_pre");
  w.b_pre = Eigen::Map<const DenseVectorf>(bias.data(), w.d);
  const auto enc = input.floats(std::uint64_t{w.d_latent} * w.d, "W_enc");
  w.w_enc = Eigen::Map<const EncoderMatrix>(enc.data(), w.d_latent, w.d);
  if (!input.at_end()) {
    throw FormatError("SAEW: trailing bytes after W_enc at byte offset " + std::to_string(offset));
  }
  w.validate();
  return w;
}

void write_saew(std::ostream& out, const SaeWeights& w) {
  w.validate();
  std::string buf = "SAEW";
  append_u32(buf, kFormatVersion);
  append_u32(buf, w.d);
  append_u32(buf, w.d_latent);
  append_u32(buf, w.k);
  append_i32(buf, encode_layer(w.layer_index));
  write_bytes(out, buf, "SAEW header");
  write_floats(out, w.b_pre.data(), w.d, "SAEW b_pre");
  write_floats(out, w.w_enc.data(), static_cast<std::size_t>(w.w_enc.size()), "SAEW W_enc");
}

// ---------------------------------------------------------------- NASE

NaseReader::NaseReader(std::istream& in) : in_(in) {
  Input input(in_, offset_, "NASE");
  input.magic("NASE");
  d_latent_ = input.u32("header d_latent");
  if (d_latent_ == 0) throw FormatError("NASE: d_latent must be positive");
}

std::optional<NasEmbedding> NaseReader::next() {
  Input input(in_, offset_, "NASE");
  const std::uint64_t record_start = offset_;
  unsigned char len_bytes[4];
  if (!input.exact_or_end(len_bytes, 4, "record id length")) return std::nullopt;
  std::string id = input.string(decode_u32(len_bytes), "record id");
  validate_sample_id(id);
  const std::uint32_t nnz = input.u32("nnz of '" + id + "'");
  if (nnz > d_latent_) {
    throw ValidationError("NASE: record '" + id + "' at byte offset " +
                          std::to_string(record_start) + " has nnz " + std::to_string(nnz) +
                          " > d_latent " + std::to_string(d_latent_));
  }
  std::vector<unsigned char> raw(std::size_t{nnz} * 8);
  input.exact(raw.data(), raw.size(), "entries of '" + id + "'");
  std::vector<SparseVectorf::Entry> entries(nnz);
  for (std::uint32_t i = 0; i < nnz; ++i) {
    entries[i].index = decode_u32(raw.data() + 8 * i);
    entries[i].value = std::bit_cast<float>(decode_u32(raw.data() + 8 * i + 4));
  }
  try {
    return NasEmbedding{std::move(id), SparseVectorf(d_latent_, std::move(entries))};
  } catch (const ValidationError& e) {
    throw ValidationError("NASE: record at byte offset " + std::to_string(record_start) + ": " +
                          e.what());
  }
}

NaseWriter::NaseWriter(std::ostream& out, std::uint32_t d_latent) : out_(out), d_latent_(d_latent) {
  if (d_latent == 0) throw std::invalid_argument("NASE: d_latent must be positive");
  std::string buf = "NASE";
  append_u32(buf, kFormatVersion);
  append_u32(buf, d_latent);
  write_bytes(out_, buf, "NASE header");
}

void NaseWriter::write(const NasEmbedding& e) {
  validate_sample_id(e.sample_id);
  if (e.vector.dimension() != d_latent_) {
    throw std::invalid_argument("NASE: embedding '" + e.sample_id + "' has dimension " +
                                std::to_string(e.vector.dimension()) + ", file has " +
                                std::to_string(d_latent_));
  }
  std::string buf;
  buf.reserve(12 + e.sample_id.size() + 8 * e.vector.nnz());
  append_u32(buf, static_cast<std::uint32_t>(e.sample_id.size()));
  buf += e.sample_id;
  append_u32(buf, static_cast<std::uint32_t>(e.vector.nnz()));
  for (const auto& entry : e.vector.entries()) {
    append_u32(buf, entry.index);
    append_f32(buf, entry.value);
  }
  write_bytes(out_, buf, "NASE record");
}

NaseFile read_nase_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  NaseReader reader(in);
  NaseFile file;
  file.d_latent = reader.d_latent();
  while (auto e = reader.next()) file.records.push_back(std::move(*e));
  return file;
}

void write_nase_file(const std::filesystem::path& path, std::uint32_t d_latent,
                     std::span<const NasEmbedding> records) {
  auto out = open_output(path);
  NaseWriter writer(out, d_latent);
  for (const auto& e : records) writer.write(e);
  out.flush();
  if (!out) throw IoError("write failed: '" + path.string() + "'");
}

// ---------------------------------------------------------------- selection

void write_selection(const SelectionResult& result, std::ostream& records, std::ostream& summary,
                     const std::string& config_json) {
  for (const auto& r : result.ranked) {
    nlohmann::ordered_json line;
    line["id"] = r.sample_id;
    line["rank"] = r.rank;
    line["distance"] = static_cast<double>(static_cast<float>(r.distance));
    const std::string text = line.dump() + "\n";
    write_bytes(records, text, "selection records");
  }
  nlohmann::ordered_json doc;
  doc["metric"] = std::string(to_string(result.metric));
  doc["budget"] = result.budget_k;
  doc["selected"] = result.ranked.size();
  doc["total_scanned"] = result.total_scanned;
  doc["config"] = nlohmann::ordered_json::parse(config_json);
  write_bytes(summary, doc.dump(2) + "\n", "selection summary");
}

std::vector<SelectionRecord> read_selection_records(std::istream& in) {
  std::vector<SelectionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("rank").get<std::size_t>(),
                     j.at("distance").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("selection records line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace nas
