#include "nas/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "nas/error.hpp"
#include "nas/io_formats.hpp"
#include "nas/metrics.hpp"
#include "nas/nas_embed.hpp"
#include "nas/sae.hpp"
#include "nas/select.hpp"
#include "parallel.hpp"

namespace nas::cli {

namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr const char* kTargetId = "__target__";

struct Log {
  std::ostream& err;
  int verbosity = 1;

  void info(const std::string& msg) const {
    if (verbosity >= 1) err << "nas: " << msg << "\n";
  }
  void debug(const std::string& msg) const {
    if (verbosity >= 2) err << "nas: " << msg << "\n";
  }
  void warn(const std::string& msg) const { err << "nas: warning: " << msg << "\n"; }
};

std::string format_distance(double d) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", d);
  return buf;
}

bool same_file(const fs::path& a, const fs::path& b) {
  std::error_code ec;
  const auto ca = fs::weakly_canonical(a, ec);
  if (ec) return a == b;
  const auto cb = fs::weakly_canonical(b, ec);
  if (ec) return a == b;
  return ca == cb;
}

void require_distinct(const fs::path& out, std::initializer_list<fs::path> inputs) {
  for (const auto& in : inputs) {
    if (same_file(out, in)) {
      throw UsageError("output path '" + out.string() + "' is also an input");
    }
  }
}

EmbeddingSource reader_source(NaseReader& reader) {
  return [&reader]() { return reader.next(); };
}

/// Loads a single-record target file.
TargetRepresentation load_target(const fs::path& path) {
  auto in = open_input(path);
  NaseReader reader(in);
  auto first = reader.next();
  if (!first) throw ValidationError("target file '" + path.string() + "' has no record");
  if (reader.next()) {
    throw ValidationError("target file '" + path.string() + "' must hold exactly one record");
  }
  return TargetRepresentation{std::move(first->vector), 1, {std::move(first->sample_id)}};
}

void require_matching_latent(std::uint32_t emb, std::uint32_t target) {
  if (emb != target) {
    throw ValidationError("embedding dimension " + std::to_string(emb) +
                          " does not match target dimension " + std::to_string(target));
  }
}

// ---------------------------------------------------------------- options

struct EncodeOptions {
  std::string sae;
  std::string dump;
  std::string out;
  std::optional<std::uint32_t> topk;
  std::string negativity = "clamp";
  std::string dedup = "error";
  std::string pooling = "mean";
  unsigned threads = 0;
};

struct TargetOptions {
  std::string emb;
  std::string out;
};

struct SelectOptions {
  std::string emb;
  std::string target;
  std::string metric = "jaccard";
  std::optional<std::int64_t> k;
  std::optional<double> ratio;
  std::string out;
  std::string summary;
  unsigned threads = 0;
};

struct ScoreOptions {
  std::string emb;
  std::string target;
  std::string metric = "all";
};

struct StatsOptions {
  std::string emb;
};

struct MergeOptions {
  std::string out;
  std::vector<std::string> inputs;
};

// ---------------------------------------------------------------- commands

int cmd_encode(const EncodeOptions& o, const Log& log) {
  require_distinct(o.out, {o.sae, o.dump});
  EncoderConfig cfg;
  cfg.k_override = o.topk;
  cfg.negativity = parse_negativity_policy(o.negativity);
  cfg.dedup = parse_dedup_policy(o.dedup);
  cfg.pooling = parse_pooling(o.pooling);
  if (cfg.pooling != Pooling::mean) {
    throw UsageError("pooling '" + o.pooling + "' is not supported; only 'mean' is implemented");
  }
  const unsigned threads = detail::resolve_thread_count(o.threads);

  const auto t0 = std::chrono::steady_clock::now();
  const SaeWeights w = load_sae_weights(o.sae);
  if (!w.is_expanding()) {
    log.warn("SAE latent size " + std::to_string(w.d_latent) + " is smaller than input size " +
             std::to_string(w.d));
  }
  log.debug("weights d=" + std::to_string(w.d) + " d_latent=" + std::to_string(w.d_latent) +
            " K=" + std::to_string(cfg.effective_k(w)) + " threads=" + std::to_string(threads));
  const auto stats = embed_corpus(w, fs::path(o.dump), fs::path(o.out), cfg, threads,
                                  [&](const std::string& m) { log.warn(m); });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream msg;
  msg << "embedded " << stats.embedded << " samples in " << secs << " s";
  if (stats.skipped_duplicates > 0) msg << " (" << stats.skipped_duplicates << " duplicates skipped)";
  log.info(msg.str());
  return kOk;
}

int cmd_target(const TargetOptions& o, const Log& log) {
  require_distinct(o.out, {o.emb});
  auto in = open_input(o.emb);
  NaseReader reader(in);
  const auto target = build_target(reader_source(reader));
  const NasEmbedding record{kTargetId, target.vector};
  write_nase_file(o.out, reader.d_latent(), std::span(&record, 1));
  log.info("target representation built from M=" + std::to_string(target.m_samples) + " samples");
  return kOk;
}

int cmd_select(const SelectOptions& o, const Log& log) {
  if (o.k.has_value() == o.ratio.has_value()) {
    throw UsageError("select requires exactly one of -k/--budget and --ratio");
  }
  const std::string summary_path = o.summary.empty() ? o.out + ".summary.json" : o.summary;
  require_distinct(o.out, {o.emb, o.target});
  require_distinct(summary_path, {o.emb, o.target, o.out});
  const MetricKind metric = parse_metric(o.metric);
  const unsigned threads = detail::resolve_thread_count(o.threads);

  const auto target = load_target(o.target);

  // First pass counts and validates the corpus so a ratio budget can be
  // resolved without holding embeddings in memory.
  std::size_t total = 0;
  {
    auto in = open_input(o.emb);
    NaseReader reader(in);
    require_matching_latent(reader.d_latent(), target.vector.dimension());
    while (reader.next()) ++total;
  }
  const std::size_t budget = resolve_budget(total, o.k, o.ratio);

  auto in = open_input(o.emb);
  NaseReader reader(in);
  const auto result = select_topk(reader_source(reader), target, metric, budget, threads);

  nlohmann::ordered_json config;
  config["emb"] = o.emb;
  config["target"] = o.target;
  if (o.k) config["k"] = *o.k;
  if (o.ratio) config["ratio"] = *o.ratio;
  auto records = open_output(o.out);
  auto summary = open_output(summary_path);
  write_selection(result, records, summary, config.dump());
  records.flush();
  summary.flush();
  if (!records || !summary) throw IoError("failed writing selection output");
  log.info("selected " + std::to_string(result.ranked.size()) + " of " + std::to_string(total) +
           " samples (metric " + std::string(to_string(metric)) + ")");
  return kOk;
}

int cmd_score(const ScoreOptions& o, std::ostream& out, const Log& log) {
  std::vector<MetricKind> metrics;
  if (o.metric == "all") {
    metrics = {MetricKind::jaccard, MetricKind::cosine, MetricKind::euclidean};
  } else {
    metrics = {parse_metric(o.metric)};
  }
  const auto target = load_target(o.target);
  auto in = open_input(o.emb);
  NaseReader reader(in);
  require_matching_latent(reader.d_latent(), target.vector.dimension());
  std::size_t n = 0;
  while (auto e = reader.next()) {
    for (MetricKind m : metrics) {
      double d = 0.0;
      try {
        d = score_sample(*e, target, m);
      } catch (const std::domain_error& err) {
        throw std::domain_error("sample '" + e->sample_id + "': " + err.what());
      }
      out << e->sample_id << '\t' << to_string(m) << '\t' << format_distance(d) << '\n';
    }
    ++n;
  }
  log.debug("scored " + std::to_string(n) + " samples");
  return kOk;
}

int cmd_stats(const StatsOptions& o, std::ostream& out) {
  auto in = open_input(o.emb);
  NaseReader reader(in);
  std::size_t count = 0;
  std::size_t nnz_min = std::numeric_limits<std::size_t>::max();
  std::size_t nnz_max = 0;
  double nnz_sum = 0.0;
  std::optional<float> vmin;
  std::optional<float> vmax;
  while (auto e = reader.next()) {
    const std::size_t nnz = e->vector.nnz();
    ++count;
    nnz_min = std::min(nnz_min, nnz);
    nnz_max = std::max(nnz_max, nnz);
    nnz_sum += static_cast<double>(nnz);
    for (const auto& entry : e->vector.entries()) {
      vmin = vmin ? std::min(*vmin, entry.value) : entry.value;
      vmax = vmax ? std::max(*vmax, entry.value) : entry.value;
    }
  }
  if (count == 0) nnz_min = 0;
  const double nnz_mean = count == 0 ? 0.0 : nnz_sum / static_cast<double>(count);
  out << "count\t" << count << '\n'
      << "dimension\t" << reader.d_latent() << '\n'
      << "nnz_min\t" << nnz_min << '\n'
      << "nnz_mean\t" << format_distance(nnz_mean) << '\n'
      << "nnz_max\t" << nnz_max << '\n'
      << "value_min\t" << (vmin ? format_distance(*vmin) : "na") << '\n'
      << "value_max\t" << (vmax ? format_distance(*vmax) : "na") << '\n';
  return kOk;
}

int cmd_merge(const MergeOptions& o, const Log& log) {
  for (const auto& in : o.inputs) require_distinct(o.out, {in});
  std::optional<NasdHeader> header;
  std::size_t total = 0;
  auto out = open_output(o.out);
  std::optional<NasdWriter> writer;
  for (const auto& path : o.inputs) {
    auto in = open_input(path);
    NasdReader reader(in);
    if (!header) {
      header = reader.header();
      writer.emplace(out, *header);
    } else if (!(reader.header() == *header)) {
      throw ValidationError("dump '" + path + "' header (d=" + std::to_string(reader.header().d) +
                            ") does not match the first input (d=" + std::to_string(header->d) +
                            ")");
    }
    while (auto block = reader.next()) {
      writer->write(*block);
      ++total;
    }
  }
  out.flush();
  if (!out) throw IoError("failed writing '" + o.out + "'");
  log.info("merged " + std::to_string(total) + " samples from " + std::to_string(o.inputs.size()) +
           " dumps");
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Task-specific data selection with sparse-autoencoder activation embeddings", "nas"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "nas 1.0.0");
  int verbose = 0;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "More log output on standard error");
  app.add_flag("-q,--quiet", quiet, "Only warnings and errors on standard error");

  EncodeOptions enc;
  auto* encode = app.add_subcommand("encode", "Embed a token activation dump (NASD) into NASE");
  encode->add_option("--sae", enc.sae, "SAE weights (SAEW)")->required();
  encode->add_option("--dump", enc.dump, "Token activation dump (NASD)")->required();
  encode->add_option("--out", enc.out, "Output embeddings (NASE)")->required();
  encode->add_option("--topk", enc.topk, "Override the SAE sparsity K");
  encode->add_option("--negativity", enc.negativity, "Negative latent policy")
      ->check(CLI::IsMember({"clamp", "error", "allow"}));
  encode->add_option("--dedup", enc.dedup, "Duplicate sample id policy")
      ->check(CLI::IsMember({"error", "skip"}));
  encode->add_option("--pooling", enc.pooling, "Token pooling")
      ->check(CLI::IsMember({"mean", "max", "last"}));
  encode->add_option("--threads", enc.threads, "Worker threads (0 = auto, NAS_THREADS)");

  TargetOptions tgt;
  auto* target = app.add_subcommand("target", "Average target-task embeddings into one record");
  target->add_option("--emb", tgt.emb, "Target embeddings (NASE)")->required();
  target->add_option("--out", tgt.out, "Output target representation (NASE)")->required();

  SelectOptions sel;
  auto* select = app.add_subcommand("select", "Select the source samples nearest to the target");
  select->add_option("--emb", sel.emb, "Source embeddings (NASE)")->required();
  select->add_option("--target", sel.target, "Target representation (NASE)")->required();
  select->add_option("--metric", sel.metric, "Distance metric")
      ->check(CLI::IsMember({"jaccard", "cosine", "euclidean"}));
  auto* k_opt = select->add_option("-k,--budget", sel.k, "Number of samples to select");
  auto* ratio_opt = select->add_option("--ratio", sel.ratio, "Fraction of the corpus to select");
  k_opt->excludes(ratio_opt);
  select->add_option("--out", sel.out, "Selection records (JSON lines)")->required();
  select->add_option("--summary", sel.summary, "Summary document (default: <out>.summary.json)");
  select->add_option("--threads", sel.threads, "Worker threads (0 = auto, NAS_THREADS)");

  ScoreOptions sco;
  auto* score = app.add_subcommand("score", "Print per-sample distances to the target");
  score->add_option("--emb", sco.emb, "Embeddings (NASE)")->required();
  score->add_option("--target", sco.target, "Target representation (NASE)")->required();
  score->add_option("--metric", sco.metric, "Metric or 'all'")
      ->check(CLI::IsMember({"jaccard", "cosine", "euclidean", "all"}));

  StatsOptions sta;
  auto* stats = app.add_subcommand("stats", "Summarize an embeddings file");
  stats->add_option("--emb", sta.emb, "Embeddings (NASE)")->required();

  MergeOptions mer;
  auto* merge = app.add_subcommand("merge", "Concatenate NASD dumps with identical headers");
  merge->add_option("--out", mer.out, "Output dump (NASD)")->required();
  merge->add_option("inputs", mer.inputs, "Input dumps (NASD)")->required()->expected(1, -1);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "nas: " << e.what() << "\n" << app.help() << std::flush;
    return kUsage;
  }

  const Log log{err, quiet ? 0 : 1 + verbose};
  try {
    if (encode->parsed()) return cmd_encode(enc, log);
    if (target->parsed()) return cmd_target(tgt, log);
    if (select->parsed()) return cmd_select(sel, log);
    if (score->parsed()) return cmd_score(sco, out, log);
    if (stats->parsed()) return cmd_stats(sta, out);
    if (merge->parsed()) return cmd_merge(mer, log);
  } catch (const UsageError& e) {
    err << "nas: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    err << "nas: io error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    err << "nas: format error: " << e.what() << "\n";
    return kInvalidData;
  } catch (const ValidationError& e) {
    err << "nas: validation error: " << e.what() << "\n";
    return kInvalidData;
  } catch (const std::domain_error& e) {
    err << "nas: domain error: " << e.what() << "\n";
    return kInvalidData;
  } catch (const std::invalid_argument& e) {
    err << "nas: invalid argument: " << e.what() << "\n";
    return kInvalidData;
  } catch (const std::exception& e) {
    err << "nas: error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace nas::cli
