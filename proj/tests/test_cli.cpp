#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include <json.hpp>

#include "fixtures.hpp"
#include "nas/cli.hpp"
#include "nas/io_formats.hpp"
#include "oracle.hpp"

using nas::SparseVectorf;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = nas::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_weights(const std::filesystem::path& p, const nas::SaeWeights& w) {
  auto out = nas::open_output(p);
  nas::write_saew(out, w);
}

void write_dump(const std::filesystem::path& p, std::uint32_t d,
                const std::vector<nas::TokenActivationBlock>& blocks) {
  auto out = nas::open_output(p);
  nas::NasdWriter w(out, {d, 0, 30});
  for (const auto& b : blocks) w.write(b);
}

struct Workspace {
  fixtures::TempDir dir{"cli"};
  fixtures::Rng rng{17};
  nas::SaeWeights weights = fixtures::random_weights(rng, 8, 256, 16);
  std::vector<nas::TokenActivationBlock> blocks;

  Workspace() {
    for (int i = 0; i < 3; ++i) blocks.push_back(fixtures::random_block(rng, "s" + std::to_string(i), 2 + i, 8));
    write_weights(dir / "w.saew", weights);
    write_dump(dir / "x.nasd", 8, blocks);
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_SUITE("encode") {
  TEST_CASE("valid inputs") {
    Workspace ws;
    const auto r = run({"encode", "--sae", ws.path("w.saew"), "--dump", ws.path("x.nasd"), "--out",
                        ws.path("x.nase")});
    CHECK(r.code == 0);
    CHECK(r.out.empty());
    CHECK(r.err.find("embedded 3 samples") != std::string::npos);
    const auto file = nas::read_nase_file(ws.path("x.nase"));
    REQUIRE(file.records.size() == 3);
    CHECK(file.records[1].sample_id == "s1");
  }

  TEST_CASE("usage errors") {
    Workspace ws;
    CHECK(run({"encode", "--dump", ws.path("x.nasd"), "--out", ws.path("x.nase")}).code == 2);
    CHECK(run({"encode", "--sae", ws.path("w.saew"), "--dump", ws.path("x.nasd"), "--out",
               ws.path("x.nasd")}).code == 2);
    CHECK(run({"encode", "--sae", ws.path("w.saew"), "--dump", ws.path("x.nasd"), "--out",
               ws.path("x.nase"), "--pooling", "max"}).code == 2);
    CHECK(run({"encode", "--sae", ws.path("w.saew"), "--dump", ws.path("x.nasd"), "--out",
               ws.path("x.nase"), "--negativity", "relu"}).code == 2);
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
  }

  TEST_CASE("dimension mismatch names both dims") {
    Workspace ws;
    write_dump(ws.dir / "y.nasd", 5, {fixtures::random_block(ws.rng, "q", 1, 5)});
    const auto r = run({"encode", "--sae", ws.path("w.saew"), "--dump", ws.path("y.nasd"), "--out",
                        ws.path("y.nase")});
    CHECK(r.code == 3);
    CHECK(r.err.find("d=5") != std::string::npos);
    CHECK(r.err.find("d=8") != std::string::npos);
  }

  TEST_CASE("io and format errors") {
    Workspace ws;
    CHECK(run({"encode", "--sae", ws.path("absent.saew"), "--dump", ws.path("x.nasd"), "--out",
               ws.path("x.nase")}).code == 4);
    CHECK(run({"encode", "--sae", ws.path("x.nasd"), "--dump", ws.path("x.nasd"), "--out",
               ws.path("x.nase")}).code == 3);
    std::ofstream(ws.dir / "garbage.saew") << "XXXXXXXXXXXXXXXXXXXXXXXXXXXX";
    CHECK(run({"encode", "--sae", ws.path("garbage.saew"), "--dump", ws.path("x.nasd"), "--out",
               ws.path("x.nase")}).code == 3);
    CHECK(run({"encode", "--sae", ws.path("w.saew"), "--dump", ws.path("x.nasd"), "--out",
               ws.path("x.nase"), "--topk", "9999"}).code == 3);
  }

  TEST_CASE("output is independent of --threads and NAS_THREADS") {
    Workspace ws;
    for (int i = 0; i < 20; ++i) ws.blocks.push_back(fixtures::random_block(ws.rng, "m" + std::to_string(i), 1 + i % 5, 8));
    write_dump(ws.dir / "big.nasd", 8, ws.blocks);
    CHECK(run({"encode", "--sae", ws.path("w.saew"), "--dump", ws.path("big.nasd"), "--out",
               ws.path("t1.nase"), "--threads", "1"}).code == 0);
    CHECK(run({"encode", "--sae", ws.path("w.saew"), "--dump", ws.path("big.nasd"), "--out",
               ws.path("t4.nase"), "--threads", "4"}).code == 0);
    ::setenv("NAS_THREADS", "3", 1);
    CHECK(run({"encode", "--sae", ws.path("w.saew"), "--dump", ws.path("big.nasd"), "--out",
               ws.path("env.nase")}).code == 0);
    ::unsetenv("NAS_THREADS");
    CHECK(slurp(ws.dir / "t1.nase") == slurp(ws.dir / "t4.nase"));
    CHECK(slurp(ws.dir / "t1.nase") == slurp(ws.dir / "env.nase"));
  }
}

TEST_SUITE("target") {
  TEST_CASE("single embedding input copies the vector") {
    fixtures::TempDir dir("tgt");
    fixtures::Rng rng(3);
    const std::vector<nas::NasEmbedding> one{{"only", fixtures::random_sparse(rng, 64, 20)}};
    nas::write_nase_file(dir / "t.nase", 64, one);
    const auto r = run({"target", "--emb", (dir / "t.nase").string(), "--out", (dir / "z.nase").string()});
    CHECK(r.code == 0);
    CHECK(r.err.find("M=1") != std::string::npos);
    const auto z = nas::read_nase_file(dir / "z.nase");
    REQUIRE(z.records.size() == 1);
    CHECK(z.records[0].sample_id == "__target__");
    CHECK(z.records[0].vector == one[0].vector);
  }

  TEST_CASE("empty input") {
    fixtures::TempDir dir("tgt");
    nas::write_nase_file(dir / "t.nase", 64, {});
    CHECK(run({"target", "--emb", (dir / "t.nase").string(), "--out", (dir / "z.nase").string()}).code == 3);
  }

  TEST_CASE("mean of five hand-built vectors matches the oracle") {
    fixtures::TempDir dir("tgt");
    const std::vector<nas::NasEmbedding> five{
        {"a", SparseVectorf(4, {{0, 1.0f}})},           {"b", SparseVectorf(4, {{0, 2.0f}, {1, 0.5f}})},
        {"c", SparseVectorf(4, {{2, 3.0f}})},           {"d", SparseVectorf(4, {{0, 0.25f}, {3, 7.0f}})},
        {"e", SparseVectorf(4, {{1, 1.5f}, {2, 1.0f}})}};
    nas::write_nase_file(dir / "t.nase", 4, five);
    CHECK(run({"target", "--emb", (dir / "t.nase").string(), "--out", (dir / "z.nase").string()}).code == 0);
    std::vector<oracle::Dense> dense;
    for (const auto& e : five) dense.push_back(fixtures::to_oracle(e.vector));
    const auto want = oracle::mean(dense);
    const auto got = nas::read_nase_file(dir / "z.nase").records.at(0).vector;
    for (std::uint32_t i = 0; i < 4; ++i) CHECK(got.coeff(i) == static_cast<float>(want[i]));
  }
}

TEST_SUITE("select") {
  struct Corpus {
    fixtures::TempDir dir{"sel"};
    Corpus(std::size_t n, bool negative = false) {
      fixtures::Rng rng(23);
      std::vector<nas::NasEmbedding> es;
      for (std::size_t i = 0; i < n; ++i) es.push_back({"e" + std::to_string(i), fixtures::random_sparse(rng, 128, 30)});
      if (negative) es.push_back({"neg", SparseVectorf(128, {{3, -1.0f}})});
      nas::write_nase_file(dir / "src.nase", 128, es);
      const std::vector<nas::NasEmbedding> t{{"__target__", fixtures::random_sparse(rng, 128, 60)}};
      nas::write_nase_file(dir / "target.nase", 128, t);
    }
    std::vector<std::string> args(std::vector<std::string> extra) const {
      std::vector<std::string> a{"select", "--emb", (dir / "src.nase").string(), "--target",
                                 (dir / "target.nase").string(), "--out", (dir / "sel.jsonl").string()};
      a.insert(a.end(), extra.begin(), extra.end());
      return a;
    }
  };

  std::vector<nas::SelectionRecord> records(const Corpus& c) {
    std::ifstream in(c.dir / "sel.jsonl");
    return nas::read_selection_records(in);
  }

  TEST_CASE("ratio 0.05 over 100 embeddings selects 5") {
    Corpus c(100);
    const auto r = run(c.args({"--ratio", "0.05"}));
    CHECK(r.code == 0);
    CHECK(r.out.empty());
    const auto recs = records(c);
    REQUIRE(recs.size() == 5);
    for (std::size_t i = 0; i < recs.size(); ++i) CHECK(recs[i].rank == i + 1);
    const auto summary = nlohmann::json::parse(slurp(c.dir / "sel.jsonl.summary.json"));
    CHECK(summary["budget"] == 5);
    CHECK(summary["total_scanned"] == 100);
    CHECK(summary["metric"] == "jaccard");
    CHECK(summary["config"]["ratio"] == 0.05);
  }

  TEST_CASE("budget 0 gives empty records") {
    Corpus c(10);
    CHECK(run(c.args({"-k", "0"})).code == 0);
    CHECK(records(c).empty());
    CHECK(slurp(c.dir / "sel.jsonl").empty());
  }

  TEST_CASE("negative embeddings under jaccard are a domain error") {
    Corpus c(10, true);
    const auto r = run(c.args({"-k", "3"}));
    CHECK(r.code == 3);
    CHECK(r.err.find("neg") != std::string::npos);
    CHECK(run(c.args({"-k", "3", "--metric", "euclidean"})).code == 0);
  }

  TEST_CASE("budget flags") {
    Corpus c(10);
    CHECK(run(c.args({})).code == 2);
    CHECK(run(c.args({"-k", "1", "--ratio", "0.5"})).code == 2);
    CHECK(run(c.args({"--ratio", "1.5"})).code == 3);
    CHECK(run(c.args({"--metric", "hamming", "-k", "1"})).code == 2);
  }

  TEST_CASE("threads do not change the bytes") {
    Corpus c(500);
    CHECK(run(c.args({"--ratio", "0.1", "--threads", "1"})).code == 0);
    const auto one = slurp(c.dir / "sel.jsonl");
    const auto one_summary = slurp(c.dir / "sel.jsonl.summary.json");
    CHECK(run(c.args({"--ratio", "0.1", "--threads", "8"})).code == 0);
    CHECK(one == slurp(c.dir / "sel.jsonl"));
    CHECK(one_summary == slurp(c.dir / "sel.jsonl.summary.json"));
  }
}

TEST_SUITE("score") {
  TEST_CASE("identity, disjoint and hand example") {
    fixtures::TempDir dir("score");
    const std::vector<nas::NasEmbedding> es{{"same", SparseVectorf(2, {{0, 2}, {1, 1}})},
                                            {"disjoint", SparseVectorf(2)},
                                            {"hand", SparseVectorf(2, {{0, 1}, {1, 2}})}};
    const std::vector<nas::NasEmbedding> t{{"__target__", SparseVectorf(2, {{0, 2}, {1, 1}})}};
    nas::write_nase_file(dir / "a.nase", 2, es);
    nas::write_nase_file(dir / "t.nase", 2, t);
    const auto r = run({"score", "--emb", (dir / "a.nase").string(), "--target", (dir / "t.nase").string(),
                        "--metric", "jaccard"});
    CHECK(r.code == 0);
    CHECK(r.out == "same\tjaccard\t0\ndisjoint\tjaccard\t1\nhand\tjaccard\t0.5\n");

    const auto all = run({"score", "--emb", (dir / "a.nase").string(), "--target", (dir / "t.nase").string()});
    CHECK(all.code == 0);
    CHECK(std::count(all.out.begin(), all.out.end(), '\n') == 9);
    CHECK(all.out.find("same\tcosine\t0\n") != std::string::npos);
    CHECK(all.out.find("disjoint\teuclidean\t2.23606") != std::string::npos);
  }
}

TEST_SUITE("stats") {
  std::map<std::string, std::string> parse_stats(const std::string& text) {
    std::map<std::string, std::string> m;
    std::istringstream in(text);
    std::string key, value;
    while (std::getline(in, key, '\t') && std::getline(in, value)) m[key] = value;
    return m;
  }

  TEST_CASE("empty file") {
    fixtures::TempDir dir("stats");
    nas::write_nase_file(dir / "e.nase", 32, {});
    const auto r = run({"stats", "--emb", (dir / "e.nase").string()});
    CHECK(r.code == 0);
    const auto s = parse_stats(r.out);
    CHECK(s.at("count") == "0");
    CHECK(s.at("dimension") == "32");
  }

  TEST_CASE("single embedding with three entries") {
    fixtures::TempDir dir("stats");
    const std::vector<nas::NasEmbedding> one{{"x", SparseVectorf(32, {{1, 0.5f}, {4, 2.0f}, {9, 1.0f}})}};
    nas::write_nase_file(dir / "e.nase", 32, one);
    const auto s = parse_stats(run({"stats", "--emb", (dir / "e.nase").string()}).out);
    CHECK(s.at("nnz_mean") == "3");
    CHECK(s.at("value_min") == "0.5");
    CHECK(s.at("value_max") == "2");
  }

  TEST_CASE("synthetic corpus matches an independent pass") {
    fixtures::TempDir dir("stats");
    fixtures::Rng rng(31);
    std::vector<nas::NasEmbedding> es;
    for (int i = 0; i < 80; ++i) es.push_back({"e" + std::to_string(i), fixtures::random_sparse(rng, 300, 40)});
    nas::write_nase_file(dir / "e.nase", 300, es);
    std::size_t mn = 1000, mx = 0, sum = 0;
    float vmin = 1e30f, vmax = -1e30f;
    for (const auto& e : es) {
      mn = std::min(mn, e.vector.nnz());
      mx = std::max(mx, e.vector.nnz());
      sum += e.vector.nnz();
      for (const auto& en : e.vector.entries()) {
        vmin = std::min(vmin, en.value);
        vmax = std::max(vmax, en.value);
      }
    }
    const auto s = parse_stats(run({"stats", "--emb", (dir / "e.nase").string()}).out);
    CHECK(s.at("count") == "80");
    CHECK(std::stoul(s.at("nnz_min")) == mn);
    CHECK(std::stoul(s.at("nnz_max")) == mx);
    CHECK(std::stod(s.at("nnz_mean")) == doctest::Approx(sum / 80.0));
    CHECK(std::stof(s.at("value_min")) == vmin);
    CHECK(std::stof(s.at("value_max")) == vmax);
  }
}

TEST_CASE("merge concatenates dumps") {
  Workspace ws;
  write_dump(ws.dir / "more.nasd", 8, {fixtures::random_block(ws.rng, "extra", 2, 8)});
  const auto r = run({"merge", "--out", ws.path("all.nasd"), ws.path("x.nasd"), ws.path("more.nasd")});
  CHECK(r.code == 0);
  const auto a = slurp(ws.dir / "x.nasd");
  const auto b = slurp(ws.dir / "more.nasd");
  CHECK(slurp(ws.dir / "all.nasd") == a + b.substr(nas::kNasdHeaderBytes));
  write_dump(ws.dir / "other.nasd", 4, {});
  CHECK(run({"merge", "--out", ws.path("bad.nasd"), ws.path("x.nasd"), ws.path("other.nasd")}).code == 3);
}

#ifdef NAS_BINARY
TEST_CASE("installed binary keeps stdout for data and exits with the documented codes") {
  Workspace ws;
  const std::string bin = NAS_BINARY;
  auto sh = [](const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  const std::string out = ws.path("stdout.txt");
  const std::string err = ws.path("stderr.txt");
  CHECK(sh(bin + " encode --dump " + ws.path("x.nasd") + " --out " + ws.path("x.nase") + " >" + out +
           " 2>" + err) == 2);
  CHECK(slurp(out).empty());
  CHECK(sh(bin + " encode --sae " + ws.path("w.saew") + " --dump " + ws.path("x.nasd") + " --out " +
           ws.path("x.nase") + " >" + out + " 2>" + err) == 0);
  CHECK(slurp(out).empty());
  CHECK(slurp(err).find("embedded 3 samples") != std::string::npos);
  CHECK(sh(bin + " stats --emb " + ws.path("x.nase") + " >" + out + " 2>" + err) == 0);
  CHECK(slurp(out).rfind("count\t3\n", 0) == 0);
  CHECK(sh(bin + " stats --emb " + ws.path("absent.nase") + " >" + out + " 2>" + err) == 4);
}
#endif
