#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ecgt/commands.hpp"
#include "ecgt/container.hpp"
#include "ecgt/pipeline.hpp"
#include "ecgt/signal_io.hpp"
#include "ecgt/synth.hpp"

using namespace ecgt;
namespace fs = std::filesystem;

namespace {

// one shared mini corpus, generated once per test binary run
struct Corpus {
  fs::path root;
  fs::path records;
  Corpus() {
    root = fs::temp_directory_path() / "ecgt_cli_tests";
    fs::remove_all(root);
    records = root / "records";
    fs::create_directories(records);
    for (int i = 0; i < 4; ++i) {
      const std::string name = "s" + std::to_string(100 + i);
      auto rec = synth_record(name, 9000 + uint64_t(i), SynthSpec{.duration_s = 60.0});
      write_record_csv(rec, (records / (name + ".csv")).string());
    }
    auto noise = synth_noise_record("em", 77, 60.0);
    write_record_csv(noise, (root / "em.csv").string());
  }
  std::string rec_dir() const { return records.string(); }
  std::string path(const char* f) const { return (root / f).string(); }
};

const Corpus& corpus() {
  static Corpus c;
  return c;
}

int run(std::vector<std::string> args) { return run_command(args); }

}  // namespace

TEST_CASE("cli: unknown command and missing options fail with nonzero status") {
  CHECK(run({"frobnicate"}) != 0);
  CHECK(run({"ingest"}) != 0);  // --records/--out required
  CHECK(run({}) != 0);
}

TEST_CASE("cli: count prints the published figures") {
  CHECK(run({"count"}) == 0);
}

TEST_CASE("cli: ingest then split") {
  const auto& c = corpus();
  REQUIRE(run({"ingest", "--records", c.rec_dir(), "--out", c.path("clean.ds"), "--seed",
               "11"}) == 0);
  const BeatDataset ds = load_dataset(c.path("clean.ds"));
  CHECK(ds.samples.size() > 200);
  for (const auto& s : ds.samples) CHECK(s.condition == NoiseCondition::noiseless);

  REQUIRE(run({"split", "--data", c.path("clean.ds"), "--out", c.path("split.json"), "--seed",
               "11"}) == 0);
  std::ifstream f(c.path("split.json"));
  const auto j = nlohmann::json::parse(f);
  const size_t total = j["train"].size() + j["valid"].size() + j["test"].size();
  CHECK(total == j["n_identities"].get<size_t>());
  CHECK(j["folds"].size() == 5);
}

TEST_CASE("cli: denoise, detect, export-csv, segment --use-detector") {
  const auto& c = corpus();
  const std::string rec = (fs::path(c.rec_dir()) / "s100.csv").string();
  REQUIRE(run({"denoise", "--in", rec, "--out", c.path("s100_denoised.csv")}) == 0);
  EcgRecord den = load_record_csv(c.path("s100_denoised.csv"));
  CHECK(den.header.n_samples > 0);

  REQUIRE(run({"detect", "--in", rec, "--out", c.path("peaks.csv")}) == 0);
  std::ifstream pf(c.path("peaks.csv"));
  std::string line;
  int peak_rows = -1;  // header line
  while (std::getline(pf, line))
    if (!line.empty()) ++peak_rows;
  CHECK(peak_rows > 20);

  REQUIRE(run({"export-csv", "--in", rec, "--out", c.path("reexport.csv")}) == 0);
  EcgRecord back = load_record_csv(c.path("reexport.csv"));
  EcgRecord orig = load_record_csv(rec);
  REQUIRE(back.channels[0] == orig.channels[0]);  // bit-identical re-import

  REQUIRE(run({"segment", "--records", c.rec_dir(), "--out", c.path("detected.ds"),
               "--use-detector", "--seed", "11"}) == 0);
  const BeatDataset dd = load_dataset(c.path("detected.ds"));
  CHECK(dd.samples.size() > 150);
}

TEST_CASE("cli: augment produces all four conditions with mix") {
  const auto& c = corpus();
  REQUIRE(run({"augment", "--records", c.rec_dir(), "--noise", c.path("em.csv"), "--snr", "mix",
               "--out", c.path("aug.ds"), "--seed", "11"}) == 0);
  const BeatDataset ds = load_dataset(c.path("aug.ds"));
  std::array<int, 4> hist{};
  for (const auto& s : ds.samples) hist[size_t(s.condition)] += 1;
  for (int h : hist) CHECK(h > 100);
  // every identity present under each condition
  const IdentityIndex ix = build_identity_index(ds);
  int complete = 0;
  for (const auto& loc : ix.loc) {
    bool all = true;
    for (int cd = 0; cd < 4; ++cd) all = all && loc[size_t(cd)] >= 0;
    complete += all ? 1 : 0;
  }
  CHECK(complete == int(ix.ids.size()));

  // single-level augment: noiseless plus the requested level only
  REQUIRE(run({"augment", "--records", c.rec_dir(), "--noise", c.path("em.csv"), "--snr", "10",
               "--out", c.path("aug10.ds"), "--seed", "11"}) == 0);
  const BeatDataset d10 = load_dataset(c.path("aug10.ds"));
  std::array<int, 4> h10{};
  for (const auto& s : d10.samples) h10[size_t(s.condition)] += 1;
  CHECK(h10[0] > 100);
  CHECK(h10[size_t(NoiseCondition::snr10)] > 100);
  CHECK(h10[size_t(NoiseCondition::snr24)] == 0);
  CHECK(h10[size_t(NoiseCondition::snr3)] == 0);
}

TEST_CASE("cli: train, eval, sweep, quantize, int8 eval on the mini corpus") {
  const auto& c = corpus();
  // small but real end-to-end budget
  REQUIRE(run({"train", "--data", c.path("clean.ds"), "--out", c.path("m.ckpt"), "--log",
               c.path("train.jsonl"), "--epochs", "8", "--seed", "11"}) == 0);
  REQUIRE(fs::exists(c.path("m.ckpt")));
  {
    std::ifstream lf(c.path("train.jsonl"));
    std::string line;
    int lines = 0;
    while (std::getline(lf, line)) ++lines;
    CHECK(lines == 8);
  }

  REQUIRE(run({"eval", "--ckpt", c.path("m.ckpt"), "--data", c.path("clean.ds"), "--report",
               c.path("rep.json"), "--seed", "11"}) == 0);
  {
    std::ifstream rf(c.path("rep.json"));
    const auto j = nlohmann::json::parse(rf);
    CHECK(j["accuracy"].get<double>() > 0.5);
    // self-consistency: accuracy equals trace/total of the embedded matrix
    int64_t trace = 0, total = 0;
    for (int i = 0; i < 5; ++i)
      for (int k = 0; k < 5; ++k) {
        const int64_t v = j["confusion"][i][k];
        total += v;
        if (i == k) trace += v;
      }
    CHECK(j["accuracy"].get<double>() == doctest::Approx(double(trace) / double(total)));
  }

  REQUIRE(run({"sweep", "--ckpt", c.path("m.ckpt"), "--data", c.path("aug.ds"), "--out",
               c.path("sweep.csv"), "--train-condition", "none", "--seed", "11"}) == 0);
  {
    std::ifstream sf(c.path("sweep.csv"));
    std::string line;
    int rows = -1;
    while (std::getline(sf, line))
      if (!line.empty()) ++rows;
    CHECK(rows == 5);  // none, 24, 10, 3, mix
  }

  REQUIRE(run({"quantize", "--ckpt", c.path("m.ckpt"), "--data", c.path("clean.ds"), "--out",
               c.path("m.qckpt"), "--qat-epochs", "2", "--seed", "11"}) == 0);
  REQUIRE(run({"eval", "--ckpt", c.path("m.qckpt"), "--data", c.path("clean.ds"), "--int8",
               "--report", c.path("rep8.json"), "--seed", "11"}) == 0);
  {
    std::ifstream rf(c.path("rep8.json"));
    const auto j = nlohmann::json::parse(rf);
    CHECK(j["accuracy"].get<double>() > 0.5);
  }
}

TEST_CASE("cli: train determinism at a fixed seed") {
  const auto& c = corpus();
  REQUIRE(run({"train", "--data", c.path("clean.ds"), "--out", c.path("d1.ckpt"), "--epochs",
               "2", "--seed", "21"}) == 0);
  REQUIRE(run({"train", "--data", c.path("clean.ds"), "--out", c.path("d2.ckpt"), "--epochs",
               "2", "--seed", "21"}) == 0);
  std::ifstream f1(c.path("d1.ckpt"), std::ios::binary), f2(c.path("d2.ckpt"), std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);  // byte-identical checkpoints
}
