#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ecgt/container.hpp"
#include "ecgt/rng.hpp"

using namespace ecgt;

namespace {

std::string tmp_file(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "ecgt_container_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

BeatDataset sample_dataset(uint64_t seed, size_t n) {
  Rng rng(seed);
  BeatDataset ds;
  ds.fs = 360.0;
  ds.seed = seed;
  ds.config_hash = "0123456789abcdef";
  for (size_t i = 0; i < n; ++i) {
    BeatSample s;
    s.record_name = (i % 3 == 0) ? "r100" : "r200";
    s.sample_index = int64_t(100 * i + rng.below(50));
    s.label = BeatClass(rng.below(5));
    s.condition = NoiseCondition(rng.below(4));
    for (auto& v : s.window) v = float(rng.uniform(-2, 2));
    s.rr_norm = {float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2))};
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace

TEST_CASE("dataset container round trip is exact") {
  const BeatDataset ds = sample_dataset(0xD5, 37);
  const std::string path = tmp_file("roundtrip.ds");
  save_dataset(ds, path);
  const BeatDataset back = load_dataset(path);
  CHECK(back.fs == ds.fs);
  CHECK(back.seed == ds.seed);
  CHECK(back.config_hash == ds.config_hash);
  REQUIRE(back.samples.size() == ds.samples.size());
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& a = ds.samples[i];
    const auto& b = back.samples[i];
    REQUIRE(a.record_name == b.record_name);
    REQUIRE(a.sample_index == b.sample_index);
    REQUIRE(a.label == b.label);
    REQUIRE(a.condition == b.condition);
    REQUIRE(a.window == b.window);  // float32 storage is exact for float32 data
    REQUIRE(a.rr_norm == b.rr_norm);
  }
}

TEST_CASE("dataset container rejects garbage") {
  const std::string path = tmp_file("garbage.ds");
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOTADATASET____________";
  }
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("magic"), std::runtime_error);
  CHECK_THROWS_AS(load_dataset(tmp_file("missing.ds")), std::runtime_error);
}

TEST_CASE("checkpoint round trip preserves every tensor (float32 grid)") {
  ModelConfig cfg;
  cfg.input_len = 18;
  cfg.embed_dim = 4;
  cfg.heads = 2;
  cfg.hidden = 8;
  ModelParams p = ModelParams::glorot_init(cfg, 0xCE);
  const std::string path = tmp_file("p.ckpt");
  save_checkpoint(p, path, "ffffeeee", 42);
  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.seed == 42);
  CHECK(ck.config_hash == "ffffeeee");
  CHECK(ck.params.cfg == cfg);
  std::vector<const std::vector<double>*> a, b;
  p.for_each_tensor([&](const char*, std::vector<double>& v) { a.push_back(&v); });
  ck.params.for_each_tensor(
      [&](const char*, const std::vector<double>& v) { b.push_back(&v); });
  REQUIRE(a.size() == b.size());
  for (size_t t = 0; t < a.size(); ++t) {
    REQUIRE(a[t]->size() == b[t]->size());
    for (size_t i = 0; i < a[t]->size(); ++i)
      REQUIRE(double(float((*a[t])[i])) == (*b[t])[i]);
  }
  // a second save of the loaded params is byte-identical (fixed layout)
  const std::string path2 = tmp_file("p2.ckpt");
  save_checkpoint(ck.params, path2, "ffffeeee", 42);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
}

TEST_CASE("quantized container round trip preserves the integer model exactly") {
  ModelConfig cfg;
  cfg.input_len = 18;
  cfg.embed_dim = 4;
  cfg.heads = 2;
  cfg.hidden = 8;
  ModelParams p = ModelParams::glorot_init(cfg, 0x77);
  ActScales scales;
  scales.for_each([&](const char*, double& v) { v = 0.011; });
  const QuantizedModel qm = build_quantized(p, scales);
  const std::string path = tmp_file("q.qckpt");
  save_quantized(qm, path, "AAAA", 9);
  const QuantCheckpoint back = load_quantized(path);
  CHECK(back.seed == 9);
  CHECK(back.model.cfg == cfg);

  // integer behavior must be bit-identical through the container
  Rng rng(3);
  std::vector<int8_t> win(size_t(cfg.input_len), 0);
  for (auto& v : win) v = int8_t(int(rng.below(255)) - 127);
  std::array<int8_t, 2> rr{13, -40};
  CHECK(int_forward(win, rr, cfg, qm.im) == int_forward(win, rr, back.model.cfg, back.model.im));

  // scales survive as metadata
  CHECK(back.model.scales.x0 == doctest::Approx(0.011));
}

TEST_CASE("train log is JSON lines") {
  const std::string path = tmp_file("log.jsonl");
  std::filesystem::remove(path);
  append_train_log(path, 0, 1.5, 1.6, 0.25, 2e-3);
  append_train_log(path, 1, 1.2, 1.3, 0.5, 2e-3);
  std::ifstream f(path);
  std::string line;
  int lines = 0;
  while (std::getline(f, line)) {
    ++lines;
    CHECK(line.find("\"epoch\"") != std::string::npos);
  }
  CHECK(lines == 2);
}
