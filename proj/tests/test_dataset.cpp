#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>

#include "ecgt/dataset.hpp"
#include "ecgt/rng.hpp"

using namespace ecgt;

TEST_CASE("normalize_rr anchors, midpoint, clamping") {
  CHECK(normalize_rr(0.2) == doctest::Approx(-2.0));
  CHECK(normalize_rr(1.1) == doctest::Approx(0.0));
  CHECK(normalize_rr(2.0) == doctest::Approx(2.0));
  CHECK(normalize_rr(3.0) == doctest::Approx(2.0));   // clamped high
  CHECK(normalize_rr(0.05) == doctest::Approx(-2.0)); // clamped low
  CHECK_THROWS_AS(normalize_rr(0.0), std::invalid_argument);
  CHECK_THROWS_AS(normalize_rr(-1.0), std::invalid_argument);
}

TEST_CASE("segment_beats window arithmetic and drops") {
  const double fs = 360.0;
  std::vector<double> sig(300);
  for (size_t i = 0; i < sig.size(); ++i) sig[i] = double(i);

  // peak at 99: window covers [0, 198); interior beat thanks to neighbors
  {
    std::vector<int64_t> peaks{99, 150, 201};
    std::vector<BeatClass> labels{BeatClass::N, BeatClass::V, BeatClass::N};
    SegmentStats st;
    auto beats = segment_beats(sig, fs, "r", peaks, labels, &st);
    REQUIRE(beats.size() == 1);  // first and last dropped (missing neighbor)
    CHECK(st.dropped_neighbor == 2);
    CHECK(beats[0].sample_index == 150);
    CHECK(beats[0].label == BeatClass::V);
    CHECK(beats[0].window.front() == doctest::Approx(150 - 99));
    CHECK(beats[0].window.back() == doctest::Approx(150 + 98));
  }
  // peak at 50 underflows and is dropped
  {
    std::vector<int64_t> peaks{20, 50, 280};
    std::vector<BeatClass> labels{BeatClass::N, BeatClass::N, BeatClass::N};
    SegmentStats st;
    auto beats = segment_beats(sig, fs, "r", peaks, labels, &st);
    CHECK(beats.empty());
    CHECK(st.dropped_bounds == 1);
    CHECK(st.dropped_neighbor == 2);
  }
  // interior peak near the end overflows
  {
    std::vector<int64_t> peaks{100, 250, 299};
    std::vector<BeatClass> labels{BeatClass::N, BeatClass::N, BeatClass::N};
    SegmentStats st;
    auto beats = segment_beats(sig, fs, "r", peaks, labels, &st);
    CHECK(beats.empty());  // 250 + 98 >= 300
    CHECK(st.dropped_bounds == 1);
  }
  CHECK_THROWS_AS(segment_beats(sig, fs, "r", {1, 2}, {BeatClass::N}, nullptr),
                  std::invalid_argument);
}

TEST_CASE("segment_beats rr normalization uses the neighbor distances") {
  const double fs = 360.0;
  std::vector<double> sig(2000, 0.0);
  // pre RR = 360 samples = 1.0 s, post RR = 324 samples = 0.9 s
  std::vector<int64_t> peaks{240, 600, 924};
  std::vector<BeatClass> labels{BeatClass::N, BeatClass::N, BeatClass::N};
  auto beats = segment_beats(sig, fs, "r", peaks, labels, nullptr);
  REQUIRE(beats.size() == 1);
  CHECK(beats[0].rr_norm[0] == doctest::Approx(normalize_rr(1.0)));
  CHECK(beats[0].rr_norm[1] == doctest::Approx(normalize_rr(0.9)));
  CHECK(beats[0].rr_norm[0] >= -2.0);
  CHECK(beats[0].rr_norm[0] <= 2.0);
}

TEST_CASE("noise_scale worked examples") {
  // equal powers: 0 dB -> alpha = 1; 10 dB -> 10^(-1/2)
  std::vector<double> s{1, -1, 1, -1};
  std::vector<double> n{1, 1, -1, -1};
  CHECK(noise_scale(s, n, 0.0) == doctest::Approx(1.0));
  CHECK(noise_scale(s, n, 10.0) == doctest::Approx(0.31622776601683794));
  // SNR -> +inf: alpha -> 0
  CHECK(noise_scale(s, n, 200.0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK_THROWS_AS(noise_scale(std::vector<double>(4, 0.0), n, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(noise_scale(s, std::vector<double>(4, 0.0), 0.0), std::invalid_argument);
}

TEST_CASE("mix_noise achieves the target SNR to 1e-9 dB") {
  Rng rng(0x5E7);
  for (int trial = 0; trial < 100; ++trial) {
    const size_t ns = 200 + rng.below(800);
    const size_t nn = 100 + rng.below(3000);
    std::vector<double> s(ns), n(nn);
    for (double& v : s) v = rng.uniform(-2, 2);
    for (double& v : n) v = rng.uniform(-1, 1);
    const double target = rng.uniform(-5.0, 30.0);
    const uint64_t seed = rng.next_u64();
    const auto y = mix_noise(s, n, target, seed);
    REQUIRE(y.size() == s.size());
    // recover the added noise and measure the achieved ratio
    double ps = 0.0, pn = 0.0;
    for (size_t i = 0; i < s.size(); ++i) {
      ps += s[i] * s[i];
      const double added = y[i] - s[i];
      pn += added * added;
    }
    const double achieved = 10.0 * std::log10(ps / pn);
    REQUIRE(std::abs(achieved - target) < 1e-9);
  }
}

TEST_CASE("mix_noise determinism and offset seeding") {
  std::vector<double> s(500, 0.0);
  for (size_t i = 0; i < s.size(); ++i) s[i] = std::sin(0.1 * double(i));
  std::vector<double> n(1000);
  Rng rng(7);
  for (double& v : n) v = rng.normal();
  const auto a = mix_noise(s, n, 10.0, 42);
  const auto b = mix_noise(s, n, 10.0, 42);
  CHECK(a == b);
  const auto c = mix_noise(s, n, 10.0, 43);
  CHECK(a != c);  // different circular offset
}

TEST_CASE("make_split ratio arithmetic and determinism") {
  SplitSpec spec;
  spec.seed = 123;
  const Split s10 = make_split(10, spec);
  CHECK(s10.train.size() == 7);
  CHECK(s10.valid.size() == 1);
  CHECK(s10.test.size() == 2);

  const Split again = make_split(10, spec);
  CHECK(s10.train == again.train);
  CHECK(s10.valid == again.valid);
  CHECK(s10.test == again.test);

  spec.seed = 124;
  const Split other = make_split(10, spec);
  CHECK(s10.train != other.train);

  CHECK_THROWS_AS(make_split(0, spec), std::invalid_argument);
}

TEST_CASE("splits are disjoint and exhaustive") {
  SplitSpec spec;
  spec.seed = 9;
  const size_t n = 100703;  // full dataset size
  const Split s = make_split(n, spec);
  CHECK(s.train.size() + s.valid.size() + s.test.size() == n);
  CHECK(s.train.size() == n * 7 / 10);
  CHECK(s.valid.size() == n / 10);
  std::vector<char> seen(n, 0);
  for (size_t i : s.train) seen[i] += 1;
  for (size_t i : s.valid) seen[i] += 1;
  for (size_t i : s.test) seen[i] += 1;
  for (size_t i = 0; i < n; ++i) REQUIRE(seen[i] == 1);
}

TEST_CASE("five disjoint folds partition the set; remainders re-cut 7:1") {
  SplitSpec spec;
  spec.seed = 31;
  const size_t n = 1003;
  const auto folds = make_folds(n, spec);
  REQUIRE(folds.size() == 5);
  std::vector<int> test_count(n, 0);
  for (const auto& f : folds) {
    for (size_t i : f.test) test_count[i] += 1;
    // within a fold: disjoint and exhaustive
    std::vector<char> seen(n, 0);
    for (size_t i : f.train) seen[i] += 1;
    for (size_t i : f.valid) seen[i] += 1;
    for (size_t i : f.test) seen[i] += 1;
    for (size_t i = 0; i < n; ++i) REQUIRE(seen[i] == 1);
    const size_t rest = f.train.size() + f.valid.size();
    CHECK(f.train.size() == rest * 7 / 8);
  }
  for (size_t i = 0; i < n; ++i) REQUIRE(test_count[i] == 1);
}

TEST_CASE("noise condition assignment per mode") {
  // single level tags everything
  auto c24 = assign_train_conditions(10, NoiseMode::snr24, 1);
  for (auto c : c24) CHECK(c == NoiseCondition::snr24);
  auto none = assign_train_conditions(10, NoiseMode::none, 1);
  for (auto c : none) CHECK(c == NoiseCondition::noiseless);

  // balanced mix partitions into 4 equal seeded parts
  auto mix = assign_train_conditions(1000, NoiseMode::mix, 7);
  std::array<int, 4> hist{};
  for (auto c : mix) hist[size_t(c)] += 1;
  for (int h : hist) CHECK(h == 250);
  auto mix_again = assign_train_conditions(1000, NoiseMode::mix, 7);
  CHECK(mix == mix_again);
  auto mix_other = assign_train_conditions(1000, NoiseMode::mix, 8);
  CHECK(mix != mix_other);

  // balanced mix test replicates across all four conditions
  auto tc = test_conditions(NoiseMode::mix);
  REQUIRE(tc.size() == 4);
  std::set<NoiseCondition> uniq(tc.begin(), tc.end());
  CHECK(uniq.size() == 4);
  CHECK(test_conditions(NoiseMode::snr3) ==
        std::vector<NoiseCondition>{NoiseCondition::snr3});
  CHECK_THROWS_AS(parse_noise_mode("bogus"), std::invalid_argument);
}
