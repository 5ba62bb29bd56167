#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ecgt/rng.hpp"
#include "ecgt/signal_io.hpp"

namespace ecgt {

inline constexpr int kWindowLen = 198;
inline constexpr int kPreSamples = 99;   // window covers [r-99, r+98]
inline constexpr int kPostSamples = 98;

enum class NoiseCondition : uint8_t { noiseless = 0, snr24 = 1, snr10 = 2, snr3 = 3 };
inline constexpr int kNumConditions = 4;
const char* noise_condition_name(NoiseCondition c);
double noise_condition_snr_db(NoiseCondition c);  // +inf for noiseless

struct BeatSample {
  std::array<float, kWindowLen> window{};  // mV, denoised
  std::array<float, 2> rr_norm{};          // (pre, post) mapped into [-2, 2]
  BeatClass label = BeatClass::N;
  std::string record_name;
  int64_t sample_index = 0;  // R-peak position in the source record
  NoiseCondition condition = NoiseCondition::noiseless;
};

struct SegmentStats {
  int64_t kept = 0;
  int64_t dropped_bounds = 0;
  int64_t dropped_neighbor = 0;
};

// Map an RR interval (seconds) into [-2, 2]: clamp to [0.2 s, 2.0 s] then
// affine with 0.2 -> -2 and 2.0 -> +2.
double normalize_rr(double rr_seconds);

// Cut one 198-sample window per labeled peak; peaks missing a neighbor or
// overrunning the record bounds are dropped and counted.
std::vector<BeatSample> segment_beats(const std::vector<double>& denoised_mv, double fs,
                                      const std::string& record_name,
                                      const std::vector<int64_t>& peak_indices,
                                      const std::vector<BeatClass>& labels,
                                      SegmentStats* stats = nullptr);

// Scale factor alpha = sqrt(mean(S^2) / (mean(N^2) * 10^(snr/10))).
double noise_scale(const std::vector<double>& signal, const std::vector<double>& noise,
                   double desired_snr_db);

// Y = S + alpha * N with N drawn from a seeded circular offset into the
// noise record and tiled to the signal length. Achieved SNR equals the
// target by construction.
std::vector<double> mix_noise(const std::vector<double>& signal,
                              const std::vector<double>& noise_record, double desired_snr_db,
                              uint64_t seed);

struct SplitSpec {
  int train_parts = 7;
  int valid_parts = 1;
  int test_parts = 2;
  uint64_t seed = 0;
  int n_folds = 5;
};

struct Split {
  std::vector<size_t> train, valid, test;
};

// Seeded uniform shuffle, then a contiguous 7:1:2 cut.
Split make_split(size_t n, const SplitSpec& spec);

// Five disjoint 20% test folds over the same shuffle; the remainder of each
// fold re-cut 7:1 into train/valid.
std::vector<Split> make_folds(size_t n, const SplitSpec& spec);

enum class NoiseMode {
  none,          // noiseless only
  snr24,
  snr10,
  snr3,
  mix,           // balanced mix: partition for training, replicate for test
};
NoiseMode parse_noise_mode(const std::string& s);
const char* noise_mode_name(NoiseMode m);

// Conditions a training sample is assigned under a mode. `mix` partitions
// the index set into 4 equal seeded parts, one condition each.
std::vector<NoiseCondition> assign_train_conditions(size_t n, NoiseMode mode, uint64_t seed);

// Conditions a test sample is evaluated under. `mix` replicates every beat
// across all four conditions.
std::vector<NoiseCondition> test_conditions(NoiseMode mode);

}  // namespace ecgt
