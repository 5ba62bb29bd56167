#include "ecgt/dataset.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ecgt {

const char* noise_condition_name(NoiseCondition c) {
  static const char* names[] = {"noiseless", "snr24", "snr10", "snr3"};
  return names[int(c)];
}

double noise_condition_snr_db(NoiseCondition c) {
  switch (c) {
    case NoiseCondition::noiseless:
      return std::numeric_limits<double>::infinity();
    case NoiseCondition::snr24:
      return 24.0;
    case NoiseCondition::snr10:
      return 10.0;
    case NoiseCondition::snr3:
      return 3.0;
  }
  return 0.0;
}

double normalize_rr(double rr_seconds) {
  if (rr_seconds <= 0) throw std::invalid_argument("normalize_rr: RR must be positive");
  const double lo = 0.2, hi = 2.0;
  const double rr = std::clamp(rr_seconds, lo, hi);
  return 4.0 * (rr - lo) / (hi - lo) - 2.0;
}

std::vector<BeatSample> segment_beats(const std::vector<double>& denoised_mv, double fs,
                                      const std::string& record_name,
                                      const std::vector<int64_t>& peak_indices,
                                      const std::vector<BeatClass>& labels,
                                      SegmentStats* stats) {
  if (peak_indices.size() != labels.size())
    throw std::invalid_argument("segment_beats: one label per peak required");
  SegmentStats local{};
  std::vector<BeatSample> out;
  const int64_t n = int64_t(denoised_mv.size());
  for (size_t i = 0; i < peak_indices.size(); ++i) {
    if (i == 0 || i + 1 == peak_indices.size()) {
      ++local.dropped_neighbor;  // pre/post RR needs both neighbors
      continue;
    }
    const int64_t r = peak_indices[i];
    const int64_t lo = r - kPreSamples;
    const int64_t hi = r + kPostSamples;
    if (lo < 0 || hi >= n) {
      ++local.dropped_bounds;
      continue;
    }
    BeatSample b;
    b.record_name = record_name;
    b.sample_index = r;
    b.label = labels[i];
    for (int j = 0; j < kWindowLen; ++j) b.window[size_t(j)] = float(denoised_mv[size_t(lo + j)]);
    const double pre_s = double(r - peak_indices[i - 1]) / fs;
    const double post_s = double(peak_indices[i + 1] - r) / fs;
    b.rr_norm[0] = float(normalize_rr(pre_s));
    b.rr_norm[1] = float(normalize_rr(post_s));
    out.push_back(std::move(b));
    ++local.kept;
  }
  if (stats) *stats = local;
  return out;
}

namespace {

double mean_square(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s / double(x.size());
}

}  // namespace

double noise_scale(const std::vector<double>& signal, const std::vector<double>& noise,
                   double desired_snr_db) {
  if (signal.empty() || noise.empty()) throw std::invalid_argument("noise_scale: empty input");
  const double ps = mean_square(signal);
  const double pn = mean_square(noise);
  if (ps == 0.0) throw std::invalid_argument("noise_scale: zero-power signal");
  if (pn == 0.0) throw std::invalid_argument("noise_scale: zero-power noise");
  return std::sqrt(ps / (pn * std::pow(10.0, desired_snr_db / 10.0)));
}

std::vector<double> mix_noise(const std::vector<double>& signal,
                              const std::vector<double>& noise_record, double desired_snr_db,
                              uint64_t seed) {
  if (noise_record.empty()) throw std::invalid_argument("mix_noise: empty noise record");
  Rng rng(seed);
  const size_t offset = size_t(rng.below(noise_record.size()));
  std::vector<double> tiled(signal.size());
  for (size_t i = 0; i < signal.size(); ++i)
    tiled[i] = noise_record[(offset + i) % noise_record.size()];
  const double alpha = noise_scale(signal, tiled, desired_snr_db);
  std::vector<double> y(signal.size());
  for (size_t i = 0; i < signal.size(); ++i) y[i] = signal[i] + alpha * tiled[i];
  return y;
}

namespace {

std::vector<size_t> shuffled_indices(size_t n, uint64_t seed) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t(0));
  Rng rng(seed);
  rng.shuffle(idx);
  return idx;
}

}  // namespace

Split make_split(size_t n, const SplitSpec& spec) {
  if (n == 0) throw std::invalid_argument("make_split: empty input");
  const int total = spec.train_parts + spec.valid_parts + spec.test_parts;
  auto idx = shuffled_indices(n, spec.seed);
  const size_t n_train = n * size_t(spec.train_parts) / size_t(total);
  const size_t n_valid = n * size_t(spec.valid_parts) / size_t(total);
  Split s;
  s.train.assign(idx.begin(), idx.begin() + long(n_train));
  s.valid.assign(idx.begin() + long(n_train), idx.begin() + long(n_train + n_valid));
  s.test.assign(idx.begin() + long(n_train + n_valid), idx.end());
  return s;
}

std::vector<Split> make_folds(size_t n, const SplitSpec& spec) {
  if (n == 0) throw std::invalid_argument("make_folds: empty input");
  if (spec.n_folds < 2) throw std::invalid_argument("make_folds: need at least 2 folds");
  auto idx = shuffled_indices(n, spec.seed);
  std::vector<Split> folds;
  const size_t k = size_t(spec.n_folds);
  for (size_t f = 0; f < k; ++f) {
    const size_t lo = n * f / k;
    const size_t hi = n * (f + 1) / k;
    Split s;
    s.test.assign(idx.begin() + long(lo), idx.begin() + long(hi));
    std::vector<size_t> rest;
    rest.reserve(n - (hi - lo));
    rest.insert(rest.end(), idx.begin(), idx.begin() + long(lo));
    rest.insert(rest.end(), idx.begin() + long(hi), idx.end());
    // remainder re-cut 7:1 between train and valid
    const size_t tr = rest.size() * size_t(spec.train_parts) /
                      size_t(spec.train_parts + spec.valid_parts);
    s.train.assign(rest.begin(), rest.begin() + long(tr));
    s.valid.assign(rest.begin() + long(tr), rest.end());
    folds.push_back(std::move(s));
  }
  return folds;
}

NoiseMode parse_noise_mode(const std::string& s) {
  if (s == "none" || s == "noiseless") return NoiseMode::none;
  if (s == "24") return NoiseMode::snr24;
  if (s == "10") return NoiseMode::snr10;
  if (s == "3") return NoiseMode::snr3;
  if (s == "mix") return NoiseMode::mix;
  throw std::invalid_argument("unknown noise mode: " + s);
}

const char* noise_mode_name(NoiseMode m) {
  switch (m) {
    case NoiseMode::none:
      return "none";
    case NoiseMode::snr24:
      return "24";
    case NoiseMode::snr10:
      return "10";
    case NoiseMode::snr3:
      return "3";
    case NoiseMode::mix:
      return "mix";
  }
  return "?";
}

namespace {

NoiseCondition single_condition(NoiseMode mode) {
  switch (mode) {
    case NoiseMode::none:
      return NoiseCondition::noiseless;
    case NoiseMode::snr24:
      return NoiseCondition::snr24;
    case NoiseMode::snr10:
      return NoiseCondition::snr10;
    case NoiseMode::snr3:
      return NoiseCondition::snr3;
    default:
      throw std::invalid_argument("not a single-level mode");
  }
}

}  // namespace

std::vector<NoiseCondition> assign_train_conditions(size_t n, NoiseMode mode, uint64_t seed) {
  std::vector<NoiseCondition> out(n);
  if (mode != NoiseMode::mix) {
    std::fill(out.begin(), out.end(), single_condition(mode));
    return out;
  }
  // fixed partition into 4 equal parts, shuffled by seed
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t(0));
  Rng rng(derive_seed(seed, 0x6d6978 /* "mix" */));
  rng.shuffle(idx);
  for (size_t i = 0; i < n; ++i)
    out[idx[i]] = NoiseCondition(i * size_t(kNumConditions) / std::max<size_t>(n, 1));
  return out;
}

std::vector<NoiseCondition> test_conditions(NoiseMode mode) {
  if (mode == NoiseMode::mix)
    return {NoiseCondition::noiseless, NoiseCondition::snr24, NoiseCondition::snr10,
            NoiseCondition::snr3};
  return {single_condition(mode)};
}

}  // namespace ecgt
