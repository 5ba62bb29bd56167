#include <doctest.h>

#include <cmath>

#include "ecgt/dsp.hpp"
#include "ecgt/rng.hpp"
#include "ecgt/signal_io.hpp"
#include "ecgt/synth.hpp"
#include "helpers/oracles.hpp"

using namespace ecgt;

namespace {

double rms(const std::vector<double>& x, size_t lo, size_t hi) {
  double s = 0.0;
  for (size_t i = lo; i < hi; ++i) s += x[i] * x[i];
  return std::sqrt(s / double(hi - lo));
}

std::vector<double> sine(double freq, double fs, size_t n, double amp = 1.0) {
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i)
    x[i] = amp * std::sin(2.0 * 3.14159265358979323846 * freq * double(i) / fs);
  return x;
}

}  // namespace

TEST_CASE("median_filter matches the brute-force oracle") {
  CHECK(median_filter({1, 9, 1, 9, 1}, 3) == std::vector<double>{1, 1, 9, 1, 1});

  // constant signal passes through for any window
  std::vector<double> c(50, 3.25);
  for (int w : {1, 3, 7, 21}) CHECK(median_filter(c, w) == c);

  // single impulse in zeros vanishes except where replication holds it
  std::vector<double> imp(21, 0.0);
  imp[10] = 5.0;
  CHECK(median_filter(imp, 3) == oracle::median_naive(imp, 3));

  Rng rng(0x3ED);
  for (int trial = 0; trial < 30; ++trial) {
    const size_t n = 5 + rng.below(200);
    std::vector<double> x(n);
    for (double& v : x) v = rng.uniform(-5, 5);
    const int w = 1 + 2 * int(rng.below(10));
    REQUIRE(median_filter(x, w) == oracle::median_naive(x, w));
  }

  CHECK_THROWS_AS(median_filter({1, 2, 3}, 2), std::invalid_argument);
  CHECK_THROWS_AS(median_filter({1, 2, 3}, 0), std::invalid_argument);
  CHECK_THROWS_AS(median_filter({}, 3), std::invalid_argument);
}

TEST_CASE("median_filter idempotence on constant and step signals") {
  std::vector<double> step(60, 0.0);
  for (size_t i = 30; i < 60; ++i) step[i] = 1.0;
  const auto once = median_filter(step, 7);
  CHECK(median_filter(once, 7) == once);
  std::vector<double> c(40, -2.0);
  CHECK(median_filter(median_filter(c, 9), 9) == c);
}

TEST_CASE("median window lengths at 360 Hz: 73 and 217 samples") {
  CHECK(median_window_samples(360.0, 200.0) == 73);
  CHECK(median_window_samples(360.0, 600.0) == 217);
}

TEST_CASE("remove_baseline: constants vanish, shift equivariance") {
  std::vector<double> c(800, 0.75);
  for (double v : remove_baseline(c, 360.0)) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
  std::vector<double> z(800, 0.0);
  for (double v : remove_baseline(z, 360.0)) CHECK(v == 0.0);

  // shift equivariance: remove_baseline(x + c) == remove_baseline(x)
  Rng rng(0xBA5E);
  std::vector<double> x(1200);
  for (double& v : x) v = rng.uniform(-1, 1);
  const auto a = remove_baseline(x, 360.0);
  std::vector<double> xc = x;
  for (double& v : xc) v += 11.5;
  const auto b = remove_baseline(xc, 360.0);
  for (size_t i = 0; i < x.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-9);
}

TEST_CASE("remove_baseline suppresses slow drift under a sine") {
  const double fs = 360.0;
  const size_t n = size_t(fs * 20);
  std::vector<double> drift(n), x(n);
  for (size_t i = 0; i < n; ++i) {
    drift[i] = 2.0 * double(i) / double(n);  // ramp, 0..2
    x[i] = std::sin(2.0 * 3.14159265358979323846 * 1.0 * double(i) / fs) + drift[i];
  }
  const auto out = remove_baseline(x, fs);
  // the claim is about the drift: fit a linear trend to the output and
  // compare the trend's power with the input ramp's power
  const size_t margin = 400;  // outside the median cascade edges
  double sum_t = 0, sum_t2 = 0, sum_y = 0, sum_ty = 0, count = 0;
  for (size_t i = margin; i < n - margin; ++i) {
    const double t = double(i);
    sum_t += t;
    sum_t2 += t * t;
    sum_y += out[i];
    sum_ty += t * out[i];
    count += 1;
  }
  const double slope = (count * sum_ty - sum_t * sum_y) / (count * sum_t2 - sum_t * sum_t);
  const double intercept = (sum_y - slope * sum_t) / count;
  double drift_power = 0.0, residual_ramp_power = 0.0;
  for (size_t i = margin; i < n - margin; ++i) {
    const double trend = intercept + slope * double(i);
    residual_ramp_power += trend * trend;
    drift_power += drift[i] * drift[i];
  }
  CHECK(residual_ramp_power < 0.05 * drift_power);
}

TEST_CASE("lowpass: DC gain, 60 Hz rejection, 5 Hz passthrough, linearity") {
  const double fs = 360.0;
  const size_t n = size_t(fs * 8);

  std::vector<double> c(n, 1.0);
  const auto cf = lowpass(c, fs);
  for (size_t i = 0; i < n; ++i) CHECK(std::abs(cf[i] - 1.0) < 1e-6);

  // designed response; forward-backward squares the magnitude
  const auto sos = butter_lowpass(4, 35.0, fs);
  const double h60 = sos_magnitude(sos, 60.0, fs);
  const double h5 = sos_magnitude(sos, 5.0, fs);
  CHECK(h60 * h60 < 0.15);
  CHECK(h5 * h5 > 0.95);

  const auto s60 = lowpass(sine(60.0, fs, n), fs);
  CHECK(rms(s60, n / 4, 3 * n / 4) < 0.15 * rms(sine(60.0, fs, n), n / 4, 3 * n / 4));
  const auto s5 = lowpass(sine(5.0, fs, n), fs);
  const double in5 = rms(sine(5.0, fs, n), n / 4, 3 * n / 4);
  CHECK(std::abs(rms(s5, n / 4, 3 * n / 4) - in5) < 0.05 * in5);

  // linearity: L(a x + b y) = a L(x) + b L(y)
  Rng rng(0x11A);
  std::vector<double> x(n), y(n);
  for (size_t i = 0; i < n; ++i) {
    x[i] = rng.uniform(-1, 1);
    y[i] = rng.uniform(-1, 1);
  }
  const double a = 2.5, b = -0.75;
  std::vector<double> mix(n);
  for (size_t i = 0; i < n; ++i) mix[i] = a * x[i] + b * y[i];
  const auto lm = lowpass(mix, fs);
  const auto lx = lowpass(x, fs);
  const auto ly = lowpass(y, fs);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double want = a * lx[i] + b * ly[i];
    num += (lm[i] - want) * (lm[i] - want);
    den += want * want;
  }
  CHECK(num < 1e-12 * den);

  CHECK_THROWS_AS(lowpass(c, fs, FilterSpec{.lowpass_cutoff_hz = 200.0}), std::invalid_argument);
}

TEST_CASE("pan_tompkins on a synthetic 60 bpm pulse train") {
  const double fs = 360.0;
  std::vector<int64_t> truth;
  const auto sig = synth_pulse_train(fs, 60.0, 20, &truth);
  const auto peaks = pan_tompkins(sig, fs);
  REQUIRE(peaks.size() == truth.size());
  const int64_t tol = std::llround(0.025 * fs);
  for (size_t i = 0; i < truth.size(); ++i) CHECK(std::llabs(peaks[i] - truth[i]) <= tol);
}

TEST_CASE("pan_tompkins degenerate inputs") {
  std::vector<double> flat(size_t(360 * 5), 0.0);
  CHECK(pan_tompkins(flat, 360.0).empty());
  std::vector<double> tiny(100, 0.0);
  CHECK_THROWS_AS(pan_tompkins(tiny, 360.0), std::invalid_argument);
}

TEST_CASE("pan_tompkins output is strictly increasing with 200 ms spacing") {
  const double fs = 360.0;
  auto rec = synth_record("pt", 0xDE7EC7, SynthSpec{.duration_s = 90.0});
  const auto mv = denoise(rec.channel_mv(0), fs);
  const auto peaks = pan_tompkins(mv, fs);
  REQUIRE(peaks.size() > 50);
  const int64_t refractory = std::llround(0.2 * fs);
  for (size_t i = 1; i < peaks.size(); ++i) REQUIRE(peaks[i] - peaks[i - 1] >= refractory);
}

TEST_CASE("pan_tompkins finds annotated beats on synthetic records") {
  const double fs = 360.0;
  int64_t total = 0, matched = 0;
  for (uint64_t seed : {11u, 12u, 13u}) {
    auto rec = synth_record("pt" + std::to_string(seed), seed, SynthSpec{.duration_s = 60.0});
    const auto mv = denoise(rec.channel_mv(0), fs);
    const auto peaks = pan_tompkins(mv, fs);
    const int64_t tol = std::llround(0.150 * fs);
    for (const auto& a : rec.annotations) {
      if (!map_symbol_to_class(a.symbol)) continue;
      ++total;
      for (int64_t p : peaks)
        if (std::llabs(p - a.sample_index) <= tol) {
          ++matched;
          break;
        }
    }
  }
  REQUIRE(total > 150);
  CHECK(double(matched) / double(total) >= 0.99);
}
