#include "ecgt/synth.hpp"

#include <cmath>

#include "ecgt/dsp.hpp"
#include "ecgt/rng.hpp"

namespace ecgt {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void add_gaussian(std::vector<double>& sig, double fs, double center_s, double sigma_s,
                  double amp) {
  const int64_t n = int64_t(sig.size());
  const int64_t c = std::llround(center_s * fs);
  const int64_t half = std::llround(4.0 * sigma_s * fs);
  for (int64_t i = std::max<int64_t>(0, c - half); i <= std::min(n - 1, c + half); ++i) {
    const double t = (double(i) - double(c)) / fs;
    sig[size_t(i)] += amp * std::exp(-0.5 * t * t / (sigma_s * sigma_s));
  }
}

struct BeatShape {
  double qrs_sigma;  // s
  double r_amp;      // mV
  double q_amp, s_amp;
  double p_amp, t_amp;
  double t_sign;
};

BeatShape shape_for(BeatClass c, Rng& rng) {
  auto j = [&](double v, double rel) { return v * (1.0 + rel * (rng.uniform() - 0.5)); };
  switch (c) {
    case BeatClass::N:
      return {j(0.012, 0.2), j(1.15, 0.2), j(-0.12, 0.3), j(-0.22, 0.3),
              j(0.12, 0.3),  j(0.28, 0.3), 1.0};
    case BeatClass::S:
      // same narrow complex, peaked P
      return {j(0.012, 0.2), j(0.95, 0.2), j(-0.10, 0.3), j(-0.18, 0.3),
              j(0.22, 0.3),  j(0.24, 0.3), 1.0};
    case BeatClass::V:
      // wide and large, discordant T, no P
      return {j(0.038, 0.2), j(1.55, 0.2), j(-0.30, 0.3), j(-0.55, 0.3),
              0.0,           j(0.45, 0.3), -1.0};
    case BeatClass::F:
      return {j(0.024, 0.2), j(1.30, 0.2), j(-0.20, 0.3), j(-0.35, 0.3),
              j(0.06, 0.3),  j(0.30, 0.3), -1.0};
    case BeatClass::Q:
      // pacemaker-ish: a medium spike, the broad hump is added separately
      return {j(0.010, 0.2), j(0.85, 0.2), j(-0.08, 0.3), j(-0.40, 0.3),
              0.0,           j(0.15, 0.3), 1.0};
  }
  return {};
}

char symbol_for(BeatClass c, Rng& rng) {
  switch (c) {
    case BeatClass::N: {
      const double u = rng.uniform();
      return u < 0.85 ? 'N' : (u < 0.93 ? 'L' : 'R');
    }
    case BeatClass::S:
      return rng.uniform() < 0.8 ? 'A' : 'a';
    case BeatClass::V:
      return rng.uniform() < 0.9 ? 'V' : 'E';
    case BeatClass::F:
      return 'F';
    case BeatClass::Q: {
      const double u = rng.uniform();
      return u < 0.5 ? '/' : (u < 0.8 ? 'f' : 'Q');
    }
  }
  return 'N';
}

}  // namespace

EcgRecord synth_record(const std::string& name, uint64_t seed, const SynthSpec& spec) {
  Rng rng(seed);
  const double fs = spec.fs;
  const size_t n = size_t(spec.duration_s * fs);
  std::vector<double> sig(n, 0.0);
  std::vector<Annotation> anns;

  const double base_rr = 60.0 / spec.base_bpm;
  double t = 0.6;  // lead-in before the first beat
  double pending_pause = 1.0;
  // cumulative class distribution
  std::array<double, 5> cum{};
  double acc = 0.0;
  for (int i = 0; i < 5; ++i) {
    acc += spec.class_weights[size_t(i)];
    cum[size_t(i)] = acc;
  }

  while (true) {
    // sinus variability plus whatever pause the previous ectopic beat left
    const double rr =
        base_rr * pending_pause * (1.0 + 0.06 * std::sin(kTwoPi * 0.1 * t)) *
        (1.0 + 0.03 * (rng.uniform() - 0.5));
    pending_pause = 1.0;

    const double u = rng.uniform() * acc;
    BeatClass cls = BeatClass::N;
    for (int i = 0; i < 5; ++i)
      if (u < cum[size_t(i)]) {
        cls = BeatClass(i);
        break;
      }

    double this_rr = rr;
    if (cls == BeatClass::S) {
      this_rr = rr * 0.70;
      pending_pause = 1.25;
    } else if (cls == BeatClass::V) {
      this_rr = rr * 0.62;
      pending_pause = 1.45;
    } else if (cls == BeatClass::F) {
      this_rr = rr * 0.88;
      pending_pause = 1.10;
    }
    t += this_rr;
    if (t >= spec.duration_s - 0.6) break;

    const BeatShape sh = shape_for(cls, rng);
    const int64_t r_idx = std::llround(t * fs);
    // QRS: Q dip, R spike, S dip
    add_gaussian(sig, fs, t - 2.2 * sh.qrs_sigma, sh.qrs_sigma * 0.8, sh.q_amp);
    add_gaussian(sig, fs, t, sh.qrs_sigma, sh.r_amp);
    add_gaussian(sig, fs, t + 2.4 * sh.qrs_sigma, sh.qrs_sigma * 0.9, sh.s_amp);
    if (cls == BeatClass::Q) add_gaussian(sig, fs, t + 0.065, 0.045, 0.55);  // broad hump
    if (sh.p_amp != 0.0) add_gaussian(sig, fs, t - 0.17, 0.022, sh.p_amp);
    add_gaussian(sig, fs, t + 0.24, 0.055, sh.t_amp * sh.t_sign);

    anns.push_back({r_idx, symbol_for(cls, rng)});
    // occasional rhythm-change marks exercise the non-beat filter
    if (rng.uniform() < 0.01 && r_idx + 20 < int64_t(n))
      anns.push_back({r_idx + 20, '+'});
  }

  // baseline wander and measurement noise
  const double drift_f1 = 0.23, drift_f2 = 0.071;
  for (size_t i = 0; i < n; ++i) {
    const double ts = double(i) / fs;
    sig[i] += spec.baseline_drift_mv *
              (std::sin(kTwoPi * drift_f1 * ts + 1.0) + 0.6 * std::sin(kTwoPi * drift_f2 * ts));
    sig[i] += spec.sensor_noise_mv * rng.normal();
  }

  EcgRecord rec;
  rec.header.record_name = name;
  rec.header.n_channels = 1;
  rec.header.sampling_rate_hz = fs;
  rec.header.n_samples = int64_t(n);
  ChannelSpec ch;
  ch.signal_format = "csv";
  ch.gain = 200.0;
  ch.adc_zero = 0;
  ch.lead_name = "MLII";
  rec.header.channels.push_back(ch);
  rec.channels.resize(1);
  rec.channels[0].resize(n);
  for (size_t i = 0; i < n; ++i) {
    const double adc = std::round(sig[i] * ch.gain);
    rec.channels[0][i] = int16_t(std::clamp(adc, -32768.0, 32767.0));
  }
  rec.annotations = std::move(anns);
  return rec;
}

std::vector<double> synth_motion_noise(uint64_t seed, size_t n_samples, double fs) {
  Rng rng(seed);
  std::vector<double> low(n_samples), band(n_samples);
  // bursty random walk for the electrode displacement component
  double walk = 0.0;
  double envelope = 0.3;
  for (size_t i = 0; i < n_samples; ++i) {
    if (rng.uniform() < 1.0 / (3.0 * fs)) envelope = 0.15 + 1.6 * rng.uniform();  // new burst
    walk = 0.995 * walk + envelope * rng.normal();
    low[i] = walk;
    band[i] = envelope * rng.normal();
  }
  low = filtfilt(butter_lowpass(2, 4.0, fs), low);
  band = filtfilt(butter_lowpass(2, 30.0, fs), band);
  band = filtfilt(butter_highpass(2, 5.0, fs), band);
  std::vector<double> noise(n_samples);
  for (size_t i = 0; i < n_samples; ++i) noise[i] = 0.05 * low[i] + 1.2 * band[i];
  // normalize to about 0.5 mV rms
  double ms = 0.0;
  for (double v : noise) ms += v * v;
  ms = std::sqrt(ms / double(n_samples));
  const double g = ms > 0 ? 0.5 / ms : 1.0;
  for (double& v : noise) v *= g;
  return noise;
}

EcgRecord synth_noise_record(const std::string& name, uint64_t seed, double duration_s,
                             double fs) {
  const size_t n = size_t(duration_s * fs);
  const auto noise = synth_motion_noise(seed, n, fs);
  EcgRecord rec;
  rec.header.record_name = name;
  rec.header.n_channels = 1;
  rec.header.sampling_rate_hz = fs;
  rec.header.n_samples = int64_t(n);
  ChannelSpec ch;
  ch.signal_format = "csv";
  ch.gain = 200.0;
  ch.adc_zero = 0;
  ch.lead_name = "noise";
  rec.header.channels.push_back(ch);
  rec.channels.resize(1);
  rec.channels[0].resize(n);
  for (size_t i = 0; i < n; ++i) {
    const double adc = std::round(noise[i] * ch.gain);
    rec.channels[0][i] = int16_t(std::clamp(adc, -32768.0, 32767.0));
  }
  return rec;
}

std::vector<double> synth_pulse_train(double fs, double bpm, int n_beats,
                                      std::vector<int64_t>* true_peaks) {
  const double rr = 60.0 / bpm;
  const double duration = rr * (n_beats + 1);
  std::vector<double> sig(size_t(duration * fs), 0.0);
  if (true_peaks) true_peaks->clear();
  for (int b = 0; b < n_beats; ++b) {
    const double t = rr * (b + 1);
    add_gaussian(sig, fs, t - 0.028, 0.010, -0.15);
    add_gaussian(sig, fs, t, 0.012, 1.0);
    add_gaussian(sig, fs, t + 0.030, 0.011, -0.25);
    if (true_peaks) true_peaks->push_back(std::llround(t * fs));
  }
  return sig;
}

}  // namespace ecgt
