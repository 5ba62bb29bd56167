#include "ecgt/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <stdexcept>

namespace ecgt {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Butterworth prototype poles on the unit circle, left half plane.
std::vector<std::complex<double>> prototype_poles(int order) {
  std::vector<std::complex<double>> poles;
  for (int k = 0; k < order; ++k) {
    const double theta = kPi * (2.0 * k + order + 1.0) / (2.0 * order);
    poles.emplace_back(std::cos(theta), std::sin(theta));
  }
  return poles;
}

std::complex<double> bilinear_pole(std::complex<double> s, double fs) {
  return (2.0 * fs + s) / (2.0 * fs - s);
}

void check_cutoff(double cutoff_hz, double fs) {
  if (cutoff_hz <= 0 || cutoff_hz >= fs / 2.0)
    throw std::invalid_argument("cutoff must lie in (0, fs/2)");
}

// Build one biquad from a z-plane pole pair with both zeros at z0 (+1 or -1),
// normalized to unit gain at the opposite band edge.
Biquad section_from_pair(std::complex<double> zp, double zero, bool normalize_at_dc) {
  Biquad s{};
  const double a1 = -2.0 * zp.real();
  const double a2 = std::norm(zp);
  // numerator (1 - zero*z^-1)^2
  const double b0 = 1.0, b1 = -2.0 * zero, b2 = 1.0;
  const double eval = normalize_at_dc ? 1.0 : -1.0;  // z = 1 (DC) or z = -1 (Nyquist)
  const double num = b0 + b1 * eval + b2 * eval * eval;
  const double den = 1.0 + a1 * eval + a2 * eval * eval;
  const double g = den / num;
  s.b0 = b0 * g;
  s.b1 = b1 * g;
  s.b2 = b2 * g;
  s.a1 = a1;
  s.a2 = a2;
  return s;
}

Biquad section_from_real_pole(double zp, double zero, bool normalize_at_dc) {
  Biquad s{};
  const double a1 = -zp;
  const double b0 = 1.0, b1 = -zero;
  const double eval = normalize_at_dc ? 1.0 : -1.0;
  const double g = (1.0 + a1 * eval) / (b0 + b1 * eval);
  s.b0 = b0 * g;
  s.b1 = b1 * g;
  s.b2 = 0.0;
  s.a1 = a1;
  s.a2 = 0.0;
  return s;
}

std::vector<Biquad> butter_design(int order, double cutoff_hz, double fs, bool highpass) {
  check_cutoff(cutoff_hz, fs);
  if (order < 1) throw std::invalid_argument("filter order must be >= 1");
  const double warped = 2.0 * fs * std::tan(kPi * cutoff_hz / fs);
  std::vector<Biquad> sos;
  auto protos = prototype_poles(order);
  // conjugate pairs come from k and order-1-k; iterate the upper half
  for (int k = 0; k < order / 2; ++k) {
    std::complex<double> p = protos[size_t(k)];
    std::complex<double> analog = highpass ? warped / p : warped * p;
    std::complex<double> zp = bilinear_pole(analog, fs);
    sos.push_back(section_from_pair(zp, highpass ? 1.0 : -1.0, !highpass));
  }
  if (order % 2 == 1) {
    std::complex<double> analog = highpass ? warped / std::complex<double>(-1.0, 0.0)
                                           : warped * std::complex<double>(-1.0, 0.0);
    const double zp = bilinear_pole(analog, fs).real();
    sos.push_back(section_from_real_pole(zp, highpass ? 1.0 : -1.0, !highpass));
  }
  return sos;
}

// single pass, direct form II transposed
void sos_filter_inplace(const std::vector<Biquad>& sos, std::vector<double>& x) {
  for (const auto& s : sos) {
    double w1 = 0.0, w2 = 0.0;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + w1;
      w1 = s.b1 * in - s.a1 * out + w2;
      w2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

}  // namespace

std::vector<Biquad> butter_lowpass(int order, double cutoff_hz, double fs) {
  return butter_design(order, cutoff_hz, fs, false);
}

std::vector<Biquad> butter_highpass(int order, double cutoff_hz, double fs) {
  return butter_design(order, cutoff_hz, fs, true);
}

double sos_magnitude(const std::vector<Biquad>& sos, double freq_hz, double fs) {
  const std::complex<double> z = std::polar(1.0, 2.0 * kPi * freq_hz / fs);
  const std::complex<double> zi = 1.0 / z;
  std::complex<double> h = 1.0;
  for (const auto& s : sos)
    h *= (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
  return std::abs(h);
}

std::vector<double> filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x) {
  if (x.empty()) return {};
  const size_t n = x.size();
  const size_t pad = std::min(n - 1, size_t(300));
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  // odd reflection about the endpoints kills startup transients
  for (size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  sos_filter_inplace(sos, ext);
  std::reverse(ext.begin(), ext.end());
  sos_filter_inplace(sos, ext);
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + long(pad), ext.begin() + long(pad + n));
}

int median_window_samples(double fs, double window_ms) {
  int w = int(std::lround(fs * window_ms / 1000.0));
  if (w < 1) w = 1;
  if (w % 2 == 0) ++w;
  return w;
}

std::vector<double> median_filter(const std::vector<double>& signal, int window_len_samples) {
  if (signal.empty()) throw std::invalid_argument("median_filter: empty signal");
  if (window_len_samples <= 0 || window_len_samples % 2 == 0)
    throw std::invalid_argument("median_filter: window must be odd and positive");
  const int64_t n = int64_t(signal.size());
  const int r = window_len_samples / 2;
  auto clamped = [&](int64_t i) {
    return signal[size_t(std::clamp<int64_t>(i, 0, n - 1))];
  };
  // sorted sliding window; the window is tiny so vector ops win
  std::vector<double> window;
  window.reserve(size_t(window_len_samples));
  for (int64_t i = -r; i <= r; ++i) window.push_back(clamped(i));
  std::sort(window.begin(), window.end());

  std::vector<double> out(size_t(n), 0.0);
  out[0] = window[size_t(r)];
  for (int64_t i = 1; i < n; ++i) {
    const double leaving = clamped(i - 1 - r);
    const double entering = clamped(i + r);
    window.erase(std::lower_bound(window.begin(), window.end(), leaving));
    window.insert(std::lower_bound(window.begin(), window.end(), entering), entering);
    out[size_t(i)] = window[size_t(r)];
  }
  return out;
}

std::vector<double> remove_baseline(const std::vector<double>& signal, double fs,
                                    const FilterSpec& spec) {
  if (fs <= 0) throw std::invalid_argument("remove_baseline: fs must be positive");
  const int w1 = median_window_samples(fs, spec.median_window_1_ms);
  const int w2 = median_window_samples(fs, spec.median_window_2_ms);
  std::vector<double> baseline = median_filter(median_filter(signal, w1), w2);
  std::vector<double> out(signal.size());
  for (size_t i = 0; i < signal.size(); ++i) out[i] = signal[i] - baseline[i];
  return out;
}

std::vector<double> lowpass(const std::vector<double>& signal, double fs,
                            const FilterSpec& spec) {
  const auto sos = butter_lowpass(spec.lowpass_order, spec.lowpass_cutoff_hz, fs);
  return filtfilt(sos, signal);
}

std::vector<double> denoise(const std::vector<double>& signal, double fs,
                            const FilterSpec& spec) {
  return lowpass(remove_baseline(signal, fs, spec), fs, spec);
}

std::vector<int64_t> pan_tompkins(const std::vector<double>& signal, double fs) {
  const int64_t n = int64_t(signal.size());
  if (double(n) < 2.0 * fs)
    throw std::invalid_argument("pan_tompkins: signal shorter than the 2 s learning phase");

  // 5-15 Hz band pass, zero phase so no delay compensation is needed
  std::vector<double> bp = filtfilt(butter_highpass(2, 5.0, fs), signal);
  bp = filtfilt(butter_lowpass(2, 15.0, fs), bp);

  // five-point derivative, centered
  std::vector<double> sq(size_t(n), 0.0);
  auto at = [&](int64_t i) { return bp[size_t(std::clamp<int64_t>(i, 0, n - 1))]; };
  for (int64_t i = 0; i < n; ++i) {
    const double d = (2.0 * at(i + 1) + at(i + 2) - 2.0 * at(i - 1) - at(i - 2)) / 8.0;
    sq[size_t(i)] = d * d;
  }

  // 150 ms moving-window integration, centered
  const int64_t w = std::max<int64_t>(1, std::llround(0.150 * fs));
  std::vector<double> mwi(size_t(n), 0.0);
  {
    const int64_t half = w / 2;
    double acc = 0.0;
    int64_t lo = 0, hi = -1;  // inclusive window [i-half, i+half] clamped
    for (int64_t i = 0; i < n; ++i) {
      const int64_t nlo = std::max<int64_t>(0, i - half);
      const int64_t nhi = std::min<int64_t>(n - 1, i + half);
      while (hi < nhi) acc += sq[size_t(++hi)];
      while (lo < nlo) acc -= sq[size_t(lo++)];
      mwi[size_t(i)] = acc / double(w);
    }
  }

  // learning phase over the first 2 s
  const int64_t learn = std::min<int64_t>(n, std::llround(2.0 * fs));
  double spki = 0.0, npki = 0.0;
  for (int64_t i = 0; i < learn; ++i) {
    spki = std::max(spki, mwi[size_t(i)]);
    npki += mwi[size_t(i)];
  }
  npki = 0.5 * npki / double(learn);
  double thr1 = npki + 0.25 * (spki - npki);
  double thr2 = 0.5 * thr1;

  // candidate peaks: strict local maxima of the integration waveform
  std::vector<int64_t> cands;
  for (int64_t i = 1; i + 1 < n; ++i)
    if (mwi[size_t(i)] > mwi[size_t(i - 1)] && mwi[size_t(i)] >= mwi[size_t(i + 1)])
      cands.push_back(i);

  const int64_t refractory = std::llround(0.200 * fs);
  const int64_t twave_win = std::llround(0.360 * fs);
  auto max_slope_near = [&](int64_t i) {
    double m = 0.0;
    for (int64_t j = std::max<int64_t>(0, i - w / 2); j <= std::min(n - 1, i + w / 2); ++j)
      m = std::max(m, sq[size_t(j)]);
    return m;
  };

  std::vector<int64_t> qrs;  // indices into mwi
  std::vector<int64_t> rr_hist;
  auto rr_average = [&]() {
    if (rr_hist.empty()) return double(fs);  // assume 60 bpm until learned
    const size_t k = std::min<size_t>(8, rr_hist.size());
    double s = 0.0;
    for (size_t i = rr_hist.size() - k; i < rr_hist.size(); ++i) s += double(rr_hist[i]);
    return s / double(k);
  };
  auto accept = [&](int64_t i) {
    if (!qrs.empty()) rr_hist.push_back(i - qrs.back());
    qrs.push_back(i);
  };

  for (size_t ci = 0; ci < cands.size(); ++ci) {
    const int64_t i = cands[ci];
    const double peak = mwi[size_t(i)];
    if (!qrs.empty() && i - qrs.back() < refractory) continue;

    bool is_qrs = peak > thr1;
    // T waves ride within 360 ms of the QRS with a much smaller slope
    if (is_qrs && !qrs.empty() && i - qrs.back() < twave_win &&
        max_slope_near(i) < 0.5 * max_slope_near(qrs.back()))
      is_qrs = false;

    if (is_qrs) {
      spki = 0.125 * peak + 0.875 * spki;
      accept(i);
    } else {
      npki = 0.125 * peak + 0.875 * npki;
    }
    thr1 = npki + 0.25 * (spki - npki);
    thr2 = 0.5 * thr1;

    // search-back when the expected beat never arrived
    if (!qrs.empty() && ci + 1 < cands.size()) {
      const double rr_avg = rr_average();
      if (double(cands[ci + 1] - qrs.back()) > 1.66 * rr_avg) {
        int64_t best = -1;
        double best_v = thr2;
        for (int64_t c : cands) {
          if (c <= qrs.back() + refractory) continue;
          if (c >= cands[ci + 1]) break;
          if (mwi[size_t(c)] > best_v) {
            best_v = mwi[size_t(c)];
            best = c;
          }
        }
        if (best >= 0) {
          spki = 0.25 * mwi[size_t(best)] + 0.75 * spki;
          thr1 = npki + 0.25 * (spki - npki);
          thr2 = 0.5 * thr1;
          accept(best);
        }
      }
    }
  }

  // refine each detection to the band-passed maximum within +/-50 ms
  const int64_t rw = std::llround(0.050 * fs);
  std::vector<int64_t> peaks;
  peaks.reserve(qrs.size());
  for (int64_t i : qrs) {
    int64_t best = std::max<int64_t>(0, i - rw);
    for (int64_t j = best; j <= std::min(n - 1, i + rw); ++j)
      if (bp[size_t(j)] > bp[size_t(best)]) best = j;
    peaks.push_back(best);
  }
  std::sort(peaks.begin(), peaks.end());
  // refinement can pull neighbors together; re-impose the refractory
  std::vector<int64_t> out;
  for (int64_t p : peaks)
    if (out.empty() || p - out.back() >= refractory) out.push_back(p);
  return out;
}

}  // namespace ecgt
