#pragma once

#include <cstdint>
#include <vector>

namespace ecgt {

struct FilterSpec {
  double median_window_1_ms = 200.0;
  double median_window_2_ms = 600.0;
  double lowpass_cutoff_hz = 35.0;
  int lowpass_order = 4;
};

// Second-order IIR section, direct form II transposed.
struct Biquad {
  double b0, b1, b2;  // numerator
  double a1, a2;      // denominator (a0 normalized to 1)
};

// Butterworth designs via bilinear transform; returned as SOS cascades.
std::vector<Biquad> butter_lowpass(int order, double cutoff_hz, double fs);
std::vector<Biquad> butter_highpass(int order, double cutoff_hz, double fs);

// |H(f)| of the cascade at one frequency.
double sos_magnitude(const std::vector<Biquad>& sos, double freq_hz, double fs);

// Forward-backward (zero phase) application with reflective edge padding.
std::vector<double> filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x);

// Sliding median with edge replication; window must be odd.
std::vector<double> median_filter(const std::vector<double>& signal, int window_len_samples);

// Window length for a duration: odd(round(fs * ms / 1000)), even rounded up.
int median_window_samples(double fs, double window_ms);

// Baseline = 600 ms median of the 200 ms median; returns signal - baseline.
std::vector<double> remove_baseline(const std::vector<double>& signal, double fs,
                                    const FilterSpec& spec = {});

// Zero-phase Butterworth low pass (default 4th order, 35 Hz).
std::vector<double> lowpass(const std::vector<double>& signal, double fs,
                            const FilterSpec& spec = {});

// remove_baseline then lowpass; the standard preparation chain.
std::vector<double> denoise(const std::vector<double>& signal, double fs,
                            const FilterSpec& spec = {});

// QRS detection: 5-15 Hz band pass, five-point derivative, squaring,
// 150 ms moving-window integration, adaptive dual thresholds with
// search-back, peak refined to the band-passed maximum within +/-50 ms.
// Needs at least 2*fs samples for the learning phase.
std::vector<int64_t> pan_tompkins(const std::vector<double>& signal, double fs);

}  // namespace ecgt
