#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ecgt/signal_io.hpp"

namespace ecgt {

// Synthetic single-lead test signals. Each beat class carries a distinct
// morphology and timing signature so the fixture dataset is learnable
// without any external files:
//   N  narrow QRS with P and T waves, regular timing
//   S  premature narrow beat with a peaked P and a compensatory pause
//   V  wide, large, inverted-T beat, strongly premature
//   F  blend of the N and V shapes, mildly premature
//   Q  broad low-amplitude pacemaker-like shape
struct SynthSpec {
  double duration_s = 60.0;
  double fs = 360.0;
  double base_bpm = 75.0;
  // class occurrence weights N,S,V,F,Q
  std::array<double, 5> class_weights{0.70, 0.09, 0.10, 0.08, 0.03};
  double baseline_drift_mv = 0.15;  // slow sinusoidal wander
  double sensor_noise_mv = 0.01;    // white measurement noise
};

EcgRecord synth_record(const std::string& name, uint64_t seed, const SynthSpec& spec = {});

// Electrode-motion-like disturbance: bursty low-frequency excursions plus
// in-band (5-35 Hz) noise, deliberately overlapping the QRS band so the
// denoising chain cannot remove it.
std::vector<double> synth_motion_noise(uint64_t seed, size_t n_samples, double fs);
EcgRecord synth_noise_record(const std::string& name, uint64_t seed, double duration_s,
                             double fs = 360.0);

// One QRS-shaped pulse train with known peak positions (detector oracle).
std::vector<double> synth_pulse_train(double fs, double bpm, int n_beats,
                                      std::vector<int64_t>* true_peaks);

}  // namespace ecgt
