#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ecgt/dataset.hpp"
#include "ecgt/model.hpp"
#include "ecgt/quant.hpp"

namespace ecgt {

// All containers share one envelope:
//   8-byte magic, little-endian u64 JSON length, JSON manifest, raw payload.
// Payload blobs are little-endian and byte-exact as documented per format.

struct BeatDataset {
  double fs = 360.0;
  uint64_t seed = 0;
  std::string config_hash;
  std::vector<BeatSample> samples;
};

// dataset: windows and rr pairs as float32 LE blobs, labels/sources/
// conditions in the JSON index (columnar arrays)
void save_dataset(const BeatDataset& ds, const std::string& path);
BeatDataset load_dataset(const std::string& path);

// checkpoint: JSON manifest (config, tensor names, shapes, offsets) +
// one float32 LE blob per tensor
void save_checkpoint(const ModelParams& params, const std::string& path,
                     const std::string& config_hash, uint64_t seed);
struct Checkpoint {
  ModelParams params;
  std::string config_hash;
  uint64_t seed = 0;
};
Checkpoint load_checkpoint(const std::string& path);

// quantized checkpoint: JSON manifest carries the config, the float scales
// (reference metadata), every requantization multiplier/shift pair and the
// integer nonlinearity constants; int8/int32/int64 blobs carry the tensors.
void save_quantized(const QuantizedModel& qm, const std::string& path,
                    const std::string& config_hash, uint64_t seed);
struct QuantCheckpoint {
  QuantizedModel model;
  std::string config_hash;
  uint64_t seed = 0;
};
QuantCheckpoint load_quantized(const std::string& path);

// JSON-lines training log
void append_train_log(const std::string& path, int epoch, double train_loss, double valid_loss,
                      double valid_acc, double lr);

}  // namespace ecgt
