#pragma once

#include <cstdint>
#include <string>

#include "ecgt/dataset.hpp"
#include "ecgt/dsp.hpp"
#include "ecgt/model.hpp"
#include "ecgt/training.hpp"

namespace ecgt {

// One experiment description; every field defaults to the reference setup,
// so an empty config file reproduces it exactly.
struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  SplitSpec split;
  FilterSpec filter;
  uint64_t seed = 0;
  int threads = 1;
  std::string records_dir;
  std::string noise_record;
  std::string exclude_records = "102,104,107,217";

  // canonical JSON of every field, independent of file formatting
  std::string canonical_json() const;
  std::string hash() const;  // FNV-1a 64 of the canonical form, hex
};

ExperimentConfig load_experiment_config(const std::string& path);  // JSON file
ExperimentConfig default_experiment_config();

uint64_t fnv1a64(const std::string& data);

}  // namespace ecgt
