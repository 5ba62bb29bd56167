#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "ecgt/container.hpp"
#include "ecgt/dataset.hpp"
#include "ecgt/dsp.hpp"
#include "ecgt/signal_io.hpp"

namespace ecgt {

struct IngestOptions {
  std::set<std::string> exclude{"102", "104", "107", "217"};  // paced records
  std::string lead = "MLII";
  bool denoise = true;
  FilterSpec filter;
};

std::set<std::string> parse_exclude_list(const std::string& csv);

// beats labeled from the record's own annotations, peaks at the annotated
// positions; returns the denoised trace too when callers need it
struct RecordBeats {
  std::vector<BeatSample> beats;
  SegmentStats stats;
};
RecordBeats segment_record(const EcgRecord& rec, int channel, const IngestOptions& opt,
                           NoiseCondition condition = NoiseCondition::noiseless,
                           const std::vector<double>* noise_record = nullptr,
                           uint64_t noise_seed = 0);

// load + segment every record in a directory (noiseless)
BeatDataset ingest_records(const std::string& dir, const IngestOptions& opt, uint64_t seed,
                           const std::string& config_hash,
                           std::vector<std::string>* skipped = nullptr);

// same records under all four conditions (noise mixed into the raw signal,
// then denoising, then segmentation; each condition gets its own windows)
BeatDataset augment_records(const std::string& dir, const std::vector<double>& noise_record,
                            const IngestOptions& opt, uint64_t seed,
                            const std::string& config_hash);

// beat identity = (record, R-peak index); the split operates on identities
// so every noisy variant of one beat lands on the same side
struct IdentityIndex {
  std::vector<std::pair<std::string, int64_t>> ids;  // insertion order
  // per identity: sample index per condition, -1 when absent
  std::vector<std::array<int32_t, kNumConditions>> loc;
  std::map<std::pair<std::string, int64_t>, size_t> pos;
};
IdentityIndex build_identity_index(const BeatDataset& ds);

// resolve a list of identity indices to concrete samples for training
// under a noise mode (mix partitions identities across conditions)
std::vector<const BeatSample*> train_view(const BeatDataset& ds, const IdentityIndex& index,
                                          const std::vector<size_t>& id_indices, NoiseMode mode,
                                          uint64_t seed);
// evaluation view (mix replicates each identity under all four conditions)
std::vector<const BeatSample*> eval_view(const BeatDataset& ds, const IdentityIndex& index,
                                         const std::vector<size_t>& id_indices, NoiseMode mode);
// single-condition slice of an evaluation set
std::vector<const BeatSample*> eval_view_condition(const BeatDataset& ds,
                                                   const IdentityIndex& index,
                                                   const std::vector<size_t>& id_indices,
                                                   NoiseCondition condition);

}  // namespace ecgt
