#include "ecgt/pipeline.hpp"

#include <filesystem>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "ecgt/config.hpp"

namespace ecgt {

std::set<std::string> parse_exclude_list(const std::string& csv) {
  std::set<std::string> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    if (!tok.empty()) out.insert(tok);
  }
  return out;
}

RecordBeats segment_record(const EcgRecord& rec, int channel, const IngestOptions& opt,
                           NoiseCondition condition, const std::vector<double>* noise_record,
                           uint64_t noise_seed) {
  const double fs = rec.header.sampling_rate_hz;
  std::vector<double> mv = rec.channel_mv(channel);
  if (condition != NoiseCondition::noiseless) {
    if (!noise_record) throw std::invalid_argument("segment_record: noise record required");
    mv = mix_noise(mv, *noise_record, noise_condition_snr_db(condition), noise_seed);
  }
  if (opt.denoise) mv = denoise(mv, fs, opt.filter);

  std::vector<int64_t> peaks;
  std::vector<BeatClass> labels;
  for (const auto& a : rec.annotations) {
    const auto cls = map_symbol_to_class(a.symbol);
    if (!cls) continue;  // rhythm/artifact marks are not beats
    peaks.push_back(a.sample_index);
    labels.push_back(*cls);
  }
  RecordBeats out;
  out.beats = segment_beats(mv, fs, rec.header.record_name, peaks, labels, &out.stats);
  for (auto& b : out.beats) b.condition = condition;
  return out;
}

namespace {

std::vector<std::string> usable_records(const std::string& dir, const IngestOptions& opt,
                                        std::vector<std::string>* skipped) {
  std::vector<std::string> names = list_records(dir);
  std::vector<std::string> out;
  for (const auto& n : names) {
    if (opt.exclude.count(n)) {
      if (skipped) skipped->push_back(n + " (excluded)");
      continue;
    }
    out.push_back(n);
  }
  if (out.empty()) throw std::runtime_error("no usable records in " + dir);
  return out;
}

int lead_channel(const EcgRecord& rec, const std::string& lead, std::vector<std::string>* skipped) {
  const int ch = rec.find_lead(lead);
  if (ch < 0) {
    if (skipped) skipped->push_back(rec.header.record_name + " (no " + lead + " lead)");
    std::cerr << "warning: record " << rec.header.record_name << " has no " << lead
              << " lead, skipping\n";
  }
  return ch;
}

}  // namespace

BeatDataset ingest_records(const std::string& dir, const IngestOptions& opt, uint64_t seed,
                           const std::string& config_hash, std::vector<std::string>* skipped) {
  BeatDataset ds;
  ds.seed = seed;
  ds.config_hash = config_hash;
  for (const auto& name : usable_records(dir, opt, skipped)) {
    EcgRecord rec = load_record((std::filesystem::path(dir) / name).string());
    ds.fs = rec.header.sampling_rate_hz;
    const int ch = lead_channel(rec, opt.lead, skipped);
    if (ch < 0) continue;
    auto rb = segment_record(rec, ch, opt);
    ds.samples.insert(ds.samples.end(), rb.beats.begin(), rb.beats.end());
  }
  if (ds.samples.empty()) throw std::runtime_error("ingest produced no beats from " + dir);
  return ds;
}

BeatDataset augment_records(const std::string& dir, const std::vector<double>& noise_record,
                            const IngestOptions& opt, uint64_t seed,
                            const std::string& config_hash) {
  BeatDataset ds;
  ds.seed = seed;
  ds.config_hash = config_hash;
  for (const auto& name : usable_records(dir, opt, nullptr)) {
    EcgRecord rec = load_record((std::filesystem::path(dir) / name).string());
    ds.fs = rec.header.sampling_rate_hz;
    const int ch = lead_channel(rec, opt.lead, nullptr);
    if (ch < 0) continue;
    for (int c = 0; c < kNumConditions; ++c) {
      const auto cond = NoiseCondition(c);
      const uint64_t ns = derive_seed(seed, fnv1a64(name) ^ uint64_t(c));
      auto rb = segment_record(rec, ch, opt, cond,
                               cond == NoiseCondition::noiseless ? nullptr : &noise_record, ns);
      ds.samples.insert(ds.samples.end(), rb.beats.begin(), rb.beats.end());
    }
  }
  if (ds.samples.empty()) throw std::runtime_error("augment produced no beats from " + dir);
  return ds;
}

IdentityIndex build_identity_index(const BeatDataset& ds) {
  IdentityIndex ix;
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    const auto key = std::make_pair(s.record_name, s.sample_index);
    auto it = ix.pos.find(key);
    size_t id;
    if (it == ix.pos.end()) {
      id = ix.ids.size();
      ix.pos.emplace(key, id);
      ix.ids.push_back(key);
      ix.loc.push_back({-1, -1, -1, -1});
    } else {
      id = it->second;
    }
    ix.loc[id][size_t(s.condition)] = int32_t(i);
  }
  return ix;
}

namespace {

const BeatSample* sample_for(const BeatDataset& ds, const IdentityIndex& index, size_t id,
                             NoiseCondition cond) {
  const int32_t at = index.loc[id][size_t(cond)];
  if (at < 0)
    throw std::runtime_error("dataset is missing condition `" +
                             std::string(noise_condition_name(cond)) + "` for beat " +
                             index.ids[id].first + ":" +
                             std::to_string(index.ids[id].second) +
                             " (augment the records first)");
  return &ds.samples[size_t(at)];
}

}  // namespace

std::vector<const BeatSample*> train_view(const BeatDataset& ds, const IdentityIndex& index,
                                          const std::vector<size_t>& id_indices, NoiseMode mode,
                                          uint64_t seed) {
  const auto conds = assign_train_conditions(id_indices.size(), mode, seed);
  std::vector<const BeatSample*> out;
  out.reserve(id_indices.size());
  for (size_t i = 0; i < id_indices.size(); ++i)
    out.push_back(sample_for(ds, index, id_indices[i], conds[i]));
  return out;
}

std::vector<const BeatSample*> eval_view(const BeatDataset& ds, const IdentityIndex& index,
                                         const std::vector<size_t>& id_indices, NoiseMode mode) {
  const auto conds = test_conditions(mode);
  std::vector<const BeatSample*> out;
  out.reserve(id_indices.size() * conds.size());
  for (const auto cond : conds)
    for (size_t id : id_indices) out.push_back(sample_for(ds, index, id, cond));
  return out;
}

std::vector<const BeatSample*> eval_view_condition(const BeatDataset& ds,
                                                   const IdentityIndex& index,
                                                   const std::vector<size_t>& id_indices,
                                                   NoiseCondition condition) {
  std::vector<const BeatSample*> out;
  out.reserve(id_indices.size());
  for (size_t id : id_indices) out.push_back(sample_for(ds, index, id, condition));
  return out;
}

}  // namespace ecgt
