#include "ecgt/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ecgt {

using nlohmann::json;

uint64_t fnv1a64(const std::string& data) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x00000100000001b3ULL;
  }
  return h;
}

std::string ExperimentConfig::canonical_json() const {
  json j;
  j["model"] = {{"input_len", model.input_len}, {"embed_dim", model.embed_dim},
                {"kernel", model.kernel},       {"heads", model.heads},
                {"hidden", model.hidden},       {"classes", model.classes},
                {"rr_dim", model.rr_dim},       {"use_rr", model.use_rr}};
  j["train"] = {{"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"lr0", train.lr0},
                {"plateau_factor", train.plateau.factor},
                {"plateau_patience", train.plateau.patience},
                {"plateau_min_lr", train.plateau.min_lr},
                {"plateau_improvement", train.plateau.improvement},
                {"use_rr", train.use_rr},
                {"use_denoising", train.use_denoising},
                {"noise_mode", noise_mode_name(train.noise_mode)}};
  j["split"] = {{"train", split.train_parts},
                {"valid", split.valid_parts},
                {"test", split.test_parts},
                {"folds", split.n_folds}};
  j["filter"] = {{"median1_ms", filter.median_window_1_ms},
                 {"median2_ms", filter.median_window_2_ms},
                 {"lowpass_hz", filter.lowpass_cutoff_hz},
                 {"lowpass_order", filter.lowpass_order}};
  j["seed"] = seed;
  j["exclude_records"] = exclude_records;
  return j.dump();
}

std::string ExperimentConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                (unsigned long long)fnv1a64(canonical_json()));
  return buf;
}

ExperimentConfig default_experiment_config() { return {}; }

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  json j = json::parse(f, nullptr, true, /*ignore_comments=*/true);
  ExperimentConfig c;
  if (j.contains("model")) {
    const auto& m = j["model"];
    if (m.contains("input_len")) c.model.input_len = m["input_len"];
    if (m.contains("embed_dim")) c.model.embed_dim = m["embed_dim"];
    if (m.contains("kernel")) c.model.kernel = m["kernel"];
    if (m.contains("heads")) c.model.heads = m["heads"];
    if (m.contains("hidden")) c.model.hidden = m["hidden"];
    if (m.contains("classes")) c.model.classes = m["classes"];
    if (m.contains("use_rr")) c.model.use_rr = m["use_rr"];
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    if (t.contains("epochs")) c.train.epochs = t["epochs"];
    if (t.contains("batch_size")) c.train.batch_size = t["batch_size"];
    if (t.contains("lr0")) c.train.lr0 = t["lr0"];
    if (t.contains("plateau_factor")) c.train.plateau.factor = t["plateau_factor"];
    if (t.contains("plateau_patience")) c.train.plateau.patience = t["plateau_patience"];
    if (t.contains("plateau_min_lr")) c.train.plateau.min_lr = t["plateau_min_lr"];
    if (t.contains("use_rr")) c.train.use_rr = t["use_rr"];
    if (t.contains("use_denoising")) c.train.use_denoising = t["use_denoising"];
    if (t.contains("noise_mode"))
      c.train.noise_mode = parse_noise_mode(t["noise_mode"].get<std::string>());
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    if (s.contains("folds")) c.split.n_folds = s["folds"];
  }
  if (j.contains("filter")) {
    const auto& fl = j["filter"];
    if (fl.contains("median1_ms")) c.filter.median_window_1_ms = fl["median1_ms"];
    if (fl.contains("median2_ms")) c.filter.median_window_2_ms = fl["median2_ms"];
    if (fl.contains("lowpass_hz")) c.filter.lowpass_cutoff_hz = fl["lowpass_hz"];
    if (fl.contains("lowpass_order")) c.filter.lowpass_order = fl["lowpass_order"];
  }
  if (j.contains("seed")) c.seed = j["seed"];
  if (j.contains("threads")) c.threads = j["threads"];
  if (j.contains("records_dir")) c.records_dir = j["records_dir"];
  if (j.contains("noise_record")) c.noise_record = j["noise_record"];
  if (j.contains("exclude_records")) c.exclude_records = j["exclude_records"];
  c.model.use_rr = c.train.use_rr;
  c.train.seed = c.seed;
  c.split.seed = c.seed;
  c.train.threads = c.threads;
  return c;
}

}  // namespace ecgt
