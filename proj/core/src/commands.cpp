#include "ecgt/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ecgt/config.hpp"
#include "ecgt/container.hpp"
#include "ecgt/eval.hpp"
#include "ecgt/pipeline.hpp"
#include "ecgt/quant.hpp"
#include "ecgt/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ecgt {

namespace {

struct Common {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;  // 0 = take from config
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "experiment config file (JSON)");
  cmd->add_option("--seed", c.seed, "random seed")->each([&](const std::string&) {
    c.seed_set = true;
  });
  cmd->add_option("--threads", c.threads, "worker threads (1 = bit-exact reference order)");
}

ExperimentConfig resolve_config(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? default_experiment_config()
                                               : load_experiment_config(c.config_path);
  if (c.seed_set) cfg.seed = c.seed;
  if (c.threads > 0) cfg.threads = c.threads;
  cfg.train.seed = cfg.seed;
  cfg.split.seed = cfg.seed;
  cfg.train.threads = cfg.threads;
  cfg.model.use_rr = cfg.train.use_rr;
  return cfg;
}

std::vector<double> load_noise_mv(const std::string& path) {
  EcgRecord rec = load_record(path);
  return rec.channel_mv(0);
}

int pick_channel(const EcgRecord& rec, const std::string& lead) {
  int ch = rec.find_lead(lead);
  if (ch < 0) ch = 0;
  return ch;
}

struct SplitViews {
  IdentityIndex index;
  Split split;
};

SplitViews split_dataset(const BeatDataset& ds, const ExperimentConfig& cfg) {
  SplitViews sv;
  sv.index = build_identity_index(ds);
  SplitSpec spec = cfg.split;
  spec.seed = cfg.seed;
  sv.split = make_split(sv.index.ids.size(), spec);
  return sv;
}

ClassReport evaluate_float(const ModelParams& params,
                           const std::vector<const BeatSample*>& view, int threads) {
  (void)threads;
  std::vector<int> preds(view.size()), labels(view.size());
  for (size_t i = 0; i < view.size(); ++i) {
    preds[i] = predict(params, *view[i]);
    labels[i] = int(view[i]->label);
  }
  return make_report(confusion(preds, labels));
}

ClassReport evaluate_int8(const QuantizedModel& qm, const std::vector<const BeatSample*>& view) {
  std::vector<int> preds(view.size()), labels(view.size());
  for (size_t i = 0; i < view.size(); ++i) {
    preds[i] = int_predict(qm, *view[i]);
    labels[i] = int(view[i]->label);
  }
  return make_report(confusion(preds, labels));
}

int cmd_ingest(const std::string& records, const std::string& out, const std::string& exclude,
               bool no_denoise, const Common& common) {
  ExperimentConfig cfg = resolve_config(common);
  IngestOptions opt;
  opt.exclude = parse_exclude_list(exclude);
  opt.denoise = !no_denoise;
  opt.filter = cfg.filter;
  std::vector<std::string> skipped;
  BeatDataset ds = ingest_records(records, opt, cfg.seed, cfg.hash(), &skipped);
  save_dataset(ds, out);
  std::cout << "beats=" << ds.samples.size() << " records_skipped=" << skipped.size() << "\n";
  return 0;
}

int cmd_denoise(const std::string& in, const std::string& out, const Common& common) {
  ExperimentConfig cfg = resolve_config(common);
  EcgRecord rec = load_record(in);
  const double fs = rec.header.sampling_rate_hz;
  for (size_t c = 0; c < rec.channels.size(); ++c) {
    auto mv = denoise(rec.channel_mv(int(c)), fs, cfg.filter);
    const auto& spec = rec.header.channels[c];
    for (size_t i = 0; i < mv.size(); ++i) {
      const double adc = std::round(mv[i] * spec.gain) + spec.adc_zero;
      rec.channels[c][i] = int16_t(std::clamp(adc, -32768.0, 32767.0));
    }
  }
  write_record_csv(rec, out);
  return 0;
}

int cmd_detect(const std::string& in, const std::string& out, const Common& common) {
  ExperimentConfig cfg = resolve_config(common);
  EcgRecord rec = load_record(in);
  const int ch = pick_channel(rec, "MLII");
  auto mv = denoise(rec.channel_mv(ch), rec.header.sampling_rate_hz, cfg.filter);
  auto peaks = pan_tompkins(mv, rec.header.sampling_rate_hz);
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out);
  f << "sample_index\n";
  for (int64_t p : peaks) f << p << "\n";
  std::cout << "peaks=" << peaks.size() << "\n";
  return 0;
}

int cmd_segment(const std::string& records, const std::string& out, const std::string& exclude,
                bool no_denoise, bool use_detector, const Common& common) {
  ExperimentConfig cfg = resolve_config(common);
  IngestOptions opt;
  opt.exclude = parse_exclude_list(exclude);
  opt.denoise = !no_denoise;
  opt.filter = cfg.filter;
  BeatDataset ds;
  ds.seed = cfg.seed;
  ds.config_hash = cfg.hash();
  for (const auto& name : list_records(records)) {
    if (opt.exclude.count(name)) continue;
    EcgRecord rec = load_record((fs::path(records) / name).string());
    ds.fs = rec.header.sampling_rate_hz;
    const int ch = rec.find_lead(opt.lead);
    if (ch < 0) continue;
    if (!use_detector) {
      auto rb = segment_record(rec, ch, opt);
      ds.samples.insert(ds.samples.end(), rb.beats.begin(), rb.beats.end());
      continue;
    }
    // live-pipeline mode: peaks from the detector, labels matched from the
    // nearest annotation within 150 ms
    auto mv = rec.channel_mv(ch);
    if (opt.denoise) mv = denoise(mv, ds.fs, opt.filter);
    auto peaks = pan_tompkins(mv, ds.fs);
    const int64_t tol = std::llround(0.150 * ds.fs);
    std::vector<int64_t> kept;
    std::vector<BeatClass> labels;
    for (int64_t p : peaks) {
      const BeatClass* best = nullptr;
      int64_t best_d = tol + 1;
      static thread_local BeatClass cls_store;
      for (const auto& a : rec.annotations) {
        const auto cls = map_symbol_to_class(a.symbol);
        if (!cls) continue;
        const int64_t d = std::llabs(a.sample_index - p);
        if (d < best_d) {
          best_d = d;
          cls_store = *cls;
          best = &cls_store;
        }
      }
      if (best) {
        kept.push_back(p);
        labels.push_back(*best);
      }
    }
    SegmentStats st;
    auto beats = segment_beats(mv, ds.fs, name, kept, labels, &st);
    ds.samples.insert(ds.samples.end(), beats.begin(), beats.end());
  }
  if (ds.samples.empty()) throw std::runtime_error("segment produced no beats");
  save_dataset(ds, out);
  std::cout << "beats=" << ds.samples.size() << "\n";
  return 0;
}

int cmd_augment(const std::string& records, const std::string& noise_path,
                const std::string& snr, const std::string& out, const std::string& exclude,
                const Common& common) {
  ExperimentConfig cfg = resolve_config(common);
  IngestOptions opt;
  opt.exclude = parse_exclude_list(exclude);
  opt.filter = cfg.filter;
  const auto noise = load_noise_mv(noise_path);
  BeatDataset ds;
  if (snr == "mix") {
    ds = augment_records(records, noise, opt, cfg.seed, cfg.hash());
  } else {
    // single level: noiseless plus that condition
    const NoiseMode mode = parse_noise_mode(snr);
    const NoiseCondition cond = test_conditions(mode).front();
    ds.seed = cfg.seed;
    ds.config_hash = cfg.hash();
    for (const auto& name : list_records(records)) {
      if (opt.exclude.count(name)) continue;
      EcgRecord rec = load_record((fs::path(records) / name).string());
      ds.fs = rec.header.sampling_rate_hz;
      const int ch = rec.find_lead(opt.lead);
      if (ch < 0) continue;
      auto clean = segment_record(rec, ch, opt);
      ds.samples.insert(ds.samples.end(), clean.beats.begin(), clean.beats.end());
      if (cond != NoiseCondition::noiseless) {
        const uint64_t ns = derive_seed(cfg.seed, fnv1a64(name) ^ uint64_t(cond));
        auto noisy = segment_record(rec, ch, opt, cond, &noise, ns);
        ds.samples.insert(ds.samples.end(), noisy.beats.begin(), noisy.beats.end());
      }
    }
    if (ds.samples.empty()) throw std::runtime_error("augment produced no beats");
  }
  save_dataset(ds, out);
  std::cout << "beats=" << ds.samples.size() << "\n";
  return 0;
}

int cmd_split(const std::string& data, int folds, const std::string& out,
              const Common& common) {
  ExperimentConfig cfg = resolve_config(common);
  BeatDataset ds = load_dataset(data);
  IdentityIndex index = build_identity_index(ds);
  SplitSpec spec = cfg.split;
  spec.seed = cfg.seed;
  spec.n_folds = folds;
  const Split split = make_split(index.ids.size(), spec);
  const auto fold_splits = make_folds(index.ids.size(), spec);
  json j;
  j["seed"] = cfg.seed;
  j["config_hash"] = cfg.hash();
  j["n_identities"] = index.ids.size();
  auto ids_json = [&](const std::vector<size_t>& v) {
    json a = json::array();
    for (size_t i : v) a.push_back({index.ids[i].first, index.ids[i].second});
    return a;
  };
  j["train"] = ids_json(split.train);
  j["valid"] = ids_json(split.valid);
  j["test"] = ids_json(split.test);
  json jf = json::array();
  for (const auto& f : fold_splits)
    jf.push_back({{"train", f.train.size()}, {"valid", f.valid.size()},
                  {"test", ids_json(f.test)}});
  j["folds"] = jf;
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out);
  f << j.dump(2) << "\n";
  std::cout << "train=" << split.train.size() << " valid=" << split.valid.size()
            << " test=" << split.test.size() << "\n";
  return 0;
}

int cmd_train(const std::string& data, const std::string& out, const std::string& log_path,
              const std::string& noise_mode, int epochs_override, const Common& common) {
  ExperimentConfig cfg = resolve_config(common);
  if (!noise_mode.empty()) cfg.train.noise_mode = parse_noise_mode(noise_mode);
  if (epochs_override > 0) cfg.train.epochs = epochs_override;
  BeatDataset ds = load_dataset(data);
  SplitViews sv = split_dataset(ds, cfg);
  const auto train_v = train_view(ds, sv.index, sv.split.train, cfg.train.noise_mode, cfg.seed);
  const auto valid_v =
      train_view(ds, sv.index, sv.split.valid, cfg.train.noise_mode, cfg.seed + 1);
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path, std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write " + log_path);
  }
  auto result = train(cfg.model, cfg.train, train_v, valid_v, [&](const EpochLog& e) {
    if (log.is_open()) {
      json j{{"epoch", e.epoch},
             {"train_loss", e.train_loss},
             {"valid_loss", e.valid_loss},
             {"valid_accuracy", e.valid_accuracy},
             {"lr", e.lr}};
      log << j.dump() << "\n";
      log.flush();
    }
  });
  save_checkpoint(result.best_params, out, cfg.hash(), cfg.seed);
  std::cout << "best_epoch=" << result.best_epoch << " best_valid_loss="
            << result.best_valid_loss << "\n";
  return 0;
}

int cmd_cv(const std::string& data, const std::string& out_dir, int folds,
           const std::string& noise_mode, int epochs_override, const Common& common) {
  ExperimentConfig cfg = resolve_config(common);
  if (!noise_mode.empty()) cfg.train.noise_mode = parse_noise_mode(noise_mode);
  if (epochs_override > 0) cfg.train.epochs = epochs_override;
  BeatDataset ds = load_dataset(data);
  IdentityIndex index = build_identity_index(ds);
  SplitSpec spec = cfg.split;
  spec.seed = cfg.seed;
  spec.n_folds = folds;
  const auto fold_splits = make_folds(index.ids.size(), spec);
  fs::create_directories(out_dir);

  std::vector<ClassReport> reports;
  for (size_t f = 0; f < fold_splits.size(); ++f) {
    const auto& sp = fold_splits[f];
    const auto train_v = train_view(ds, index, sp.train, cfg.train.noise_mode, cfg.seed + f);
    const auto valid_v =
        train_view(ds, index, sp.valid, cfg.train.noise_mode, cfg.seed + f + 1000);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed + f;
    auto result = train(cfg.model, tc, train_v, valid_v);
    const std::string ckpt = (fs::path(out_dir) / ("fold" + std::to_string(f) + ".ckpt")).string();
    save_checkpoint(result.best_params, ckpt, cfg.hash(), tc.seed);
    const auto test_v = eval_view(ds, index, sp.test, cfg.train.noise_mode);
    ClassReport rep = evaluate_float(result.best_params, test_v, cfg.threads);
    write_report(rep, (fs::path(out_dir) / ("fold" + std::to_string(f) + ".json")).string(),
                 cfg.hash(), tc.seed, "fold " + std::to_string(f));
    std::cout << "fold=" << f << " accuracy=" << rep.acc << "\n";
    reports.push_back(std::move(rep));
  }
  const FoldAggregate agg = aggregate_folds(reports);
  json j;
  j["git"] = git_describe();
  j["config_hash"] = cfg.hash();
  j["accuracy_mean"] = agg.acc_mean;
  j["accuracy_stddev"] = agg.acc_stddev;
  json pooled = json::array();
  for (int i = 0; i < kNumClasses; ++i) {
    json row = json::array();
    for (int c = 0; c < kNumClasses; ++c) row.push_back(agg.pooled.counts[size_t(i)][size_t(c)]);
    pooled.push_back(row);
  }
  j["pooled_confusion"] = pooled;
  json per = json::object();
  for (int c = 0; c < kNumClasses; ++c) {
    json e;
    e["sensitivity_mean"] = agg.sens_mean[size_t(c)] ? json(*agg.sens_mean[size_t(c)]) : json();
    e["sensitivity_stddev"] =
        agg.sens_stddev[size_t(c)] ? json(*agg.sens_stddev[size_t(c)]) : json();
    e["precision_mean"] = agg.prec_mean[size_t(c)] ? json(*agg.prec_mean[size_t(c)]) : json();
    e["precision_stddev"] =
        agg.prec_stddev[size_t(c)] ? json(*agg.prec_stddev[size_t(c)]) : json();
    per[beat_class_name(BeatClass(c))] = e;
  }
  j["per_class"] = per;
  std::ofstream f((fs::path(out_dir) / "aggregate.json").string());
  f << j.dump(2) << "\n";
  std::cout << "cv_accuracy_mean=" << agg.acc_mean << " stddev=" << agg.acc_stddev << "\n";
  return 0;
}

int cmd_quantize(const std::string& ckpt_path, const std::string& data, const std::string& out,
                 int qat_epochs, const std::string& noise_mode, const Common& common) {
  ExperimentConfig cfg = resolve_config(common);
  if (!noise_mode.empty()) cfg.train.noise_mode = parse_noise_mode(noise_mode);
  Checkpoint ck = load_checkpoint(ckpt_path);
  BeatDataset ds = load_dataset(data);
  SplitViews sv = split_dataset(ds, cfg);
  const auto train_v = train_view(ds, sv.index, sv.split.train, cfg.train.noise_mode, cfg.seed);
  const auto valid_v =
      train_view(ds, sv.index, sv.split.valid, cfg.train.noise_mode, cfg.seed + 1);
  const ActScales scales = calibrate(ck.params, train_v, cfg.train.batch_size);
  QuantizedModel qm;
  if (qat_epochs > 0) {
    QatConfig qc;
    qc.epochs = qat_epochs;
    qc.batch_size = cfg.train.batch_size;
    qc.lr = cfg.train.lr0 / 10.0;
    qc.seed = cfg.seed;
    qc.threads = cfg.threads;
    auto qr = qat_finetune(ck.params, scales, train_v, valid_v, qc);
    qm = std::move(qr.exported);
  } else {
    qm = build_quantized(fake_quant_weights(ck.params, scales), scales);
  }
  save_quantized(qm, out, cfg.hash(), cfg.seed);
  std::cout << "quantized=" << out << " qat_epochs=" << qat_epochs << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data, bool int8,
             const std::string& noise, const std::string& report_path, const Common& common) {
  ExperimentConfig cfg = resolve_config(common);
  const NoiseMode mode = noise.empty() ? NoiseMode::none : parse_noise_mode(noise);
  BeatDataset ds = load_dataset(data);
  SplitViews sv = split_dataset(ds, cfg);
  const auto test_v = eval_view(ds, sv.index, sv.split.test, mode);
  ClassReport rep;
  if (int8) {
    QuantCheckpoint qc = load_quantized(ckpt_path);
    rep = evaluate_int8(qc.model, test_v);
  } else {
    Checkpoint ck = load_checkpoint(ckpt_path);
    rep = evaluate_float(ck.params, test_v, cfg.threads);
  }
  if (!report_path.empty())
    write_report(rep, report_path, cfg.hash(), cfg.seed,
                 std::string(int8 ? "int8" : "float") + " noise=" +
                     (noise.empty() ? "none" : noise));
  std::cout << "accuracy=" << rep.acc << " n=" << rep.cm.total() << "\n";
  return 0;
}

int cmd_sweep(const std::string& ckpt_path, const std::string& data, bool int8,
              const std::string& out, const std::string& train_condition,
              const Common& common) {
  ExperimentConfig cfg = resolve_config(common);
  BeatDataset ds = load_dataset(data);
  SplitViews sv = split_dataset(ds, cfg);
  std::vector<SweepPoint> points;
  const char* conditions[] = {"none", "24", "10", "3", "mix"};
  for (const char* cname : conditions) {
    const NoiseMode mode = parse_noise_mode(cname);
    const auto view = eval_view(ds, sv.index, sv.split.test, mode);
    ClassReport rep;
    if (int8) {
      QuantCheckpoint qc = load_quantized(ckpt_path);
      rep = evaluate_int8(qc.model, view);
    } else {
      Checkpoint ck = load_checkpoint(ckpt_path);
      rep = evaluate_float(ck.params, view, cfg.threads);
    }
    points.push_back({train_condition, cname, rep.acc, rep.cm.total()});
  }
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out);
  f << sweep_to_csv(points);
  for (const auto& p : points)
    std::cout << p.test_condition << " accuracy=" << p.accuracy << "\n";
  return 0;
}

int cmd_count(const Common& common) {
  ExperimentConfig cfg = resolve_config(common);
  const int64_t params = count_params(cfg.model);
  const ComplexityEstimate est = count_ops_and_memory(cfg.model);
  std::printf("params=%lld\n", (long long)params);
  std::printf("mops=%.3f\n", est.mops());
  std::printf("footprint_bytes=%lld (%.1f kB)\n", (long long)est.footprint_bytes,
              double(est.footprint_bytes) / 1024.0);
  return 0;
}

int cmd_export_csv(const std::string& in, const std::string& out) {
  EcgRecord rec = load_record(in);
  write_record_csv(rec, out);
  std::cout << "samples=" << rec.header.n_samples << " annotations="
            << rec.annotations.size() << "\n";
  return 0;
}

int cmd_make_fixture(const std::string& out_dir, int n_records, double duration_s,
                     const Common& common) {
  ExperimentConfig cfg = resolve_config(common);
  fs::create_directories(out_dir);
  for (int i = 0; i < n_records; ++i) {
    const std::string name = "s" + std::to_string(100 + i);
    EcgRecord rec = synth_record(name, derive_seed(cfg.seed, uint64_t(i)),
                                 SynthSpec{.duration_s = duration_s});
    write_record_csv(rec, (fs::path(out_dir) / (name + ".csv")).string());
  }
  EcgRecord noise = synth_noise_record("em", derive_seed(cfg.seed, 0xE0), duration_s * 2);
  write_record_csv(noise, (fs::path(out_dir) / "em.csv").string());
  std::cout << "records=" << n_records << " dir=" << out_dir << "\n";
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"tiny transformer pipeline for 5-class ECG beat recognition"};
  app.require_subcommand(1);

  Common common;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "records directory -> beat dataset");
  std::string in_records, in_out, in_exclude = "102,104,107,217";
  bool in_no_denoise = false;
  ingest->add_option("--records", in_records, "record directory")->required();
  ingest->add_option("--out", in_out, "output dataset file")->required();
  ingest->add_option("--exclude-records", in_exclude, "comma-separated record names to skip");
  ingest->add_flag("--no-denoise", in_no_denoise, "skip the denoising chain");
  add_common(ingest, common);

  auto* denoise_cmd = app.add_subcommand("denoise", "filter a record (baseline + low pass)");
  std::string dn_in, dn_out;
  denoise_cmd->add_option("--in", dn_in)->required();
  denoise_cmd->add_option("--out", dn_out)->required();
  add_common(denoise_cmd, common);

  auto* detect = app.add_subcommand("detect", "R-peak detection to CSV");
  std::string dt_in, dt_out;
  detect->add_option("--in", dt_in)->required();
  detect->add_option("--out", dt_out)->required();
  add_common(detect, common);

  auto* segment = app.add_subcommand("segment", "cut labeled beat windows");
  std::string sg_records, sg_out, sg_exclude = "102,104,107,217";
  bool sg_no_denoise = false, sg_use_detector = false;
  segment->add_option("--records", sg_records)->required();
  segment->add_option("--out", sg_out)->required();
  segment->add_option("--exclude-records", sg_exclude);
  segment->add_flag("--no-denoise", sg_no_denoise);
  segment->add_flag("--use-detector", sg_use_detector,
                    "peaks from the detector instead of the annotations");
  add_common(segment, common);

  auto* augment = app.add_subcommand("augment", "noise-corrupted dataset at target SNR");
  std::string ag_records, ag_noise, ag_snr = "mix", ag_out, ag_exclude = "102,104,107,217";
  augment->add_option("--records", ag_records)->required();
  augment->add_option("--noise", ag_noise, "noise record (electrode motion)")->required();
  augment->add_option("--snr", ag_snr)->check(CLI::IsMember({"24", "10", "3", "mix"}));
  augment->add_option("--out", ag_out)->required();
  augment->add_option("--exclude-records", ag_exclude);
  add_common(augment, common);

  auto* split = app.add_subcommand("split", "7:1:2 split plus cross-validation folds");
  std::string sp_data, sp_out;
  int sp_folds = 5;
  split->add_option("--data", sp_data)->required();
  split->add_option("--folds", sp_folds);
  split->add_option("--out", sp_out)->required();
  add_common(split, common);

  auto* train_cmd = app.add_subcommand("train", "full-precision training");
  std::string tr_data, tr_out, tr_log, tr_noise;
  int tr_epochs = 0;
  train_cmd->add_option("--data", tr_data)->required();
  train_cmd->add_option("--out", tr_out)->required();
  train_cmd->add_option("--log", tr_log, "JSON-lines per-epoch log");
  train_cmd->add_option("--noise-mode", tr_noise)->check(CLI::IsMember({"none", "24", "10", "3", "mix"}));
  train_cmd->add_option("--epochs", tr_epochs, "override the configured epoch count");
  add_common(train_cmd, common);

  auto* cv = app.add_subcommand("cv", "k-fold cross-validation");
  std::string cv_data, cv_out, cv_noise;
  int cv_folds = 5, cv_epochs = 0;
  cv->add_option("--data", cv_data)->required();
  cv->add_option("--out-dir", cv_out)->required();
  cv->add_option("--folds", cv_folds);
  cv->add_option("--noise-mode", cv_noise)->check(CLI::IsMember({"none", "24", "10", "3", "mix"}));
  cv->add_option("--epochs", cv_epochs);
  add_common(cv, common);

  auto* quantize = app.add_subcommand("quantize", "calibrate + QAT + integer export");
  std::string qt_ckpt, qt_data, qt_out, qt_noise;
  int qt_epochs = 15;
  quantize->add_option("--ckpt", qt_ckpt)->required();
  quantize->add_option("--data", qt_data, "calibration/fine-tuning dataset")->required();
  quantize->add_option("--out", qt_out)->required();
  quantize->add_option("--qat-epochs", qt_epochs, "0 = post-training quantization only");
  quantize->add_option("--noise-mode", qt_noise)->check(CLI::IsMember({"none", "24", "10", "3", "mix"}));
  add_common(quantize, common);

  auto* eval_cmd = app.add_subcommand("eval", "test-set evaluation and report");
  std::string ev_ckpt, ev_data, ev_noise, ev_report;
  bool ev_int8 = false;
  eval_cmd->add_option("--ckpt", ev_ckpt)->required();
  eval_cmd->add_option("--data", ev_data)->required();
  eval_cmd->add_flag("--int8", ev_int8, "checkpoint is a quantized container");
  eval_cmd->add_option("--noise", ev_noise)->check(CLI::IsMember({"none", "24", "10", "3", "mix"}));
  eval_cmd->add_option("--report", ev_report, "JSON report path");
  add_common(eval_cmd, common);

  auto* sweep = app.add_subcommand("sweep", "accuracy across all test noise conditions");
  std::string sw_ckpt, sw_data, sw_out, sw_label = "unspecified";
  bool sw_int8 = false;
  sweep->add_option("--ckpt", sw_ckpt)->required();
  sweep->add_option("--data", sw_data)->required();
  sweep->add_option("--out", sw_out, "CSV output")->required();
  sweep->add_flag("--int8", sw_int8);
  sweep->add_option("--train-condition", sw_label, "label for the CSV line set");
  add_common(sweep, common);

  auto* count = app.add_subcommand("count", "parameters / MOPS / memory footprint");
  add_common(count, common);

  auto* exportcsv = app.add_subcommand("export-csv", "re-emit a record as CSV");
  std::string ex_in, ex_out;
  exportcsv->add_option("--in", ex_in)->required();
  exportcsv->add_option("--out", ex_out)->required();

  auto* mkfix = app.add_subcommand("make-fixture", "generate synthetic records for testing");
  std::string mf_out;
  int mf_n = 6;
  double mf_dur = 60.0;
  mkfix->add_option("--out-dir", mf_out)->required();
  mkfix->add_option("--records", mf_n);
  mkfix->add_option("--duration", mf_dur, "seconds per record");
  add_common(mkfix, common);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      std::cout << app.help();
      return 0;
    }
    json err{{"error", e.what()}, {"kind", "usage"}};
    std::cerr << err.dump() << "\n";
    return 2;
  }

  try {
    if (*ingest) return cmd_ingest(in_records, in_out, in_exclude, in_no_denoise, common);
    if (*denoise_cmd) return cmd_denoise(dn_in, dn_out, common);
    if (*detect) return cmd_detect(dt_in, dt_out, common);
    if (*segment)
      return cmd_segment(sg_records, sg_out, sg_exclude, sg_no_denoise, sg_use_detector, common);
    if (*augment) return cmd_augment(ag_records, ag_noise, ag_snr, ag_out, ag_exclude, common);
    if (*split) return cmd_split(sp_data, sp_folds, sp_out, common);
    if (*train_cmd) return cmd_train(tr_data, tr_out, tr_log, tr_noise, tr_epochs, common);
    if (*cv) return cmd_cv(cv_data, cv_out, cv_folds, cv_noise, cv_epochs, common);
    if (*quantize) return cmd_quantize(qt_ckpt, qt_data, qt_out, qt_epochs, qt_noise, common);
    if (*eval_cmd) return cmd_eval(ev_ckpt, ev_data, ev_int8, ev_noise, ev_report, common);
    if (*sweep) return cmd_sweep(sw_ckpt, sw_data, sw_int8, sw_out, sw_label, common);
    if (*count) return cmd_count(common);
    if (*exportcsv) return cmd_export_csv(ex_in, ex_out);
    if (*mkfix) return cmd_make_fixture(mf_out, mf_n, mf_dur, common);
  } catch (const std::exception& e) {
    json err{{"error", e.what()}, {"kind", "runtime"}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace ecgt
