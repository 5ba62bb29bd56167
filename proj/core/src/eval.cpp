#include "ecgt/eval.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#ifndef ECGT_GIT_DESCRIBE
#define ECGT_GIT_DESCRIBE "unknown"
#endif

namespace ecgt {

using nlohmann::json;

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (const auto& row : counts)
    for (int64_t v : row) t += v;
  return t;
}

int64_t ConfusionMatrix::trace() const {
  int64_t t = 0;
  for (int i = 0; i < kNumClasses; ++i) t += counts[size_t(i)][size_t(i)];
  return t;
}

int64_t ConfusionMatrix::row_sum(int cls) const {
  int64_t t = 0;
  for (int64_t v : counts[size_t(cls)]) t += v;
  return t;
}

int64_t ConfusionMatrix::col_sum(int cls) const {
  int64_t t = 0;
  for (int i = 0; i < kNumClasses; ++i) t += counts[size_t(i)][size_t(cls)];
  return t;
}

void ConfusionMatrix::add(const ConfusionMatrix& other) {
  for (int i = 0; i < kNumClasses; ++i)
    for (int j = 0; j < kNumClasses; ++j)
      counts[size_t(i)][size_t(j)] += other.counts[size_t(i)][size_t(j)];
}

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.size() != labels.size())
    throw std::invalid_argument("confusion: predictions/labels length mismatch");
  ConfusionMatrix cm;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= kNumClasses || preds[i] < 0 || preds[i] >= kNumClasses)
      throw std::invalid_argument("confusion: class index out of range");
    cm.counts[size_t(labels[i])][size_t(preds[i])] += 1;
  }
  return cm;
}

std::optional<double> sensitivity(const ConfusionMatrix& cm, int cls) {
  const int64_t denom = cm.row_sum(cls);
  if (denom == 0) return std::nullopt;
  return double(cm.counts[size_t(cls)][size_t(cls)]) / double(denom);
}

std::optional<double> precision(const ConfusionMatrix& cm, int cls) {
  const int64_t denom = cm.col_sum(cls);
  if (denom == 0) return std::nullopt;
  return double(cm.counts[size_t(cls)][size_t(cls)]) / double(denom);
}

double accuracy(const ConfusionMatrix& cm) {
  const int64_t t = cm.total();
  return t == 0 ? 0.0 : double(cm.trace()) / double(t);
}

ClassReport make_report(const ConfusionMatrix& cm) {
  ClassReport r;
  r.cm = cm;
  r.acc = accuracy(cm);
  for (int c = 0; c < kNumClasses; ++c) {
    r.sens[size_t(c)] = sensitivity(cm, c);
    r.prec[size_t(c)] = precision(cm, c);
  }
  return r;
}

namespace {

struct Stat {
  double mean = 0.0, stddev = 0.0;
  int n = 0;
};

Stat stat_of(const std::vector<double>& xs) {
  Stat s;
  s.n = int(xs.size());
  if (xs.empty()) return s;
  for (double v : xs) s.mean += v;
  s.mean /= double(xs.size());
  if (xs.size() > 1) {
    double acc = 0.0;
    for (double v : xs) acc += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(acc / double(xs.size() - 1));
  }
  return s;
}

}  // namespace

FoldAggregate aggregate_folds(const std::vector<ClassReport>& folds) {
  FoldAggregate agg;
  std::vector<double> accs;
  for (const auto& f : folds) {
    accs.push_back(f.acc);
    agg.pooled.add(f.cm);
  }
  const Stat a = stat_of(accs);
  agg.acc_mean = a.mean;
  agg.acc_stddev = a.stddev;
  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<double> sens, prec;
    for (const auto& f : folds) {
      if (f.sens[size_t(c)]) sens.push_back(*f.sens[size_t(c)]);
      if (f.prec[size_t(c)]) prec.push_back(*f.prec[size_t(c)]);
    }
    if (!sens.empty()) {
      const Stat s = stat_of(sens);
      agg.sens_mean[size_t(c)] = s.mean;
      agg.sens_stddev[size_t(c)] = s.stddev;
    }
    if (!prec.empty()) {
      const Stat s = stat_of(prec);
      agg.prec_mean[size_t(c)] = s.mean;
      agg.prec_stddev[size_t(c)] = s.stddev;
    }
  }
  return agg;
}

namespace {

json optional_to_json(const std::optional<double>& v) {
  if (v) return *v;
  return nullptr;  // 0/0 metrics are null, never 0
}

}  // namespace

std::string report_to_json(const ClassReport& report, const std::string& config_hash,
                           uint64_t seed, const std::string& extra_label) {
  json j;
  j["git"] = git_describe();
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  if (!extra_label.empty()) j["label"] = extra_label;
  j["class_order"] = {"N", "S", "V", "F", "Q"};
  json cm = json::array();
  for (int i = 0; i < kNumClasses; ++i) {
    json row = json::array();
    for (int c = 0; c < kNumClasses; ++c) row.push_back(report.cm.counts[size_t(i)][size_t(c)]);
    cm.push_back(row);
  }
  j["confusion"] = cm;
  j["accuracy"] = report.acc;
  json per = json::object();
  for (int c = 0; c < kNumClasses; ++c) {
    json e;
    e["sensitivity"] = optional_to_json(report.sens[size_t(c)]);
    e["precision"] = optional_to_json(report.prec[size_t(c)]);
    per[beat_class_name(BeatClass(c))] = e;
  }
  j["per_class"] = per;
  j["stddev_convention"] = "sample";
  return j.dump(2);
}

void write_report(const ClassReport& report, const std::string& path,
                  const std::string& config_hash, uint64_t seed,
                  const std::string& extra_label) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << report_to_json(report, config_hash, seed, extra_label) << "\n";
}

std::string sweep_to_csv(const std::vector<SweepPoint>& points) {
  std::string out = "train_condition,test_condition,accuracy,n\n";
  char buf[64];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.6f", p.accuracy);
    out += p.train_condition + "," + p.test_condition + "," + buf + "," + std::to_string(p.n) +
           "\n";
  }
  return out;
}

const char* git_describe() { return ECGT_GIT_DESCRIBE; }

}  // namespace ecgt
