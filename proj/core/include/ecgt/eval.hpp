#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ecgt/dataset.hpp"
#include "ecgt/signal_io.hpp"

namespace ecgt {

// 5x5 counts, rows = true labels, columns = predictions, order N,S,V,F,Q.
struct ConfusionMatrix {
  std::array<std::array<int64_t, kNumClasses>, kNumClasses> counts{};

  int64_t total() const;
  int64_t trace() const;
  int64_t row_sum(int cls) const;
  int64_t col_sum(int cls) const;
  void add(const ConfusionMatrix& other);
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels);

// diagonal / row sum; 0/0 is undefined, reported distinct from 0
std::optional<double> sensitivity(const ConfusionMatrix& cm, int cls);
// diagonal / column sum
std::optional<double> precision(const ConfusionMatrix& cm, int cls);
double accuracy(const ConfusionMatrix& cm);

struct ClassReport {
  ConfusionMatrix cm;
  double acc = 0.0;
  std::array<std::optional<double>, kNumClasses> sens{};
  std::array<std::optional<double>, kNumClasses> prec{};
};

ClassReport make_report(const ConfusionMatrix& cm);

struct FoldAggregate {
  double acc_mean = 0.0;
  double acc_stddev = 0.0;  // sample (n-1)
  std::array<std::optional<double>, kNumClasses> sens_mean{};
  std::array<std::optional<double>, kNumClasses> sens_stddev{};
  std::array<std::optional<double>, kNumClasses> prec_mean{};
  std::array<std::optional<double>, kNumClasses> prec_stddev{};
  ConfusionMatrix pooled;  // summed counts, Table-style
};

// Per-class metrics averaged across folds (folds where the metric is
// undefined are skipped for that class); confusion counts pooled.
FoldAggregate aggregate_folds(const std::vector<ClassReport>& folds);

// JSON (self-consistent: metrics recompute exactly from the embedded matrix)
std::string report_to_json(const ClassReport& report, const std::string& config_hash,
                           uint64_t seed, const std::string& extra_label = "");
void write_report(const ClassReport& report, const std::string& path,
                  const std::string& config_hash, uint64_t seed,
                  const std::string& extra_label = "");

struct SweepPoint {
  std::string train_condition;
  std::string test_condition;
  double accuracy = 0.0;
  int64_t n = 0;
};

std::string sweep_to_csv(const std::vector<SweepPoint>& points);

const char* git_describe();

}  // namespace ecgt
