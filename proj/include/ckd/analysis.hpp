#pragma once

// Representation analyses on logits and cross-seed aggregation.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ckd/dataset.hpp"
#include "ckd/mlp.hpp"
#include "ckd/training.hpp"

namespace ckd {

struct CorrelationReport {
  MatrixXd teacher_corr;  // C x C
  MatrixXd student_corr;
  double metric = 0.0;    // mean |student - teacher| over all C^2 entries
  std::size_t m = 0;
  std::vector<std::size_t> sample_ids;
};

/// Logit matrices are C x N with matching columns; `ids` names the columns.
/// m columns are drawn without replacement by `seed`.
CorrelationReport correlation_gap(const MatrixXd& student_logits, const MatrixXd& teacher_logits,
                                  std::span<const std::size_t> ids, std::size_t m,
                                  std::uint64_t seed);

CorrelationReport correlation_gap(const MlpModel& student, const MlpModel& teacher,
                                  const Dataset& data, std::span<const std::size_t> eval_ids,
                                  std::size_t m = 100, std::uint64_t seed = 1);

struct FlatnessCurve {
  std::vector<double> values;  // nonincreasing, nonnegative, length C
  bool per_class = true;
  bool normalized = true;
  int classes_used = 0;
  std::vector<std::size_t> samples_per_class;  // 0 for skipped classes
};

/// Per class: center that class's logits, take singular values, optionally
/// divide by the largest, then average the curves over classes. Pooled:
/// one decomposition of all centered logits. Classes with fewer than two
/// samples are skipped.
FlatnessCurve flatness_curve(const MatrixXd& logits, std::span<const int> labels, int num_classes,
                             bool per_class = true, bool normalize = true);

FlatnessCurve flatness_curve(const MlpModel& model, const Dataset& data,
                             std::span<const std::size_t> eval_ids, bool per_class = true,
                             bool normalize = true);

struct Observation {
  std::vector<std::string> key;
  double value = 0.0;
};

struct AggregateRow {
  std::vector<std::string> key;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
  std::size_t count = 0;
};

/// Groups by key; rows come out sorted by key, comparing numeric
/// components as numbers.
std::vector<AggregateRow> aggregate(std::span<const Observation> observations);

/// Test accuracy in percent, grouped by any of "method", "budget", "seed", "lr".
std::vector<AggregateRow> aggregate_runs(std::span<const RunResult> results,
                                         std::span<const std::string> group_by);

/// "mean_{std}" with `precision` decimals, e.g. "36.38_{0.60}".
std::string format_cell(double mean, double std, int precision = 2);

}  // namespace ckd
