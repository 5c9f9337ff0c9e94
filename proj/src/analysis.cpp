#include "ckd/analysis.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>

namespace ckd {

namespace {

MatrixXd model_logits(const MlpModel& model, const Dataset& data, std::span<const std::size_t> ids) {
  if (ids.empty()) throw InvalidInput("no evaluation samples");
  if (model.input_dim() != data.dim()) throw InvalidInput("model input does not match the dataset");
  return model.logits(data.gather(ids));
}

std::vector<double> centered_singular_values(const MatrixXd& cols) {
  MatrixXd centered = cols;
  const VectorXd mean = centroid(cols);
  for (Eigen::Index j = 0; j < centered.cols(); ++j) centered.col(j) -= mean;
  const VectorXd s = singular_values(centered.transpose());
  return {s.data(), s.data() + s.size()};
}

void normalize_curve(std::vector<double>& curve) {
  if (curve.empty() || curve.front() <= 0.0) return;
  const double top = curve.front();
  for (double& v : curve) v /= top;
}

std::optional<double> as_number(const std::string& s) {
  double v;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

bool key_less(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    if (a[i] == b[i]) continue;
    const auto x = as_number(a[i]), y = as_number(b[i]);
    if (x && y && *x != *y) return *x < *y;
    return a[i] < b[i];
  }
  return a.size() < b.size();
}

}  // namespace

CorrelationReport correlation_gap(const MatrixXd& student_logits, const MatrixXd& teacher_logits,
                                  std::span<const std::size_t> ids, std::size_t m,
                                  std::uint64_t seed) {
  if (m < 2) throw InvalidInput("correlation_gap: m must be at least 2");
  if (student_logits.rows() != teacher_logits.rows() || student_logits.cols() != teacher_logits.cols())
    throw InvalidInput("correlation_gap: logit matrices differ in shape");
  if (static_cast<std::size_t>(student_logits.cols()) != ids.size())
    throw InvalidInput("correlation_gap: one id per logit column required");
  if (m > ids.size())
    throw InvalidInput("correlation_gap: m exceeds the number of evaluation samples");

  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  RngStream(seed).shuffle(order);
  order.resize(m);

  const Eigen::Index classes = student_logits.rows();
  MatrixXd s(m, classes), t(m, classes);
  CorrelationReport report;
  report.m = m;
  for (std::size_t r = 0; r < m; ++r) {
    s.row(r) = student_logits.col(order[r]).transpose();
    t.row(r) = teacher_logits.col(order[r]).transpose();
    report.sample_ids.push_back(ids[order[r]]);
  }
  report.student_corr = correlation_matrix(s);
  report.teacher_corr = correlation_matrix(t);
  double total = 0.0;
  for (Eigen::Index j = 0; j < classes; ++j)
    for (Eigen::Index i = 0; i < classes; ++i)
      total += std::abs(report.student_corr(i, j) - report.teacher_corr(i, j));
  report.metric = total / double(classes * classes);
  return report;
}

CorrelationReport correlation_gap(const MlpModel& student, const MlpModel& teacher,
                                  const Dataset& data, std::span<const std::size_t> eval_ids,
                                  std::size_t m, std::uint64_t seed) {
  if (student.num_classes() != teacher.num_classes())
    throw InvalidInput("correlation_gap: models disagree on the class count");
  return correlation_gap(model_logits(student, data, eval_ids), model_logits(teacher, data, eval_ids),
                         eval_ids, m, seed);
}

FlatnessCurve flatness_curve(const MatrixXd& logits, std::span<const int> labels, int num_classes,
                             bool per_class, bool normalize) {
  if (static_cast<std::size_t>(logits.cols()) != labels.size())
    throw InvalidInput("flatness_curve: one label per logit column required");
  FlatnessCurve out;
  out.per_class = per_class;
  out.normalized = normalize;
  const std::size_t width = static_cast<std::size_t>(logits.rows());

  if (!per_class) {
    if (logits.cols() < 2) throw InvalidInput("flatness_curve: need at least 2 samples");
    out.values = centered_singular_values(logits);
    out.values.resize(width, 0.0);
    if (normalize) normalize_curve(out.values);
    out.classes_used = 1;
    out.samples_per_class.push_back(labels.size());
    return out;
  }

  std::vector<std::vector<Eigen::Index>> members(num_classes);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] < 0 || labels[j] >= num_classes) throw InvalidInput("flatness_curve: label out of range");
    members[labels[j]].push_back(static_cast<Eigen::Index>(j));
  }
  out.values.assign(width, 0.0);
  out.samples_per_class.assign(num_classes, 0);
  for (int c = 0; c < num_classes; ++c) {
    if (members[c].size() < 2) {
      if (!members[c].empty()) spdlog::warn("flatness_curve: class {} has fewer than 2 samples, skipped", c);
      continue;
    }
    MatrixXd cols(logits.rows(), static_cast<Eigen::Index>(members[c].size()));
    for (std::size_t j = 0; j < members[c].size(); ++j) cols.col(j) = logits.col(members[c][j]);
    std::vector<double> curve = centered_singular_values(cols);
    curve.resize(width, 0.0);
    if (normalize) normalize_curve(curve);
    for (std::size_t i = 0; i < width; ++i) out.values[i] += curve[i];
    out.samples_per_class[c] = members[c].size();
    ++out.classes_used;
  }
  if (out.classes_used == 0) throw InvalidInput("flatness_curve: no class has 2 or more samples");
  for (double& v : out.values) v /= double(out.classes_used);
  // Averaging can leave last-bit ties out of order; the curve is defined as sorted.
  for (std::size_t i = 1; i < out.values.size(); ++i)
    out.values[i] = std::min(out.values[i], out.values[i - 1]);
  return out;
}

FlatnessCurve flatness_curve(const MlpModel& model, const Dataset& data,
                             std::span<const std::size_t> eval_ids, bool per_class, bool normalize) {
  const std::vector<int> labels = data.gather_labels(eval_ids);
  return flatness_curve(model_logits(model, data, eval_ids), labels, data.num_classes, per_class,
                        normalize);
}

std::vector<AggregateRow> aggregate(std::span<const Observation> observations) {
  if (observations.empty()) throw InvalidInput("aggregate: no observations");
  std::map<std::vector<std::string>, std::vector<double>> groups;
  for (const auto& o : observations) groups[o.key].push_back(o.value);
  std::vector<AggregateRow> rows;
  for (const auto& [key, values] : groups) {
    AggregateRow row{key, 0.0, 0.0, values.size()};
    for (double v : values) row.mean += v;
    row.mean /= double(values.size());
    if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - row.mean) * (v - row.mean);
      row.std = std::sqrt(ss / double(values.size() - 1));
    }
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const AggregateRow& a, const AggregateRow& b) { return key_less(a.key, b.key); });
  return rows;
}

std::vector<AggregateRow> aggregate_runs(std::span<const RunResult> results,
                                         std::span<const std::string> group_by) {
  std::vector<Observation> obs;
  for (const RunResult& r : results) {
    Observation o;
    for (const std::string& k : group_by) {
      if (k == "method") o.key.push_back(to_string(r.method));
      else if (k == "budget") o.key.push_back(std::to_string(r.budget));
      else if (k == "seed") o.key.push_back(std::to_string(r.seed));
      else if (k == "lr") o.key.push_back(fmt::format("{}", r.lr));
      else throw InvalidInput("aggregate_runs: unknown group key '" + k + "'");
    }
    o.value = 100.0 * r.test_acc;
    obs.push_back(std::move(o));
  }
  return aggregate(obs);
}

std::string format_cell(double mean, double std, int precision) {
  return fmt::format("{:.{}f}_{{{:.{}f}}}", mean, precision, std, precision);
}

}  // namespace ckd
