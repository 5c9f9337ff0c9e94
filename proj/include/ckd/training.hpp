#pragma once

// The training protocol: budgeted subset selection, per-method loss
// assembly, SGD with early-stopping learning-rate decay, and the learning
// rate sweep.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ckd/dataset.hpp"
#include "ckd/losses.hpp"
#include "ckd/mlp.hpp"
#include "ckd/sampler.hpp"
#include "ckd/teacher_oracle.hpp"

namespace ckd {

enum class Method { ce_only, kd, ckd, rkd, dist, mixup_fixed, fitnets, fitnets_ckd };

std::string to_string(Method method);
Method parse_method(const std::string& text);
bool uses_teacher(Method method);
bool uses_hints(Method method);
bool uses_groups(Method method);

enum class PatienceUnit { epochs, steps };

struct TrainConfig {
  Method method = Method::ckd;
  std::size_t budget = 200;            // n: teacher calls and training samples
  std::vector<int> student_hidden{32};
  int batch_size = 64;
  std::vector<double> lr_grid{0.1, 0.05, 0.025};
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int patience = 50;
  PatienceUnit patience_unit = PatienceUnit::epochs;
  int max_decays = 3;
  double decay_factor = 0.1;
  int max_epochs = 0;                  // 0: no cap beyond the decay schedule
  std::size_t steps_per_epoch = 0;     // 0: equal to budget
  std::size_t val_size = 0;            // 0: budget / 4, at least 1
  std::vector<std::uint64_t> seeds{1, 2, 3};
  CkdConfig ckd;
  KdConfig kd;
  RkdConfig rkd;
  DistConfig dist;
  double ce_weight = 1.0;
  double kd_weight = 1.0;
  double hint_weight = 1.0;
  std::size_t group_cap = 100000;
  int jobs = 1;
};

/// The n training ids and the validation ids a seed selects. Depends only on
/// the seed and sizes, so every method and learning rate sees the same split.
struct SampleSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::uint64_t hash = 0;
};
SampleSplit select_samples(const Dataset& data, std::size_t budget, std::size_t val_size,
                           std::uint64_t seed);

/// Student initialization for a seed; identical for every method.
MlpModel init_student(const std::vector<int>& widths, std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;  // 0 is the untrained model
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  std::size_t steps = 0;  // optimizer steps so far
};

struct DecayEvent {
  int epoch = 0;
  double lr = 0.0;            // after the decay
  double best_val_acc = 0.0;
  double resumed_val_acc = 0.0;  // re-measured on the restored checkpoint
};

struct RunResult {
  Method method = Method::ce_only;
  std::size_t budget = 0;
  std::uint64_t seed = 0;
  double lr = 0.0;
  std::vector<EpochRecord> epochs;
  std::vector<DecayEvent> decays;
  int best_epoch = 0;
  double best_val_acc = 0.0;
  double test_acc = 0.0;
  double test_loss = 0.0;
  std::size_t teacher_calls = 0;  // teacher forward passes charged to this run's oracle
  std::size_t steps_per_epoch = 0;
  std::size_t total_steps = 0;
  std::uint64_t init_hash = 0;
  std::uint64_t split_hash = 0;
  double wall_seconds = 0.0;
  std::vector<ComparisonGroup> group_log;  // first draws, as dataset ids
  MlpModel best_model;
};

using EpochCallback = std::function<void(const RunResult& run, const EpochRecord& record)>;

/// One run at a fixed seed and learning rate. `oracle` may be null only for
/// ce_only. Training ids are queried once up front; the loop itself never
/// calls the teacher.
RunResult train_one(const TrainConfig& cfg, const Dataset& data, TeacherOracle* oracle,
                    std::uint64_t seed, double lr, const EpochCallback& on_epoch = {});

struct SweepResult {
  Method method = Method::ce_only;
  std::size_t budget = 0;
  std::vector<double> lrs;
  std::vector<std::vector<RunResult>> runs;  // [lr][seed]
  std::vector<double> mean_val_acc;          // per lr
  std::size_t best_lr_index = 0;

  double best_lr() const { return lrs[best_lr_index]; }
  const std::vector<RunResult>& best_runs() const { return runs[best_lr_index]; }
};

/// Picks the lr with the highest mean validation accuracy over seeds; ties
/// go to the larger lr.
std::size_t select_lr(const std::vector<double>& lrs, const std::vector<double>& mean_val_acc);

/// Every (lr, seed) pair, up to `cfg.jobs` at a time. One oracle per seed is
/// warmed first and shared read-only by that seed's runs. Oracles are
/// returned through `oracles_out` when given (index = seed position).
SweepResult train_sweep(const TrainConfig& cfg, const Dataset& data, Teacher* teacher,
                        const EpochCallback& on_epoch = {},
                        std::vector<std::unique_ptr<TeacherOracle>>* oracles_out = nullptr);

struct TeacherTrainConfig {
  std::vector<int> hidden{256, 256};
  std::uint64_t seed = 1;
  double lr = 0.05;
  int batch_size = 64;
  int patience = 10;
  int max_decays = 3;
  int max_epochs = 60;
  std::size_t train_size = 0;  // 0: whole train split
};

struct TeacherTrainResult {
  MlpModel model;
  std::vector<EpochRecord> epochs;
  double best_val_acc = 0.0;
  double test_acc = 0.0;
};

/// Cross-entropy training on the full train split (no budget). An epoch is
/// one pass over the training samples.
TeacherTrainResult train_teacher(const Dataset& data, const TeacherTrainConfig& cfg,
                                 const EpochCallback& on_epoch = {});

/// Top-1 accuracy and mean cross-entropy on the given ids.
struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};
Evaluation evaluate(const MlpModel& model, const Dataset& data, std::span<const std::size_t> ids);

}  // namespace ckd
