#pragma once

// Experiment orchestration behind the command-line tool: datasets, teacher
// training, distillation grids, analyses, run logs and manifests.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ckd/analysis.hpp"
#include "ckd/dataset.hpp"
#include "ckd/training.hpp"

namespace ckd {

namespace fs = std::filesystem;

struct DataSpec {
  fs::path csv;  // empty: generate from `mixture`
  MixtureParams mixture;
  std::uint64_t split_seed = 1;
};

Dataset load_dataset(const DataSpec& spec);

struct ExperimentSpec {
  DataSpec data;
  fs::path teacher_checkpoint;
  fs::path teacher_cache;  // lookup-table teacher; replaces the checkpoint when set
  bool allow_teacher_mismatch = false;
  bool white_box = false;
  TrainConfig train;  // method and budget are overwritten per grid cell
  std::vector<Method> methods{Method::ce_only, Method::kd, Method::ckd};
  std::vector<std::size_t> budgets{100, 200, 400, 800};
  std::vector<int> k_values{2, 3, 4, 6};
  std::vector<ComparisonMode> comparisons{ComparisonMode::difference};
  fs::path out_dir = "out";
};

nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const ExperimentSpec& spec);

/// One finished run as it appears in the report: enough to rebuild every
/// table without the models.
struct RunSummary {
  std::string label;  // method, plus the comparison or k when those vary
  std::size_t budget = 0;
  int k = 0;
  std::uint64_t seed = 0;
  double lr = 0.0;
  double best_val_acc = 0.0;
  double test_acc = 0.0;
  std::size_t teacher_calls = 0;
  std::size_t total_steps = 0;
};

/// Append-only JSONL log, one object per line.
class RunLog {
 public:
  explicit RunLog(const fs::path& path);
  void write(nlohmann::json record);

 private:
  fs::path path_;
};

/// Files produced under the output directory with their SHA-256.
void write_manifest(const fs::path& out_dir, const std::string& command,
                    const nlohmann::json& config);

void cmd_gen_data(const MixtureParams& params, const fs::path& out_dir);

TeacherTrainResult cmd_train_teacher(const DataSpec& data, const TeacherTrainConfig& cfg,
                                     const fs::path& out_dir, bool emit_cache, bool with_hints);

/// Every (label, n) cell of the grid trained through train_sweep; the
/// selected-lr runs go into the run log, results.tsv and report.md.
std::vector<RunSummary> cmd_distill(const ExperimentSpec& spec);

/// CKD at every k in spec.k_values; emits ablate_k.tsv (n, k, mean, std, count).
std::vector<RunSummary> cmd_ablate_k(const ExperimentSpec& spec);

enum class AnalysisMode { corr, flatness };

struct AnalyzeSpec {
  DataSpec data;
  fs::path teacher_checkpoint;
  std::vector<fs::path> checkpoints;
  std::vector<std::string> labels;  // defaults to file stems
  AnalysisMode mode = AnalysisMode::corr;
  std::size_t m = 100;
  std::uint64_t seed = 1;
  bool per_class = true;
  bool normalize = true;
  fs::path out_dir = "out";
};

void cmd_analyze(const AnalyzeSpec& spec);

/// Rebuilds report.md and results.tsv from the final records in runs.jsonl.
std::vector<RunSummary> cmd_report(const fs::path& out_dir);

/// Markdown table of mean_{std} test accuracy; rows are labels, columns budgets.
std::string render_report(const std::vector<RunSummary>& runs);

}  // namespace ckd
