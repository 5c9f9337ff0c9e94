// fti_distill: comparative distillation under a teacher-call budget.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

#include "ckd/experiment.hpp"

namespace {

using namespace ckd;

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("fti_distill");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");
  const char* level = std::getenv("FTI_DISTILL_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
}

void add_data_options(CLI::App* cmd, DataSpec& d) {
  cmd->add_option("--data", d.csv, "CSV dataset (label,split,f0,...); omit to generate a mixture");
  cmd->add_option("--split-seed", d.split_seed, "Seed for CSVs without a split column");
  cmd->add_option("--classes", d.mixture.classes, "Mixture classes")->check(CLI::Range(2, 1 << 16));
  cmd->add_option("--dim", d.mixture.dim, "Mixture feature dimension")->check(CLI::PositiveNumber);
  cmd->add_option("--per-class", d.mixture.per_class, "Train+val samples per class");
  cmd->add_option("--test-per-class", d.mixture.test_per_class, "Test samples per class");
  cmd->add_option("--noise", d.mixture.noise, "Mixture standard deviation")->check(CLI::NonNegativeNumber);
  cmd->add_option("--separation", d.mixture.separation, "Distance scale of class means");
  cmd->add_option("--data-seed", d.mixture.seed, "Mixture seed");
}

struct GridOptions {
  std::vector<std::string> methods{"ce_only", "kd", "ckd"};
  std::vector<std::string> comparisons{"difference"};
  std::string patience_unit = "epochs";
  std::string kl_direction = "student_first";
};

void add_grid_options(CLI::App* cmd, ExperimentSpec& s, GridOptions& g, bool with_methods) {
  add_data_options(cmd, s.data);
  TrainConfig& t = s.train;
  cmd->add_option("--teacher", s.teacher_checkpoint, "Teacher checkpoint (.ckdm)");
  cmd->add_option("--teacher-cache", s.teacher_cache, "Teacher lookup cache (.ckdc)");
  cmd->add_flag("--allow-teacher-mismatch", s.allow_teacher_mismatch,
                "Accept a cache whose fingerprint differs from the teacher");
  if (with_methods)
    cmd->add_option("--method", g.methods, "Methods: ce_only kd ckd rkd dist mixup_fixed fitnets fitnets_ckd")
        ->delimiter(',');
  cmd->add_option("--budget", s.budgets, "Teacher-call budgets n")->delimiter(',');
  cmd->add_option("--k", t.ckd.k, "Samples per comparison group")->check(CLI::Range(2, 64));
  cmd->add_option("--comparison", g.comparisons, "difference, addition, interpolation")->delimiter(',');
  cmd->add_option("--beta", t.ckd.beta, "Weight of the comparative loss")->check(CLI::NonNegativeNumber);
  cmd->add_option("--hint-weight", t.hint_weight, "Weight of the FitNets hint loss")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--temperature", t.ckd.temperature, "Comparative loss temperature")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--kl-direction", g.kl_direction, "student_first or teacher_first");
  cmd->add_option("--kd-temperature", t.kd.temperature, "KD, DIST and mixup temperature")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--white-box", s.white_box, "Teacher hints are available");
  cmd->add_option("--seeds", t.seeds, "Run seeds")->delimiter(',');
  cmd->add_option("--lrs", t.lr_grid, "Learning-rate grid")->delimiter(',');
  cmd->add_option("--patience", t.patience, "Evaluations without improvement before a decay");
  cmd->add_option("--patience-unit", g.patience_unit, "epochs or steps");
  cmd->add_option("--max-decays", t.max_decays, "Learning-rate decays before stopping");
  cmd->add_option("--max-epochs", t.max_epochs, "Hard epoch cap (0: none)");
  cmd->add_option("--val-size", t.val_size, "Validation samples (0: n/4)");
  cmd->add_option("--student-hidden", t.student_hidden, "Student hidden widths")->delimiter(',');
  cmd->add_option("--cap", t.group_cap, "Distinct groups per sampler cycle")->check(CLI::PositiveNumber);
  cmd->add_option("--jobs", t.jobs, "Parallel runs")->check(CLI::PositiveNumber);
  cmd->add_option("--out", s.out_dir, "Output directory");
}

void resolve_grid(ExperimentSpec& s, const GridOptions& g) {
  s.methods.clear();
  for (const auto& m : g.methods) s.methods.push_back(parse_method(m));
  s.comparisons.clear();
  for (const auto& c : g.comparisons) s.comparisons.push_back(parse_comparison_mode(c));
  if (g.patience_unit == "epochs") s.train.patience_unit = PatienceUnit::epochs;
  else if (g.patience_unit == "steps") s.train.patience_unit = PatienceUnit::steps;
  else throw InvalidInput("patience unit must be 'epochs' or 'steps'");
  if (g.kl_direction == "student_first") s.train.ckd.kl_direction = KlDirection::student_first;
  else if (g.kl_direction == "teacher_first") s.train.ckd.kl_direction = KlDirection::teacher_first;
  else throw InvalidInput("kl direction must be 'student_first' or 'teacher_first'");
  s.train.ckd.comparison = ComparisonSpec::of(s.comparisons.front());
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Comparative knowledge distillation under a teacher-call budget"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  app.set_config("--config", "", "INI experiment spec; [section] names match subcommands");

  MixtureParams gen;
  fs::path gen_out = "out";
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a Gaussian-mixture dataset");
  gen_cmd->add_option("--classes", gen.classes, "Classes")->check(CLI::Range(2, 1 << 16));
  gen_cmd->add_option("--dim", gen.dim, "Feature dimension")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--per-class", gen.per_class, "Train+val samples per class");
  gen_cmd->add_option("--test-per-class", gen.test_per_class, "Test samples per class");
  gen_cmd->add_option("--noise", gen.noise, "Standard deviation")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--separation", gen.separation, "Distance scale of class means");
  gen_cmd->add_option("--seed", gen.seed, "Seed");
  gen_cmd->add_option("--out", gen_out, "Output directory");

  DataSpec teacher_data;
  TeacherTrainConfig teacher_cfg;
  fs::path teacher_out = "out";
  bool emit_cache = false, cache_hints = false;
  auto* teacher_cmd = app.add_subcommand("train-teacher", "Train the teacher on the full training split");
  add_data_options(teacher_cmd, teacher_data);
  teacher_cmd->add_option("--hidden", teacher_cfg.hidden, "Hidden widths")->delimiter(',');
  teacher_cmd->add_option("--seed", teacher_cfg.seed, "Seed");
  teacher_cmd->add_option("--lr", teacher_cfg.lr, "Learning rate")->check(CLI::PositiveNumber);
  teacher_cmd->add_option("--patience", teacher_cfg.patience, "Epochs without improvement before a decay");
  teacher_cmd->add_option("--max-epochs", teacher_cfg.max_epochs, "Epoch cap (0: none)");
  teacher_cmd->add_option("--train-size", teacher_cfg.train_size, "Training samples (0: all)");
  teacher_cmd->add_flag("--emit-cache", emit_cache, "Also write a lookup cache over the training split");
  teacher_cmd->add_flag("--white-box", cache_hints, "Store hints in the lookup cache");
  teacher_cmd->add_option("--out", teacher_out, "Output directory");

  ExperimentSpec distill_spec;
  GridOptions distill_grid;
  auto* distill_cmd = app.add_subcommand("distill", "Distill students over methods, budgets and seeds");
  add_grid_options(distill_cmd, distill_spec, distill_grid, true);

  ExperimentSpec ablate_spec;
  GridOptions ablate_grid;
  auto* ablate_cmd = app.add_subcommand("ablate-k", "Comparative distillation across group sizes k");
  add_grid_options(ablate_cmd, ablate_spec, ablate_grid, false);
  ablate_cmd->add_option("--k-values", ablate_spec.k_values, "Group sizes")->delimiter(',');

  AnalyzeSpec analyze;
  std::string analyze_mode = "corr";
  bool pooled = false, raw = false;
  auto* analyze_cmd = app.add_subcommand("analyze", "Correlation and flatness analyses of checkpoints");
  add_data_options(analyze_cmd, analyze.data);
  analyze_cmd->add_option("--teacher", analyze.teacher_checkpoint, "Teacher checkpoint");
  analyze_cmd->add_option("--checkpoints", analyze.checkpoints, "Student checkpoints")
      ->delimiter(',')
      ->required();
  analyze_cmd->add_option("--labels", analyze.labels, "Row labels")->delimiter(',');
  analyze_cmd->add_option("--mode", analyze_mode, "corr or flatness")
      ->check(CLI::IsMember({"corr", "flatness"}));
  analyze_cmd->add_option("--m", analyze.m, "Samples drawn for correlation");
  analyze_cmd->add_option("--seed", analyze.seed, "Sample-draw seed");
  analyze_cmd->add_flag("--pooled", pooled, "One decomposition over all classes");
  analyze_cmd->add_flag("--no-normalize", raw, "Keep raw singular values");
  analyze_cmd->add_option("--out", analyze.out_dir, "Output directory");

  fs::path report_dir = "out";
  auto* report_cmd = app.add_subcommand("report", "Rebuild report.md from a run log");
  report_cmd->add_option("--out", report_dir, "Directory holding runs.jsonl");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen_cmd) {
      cmd_gen_data(gen, gen_out);
    } else if (*teacher_cmd) {
      cmd_train_teacher(teacher_data, teacher_cfg, teacher_out, emit_cache, cache_hints);
    } else if (*distill_cmd) {
      resolve_grid(distill_spec, distill_grid);
      std::cout << render_report(cmd_distill(distill_spec));
    } else if (*ablate_cmd) {
      resolve_grid(ablate_spec, ablate_grid);
      cmd_ablate_k(ablate_spec);
    } else if (*analyze_cmd) {
      analyze.mode = analyze_mode == "corr" ? AnalysisMode::corr : AnalysisMode::flatness;
      analyze.per_class = !pooled;
      analyze.normalize = !raw;
      cmd_analyze(analyze);
    } else if (*report_cmd) {
      std::cout << render_report(cmd_report(report_dir));
    }
  } catch (const ckd::Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
