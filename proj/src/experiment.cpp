#include "ckd/experiment.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ckd/binary_io.hpp"

namespace ckd {

using nlohmann::json;

namespace {

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
  const std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:03}Z", tm.tm_year + 1900, tm.tm_mon + 1,
                     tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, ms % 1000);
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string safe_name(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  return s;
}

std::string config_hash(const json& j) {
  const std::string text = j.dump();
  return sha256_hex({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

json epoch_json(const EpochRecord& e) {
  return {{"epoch", e.epoch},         {"lr", e.lr},           {"train_loss", e.train_loss},
          {"train_acc", e.train_acc}, {"val_loss", e.val_loss}, {"val_acc", e.val_acc},
          {"steps", e.steps}};
}

std::unique_ptr<Teacher> open_teacher(const ExperimentSpec& spec, const Dataset& data) {
  if (!spec.teacher_cache.empty()) {
    TeacherCache cache = TeacherCache::load(spec.teacher_cache);
    if (!spec.teacher_checkpoint.empty()) {
      const MlpModel model = MlpModel::load(spec.teacher_checkpoint);
      cache.check_compatible(model.num_classes(), cache.hint_dim ? model.hint_dim() : 0,
                             model.fingerprint(), spec.allow_teacher_mismatch);
    }
    if (cache.num_classes != data.num_classes)
      throw CacheCorrupt(fmt::format("teacher cache has {} classes, dataset has {}",
                                     cache.num_classes, data.num_classes));
    return std::make_unique<LookupTeacher>(std::move(cache));
  }
  if (spec.teacher_checkpoint.empty())
    throw InvalidInput("a teacher checkpoint (--teacher) or cache (--teacher-cache) is required");
  MlpModel model = MlpModel::load(spec.teacher_checkpoint);
  if (model.num_classes() != data.num_classes || model.input_dim() != data.dim())
    throw TeacherMismatch("teacher checkpoint does not match the dataset dimensions");
  return std::make_unique<MlpTeacher>(std::move(model));
}

void check_budgets(const ExperimentSpec& spec, const Dataset& data) {
  const std::size_t available = data.indices(Split::train).size();
  if (spec.budgets.empty()) throw InvalidInput("no budgets given");
  for (const std::size_t n : spec.budgets)
    if (n < 1 || n > available)
      throw InvalidInput(fmt::format("budget {} outside [1, {}] (training split size)", n, available));
  if (spec.train.seeds.empty()) throw InvalidInput("no seeds given");
}

struct Cell {
  std::string label;
  TrainConfig cfg;
  std::string comparison;
};

// Runs one grid cell, logs every epoch and every final result, saves the
// selected-lr models and the budget caches, and returns the selected runs.
std::vector<RunSummary> run_cell(const ExperimentSpec& spec, const Cell& cell, const Dataset& data,
                                 Teacher* teacher, RunLog& log) {
  const TrainConfig& cfg = cell.cfg;
  if (uses_hints(cfg.method) && !spec.white_box)
    throw HintUnavailable(to_string(cfg.method) + " needs white-box teacher access (--white-box)");
  spdlog::info("{} n={}: {} lr x {} seeds", cell.label, cfg.budget, cfg.lr_grid.size(), cfg.seeds.size());

  std::map<std::pair<double, std::uint64_t>, std::pair<std::string, std::string>> ids;
  for (const double lr : cfg.lr_grid)
    for (const std::uint64_t seed : cfg.seeds) {
      TrainConfig resolved = cfg;
      json j = to_json(resolved);
      j["lr"] = lr;
      j["seed"] = seed;
      j["label"] = cell.label;
      ids[{lr, seed}] = {fmt::format("{}-n{}-lr{}-s{}", safe_name(cell.label), cfg.budget, lr, seed),
                         config_hash(j)};
    }

  std::vector<std::unique_ptr<TeacherOracle>> oracles;
  const SweepResult sweep = train_sweep(
      cfg, data, uses_teacher(cfg.method) ? teacher : nullptr,
      [&](const RunResult& r, const EpochRecord& e) {
        const auto& [run_id, hash] = ids.at({r.lr, r.seed});
        json rec = epoch_json(e);
        rec["type"] = "epoch";
        rec["timestamp"] = timestamp();
        rec["run_id"] = run_id;
        rec["config_hash"] = hash;
        log.write(std::move(rec));
      },
      &oracles);

  std::vector<RunSummary> selected;
  for (std::size_t li = 0; li < sweep.lrs.size(); ++li) {
    for (const RunResult& r : sweep.runs[li]) {
      const bool chosen = li == sweep.best_lr_index;
      const auto& [run_id, hash] = ids.at({r.lr, r.seed});
      json decays = json::array();
      for (const DecayEvent& d : r.decays)
        decays.push_back({{"epoch", d.epoch}, {"lr", d.lr}, {"best_val_acc", d.best_val_acc},
                          {"resumed_val_acc", d.resumed_val_acc}});
      json rec = {{"type", "final"},
                  {"timestamp", timestamp()},
                  {"run_id", run_id},
                  {"config_hash", hash},
                  {"label", cell.label},
                  {"method", to_string(r.method)},
                  {"comparison", cell.comparison},
                  {"k", cfg.ckd.k},
                  {"budget", r.budget},
                  {"seed", r.seed},
                  {"lr", r.lr},
                  {"selected", chosen},
                  {"best_epoch", r.best_epoch},
                  {"best_val_acc", r.best_val_acc},
                  {"test_acc", r.test_acc},
                  {"test_loss", r.test_loss},
                  {"teacher_calls", r.teacher_calls},
                  {"steps_per_epoch", r.steps_per_epoch},
                  {"total_steps", r.total_steps},
                  {"epochs", r.epochs.size() - 1},
                  {"decays", decays},
                  {"init_hash", hex64(r.init_hash)},
                  {"split_hash", hex64(r.split_hash)},
                  {"wall_seconds", r.wall_seconds}};
      if (!r.group_log.empty()) {
        json groups = json::array();
        for (const ComparisonGroup& g : r.group_log) groups.push_back({g.a, g.b});
        rec["groups"] = std::move(groups);
      }
      log.write(std::move(rec));
      if (!chosen) continue;
      selected.push_back({cell.label, r.budget, cfg.ckd.k, r.seed, r.lr, r.best_val_acc, r.test_acc,
                          r.teacher_calls, r.total_steps});
      ensure_dir(spec.out_dir / "models");
      r.best_model.save(spec.out_dir / "models" /
                        fmt::format("{}_n{}_s{}.ckdm", safe_name(cell.label), r.budget, r.seed));
    }
  }

  for (std::size_t s = 0; s < oracles.size(); ++s) {
    if (!oracles[s] || oracles[s]->cache().entries.empty()) continue;
    ensure_dir(spec.out_dir / "caches");
    const fs::path path = spec.out_dir / "caches" /
                          fmt::format("n{}_s{}{}.ckdc", cfg.budget, cfg.seeds[s],
                                      oracles[s]->white_box() ? "_wb" : "");
    if (!fs::exists(path)) oracles[s]->persist(path);
  }
  return selected;
}

std::string results_tsv(std::vector<RunSummary> runs) {
  std::sort(runs.begin(), runs.end(), [](const RunSummary& a, const RunSummary& b) {
    return std::tie(a.label, a.budget, a.seed) < std::tie(b.label, b.budget, b.seed);
  });
  std::string out = "label\tbudget\tk\tseed\tlr\tbest_val_acc\ttest_acc\tteacher_calls\ttotal_steps\n";
  for (const RunSummary& r : runs)
    out += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n", r.label, r.budget, r.k, r.seed, r.lr,
                       r.best_val_acc, r.test_acc, r.teacher_calls, r.total_steps);
  return out;
}

void write_report_files(const fs::path& out_dir, const std::vector<RunSummary>& runs) {
  write_text(out_dir / "report.md", render_report(runs));
  write_text(out_dir / "results.tsv", results_tsv(runs));
}

std::vector<RunSummary> read_selected_runs(const fs::path& log_path) {
  std::ifstream in(log_path);
  if (!in) throw IoError("cannot read " + log_path.string());
  std::map<std::string, RunSummary> latest;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw InvalidInput(fmt::format("{}:{}: {}", log_path.string(), line_no, e.what()));
    }
    if (j.value("type", "") != "final") continue;
    const std::string id = j.at("run_id");
    if (!j.at("selected").get<bool>()) {
      latest.erase(id);
      continue;
    }
    latest[id] = {j.at("label"),         j.at("budget"),        j.at("k"),
                  j.at("seed"),          j.at("lr"),            j.at("best_val_acc"),
                  j.at("test_acc"),      j.at("teacher_calls"), j.at("total_steps")};
  }
  std::vector<RunSummary> runs;
  for (auto& [id, r] : latest) runs.push_back(std::move(r));
  return runs;
}

std::vector<Cell> distill_cells(const ExperimentSpec& spec, std::size_t n) {
  std::vector<Cell> cells;
  for (const Method m : spec.methods) {
    if (!uses_groups(m)) {
      Cell c{to_string(m), spec.train, ""};
      c.cfg.method = m;
      c.cfg.budget = n;
      cells.push_back(std::move(c));
      continue;
    }
    for (const ComparisonMode mode : spec.comparisons) {
      Cell c{to_string(m), spec.train, to_string(mode)};
      if (spec.comparisons.size() > 1) c.label += "/" + to_string(mode);
      c.cfg.method = m;
      c.cfg.budget = n;
      c.cfg.ckd.comparison = ComparisonSpec::of(mode);
      cells.push_back(std::move(c));
    }
  }
  return cells;
}

}  // namespace

Dataset load_dataset(const DataSpec& spec) {
  if (!spec.csv.empty()) {
    if (!fs::exists(spec.csv)) throw IoError("dataset not found: " + spec.csv.string());
    return read_csv(spec.csv, spec.split_seed);
  }
  return generate_gaussian_mixture(spec.mixture);
}

json to_json(const TrainConfig& c) {
  return {{"method", to_string(c.method)},
          {"budget", c.budget},
          {"student_hidden", c.student_hidden},
          {"batch_size", c.batch_size},
          {"lr_grid", c.lr_grid},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"patience", c.patience},
          {"patience_unit", c.patience_unit == PatienceUnit::epochs ? "epochs" : "steps"},
          {"max_decays", c.max_decays},
          {"decay_factor", c.decay_factor},
          {"max_epochs", c.max_epochs},
          {"steps_per_epoch", c.steps_per_epoch},
          {"val_size", c.val_size},
          {"seeds", c.seeds},
          {"ckd",
           {{"k", c.ckd.k},
            {"comparison", to_string(c.ckd.comparison.mode)},
            {"lambda1", c.ckd.comparison.lambda1},
            {"lambda2", c.ckd.comparison.lambda2},
            {"beta", c.ckd.beta},
            {"kl_direction", c.ckd.kl_direction == KlDirection::student_first ? "student_first"
                                                                              : "teacher_first"},
            {"temperature", c.ckd.temperature}}},
          {"kd", {{"temperature", c.kd.temperature}, {"scale_by_t2", c.kd.scale_by_t2}}},
          {"rkd", {{"w_dist", c.rkd.w_dist}, {"w_angle", c.rkd.w_angle}, {"delta", c.rkd.delta}}},
          {"dist", {{"w_inter", c.dist.w_inter}, {"w_intra", c.dist.w_intra}}},
          {"ce_weight", c.ce_weight},
          {"kd_weight", c.kd_weight},
          {"hint_weight", c.hint_weight},
          {"group_cap", c.group_cap}};
}

json to_json(const ExperimentSpec& s) {
  json methods = json::array(), comparisons = json::array();
  for (Method m : s.methods) methods.push_back(to_string(m));
  for (ComparisonMode c : s.comparisons) comparisons.push_back(to_string(c));
  const MixtureParams& mp = s.data.mixture;
  return {{"data",
           {{"csv", s.data.csv.string()},
            {"split_seed", s.data.split_seed},
            {"classes", mp.classes},
            {"dim", mp.dim},
            {"per_class", mp.per_class},
            {"test_per_class", mp.test_per_class},
            {"noise", mp.noise},
            {"separation", mp.separation},
            {"seed", mp.seed}}},
          {"teacher_checkpoint", s.teacher_checkpoint.string()},
          {"teacher_cache", s.teacher_cache.string()},
          {"allow_teacher_mismatch", s.allow_teacher_mismatch},
          {"white_box", s.white_box},
          {"train", to_json(s.train)},
          {"methods", methods},
          {"budgets", s.budgets},
          {"k_values", s.k_values},
          {"comparisons", comparisons}};
}

RunLog::RunLog(const fs::path& path) : path_(path) {
  std::ofstream touch(path_, std::ios::app);
  if (!touch) throw IoError("cannot open run log " + path_.string());
}

void RunLog::write(json record) {
  std::ofstream out(path_, std::ios::app);
  out << record.dump() << '\n';
  if (!out) throw IoError("cannot append to run log " + path_.string());
}

void write_manifest(const fs::path& out_dir, const std::string& command, const json& config) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(out_dir))
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json")
      files.push_back(fs::relative(entry.path(), out_dir));
  std::sort(files.begin(), files.end());
  json artifacts = json::array();
  for (const fs::path& f : files)
    artifacts.push_back({{"path", f.generic_string()},
                         {"sha256", sha256_file(out_dir / f)},
                         {"bytes", fs::file_size(out_dir / f)}});
  const json manifest = {{"command", command}, {"config", config}, {"artifacts", artifacts}};
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

void cmd_gen_data(const MixtureParams& params, const fs::path& out_dir) {
  if (params.classes < 2) throw InvalidInput("classes must be at least 2");
  const Dataset data = generate_gaussian_mixture(params);
  ensure_dir(out_dir);
  write_csv(data, out_dir / "data.csv");
  write_manifest(out_dir, "gen-data",
                 {{"classes", params.classes},
                  {"dim", params.dim},
                  {"per_class", params.per_class},
                  {"test_per_class", params.test_per_class},
                  {"noise", params.noise},
                  {"separation", params.separation},
                  {"seed", params.seed}});
}

TeacherTrainResult cmd_train_teacher(const DataSpec& data_spec, const TeacherTrainConfig& cfg,
                                     const fs::path& out_dir, bool emit_cache, bool with_hints) {
  const Dataset data = load_dataset(data_spec);
  ensure_dir(out_dir);
  RunLog log(out_dir / "teacher_log.jsonl");
  TeacherTrainResult result = train_teacher(data, cfg, [&](const RunResult&, const EpochRecord& e) {
    json rec = epoch_json(e);
    rec["type"] = "epoch";
    rec["timestamp"] = timestamp();
    rec["run_id"] = "teacher";
    log.write(std::move(rec));
    spdlog::debug("teacher epoch {}: val {:.4f}", e.epoch, e.val_acc);
  });
  result.model.save(out_dir / "teacher.ckdm");

  const json summary = {{"widths", result.model.widths()},
                        {"seed", cfg.seed},
                        {"epochs", result.epochs.size() - 1},
                        {"best_val_acc", result.best_val_acc},
                        {"test_acc", result.test_acc},
                        {"fingerprint", hex64(result.model.fingerprint())}};
  write_text(out_dir / "teacher.json", summary.dump(2) + "\n");

  if (emit_cache) {
    // A lookup table over the whole training split, usable as a teacher
    // without the checkpoint. Budget accounting happens in the oracle that
    // wraps it.
    MlpTeacher teacher(result.model);
    TeacherCache cache;
    cache.num_classes = teacher.num_classes();
    cache.hint_dim = with_hints ? teacher.hint_dim() : 0;
    cache.fingerprint = teacher.fingerprint();
    for (const std::size_t id : data.indices(Split::train)) {
      TeacherOutput out = teacher.forward(id, data.features.col(id), with_hints);
      cache.entries.emplace(id, CacheEntry{std::move(out.logits), std::move(out.hint)});
    }
    cache.persist(out_dir / "teacher_cache.ckdc");
  }

  json config = {{"hidden", cfg.hidden},         {"seed", cfg.seed},
                 {"lr", cfg.lr},                 {"batch_size", cfg.batch_size},
                 {"patience", cfg.patience},     {"max_decays", cfg.max_decays},
                 {"max_epochs", cfg.max_epochs}, {"train_size", cfg.train_size},
                 {"data", data_spec.csv.string()}};
  write_manifest(out_dir, "train-teacher", config);
  spdlog::info("teacher: test accuracy {:.4f} after {} epochs", result.test_acc, result.epochs.size() - 1);
  return result;
}

std::vector<RunSummary> cmd_distill(const ExperimentSpec& spec) {
  const Dataset data = load_dataset(spec.data);
  check_budgets(spec, data);
  if (spec.methods.empty()) throw InvalidInput("no methods given");
  if (spec.comparisons.empty()) throw InvalidInput("no comparison modes given");
  bool needs_teacher = false;
  for (Method m : spec.methods) needs_teacher |= uses_teacher(m);
  const std::unique_ptr<Teacher> teacher = needs_teacher ? open_teacher(spec, data) : nullptr;

  ensure_dir(spec.out_dir);
  RunLog log(spec.out_dir / "runs.jsonl");
  std::vector<RunSummary> all;
  for (const std::size_t n : spec.budgets)
    for (const Cell& cell : distill_cells(spec, n)) {
      auto runs = run_cell(spec, cell, data, teacher.get(), log);
      all.insert(all.end(), runs.begin(), runs.end());
    }
  write_report_files(spec.out_dir, all);
  write_manifest(spec.out_dir, "distill", to_json(spec));
  return all;
}

std::vector<RunSummary> cmd_ablate_k(const ExperimentSpec& spec) {
  const Dataset data = load_dataset(spec.data);
  check_budgets(spec, data);
  if (spec.k_values.empty()) throw InvalidInput("no k values given");
  for (int k : spec.k_values)
    if (k < 2) throw InvalidInput("k values must be at least 2");
  const std::unique_ptr<Teacher> teacher = open_teacher(spec, data);

  ensure_dir(spec.out_dir);
  RunLog log(spec.out_dir / "runs.jsonl");
  std::vector<RunSummary> all;
  std::vector<Observation> points;
  for (const std::size_t n : spec.budgets) {
    for (const int k : spec.k_values) {
      if (static_cast<std::size_t>(k) > n) {
        spdlog::warn("skipping k={} at n={}: not enough samples for one group", k, n);
        continue;
      }
      Cell cell{fmt::format("ckd/k={}", k), spec.train, to_string(spec.comparisons.front())};
      cell.cfg.method = Method::ckd;
      cell.cfg.budget = n;
      cell.cfg.ckd.k = k;
      cell.cfg.ckd.comparison = ComparisonSpec::of(spec.comparisons.front());
      for (const RunSummary& r : run_cell(spec, cell, data, teacher.get(), log)) {
        points.push_back({{std::to_string(n), std::to_string(k)}, 100.0 * r.test_acc});
        all.push_back(r);
      }
    }
  }
  std::string curve = "budget\tk\tmean\tstd\tcount\n";
  if (!points.empty())
    for (const AggregateRow& row : aggregate(points))
      curve += fmt::format("{}\t{}\t{}\t{}\t{}\n", row.key[0], row.key[1], row.mean, row.std, row.count);
  write_text(spec.out_dir / "ablate_k.tsv", curve);
  write_report_files(spec.out_dir, all);
  write_manifest(spec.out_dir, "ablate-k", to_json(spec));
  return all;
}

void cmd_analyze(const AnalyzeSpec& spec) {
  if (spec.checkpoints.empty()) throw InvalidInput("no checkpoints to analyze");
  if (!spec.labels.empty() && spec.labels.size() != spec.checkpoints.size())
    throw InvalidInput("one label per checkpoint required");
  const Dataset data = load_dataset(spec.data);
  const std::vector<std::size_t> eval_ids = data.indices(Split::test);
  ensure_dir(spec.out_dir);

  auto load_checked = [&](const fs::path& p) {
    MlpModel m = MlpModel::load(p);
    if (m.num_classes() != data.num_classes || m.input_dim() != data.dim())
      throw InvalidInput(p.string() + ": model does not match the dataset dimensions");
    return m;
  };

  std::vector<std::string> labels = spec.labels;
  if (labels.empty())
    for (const fs::path& p : spec.checkpoints) labels.push_back(p.stem().string());

  json config = {{"mode", spec.mode == AnalysisMode::corr ? "corr" : "flatness"},
                 {"m", spec.m},
                 {"seed", spec.seed},
                 {"per_class", spec.per_class},
                 {"normalize", spec.normalize},
                 {"labels", labels}};

  if (spec.mode == AnalysisMode::corr) {
    if (spec.teacher_checkpoint.empty()) throw InvalidInput("correlation analysis needs --teacher");
    const MlpModel teacher = load_checked(spec.teacher_checkpoint);
    std::string tsv = "label\tmetric\tm\n";
    std::string md = "| method | corr. diff. |\n|---|---|\n";
    for (std::size_t i = 0; i < spec.checkpoints.size(); ++i) {
      const MlpModel student = load_checked(spec.checkpoints[i]);
      const CorrelationReport r = correlation_gap(student, teacher, data, eval_ids, spec.m, spec.seed);
      tsv += fmt::format("{}\t{}\t{}\n", labels[i], r.metric, r.m);
      md += fmt::format("| {} | {:.4f} |\n", labels[i], r.metric);
    }
    write_text(spec.out_dir / "analysis_corr.tsv", tsv);
    write_text(spec.out_dir / "analysis_corr.md", md);
  } else {
    std::string tsv = "label\tclasses_used\tarea\tvalues\n";
    for (std::size_t i = 0; i < spec.checkpoints.size(); ++i) {
      const MlpModel model = load_checked(spec.checkpoints[i]);
      const FlatnessCurve c = flatness_curve(model, data, eval_ids, spec.per_class, spec.normalize);
      std::string lines, joined;
      double area = 0.0;
      for (const double v : c.values) {
        lines += fmt::format("{}\n", v);
        joined += fmt::format("{}{}", joined.empty() ? "" : ",", v);
        area += v;
      }
      write_text(spec.out_dir / fmt::format("flatness_{}.txt", safe_name(labels[i])), lines);
      tsv += fmt::format("{}\t{}\t{}\t{}\n", labels[i], c.classes_used, area, joined);
    }
    write_text(spec.out_dir / "analysis_flatness.tsv", tsv);
  }
  write_manifest(spec.out_dir, "analyze", config);
}

std::vector<RunSummary> cmd_report(const fs::path& out_dir) {
  std::vector<RunSummary> runs = read_selected_runs(out_dir / "runs.jsonl");
  if (runs.empty()) throw InvalidInput("no selected runs in " + (out_dir / "runs.jsonl").string());
  write_report_files(out_dir, runs);
  write_manifest(out_dir, "report", json::object());
  return runs;
}

std::string render_report(const std::vector<RunSummary>& runs) {
  if (runs.empty()) throw InvalidInput("render_report: no runs");
  std::vector<Observation> acc, lr;
  std::set<std::size_t> budgets;
  for (const RunSummary& r : runs) {
    acc.push_back({{r.label, std::to_string(r.budget)}, 100.0 * r.test_acc});
    lr.push_back({{r.label, std::to_string(r.budget)}, r.lr});
    budgets.insert(r.budget);
  }
  const auto acc_rows = aggregate(acc);
  const auto lr_rows = aggregate(lr);

  std::map<std::string, std::map<std::string, std::string>> cells, lr_cells;
  std::vector<std::string> labels;
  for (const AggregateRow& row : acc_rows) {
    if (cells.find(row.key[0]) == cells.end()) labels.push_back(row.key[0]);
    cells[row.key[0]][row.key[1]] = format_cell(row.mean, row.std);
  }
  for (const AggregateRow& row : lr_rows) lr_cells[row.key[0]][row.key[1]] = fmt::format("{}", row.mean);

  auto table = [&](const std::string& title, auto& grid) {
    std::string out = "## " + title + "\n\n| method |";
    for (auto n : budgets) out += fmt::format(" n={} |", n);
    out += "\n|---|";
    for (std::size_t i = 0; i < budgets.size(); ++i) out += "---|";
    out += "\n";
    for (const std::string& label : labels) {
      out += "| " + label + " |";
      for (auto n : budgets) {
        const auto& row = grid[label];
        const auto it = row.find(std::to_string(n));
        out += " " + (it == row.end() ? std::string("-") : it->second) + " |";
      }
      out += "\n";
    }
    return out;
  };
  return table("Test top-1 accuracy (%), mean_{std} over seeds", cells) + "\n" +
         table("Selected learning rate", lr_cells);
}

}  // namespace ckd
