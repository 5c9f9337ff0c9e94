#include <gtest/gtest.h>

#include "ckd/training.hpp"
#include "oracles.hpp"

using namespace ckd;

namespace {

const Dataset& small_data() {
  static const Dataset data = generate_gaussian_mixture({5, 8, 60, 20, 1.0, 3.0, 4});
  return data;
}

TrainConfig small_config(Method method, std::size_t n = 24) {
  TrainConfig cfg;
  cfg.method = method;
  cfg.budget = n;
  cfg.student_hidden = {12};
  cfg.batch_size = 16;
  cfg.lr_grid = {0.05};
  cfg.seeds = {1};
  cfg.patience = 3;
  cfg.max_epochs = 4;
  cfg.ckd.k = 3;
  return cfg;
}

MlpTeacher small_teacher() {
  RngStream rng(99);
  return MlpTeacher(MlpModel({8, 16, 5}, rng));
}

double flat_loss(const MlpModel& m, const MatrixXd& x, const std::vector<int>& y) {
  return ce_loss(m.logits(x), y).value;
}

}  // namespace

TEST(Sgd, WorkedSteps) {
  MatrixXd p = MatrixXd::Ones(1, 1), v = MatrixXd::Zero(1, 1);
  sgd_update(p, MatrixXd::Zero(1, 1), v, {0.1, 0.9, 0.0});
  EXPECT_EQ(p(0, 0), 1.0);
  sgd_update(p, MatrixXd::Ones(1, 1), v, {0.1, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(p(0, 0), 0.9);

  // Two momentum steps by hand: v1 = g1 + wd p0, p1 = p0 - lr v1,
  // v2 = m v1 + g2 + wd p1, p2 = p1 - lr v2.
  const double lr = 0.1, m = 0.9, wd = 5e-4, p0 = 2.0, g1 = 0.5, g2 = -0.25;
  const double v1 = g1 + wd * p0, p1 = p0 - lr * v1;
  const double v2 = m * v1 + g2 + wd * p1, p2 = p1 - lr * v2;
  MatrixXd q = MatrixXd::Constant(1, 1, p0), w = MatrixXd::Zero(1, 1);
  sgd_update(q, MatrixXd::Constant(1, 1, g1), w, {lr, m, wd});
  sgd_update(q, MatrixXd::Constant(1, 1, g2), w, {lr, m, wd});
  EXPECT_DOUBLE_EQ(q(0, 0), p2);
  EXPECT_DOUBLE_EQ(w(0, 0), v2);
}

TEST(Mlp, ParameterCountAndShapes) {
  RngStream rng(1);
  const MlpModel m({32, 32, 20}, rng);
  EXPECT_EQ(m.parameter_count(), 32u * 32 + 32 + 32 * 20 + 20);
  EXPECT_EQ(m.hint_dim(), 32);
  EXPECT_EQ(m.logits(MatrixXd::Zero(32, 3)).cols(), 3);
}

TEST(Mlp, ZeroModelCeGradient) {
  const MlpModel m = MlpModel::zeros({3, 4, 5});
  const MatrixXd x = (MatrixXd(3, 2) << 1, -1, 2, 0.5, 0, 3).finished();
  const std::vector<int> y{1, 4};
  const auto acts = m.forward(x);
  const auto grads = m.backward(acts, ce_loss(acts.logits(), y).grad);
  for (int c = 0; c < 5; ++c) {
    const double want = (2 * 0.2 - (c == 1) - (c == 4)) / 2;
    EXPECT_NEAR(grads[1].bias[c], want, 1e-15);
  }
  EXPECT_EQ(grads[1].weight.norm(), 0.0);  // hidden units are all zero
  EXPECT_EQ(grads[0].weight.norm(), 0.0);  // and nothing flows through a zero layer
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  RngStream rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    MlpModel m({4, 6, 3}, rng);
    MatrixXd x(4, 5);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    std::vector<int> y(5);
    for (auto& v : y) v = static_cast<int>(rng.uniform_index(3));
    MatrixXd hint_target(6, 5);
    for (Eigen::Index i = 0; i < hint_target.size(); ++i) hint_target.data()[i] = rng.normal();

    // loss = CE(logits) + 0.5 |hint - target|^2 / 5 exercises both entry points.
    auto loss = [&](const MlpModel& model) {
      const auto a = model.forward(x);
      return ce_loss(a.logits(), y).value + 0.1 * (a.hint() - hint_target).squaredNorm();
    };
    const auto acts = m.forward(x);
    const MatrixXd gh = 0.2 * (acts.hint() - hint_target);
    const auto grads = m.backward(acts, ce_loss(acts.logits(), y).grad, &gh);
    for (std::size_t l = 0; l < grads.size(); ++l) {
      auto numeric_w = oracle::numeric_gradient(
          [&](const MatrixXd& w) {
            MlpModel copy = m;
            copy.parameters()[l].weight = w;
            return loss(copy);
          },
          m.parameters()[l].weight);
      EXPECT_LT(oracle::relative_error(grads[l].weight, numeric_w), 1e-4);
      auto numeric_b = oracle::numeric_gradient(
          [&](const MatrixXd& b) {
            MlpModel copy = m;
            copy.parameters()[l].bias = b;
            return loss(copy);
          },
          MatrixXd(m.parameters()[l].bias));
      EXPECT_LT(oracle::relative_error(MatrixXd(grads[l].bias), numeric_b), 1e-4);
    }
  }
  (void)flat_loss;
}

TEST(Mlp, NonFiniteInputDiverges) {
  RngStream rng(3);
  const MlpModel m({2, 3, 2}, rng);
  MatrixXd x = MatrixXd::Zero(2, 1);
  x(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(m.forward(x), NumericalDivergence);
}

TEST(Mlp, CheckpointRoundTrip) {
  RngStream rng(4);
  const MlpModel m({5, 7, 3}, rng);
  const auto path = std::filesystem::temp_directory_path() / "ckd_model_rt.ckdm";
  m.save(path);
  const auto back = MlpModel::load(path);
  EXPECT_EQ(back.fingerprint(), m.fingerprint());
  EXPECT_EQ(back.widths(), m.widths());
  for (std::size_t l = 0; l < 2; ++l) EXPECT_EQ(back.parameters()[l].weight, m.parameters()[l].weight);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  EXPECT_THROW(MlpModel::load(path), CacheCorrupt);
  std::filesystem::remove(path);
}

TEST(Training, CopiedTeacherMakesCkdTermVanish) {
  RngStream rng(5);
  const MlpModel teacher({8, 12, 5}, rng);
  const MlpModel student = teacher;
  const auto& data = small_data();
  const std::vector<std::size_t> ids{0, 1, 2};
  const MatrixXd x = data.gather(ids);
  const MatrixXd zs = student.logits(x), zt = teacher.logits(x);
  CkdConfig cfg;
  EXPECT_EQ(ckd_group_loss(zs.leftCols(2), zs.rightCols(1), zt.leftCols(2), zt.rightCols(1), cfg).value, 0.0);
}

TEST(Training, FrozenRunDecaysThreeTimesThenStops) {
  const auto& data = small_data();
  auto cfg = small_config(Method::ce_only, 10);
  cfg.patience = 50;
  cfg.max_epochs = 0;
  const auto run = train_one(cfg, data, nullptr, 1, 0.0);
  ASSERT_EQ(run.decays.size(), 3u);
  EXPECT_EQ(run.decays[0].epoch, 50);
  EXPECT_EQ(run.decays[1].epoch, 100);
  EXPECT_EQ(run.decays[2].epoch, 150);
  EXPECT_EQ(run.epochs.back().epoch, 200);
  EXPECT_EQ(run.epochs.size(), 201u);
  for (const auto& d : run.decays) EXPECT_EQ(d.resumed_val_acc, d.best_val_acc);
  for (const auto& e : run.epochs) EXPECT_EQ(e.val_acc, run.epochs.front().val_acc);
  EXPECT_EQ(run.best_epoch, 0);
  EXPECT_EQ(run.total_steps, 200u * 10u);
}

TEST(Training, PatienceInSteps) {
  const auto& data = small_data();
  auto cfg = small_config(Method::ce_only, 10);
  cfg.patience = 7;
  cfg.patience_unit = PatienceUnit::steps;
  cfg.max_epochs = 0;
  cfg.max_decays = 2;
  const auto run = train_one(cfg, data, nullptr, 1, 0.0);
  EXPECT_EQ(run.decays.size(), 2u);
  EXPECT_EQ(run.total_steps, 21u);
}

TEST(Training, StepParityAndBudgetAcrossMethods) {
  const auto& data = small_data();
  auto teacher = small_teacher();
  for (Method m : {Method::ce_only, Method::kd, Method::ckd, Method::rkd, Method::dist, Method::mixup_fixed,
                   Method::fitnets, Method::fitnets_ckd}) {
    SCOPED_TRACE(to_string(m));
    auto cfg = small_config(m);
    cfg.max_epochs = 2;
    TeacherOracle oracle(teacher, cfg.budget, uses_hints(m));
    const auto run = train_one(cfg, data, uses_teacher(m) ? &oracle : nullptr, 1, 0.05);
    EXPECT_EQ(run.steps_per_epoch, cfg.budget);
    EXPECT_EQ(run.total_steps, 2 * cfg.budget);
    EXPECT_LE(run.teacher_calls, cfg.budget);
    EXPECT_EQ(run.teacher_calls, uses_teacher(m) ? cfg.budget : 0u);
    EXPECT_GE(run.best_val_acc, run.epochs.front().val_acc);
  }
}

TEST(Training, SameSeedSameInitAndSplitForEveryMethod) {
  const auto& data = small_data();
  auto teacher = small_teacher();
  std::uint64_t init = 0, split = 0;
  for (Method m : {Method::ce_only, Method::kd, Method::ckd, Method::dist}) {
    TeacherOracle oracle(teacher, 24, false);
    const auto run = train_one(small_config(m), data, uses_teacher(m) ? &oracle : nullptr, 2, 0.05);
    if (init == 0) {
      init = run.init_hash;
      split = run.split_hash;
    }
    EXPECT_EQ(run.init_hash, init);
    EXPECT_EQ(run.split_hash, split);
  }
  const auto other = train_one(small_config(Method::ce_only), data, nullptr, 3, 0.05);
  EXPECT_NE(other.init_hash, init);
  EXPECT_NE(other.split_hash, split);
}

TEST(Training, RepeatedRunIsBitIdentical) {
  const auto& data = small_data();
  auto teacher = small_teacher();
  auto once = [&] {
    TeacherOracle oracle(teacher, 24, false);
    return train_one(small_config(Method::ckd), data, &oracle, 1, 0.05);
  };
  const auto a = once(), b = once();
  EXPECT_EQ(a.best_model.fingerprint(), b.best_model.fingerprint());
  EXPECT_EQ(a.test_acc, b.test_acc);
  ASSERT_EQ(a.epochs.size(), b.epochs.size());
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    EXPECT_EQ(a.epochs[i].train_loss, b.epochs[i].train_loss);
    EXPECT_EQ(a.epochs[i].val_loss, b.epochs[i].val_loss);
  }
  EXPECT_EQ(a.group_log, b.group_log);
}

TEST(Training, HintMethodsNeedWhiteBox) {
  const auto& data = small_data();
  auto teacher = small_teacher();
  TeacherOracle oracle(teacher, 24, false);
  EXPECT_THROW(train_one(small_config(Method::fitnets), data, &oracle, 1, 0.05), HintUnavailable);
  EXPECT_THROW(train_one(small_config(Method::kd), data, nullptr, 1, 0.05), InvalidInput);
}

TEST(Training, SmallBudgetOracleRefuses) {
  const auto& data = small_data();
  auto teacher = small_teacher();
  TeacherOracle oracle(teacher, 10, false);
  EXPECT_THROW(train_one(small_config(Method::kd, 24), data, &oracle, 1, 0.05), InvalidInput);
}

TEST(SelectLr, ArgmaxWithLargerLrOnTies) {
  EXPECT_EQ(select_lr({0.1, 0.05, 0.025}, {0.5, 0.7, 0.6}), 1u);
  EXPECT_EQ(select_lr({0.1, 0.05, 0.025}, {0.6, 0.6, 0.6}), 0u);
  EXPECT_EQ(select_lr({0.025, 0.05, 0.1}, {0.7, 0.7, 0.6}), 1u);
}

TEST(TrainSweep, SingleCellIsTrainOne) {
  const auto& data = small_data();
  auto teacher = small_teacher();
  auto cfg = small_config(Method::kd);
  const auto sweep = train_sweep(cfg, data, &teacher);
  TeacherOracle oracle(teacher, cfg.budget, false);
  const auto one = train_one(cfg, data, &oracle, 1, 0.05);
  ASSERT_EQ(sweep.runs.size(), 1u);
  ASSERT_EQ(sweep.runs[0].size(), 1u);
  EXPECT_EQ(sweep.best_lr(), 0.05);
  EXPECT_EQ(sweep.best_runs()[0].test_acc, one.test_acc);
  EXPECT_EQ(sweep.best_runs()[0].best_model.fingerprint(), one.best_model.fingerprint());
}

TEST(TrainSweep, ParallelMatchesSerial) {
  const auto& data = small_data();
  auto teacher = small_teacher();
  auto cfg = small_config(Method::ckd);
  cfg.lr_grid = {0.1, 0.05};
  cfg.seeds = {1, 2};
  const auto serial = train_sweep(cfg, data, &teacher);
  cfg.jobs = 3;
  const auto parallel = train_sweep(cfg, data, &teacher);
  EXPECT_EQ(serial.mean_val_acc, parallel.mean_val_acc);
  EXPECT_EQ(serial.best_lr_index, parallel.best_lr_index);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t s = 0; s < 2; ++s)
      EXPECT_EQ(serial.runs[l][s].best_model.fingerprint(), parallel.runs[l][s].best_model.fingerprint());
}

TEST(TrainTeacher, SeparableBlobs) {
  const auto data = generate_gaussian_mixture({3, 4, 100, 50, 0.5, 12.0, 7});
  TeacherTrainConfig cfg;
  cfg.hidden = {16};
  cfg.max_epochs = 10;
  const auto a = train_teacher(data, cfg);
  EXPECT_GE(a.test_acc, 0.99);
  const auto b = train_teacher(data, cfg);
  EXPECT_EQ(a.model.fingerprint(), b.model.fingerprint());
}

TEST(Evaluate, CountsAndLoss) {
  const auto& data = small_data();
  const MlpModel zero = MlpModel::zeros({8, 4, 5});
  const auto ids = data.indices(Split::test);
  const auto ev = evaluate(zero, data, ids);
  EXPECT_NEAR(ev.loss, std::log(5.0), 1e-12);
  // All logits tie; the first class wins every argmax.
  const auto labels = data.gather_labels(ids);
  const double first = double(std::count(labels.begin(), labels.end(), 0)) / double(labels.size());
  EXPECT_DOUBLE_EQ(ev.accuracy, first);
}
