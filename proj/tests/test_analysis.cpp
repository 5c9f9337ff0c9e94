#include <gtest/gtest.h>

#include "ckd/analysis.hpp"
#include "oracles.hpp"

using namespace ckd;

namespace {

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

MatrixXd randn(RngStream& rng, Eigen::Index r, Eigen::Index c) {
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Pearson between two class rows of a C x N logit matrix.
long double class_corr(const MatrixXd& z, Eigen::Index a, Eigen::Index b) {
  std::vector<oracle::Real> u(z.cols()), v(z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    u[j] = z(a, j);
    v[j] = z(b, j);
  }
  return a == b ? 1.0L : oracle::pearson(u, v);
}

}  // namespace

TEST(CorrelationGap, IdenticalModelsGiveZero) {
  const auto data = generate_gaussian_mixture({4, 6, 30, 30, 1.0, 3.0, 2});
  RngStream rng(1);
  const MlpModel model({6, 10, 4}, rng);
  const auto ids = data.indices(Split::test);
  const auto report = correlation_gap(model, model, data, ids, 100, 3);
  EXPECT_EQ(report.metric, 0.0);
  EXPECT_EQ(report.m, 100u);
  EXPECT_EQ(report.sample_ids.size(), 100u);
}

TEST(CorrelationGap, SwappedClassesMatchHandFormula) {
  RngStream rng(2);
  const MatrixXd t = randn(rng, 3, 6);
  MatrixXd s = t;
  s.row(0) = t.row(1);
  s.row(1) = t.row(0);
  const auto ids = iota(6);
  const auto report = correlation_gap(s, t, ids, 6, 1);
  // Only the (0,2) and (1,2) correlations trade places, four entries in all.
  const double want = double(4 * std::abs(class_corr(t, 0, 2) - class_corr(t, 1, 2)) / 9);
  EXPECT_NEAR(report.metric, want, 1e-14);
  for (Eigen::Index a = 0; a < 3; ++a)
    for (Eigen::Index b = 0; b < 3; ++b) EXPECT_NEAR(report.teacher_corr(a, b), double(class_corr(t, a, b)), 1e-14);
}

TEST(CorrelationGap, BoundedAndSymmetricOnRandomModels) {
  const auto data = generate_gaussian_mixture({6, 5, 30, 40, 1.0, 3.0, 5});
  const auto ids = data.indices(Split::test);
  for (std::uint64_t s = 1; s <= 10; ++s) {
    RngStream a(s), b(s + 100);
    const MlpModel ma({5, 8, 6}, a), mb({5, 8, 6}, b);
    const auto ab = correlation_gap(ma, mb, data, ids, 50, s);
    const auto ba = correlation_gap(mb, ma, data, ids, 50, s);
    EXPECT_GT(ab.metric, 0.0);
    EXPECT_LE(ab.metric, 2.0);
    EXPECT_EQ(ab.metric, ba.metric);
    EXPECT_EQ(ab.sample_ids, ba.sample_ids);
  }
}

TEST(CorrelationGap, SampleCountBounds) {
  const MatrixXd z = MatrixXd::Ones(3, 5);
  const auto ids = iota(5);
  EXPECT_THROW(correlation_gap(z, z, ids, 1, 1), InvalidInput);
  EXPECT_THROW(correlation_gap(z, z, ids, 6, 1), InvalidInput);
}

TEST(Flatness, IdenticalLogitsAreAllZero) {
  const MatrixXd z = MatrixXd::Constant(4, 10, 2.5);
  const std::vector<int> labels(10, 0);
  for (bool norm : {true, false}) {
    const auto c = flatness_curve(z, labels, 4, false, norm);
    ASSERT_EQ(c.values.size(), 4u);
    for (double v : c.values) EXPECT_EQ(v, 0.0);
  }
}

TEST(Flatness, RankConsistentOnConstructedSets) {
  RngStream rng(3);
  for (int rank = 1; rank <= 3; ++rank) {
    const MatrixXd basis = randn(rng, 6, rank), coeff = randn(rng, rank, 40);
    const MatrixXd z = (basis * coeff).colwise() + VectorXd(randn(rng, 6, 1));
    std::vector<int> labels(40);
    for (int j = 0; j < 40; ++j) labels[j] = j % 2;
    for (bool per_class : {true, false}) {
      const auto c = flatness_curve(z, labels, 6, per_class, true);
      EXPECT_DOUBLE_EQ(c.values[0], 1.0);
      for (int i = 0; i < 6; ++i) {
        if (i < rank) EXPECT_GT(c.values[i], 1e-6) << rank;
        else EXPECT_LT(c.values[i], 1e-6) << rank;
      }
      EXPECT_TRUE(std::is_sorted(c.values.rbegin(), c.values.rend()));
    }
  }
}

TEST(Flatness, PooledMatchesSingularValuesOfCenteredLogits) {
  RngStream rng(4);
  const MatrixXd z = randn(rng, 5, 20);
  const std::vector<int> labels(20, 1);
  const auto c = flatness_curve(z, labels, 5, false, false);
  const MatrixXd centered = z.colwise() - z.rowwise().mean();
  const VectorXd sv = singular_values(MatrixXd(centered.transpose()));
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(c.values[i], sv[i], 1e-10);
  const auto ev = oracle::eigenvalues(centered * centered.transpose());
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(c.values[i], std::sqrt(std::max(ev[i], 0.0)), 1e-7);
}

TEST(Flatness, OrderInvariantAndSkipsTinyClasses) {
  RngStream rng(5);
  const MatrixXd z = randn(rng, 4, 30);
  std::vector<int> labels(30);
  for (int j = 0; j < 30; ++j) labels[j] = j % 3;
  labels[29] = 3;  // a class with one sample
  std::vector<Eigen::Index> order(30);
  for (int j = 0; j < 30; ++j) order[j] = j;
  rng.shuffle(order);
  MatrixXd zp(4, 30);
  std::vector<int> lp(30);
  for (int j = 0; j < 30; ++j) {
    zp.col(j) = z.col(order[j]);
    lp[j] = labels[order[j]];
  }
  const auto a = flatness_curve(z, labels, 4), b = flatness_curve(zp, lp, 4);
  EXPECT_EQ(a.classes_used, 3);
  EXPECT_EQ(a.samples_per_class[3], 0u);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-12);
}

TEST(Aggregate, MeanAndSampleStd) {
  const std::vector<Observation> obs{{{"ckd", "100"}, 36}, {{"ckd", "100"}, 37}, {{"ckd", "100"}, 38},
                                     {{"kd", "100"}, 40}};
  const auto rows = aggregate(obs);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_DOUBLE_EQ(rows[0].mean, 37.0);
  EXPECT_DOUBLE_EQ(rows[0].std, 1.0);
  EXPECT_EQ(rows[0].count, 3u);
  EXPECT_EQ(rows[1].std, 0.0);
  EXPECT_THROW(aggregate(std::span<const Observation>{}), InvalidInput);
}

TEST(Aggregate, NumericKeysSortAsNumbers) {
  const std::vector<Observation> obs{{{"ckd", "1600"}, 1}, {{"ckd", "200"}, 2}, {{"ckd", "800"}, 3},
                                     {{"ce_only", "400"}, 4}};
  const auto rows = aggregate(obs);
  EXPECT_EQ(rows[0].key[0], "ce_only");
  EXPECT_EQ(rows[1].key[1], "200");
  EXPECT_EQ(rows[2].key[1], "800");
  EXPECT_EQ(rows[3].key[1], "1600");
}

TEST(Aggregate, RunsByMethodAndBudget) {
  std::vector<RunResult> runs(4);
  const double acc[] = {0.36, 0.37, 0.38, 0.5};
  for (int i = 0; i < 4; ++i) {
    runs[i].method = i < 3 ? Method::ckd : Method::kd;
    runs[i].budget = 100;
    runs[i].seed = static_cast<std::uint64_t>(i + 1);
    runs[i].test_acc = acc[i];
  }
  const std::vector<std::string> by{"method", "budget"};
  const auto rows = aggregate_runs(runs, by);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].key, (std::vector<std::string>{"ckd", "100"}));
  EXPECT_NEAR(rows[0].mean, 37.0, 1e-12);
  EXPECT_NEAR(rows[0].std, 1.0, 1e-12);
  const std::vector<std::string> bad{"colour"};
  EXPECT_THROW(aggregate_runs(runs, bad), InvalidInput);
}

TEST(FormatCell, MeanSubscriptStd) {
  EXPECT_EQ(format_cell(36.38, 0.60), "36.38_{0.60}");
  EXPECT_EQ(format_cell(39.21, 1.38), "39.21_{1.38}");
  EXPECT_EQ(format_cell(50.144, 1.356), "50.14_{1.36}");
  EXPECT_EQ(format_cell(0.0842, 0.0, 3), "0.084_{0.000}");
}
