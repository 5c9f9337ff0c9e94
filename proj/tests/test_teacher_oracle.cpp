#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ckd/teacher_oracle.hpp"

using namespace ckd;
namespace fs = std::filesystem;

namespace {

TeacherCache make_cache(int classes, int hint, std::uint64_t fp, int count, std::uint64_t seed = 1) {
  RngStream rng(seed);
  TeacherCache c{classes, hint, fp, {}};
  for (int i = 0; i < count; ++i) {
    CacheEntry e{VectorXd(classes), VectorXd(hint)};
    for (auto& v : e.logits) v = rng.normal() * 1e3;
    for (auto& v : e.hint) v = rng.normal();
    c.entries.emplace(static_cast<std::uint64_t>(10 * i + 3), std::move(e));
  }
  return c;
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("ckd_oracle_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

const VectorXd kNoFeatures = VectorXd::Zero(1);

}  // namespace

TEST(BudgetLedger, CountsAndStops) {
  BudgetLedger ledger(2);
  ledger.charge(5);
  ledger.charge(9);
  EXPECT_EQ(ledger.used(), 2u);
  EXPECT_EQ(ledger.remaining(), 0u);
  EXPECT_THROW(ledger.charge(11), BudgetExhausted);
  ASSERT_EQ(ledger.log().size(), 2u);
  EXPECT_EQ(ledger.log()[1].sample_id, 9u);
  EXPECT_EQ(ledger.log()[1].ordinal, 2u);
  EXPECT_THROW(BudgetLedger(0), InvalidInput);
}

TEST(TeacherOracle, HitsAreFree) {
  LookupTeacher teacher(make_cache(4, 0, 77, 10));
  TeacherOracle oracle(teacher, 3, false);
  const auto a = oracle.query(3, kNoFeatures);
  oracle.query(13, kNoFeatures);
  oracle.query(23, kNoFeatures);
  EXPECT_EQ(oracle.ledger().used(), 3u);
  const auto again = oracle.query(3, kNoFeatures);
  EXPECT_EQ(again.logits, a.logits);
  EXPECT_FALSE(again.hint.has_value());
  EXPECT_EQ(oracle.ledger().used(), 3u);
  EXPECT_EQ(teacher.forward_count(), 3u);
}

TEST(TeacherOracle, FourthDistinctIdExhaustsBudget) {
  LookupTeacher teacher(make_cache(4, 0, 77, 10));
  TeacherOracle oracle(teacher, 3, false);
  for (std::uint64_t id : {3u, 13u, 23u}) oracle.query(id, kNoFeatures);
  EXPECT_THROW(oracle.query(33, kNoFeatures), BudgetExhausted);
  EXPECT_EQ(teacher.forward_count(), 3u);
  EXPECT_EQ(oracle.ledger().used(), 3u);
}

TEST(TeacherOracle, HintRequiresWhiteBoxFromTheStart) {
  LookupTeacher teacher(make_cache(4, 6, 77, 10));
  TeacherOracle black(teacher, 5, false);
  black.query(3, kNoFeatures);
  EXPECT_THROW(black.query(3, kNoFeatures, true), HintUnavailable);
  EXPECT_EQ(teacher.forward_count(), 1u);

  TeacherOracle white(teacher, 5, true);
  const auto first = white.query(3, kNoFeatures);
  const auto hinted = white.query(3, kNoFeatures, true);
  ASSERT_TRUE(hinted.hint.has_value());
  EXPECT_EQ(hinted.hint->size(), 6);
  EXPECT_EQ(hinted.logits, first.logits);
  EXPECT_EQ(white.ledger().used(), 1u);
  EXPECT_EQ(teacher.forward_count(), 2u);
}

TEST(TeacherOracle, LogitsOnlyTeacherCannotServeWhiteBox) {
  LookupTeacher teacher(make_cache(4, 0, 77, 3));
  TeacherOracle white(teacher, 5, true);
  EXPECT_THROW(white.query(3, kNoFeatures, true), HintUnavailable);
}

TEST(TeacherOracle, MlpTeacherOneCallYieldsLogitsAndHint) {
  RngStream rng(4);
  MlpTeacher teacher(MlpModel({3, 8, 5}, rng));
  TeacherOracle oracle(teacher, 2, true);
  const VectorXd x = (VectorXd(3) << 0.1, -0.4, 2.0).finished();
  const auto out = oracle.query(0, x, true);
  EXPECT_EQ(out.logits.size(), 5);
  ASSERT_TRUE(out.hint.has_value());
  EXPECT_EQ(out.hint->size(), 8);
  const auto acts = teacher.model().forward(x);
  EXPECT_EQ(out.logits, acts.logits().col(0));
  EXPECT_EQ(teacher.forward_count(), 1u);
}

TEST(TeacherCache, RoundTripIsBitExact) {
  TempDir dir;
  const auto cache = make_cache(20, 7, 0xDEADBEEFCAFEull, 25);
  cache.persist(dir.path / "c.ckdc");
  const auto back = TeacherCache::load(dir.path / "c.ckdc");
  EXPECT_EQ(back.num_classes, 20);
  EXPECT_EQ(back.hint_dim, 7);
  EXPECT_EQ(back.fingerprint, cache.fingerprint);
  ASSERT_EQ(back.entries.size(), cache.entries.size());
  for (const auto& [id, e] : cache.entries) {
    EXPECT_EQ(back.entries.at(id).logits, e.logits);
    EXPECT_EQ(back.entries.at(id).hint, e.hint);
  }
  back.persist(dir.path / "d.ckdc");
  std::ifstream a(dir.path / "c.ckdc", std::ios::binary), b(dir.path / "d.ckdc", std::ios::binary);
  EXPECT_TRUE(std::equal(std::istreambuf_iterator<char>(a), {}, std::istreambuf_iterator<char>(b)));
}

TEST(TeacherCache, EmptyCannotPersist) {
  TempDir dir;
  EXPECT_THROW(TeacherCache{}.persist(dir.path / "e.ckdc"), InvalidInput);
}

TEST(TeacherCache, TruncatedOrFlippedIsCorrupt) {
  TempDir dir;
  const auto file = dir.path / "c.ckdc";
  make_cache(5, 0, 1, 8).persist(file);
  const auto size = fs::file_size(file);
  {
    std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(size / 2));
    char c;
    f.read(&c, 1);
    f.seekp(static_cast<std::streamoff>(size / 2));
    c = static_cast<char>(c ^ 0x10);
    f.write(&c, 1);
  }
  EXPECT_THROW(TeacherCache::load(file), CacheCorrupt);
  make_cache(5, 0, 1, 8).persist(file);
  fs::resize_file(file, size - 9);
  EXPECT_THROW(TeacherCache::load(file), CacheCorrupt);
  EXPECT_THROW(TeacherCache::load(dir.path / "missing.ckdc"), IoError);
}

TEST(TeacherCache, DimensionAndFingerprintGates) {
  const auto cache = make_cache(20, 0, 42, 2);
  EXPECT_THROW(cache.check_compatible(10, 0, 42, false), CacheCorrupt);
  EXPECT_THROW(cache.check_compatible(20, 4, 42, false), CacheCorrupt);
  EXPECT_THROW(cache.check_compatible(20, 0, 43, false), TeacherMismatch);
  EXPECT_NO_THROW(cache.check_compatible(20, 0, 43, true));
  EXPECT_NO_THROW(cache.check_compatible(20, 0, 42, false));

  RngStream rng(1);
  MlpTeacher ten(MlpModel({3, 4, 10}, rng));
  EXPECT_THROW(TeacherOracle(ten, 5, false, cache), CacheCorrupt);
}

// A loaded cache stands for calls already made: its entries use up budget
// but never reach the teacher again.
TEST(TeacherOracle, PreloadedEntriesCountButAreNotRecomputed) {
  auto cache = make_cache(4, 0, 0, 5);
  LookupTeacher teacher(cache);
  auto partial = cache;
  partial.entries.erase(std::prev(partial.entries.end()));
  partial.entries.erase(std::prev(partial.entries.end()));
  TeacherOracle oracle(teacher, 4, false, partial);
  EXPECT_EQ(oracle.ledger().used(), 3u);
  for (const auto& [id, e] : partial.entries) EXPECT_EQ(oracle.query(id, kNoFeatures).logits, e.logits);
  EXPECT_EQ(teacher.forward_count(), 0u);
  oracle.query(33, kNoFeatures);
  EXPECT_EQ(teacher.forward_count(), 1u);
  EXPECT_THROW(oracle.query(43, kNoFeatures), BudgetExhausted);
  EXPECT_THROW(TeacherOracle(teacher, 4, false, cache), BudgetExhausted);
}

TEST(LookupTeacher, UnknownIdIsInvalid) {
  LookupTeacher teacher(make_cache(4, 0, 0, 2));
  TeacherOracle oracle(teacher, 4, false);
  EXPECT_THROW(oracle.query(999, kNoFeatures), InvalidInput);
}
