#include "ckd/teacher_oracle.hpp"

#include <spdlog/spdlog.h>

#include <string>

namespace ckd {

namespace {

constexpr std::string_view kCacheMagic = "CKDCACHE";
constexpr std::uint32_t kCacheVersion = 1;

}  // namespace

MlpTeacher::MlpTeacher(MlpModel model) : model_(std::move(model)), fingerprint_(model_.fingerprint()) {}

TeacherOutput MlpTeacher::run(std::uint64_t, const VectorXd& features, bool want_hint) {
  const MlpModel::Activations acts = model_.forward(features);
  TeacherOutput out{acts.logits().col(0), {}};
  if (want_hint) out.hint = acts.hint().col(0);
  return out;
}

TeacherOutput LookupTeacher::run(std::uint64_t sample_id, const VectorXd&, bool want_hint) {
  const auto it = cache_.entries.find(sample_id);
  if (it == cache_.entries.end())
    throw InvalidInput("lookup teacher has no entry for sample " + std::to_string(sample_id));
  if (want_hint && cache_.hint_dim == 0)
    throw HintUnavailable("lookup teacher cache holds no hints");
  return {it->second.logits, want_hint ? it->second.hint : VectorXd()};
}

void TeacherCache::persist(const std::filesystem::path& path) const {
  if (entries.empty()) throw InvalidInput("TeacherCache::persist: cache is empty");
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(num_classes));
  w.u32(static_cast<std::uint32_t>(hint_dim));
  w.u64(entries.size());
  w.u64(fingerprint);
  for (const auto& [id, entry] : entries) {
    w.u64(id);
    for (Eigen::Index c = 0; c < entry.logits.size(); ++c) w.f64(entry.logits[c]);
    for (Eigen::Index c = 0; c < entry.hint.size(); ++c) w.f64(entry.hint[c]);
  }
  write_envelope(path, kCacheMagic, kCacheVersion, w.buffer());
}

TeacherCache TeacherCache::load(const std::filesystem::path& path) {
  const auto payload = read_envelope(path, kCacheMagic, kCacheVersion);
  ByteReader in(payload);
  TeacherCache cache;
  cache.num_classes = static_cast<int>(in.u32());
  cache.hint_dim = static_cast<int>(in.u32());
  const std::uint64_t count = in.u64();
  cache.fingerprint = in.u64();
  if (cache.num_classes < 1) throw CacheCorrupt(path.string() + ": no classes");
  const std::uint64_t record = 8 * (1 + std::uint64_t(cache.num_classes) + cache.hint_dim);
  if (count * record != in.remaining()) throw CacheCorrupt(path.string() + ": record count mismatch");
  for (std::uint64_t r = 0; r < count; ++r) {
    const std::uint64_t id = in.u64();
    CacheEntry entry{VectorXd(cache.num_classes), VectorXd(cache.hint_dim)};
    for (auto& v : entry.logits) v = in.f64();
    for (auto& v : entry.hint) v = in.f64();
    if (!cache.entries.emplace(id, std::move(entry)).second)
      throw CacheCorrupt(path.string() + ": duplicate sample id");
  }
  return cache;
}

void TeacherCache::check_compatible(int classes, int hint, std::uint64_t teacher_fingerprint,
                                    bool allow_mismatch) const {
  if (classes != num_classes)
    throw CacheCorrupt("cache has " + std::to_string(num_classes) + " classes, experiment has " +
                       std::to_string(classes));
  if (hint != hint_dim)
    throw CacheCorrupt("cache hint dimension " + std::to_string(hint_dim) + " does not match " +
                       std::to_string(hint));
  if (teacher_fingerprint != fingerprint) {
    if (!allow_mismatch)
      throw TeacherMismatch("cache was produced by a different teacher (fingerprint mismatch)");
    spdlog::warn("teacher fingerprint mismatch ignored by override");
  }
}

BudgetLedger::BudgetLedger(std::size_t limit) : limit_(limit) {
  if (limit < 1) throw InvalidInput("budget must be at least 1");
}

void BudgetLedger::charge(std::uint64_t sample_id) {
  if (used() >= limit_)
    throw BudgetExhausted("teacher budget of " + std::to_string(limit_) +
                          " calls exhausted at sample " + std::to_string(sample_id));
  log_.push_back({sample_id, log_.size() + 1});
}

TeacherOracle::TeacherOracle(Teacher& teacher, std::size_t budget, bool white_box)
    : teacher_(teacher), white_box_(white_box), ledger_(budget) {
  cache_.num_classes = teacher.num_classes();
  cache_.hint_dim = white_box ? teacher.hint_dim() : 0;
  cache_.fingerprint = teacher.fingerprint();
}

TeacherOracle::TeacherOracle(Teacher& teacher, std::size_t budget, bool white_box,
                             TeacherCache preloaded, bool allow_mismatch)
    : TeacherOracle(teacher, budget, white_box) {
  preloaded.check_compatible(cache_.num_classes, cache_.hint_dim, cache_.fingerprint, allow_mismatch);
  if (preloaded.entries.size() > budget)
    throw BudgetExhausted("preloaded cache holds more entries than the budget allows");
  for (const auto& [id, entry] : preloaded.entries) ledger_.charge(id);
  cache_.entries = std::move(preloaded.entries);
}

TeacherOracle::Answer TeacherOracle::query(std::uint64_t sample_id, const VectorXd& features,
                                           bool want_hint) {
  if (want_hint && !white_box_)
    throw HintUnavailable("hints requested but the oracle was created without white-box access");
  std::lock_guard lock(mutex_);
  auto it = cache_.entries.find(sample_id);
  if (it == cache_.entries.end()) {
    ledger_.charge(sample_id);
    TeacherOutput out = teacher_.forward(sample_id, features, white_box_);
    if (out.logits.size() != cache_.num_classes || out.hint.size() != cache_.hint_dim)
      throw CacheCorrupt("teacher output dimensions drifted from the cache metadata");
    it = cache_.entries.emplace(sample_id, CacheEntry{std::move(out.logits), std::move(out.hint)}).first;
  }
  Answer answer{it->second.logits, std::nullopt};
  if (want_hint) answer.hint = it->second.hint;
  return answer;
}

void TeacherOracle::persist(const std::filesystem::path& path) const {
  std::lock_guard lock(mutex_);
  cache_.persist(path);
}

}  // namespace ckd
