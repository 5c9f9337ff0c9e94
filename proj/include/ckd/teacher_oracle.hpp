#pragma once

// Budget-gated, cached access to a teacher model. At most `budget` distinct
// samples are ever sent through the teacher; every later request for the
// same sample is served from the cache.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <vector>

#include "ckd/mlp.hpp"

namespace ckd {

struct TeacherOutput {
  VectorXd logits;
  VectorXd hint;  // empty unless requested
};

/// Anything that can run a forward pass. Implementations count their own
/// forward passes so budget accounting can be checked independently of the
/// ledger.
class Teacher {
 public:
  virtual ~Teacher() = default;

  virtual int num_classes() const = 0;
  virtual int hint_dim() const = 0;
  virtual std::uint64_t fingerprint() const = 0;

  TeacherOutput forward(std::uint64_t sample_id, const VectorXd& features, bool want_hint) {
    ++forward_count_;
    return run(sample_id, features, want_hint);
  }
  std::uint64_t forward_count() const { return forward_count_.load(); }

 protected:
  virtual TeacherOutput run(std::uint64_t sample_id, const VectorXd& features, bool want_hint) = 0;

 private:
  std::atomic<std::uint64_t> forward_count_{0};
};

class MlpTeacher final : public Teacher {
 public:
  explicit MlpTeacher(MlpModel model);

  int num_classes() const override { return model_.num_classes(); }
  int hint_dim() const override { return model_.hint_dim(); }
  std::uint64_t fingerprint() const override { return fingerprint_; }
  const MlpModel& model() const { return model_; }

 protected:
  TeacherOutput run(std::uint64_t sample_id, const VectorXd& features, bool want_hint) override;

 private:
  MlpModel model_;
  std::uint64_t fingerprint_;
};

struct CacheEntry {
  VectorXd logits;
  VectorXd hint;  // empty when the cache has hint_dim == 0
};

/// Persisted map sample-id -> teacher outputs.
///
/// File payload (inside the checksummed envelope, magic "CKDCACHE"):
/// classes u32, hint_dim u32, count u64, fingerprint u64, then `count`
/// records of {id u64, classes x f64, hint_dim x f64} in ascending id order.
struct TeacherCache {
  int num_classes = 0;
  int hint_dim = 0;
  std::uint64_t fingerprint = 0;
  std::map<std::uint64_t, CacheEntry> entries;

  void persist(const std::filesystem::path& path) const;
  static TeacherCache load(const std::filesystem::path& path);

  /// Metadata gate: dimension mismatch throws CacheCorrupt; a fingerprint
  /// mismatch throws TeacherMismatch unless `allow_mismatch`.
  void check_compatible(int classes, int hint, std::uint64_t teacher_fingerprint,
                        bool allow_mismatch) const;
};

/// Serves answers straight from a cache file; enables runs without a
/// trained teacher. Asking for an id it does not hold is an error.
class LookupTeacher final : public Teacher {
 public:
  explicit LookupTeacher(TeacherCache cache) : cache_(std::move(cache)) {}

  int num_classes() const override { return cache_.num_classes; }
  int hint_dim() const override { return cache_.hint_dim; }
  std::uint64_t fingerprint() const override { return cache_.fingerprint; }

 protected:
  TeacherOutput run(std::uint64_t sample_id, const VectorXd& features, bool want_hint) override;

 private:
  TeacherCache cache_;
};

struct LedgerRecord {
  std::uint64_t sample_id;
  std::uint64_t ordinal;  // 1-based call number
};

class BudgetLedger {
 public:
  explicit BudgetLedger(std::size_t limit);

  std::size_t limit() const { return limit_; }
  std::size_t used() const { return log_.size(); }
  std::size_t remaining() const { return limit_ - used(); }
  const std::vector<LedgerRecord>& log() const { return log_; }

  /// Records one teacher call; throws BudgetExhausted when none remain.
  void charge(std::uint64_t sample_id);

 private:
  std::size_t limit_;
  std::vector<LedgerRecord> log_;
};

class TeacherOracle {
 public:
  struct Answer {
    VectorXd logits;
    std::optional<VectorXd> hint;
  };

  /// White-box mode is fixed here: hints are captured alongside logits on
  /// every call, and asking for a hint otherwise is HintUnavailable.
  TeacherOracle(Teacher& teacher, std::size_t budget, bool white_box);

  /// Resume from a persisted cache. Its entries count as budget already spent.
  TeacherOracle(Teacher& teacher, std::size_t budget, bool white_box, TeacherCache preloaded,
                bool allow_mismatch = false);

  /// Cache hit: free. Cache miss: one teacher call, or BudgetExhausted.
  Answer query(std::uint64_t sample_id, const VectorXd& features, bool want_hint = false);

  bool white_box() const { return white_box_; }
  const BudgetLedger& ledger() const { return ledger_; }
  const TeacherCache& cache() const { return cache_; }
  std::size_t budget() const { return ledger_.limit(); }

  void persist(const std::filesystem::path& path) const;

 private:
  Teacher& teacher_;
  bool white_box_;
  BudgetLedger ledger_;
  TeacherCache cache_;
  mutable std::mutex mutex_;
};

}  // namespace ckd
