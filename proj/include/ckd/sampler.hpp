#pragma once

// Comparison groups drawn from the budgeted sample ids.

#include <cstdint>
#include <span>
#include <unordered_set>
#include <vector>

#include <boost/functional/hash.hpp>

#include "ckd/rng.hpp"

namespace ckd {

/// |a| = ceil(k/2), |b| = floor(k/2), disjoint.
struct ComparisonGroup {
  std::vector<std::uint64_t> a;
  std::vector<std::uint64_t> b;

  std::size_t size() const { return a.size() + b.size(); }
  friend bool operator==(const ComparisonGroup&, const ComparisonGroup&) = default;
  friend auto operator<=>(const ComparisonGroup&, const ComparisonGroup&) = default;
};

struct SamplerConfig {
  int k = 3;
  std::size_t cap = 100000;
  std::uint64_t seed = 1;
};

/// Number of distinct (k-subset, split) pairs over n ids. A balanced split
/// (k even) and its mirror count once. Saturates at UINT64_MAX.
std::uint64_t count_distinct_groups(std::uint64_t n, int k);

/// Both sides sorted; for balanced splits the side holding the smallest id
/// goes first. Two groups are the same draw iff their canonical forms match.
ComparisonGroup canonical_form(ComparisonGroup group);

/// Lazily yields distinct groups, uniformly, without replacement. After
/// min(cap, total) draws the stream starts a new cycle under a fresh derived
/// seed. Balanced groups come out in a random orientation.
class GroupStream {
 public:
  GroupStream(std::vector<std::uint64_t> ids, const SamplerConfig& cfg);

  ComparisonGroup next();
  /// Draws until the end of the current cycle.
  std::size_t cycle_length() const { return cycle_length_; }
  std::uint64_t total() const { return total_; }
  std::size_t cycles_completed() const { return cycle_; }

 private:
  using Key = std::vector<std::uint32_t>;

  void start_cycle();
  ComparisonGroup draw_rejection();
  ComparisonGroup to_ids(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) const;

  std::vector<std::uint64_t> ids_;
  SamplerConfig cfg_;
  std::uint64_t total_;
  std::size_t cycle_length_;
  std::size_t cycle_ = 0;
  std::size_t emitted_ = 0;
  RngStream rng_;
  bool enumerated_ = false;
  std::vector<Key> pool_;  // enumerated mode: shuffled canonical position keys
  std::unordered_set<Key, boost::hash<Key>> seen_;
};

/// One cycle of a GroupStream: min(cap, total) distinct groups.
std::vector<ComparisonGroup> sample_groups(std::span<const std::uint64_t> ids,
                                           const SamplerConfig& cfg);

enum class Orientation { canonical, both };

/// Every distinct group exactly once in canonical form, subsets in lexicographic
/// order over the sorted ids. With
/// Orientation::both, each balanced split is followed by its mirror.
/// Throws TooLarge above 10^6 groups.
std::vector<ComparisonGroup> enumerate_groups(std::span<const std::uint64_t> ids, int k,
                                              Orientation orientation = Orientation::canonical);

}  // namespace ckd
