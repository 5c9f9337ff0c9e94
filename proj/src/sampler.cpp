#include "ckd/sampler.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "ckd/errors.hpp"

namespace ckd {

namespace {

constexpr std::uint64_t kEnumerationLimit = 1000000;
constexpr std::uint64_t kSaturated = std::numeric_limits<std::uint64_t>::max();

std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r;
  return __builtin_mul_overflow(a, b, &r) ? kSaturated : r;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;  // exact: r * (n-k+i) is divisible by i
    if (r > kSaturated) return kSaturated;
  }
  return static_cast<std::uint64_t>(r);
}

void check_inputs(std::span<const std::uint64_t> ids, int k) {
  if (k < 2) throw InvalidInput("k must be at least 2");
  if (ids.size() < static_cast<std::size_t>(k))
    throw InvalidInput("need at least k = " + std::to_string(k) + " ids, got " +
                       std::to_string(ids.size()));
  if (ids.size() > std::numeric_limits<std::uint32_t>::max()) throw TooLarge("too many ids");
  std::vector<std::uint64_t> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw InvalidInput("sample ids must be distinct");
}

// Canonical groups over positions 0..n-1, lexicographic. Key layout: the
// sorted A positions followed by the sorted B positions.
template <typename Emit>
void for_each_canonical(std::uint32_t n, int k, Emit&& emit) {
  const int size_a = (k + 1) / 2;
  std::vector<std::uint32_t> subset(k);
  for (int i = 0; i < k; ++i) subset[i] = i;
  std::vector<std::uint32_t> key(k);
  std::vector<int> pick(k);  // pick[j] = 1 if subset[j] goes to A
  for (;;) {
    std::fill(pick.begin(), pick.end(), 0);
    std::fill(pick.begin(), pick.begin() + size_a, 1);
    // prev_permutation from 1..10..0 walks all A choices in lexicographic order.
    do {
      if (2 * size_a == k && pick[0] == 0) continue;  // mirror of a balanced split already emitted
      int ia = 0, ib = size_a;
      for (int j = 0; j < k; ++j) key[pick[j] ? ia++ : ib++] = subset[j];
      emit(key);
    } while (std::prev_permutation(pick.begin(), pick.end()));

    int i = k - 1;
    while (i >= 0 && subset[i] == n - k + i) --i;
    if (i < 0) break;
    ++subset[i];
    for (int j = i + 1; j < k; ++j) subset[j] = subset[j - 1] + 1;
  }
}

}  // namespace

std::uint64_t count_distinct_groups(std::uint64_t n, int k) {
  if (k < 2) throw InvalidInput("k must be at least 2");
  const std::uint64_t subsets = binomial(n, k);
  std::uint64_t splits = binomial(k, (k + 1) / 2);
  if (k % 2 == 0) splits /= 2;
  return sat_mul(subsets, splits);
}

ComparisonGroup canonical_form(ComparisonGroup group) {
  std::sort(group.a.begin(), group.a.end());
  std::sort(group.b.begin(), group.b.end());
  if (group.a.size() == group.b.size() && !group.b.empty() && group.b.front() < group.a.front())
    std::swap(group.a, group.b);
  return group;
}

GroupStream::GroupStream(std::vector<std::uint64_t> ids, const SamplerConfig& cfg)
    : ids_(std::move(ids)), cfg_(cfg), rng_(cfg.seed) {
  check_inputs(ids_, cfg.k);
  if (cfg.cap < 1) throw InvalidInput("cap must be at least 1");
  total_ = count_distinct_groups(ids_.size(), cfg.k);
  cycle_length_ = static_cast<std::size_t>(std::min<std::uint64_t>(cfg.cap, total_));
  // Enumerate-and-shuffle when the whole space is small next to the draw
  // count; otherwise rejection sampling accepts at least half of all draws.
  enumerated_ = total_ <= kEnumerationLimit && total_ <= 2 * std::uint64_t(cfg.cap);
  start_cycle();
}

void GroupStream::start_cycle() {
  rng_ = RngStream(cfg_.seed).split(cycle_);
  emitted_ = 0;
  seen_.clear();
  if (enumerated_) {
    pool_.clear();
    pool_.reserve(total_);
    for_each_canonical(static_cast<std::uint32_t>(ids_.size()), cfg_.k,
                       [&](const Key& key) { pool_.push_back(key); });
    rng_.shuffle(pool_);
    pool_.resize(cycle_length_);
  }
}

ComparisonGroup GroupStream::to_ids(std::span<const std::uint32_t> a,
                                    std::span<const std::uint32_t> b) const {
  ComparisonGroup g;
  g.a.reserve(a.size());
  g.b.reserve(b.size());
  for (auto p : a) g.a.push_back(ids_[p]);
  for (auto p : b) g.b.push_back(ids_[p]);
  return g;
}

ComparisonGroup GroupStream::draw_rejection() {
  const int k = cfg_.k;
  const int size_a = (k + 1) / 2;
  const std::uint64_t n = ids_.size();
  std::vector<std::uint32_t> draw(k);
  for (;;) {
    // k distinct positions in uniformly random order.
    for (int i = 0; i < k; ++i) {
      std::uint32_t p;
      do {
        p = static_cast<std::uint32_t>(rng_.uniform_index(n));
      } while (std::find(draw.begin(), draw.begin() + i, p) != draw.begin() + i);
      draw[i] = p;
    }
    Key key = draw;
    std::sort(key.begin(), key.begin() + size_a);
    std::sort(key.begin() + size_a, key.end());
    if (2 * size_a == k && key[size_a] < key[0])
      std::rotate(key.begin(), key.begin() + size_a, key.end());
    if (seen_.insert(std::move(key)).second) {
      const std::span<const std::uint32_t> d(draw);
      return to_ids(d.first(size_a), d.subspan(size_a));
    }
  }
}

ComparisonGroup GroupStream::next() {
  if (emitted_ == cycle_length_) {
    ++cycle_;
    start_cycle();
  }
  ++emitted_;
  if (!enumerated_) return draw_rejection();
  const Key& key = pool_[emitted_ - 1];
  const int size_a = (cfg_.k + 1) / 2;
  const std::span<const std::uint32_t> d(key);
  auto a = d.first(size_a);
  auto b = d.subspan(size_a);
  if (a.size() == b.size() && (rng_.next_u64() & 1)) std::swap(a, b);
  return to_ids(a, b);
}

std::vector<ComparisonGroup> sample_groups(std::span<const std::uint64_t> ids,
                                           const SamplerConfig& cfg) {
  GroupStream stream(std::vector<std::uint64_t>(ids.begin(), ids.end()), cfg);
  std::vector<ComparisonGroup> out;
  out.reserve(stream.cycle_length());
  for (std::size_t i = 0; i < stream.cycle_length(); ++i) out.push_back(stream.next());
  return out;
}

std::vector<ComparisonGroup> enumerate_groups(std::span<const std::uint64_t> ids, int k,
                                              Orientation orientation) {
  check_inputs(ids, k);
  const std::uint64_t total = count_distinct_groups(ids.size(), k);
  if (total > kEnumerationLimit)
    throw TooLarge(std::to_string(total) + " groups exceed the enumeration limit of 1000000");

  std::vector<std::uint64_t> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  const int size_a = (k + 1) / 2;
  std::vector<ComparisonGroup> out;
  out.reserve(orientation == Orientation::both && k % 2 == 0 ? 2 * total : total);
  for_each_canonical(static_cast<std::uint32_t>(sorted.size()), k, [&](const std::vector<std::uint32_t>& key) {
    ComparisonGroup g;
    for (int j = 0; j < k; ++j) (j < size_a ? g.a : g.b).push_back(sorted[key[j]]);
    out.push_back(g);
    if (orientation == Orientation::both && k % 2 == 0) {
      std::swap(g.a, g.b);
      out.push_back(std::move(g));
    }
  });
  return out;
}

}  // namespace ckd
