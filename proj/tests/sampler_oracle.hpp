#pragma once

// Brute-force comparison-group enumeration over bitmasks.

#include <algorithm>
#include <cstdint>
#include <set>
#include <utility>
#include <vector>

namespace oracle {

using Ids = std::vector<std::uint64_t>;
using GroupKey = std::pair<Ids, Ids>;

// Every k-subset, every A of size ceil(k/2); a balanced split is kept only
// when A holds the smallest member. Both sides sorted.
inline std::set<GroupKey> all_groups(const Ids& ids, int k) {
  std::set<GroupKey> out;
  const int n = static_cast<int>(ids.size());
  const int na = (k + 1) / 2;
  for (unsigned s = 0; s < (1u << n); ++s) {
    if (__builtin_popcount(s) != k) continue;
    for (unsigned a = s;; a = (a - 1) & s) {
      if (__builtin_popcount(a) == na) {
        Ids sa, sb;
        for (int i = 0; i < n; ++i) {
          if (a >> i & 1u) sa.push_back(ids[i]);
          else if (s >> i & 1u) sb.push_back(ids[i]);
        }
        std::sort(sa.begin(), sa.end());
        std::sort(sb.begin(), sb.end());
        if (na * 2 != k || sa.front() < sb.front()) out.emplace(sa, sb);
      }
      if (a == 0) break;
    }
  }
  return out;
}

}  // namespace oracle
