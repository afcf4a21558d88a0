#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace eva {

/// Chunking of the key-value sequence into the per-query exact set E^n and C
/// coefficient groups P_c.
///
/// E^n is the contiguous block of size K containing the query (the last block
/// may be shorter; for N != M the block is picked by proportional position).
/// Groups are C near-equal contiguous chunks. With `groups_over_full_range`
/// they chunk all of [M] and are the same for every query; otherwise they
/// chunk the complement [M] \ E^n per query, so E and the groups are disjoint.
struct PartitionSpec {
  std::size_t num_queries = 0;  // N
  std::size_t num_keys = 0;     // M
  std::size_t block_size = 0;   // K; 0 means no E sets
  std::size_t num_groups = 0;   // C; 0 means no groups
  bool groups_over_full_range = true;

  std::vector<std::pair<std::size_t, std::size_t>> e_blocks;  // [begin, end) per block
  std::vector<std::size_t> query_block;                       // block id per query; empty if K == 0
  std::vector<std::pair<std::size_t, std::size_t>> group_ranges;  // full-range chunks

  /// [begin, end) of E^n; (0, 0) when K == 0.
  std::pair<std::size_t, std::size_t> e_range(std::size_t n) const;

  /// The C groups for query n as explicit index lists. Identical for every n
  /// when groups_over_full_range is set.
  std::vector<std::vector<std::size_t>> groups_for_query(std::size_t n) const;
};

/// Splits [0, count) into `parts` near-equal contiguous chunks; the first
/// count % parts chunks get the extra element.
std::vector<std::pair<std::size_t, std::size_t>> near_equal_chunks(std::size_t count,
                                                                   std::size_t parts);

PartitionSpec build_partition(std::size_t n, std::size_t m, std::size_t k, std::size_t c,
                              bool groups_over_full_range = true);

}  // namespace eva
