#include "eva/partition.hpp"

#include <algorithm>
#include <stdexcept>

namespace eva {

std::pair<std::size_t, std::size_t> PartitionSpec::e_range(std::size_t n) const {
  if (block_size == 0) return {0, 0};
  return e_blocks[query_block[n]];
}

std::vector<std::vector<std::size_t>> PartitionSpec::groups_for_query(std::size_t n) const {
  std::vector<std::vector<std::size_t>> groups(num_groups);
  if (num_groups == 0) return groups;
  if (groups_over_full_range) {
    for (std::size_t c = 0; c < num_groups; ++c) {
      const auto [begin, end] = group_ranges[c];
      groups[c].reserve(end - begin);
      for (std::size_t m = begin; m < end; ++m) groups[c].push_back(m);
    }
    return groups;
  }
  // Complement of E^n in index order, split into near-equal runs.
  const auto [e_begin, e_end] = e_range(n);
  std::vector<std::size_t> rest;
  rest.reserve(num_keys - (e_end - e_begin));
  for (std::size_t m = 0; m < num_keys; ++m) {
    if (m < e_begin || m >= e_end) rest.push_back(m);
  }
  const auto chunks = near_equal_chunks(rest.size(), num_groups);
  for (std::size_t c = 0; c < num_groups; ++c) {
    const auto [begin, end] = chunks[c];
    groups[c].assign(rest.begin() + static_cast<std::ptrdiff_t>(begin),
                     rest.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return groups;
}

std::vector<std::pair<std::size_t, std::size_t>> near_equal_chunks(std::size_t count,
                                                                   std::size_t parts) {
  std::vector<std::pair<std::size_t, std::size_t>> chunks(parts);
  const std::size_t base = parts == 0 ? 0 : count / parts;
  const std::size_t extra = parts == 0 ? 0 : count % parts;
  std::size_t cursor = 0;
  for (std::size_t c = 0; c < parts; ++c) {
    const std::size_t width = base + (c < extra ? 1 : 0);
    chunks[c] = {cursor, cursor + width};
    cursor += width;
  }
  return chunks;
}

PartitionSpec build_partition(std::size_t n, std::size_t m, std::size_t k, std::size_t c,
                              bool groups_over_full_range) {
  if (n == 0 || m == 0) {
    throw std::invalid_argument("build_partition: empty sequence");
  }
  if (k == 0 && c == 0) {
    throw std::invalid_argument("build_partition: need a nonempty E block or at least one group");
  }
  if (c > m) {
    throw std::invalid_argument("build_partition: more groups than keys");
  }

  PartitionSpec spec;
  spec.num_queries = n;
  spec.num_keys = m;
  spec.block_size = k;
  spec.num_groups = c;
  spec.groups_over_full_range = groups_over_full_range;

  if (k > 0) {
    const std::size_t num_blocks = (m + k - 1) / k;
    spec.e_blocks.reserve(num_blocks);
    for (std::size_t b = 0; b < num_blocks; ++b) {
      spec.e_blocks.emplace_back(b * k, std::min((b + 1) * k, m));
    }
    spec.query_block.resize(n);
    for (std::size_t q = 0; q < n; ++q) {
      // Self-attention shares the query's own block; cross-attention maps the
      // query to a block by proportional position.
      const std::size_t block = (n == m) ? q / k : (q * m) / (n * k);
      spec.query_block[q] = std::min(block, num_blocks - 1);
    }
    if (!groups_over_full_range && c > 0) {
      std::size_t max_block = 0;
      for (const auto& [begin, end] : spec.e_blocks) max_block = std::max(max_block, end - begin);
      if (c > m - max_block) {
        throw std::invalid_argument(
            "build_partition: disjoint groups do not fit beside the E block");
      }
    }
  }

  if (c > 0 && groups_over_full_range) {
    spec.group_ranges = near_equal_chunks(m, c);
  }
  return spec;
}

}  // namespace eva
