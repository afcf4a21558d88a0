#include <set>

#include "doctest.h"
#include "eva/estimators.hpp"
#include "eva/partition.hpp"

using namespace eva;

TEST_SUITE_BEGIN("partition");

TEST_CASE("blocks and groups follow the chunking rule") {
  const PartitionSpec spec = build_partition(8, 8, 4, 2, true);
  for (std::size_t n = 0; n < 4; ++n) CHECK(spec.e_range(n) == std::pair<std::size_t, std::size_t>{0, 4});
  for (std::size_t n = 4; n < 8; ++n) CHECK(spec.e_range(n) == std::pair<std::size_t, std::size_t>{4, 8});
  REQUIRE(spec.group_ranges.size() == 2);
  CHECK(spec.group_ranges[0] == std::pair<std::size_t, std::size_t>{0, 4});
  CHECK(spec.group_ranges[1] == std::pair<std::size_t, std::size_t>{4, 8});
}

TEST_CASE("near-equal splits put the remainder up front") {
  const PartitionSpec spec = build_partition(10, 10, 0, 3, true);
  REQUIRE(spec.group_ranges.size() == 3);
  CHECK(spec.group_ranges[0].second - spec.group_ranges[0].first == 4);
  CHECK(spec.group_ranges[1].second - spec.group_ranges[1].first == 3);
  CHECK(spec.group_ranges[2].second - spec.group_ranges[2].first == 3);
}

TEST_CASE("K = M makes E the whole sequence") {
  const PartitionSpec spec = build_partition(6, 6, 6, 0, true);
  for (std::size_t n = 0; n < 6; ++n) {
    CHECK(spec.e_range(n) == std::pair<std::size_t, std::size_t>{0, 6});
  }
  const auto sets = e_sets_from_partition(spec);
  REQUIRE(sets.size() == 6);
  for (const auto& set : sets) CHECK(set.size() == 6);
}

TEST_CASE("last block may be shorter") {
  const PartitionSpec spec = build_partition(10, 10, 4, 0, true);
  CHECK(spec.e_range(9) == std::pair<std::size_t, std::size_t>{8, 10});
}

TEST_CASE("disjoint groups cover the complement of E") {
  const PartitionSpec spec = build_partition(12, 12, 4, 3, false);
  for (std::size_t n = 0; n < 12; ++n) {
    const auto [e_begin, e_end] = spec.e_range(n);
    const auto groups = spec.groups_for_query(n);
    REQUIRE(groups.size() == 3);
    std::set<std::size_t> seen;
    for (const auto& group : groups) {
      CHECK(!group.empty());
      for (std::size_t m : group) {
        CHECK((m < e_begin || m >= e_end));
        CHECK(seen.insert(m).second);  // disjoint between groups
      }
    }
    CHECK(seen.size() == 12 - (e_end - e_begin));
  }
}

TEST_CASE("configuration errors") {
  CHECK_THROWS_AS(build_partition(4, 4, 0, 0, true), std::invalid_argument);
  CHECK_THROWS_AS(build_partition(4, 4, 2, 5, true), std::invalid_argument);
  CHECK_THROWS_AS(build_partition(0, 4, 2, 1, true), std::invalid_argument);
  // Disjoint groups must fit beside the block.
  CHECK_THROWS_AS(build_partition(8, 8, 4, 5, false), std::invalid_argument);
}

TEST_CASE("cross-attention maps queries to blocks proportionally") {
  const PartitionSpec spec = build_partition(4, 8, 2, 0, true);
  CHECK(spec.e_range(0) == std::pair<std::size_t, std::size_t>{0, 2});
  CHECK(spec.e_range(3) == std::pair<std::size_t, std::size_t>{6, 8});
}

TEST_SUITE_END();
