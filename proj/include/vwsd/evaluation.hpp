#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vwsd/disambiguation.hpp"

namespace vwsd {

struct RankRecord {
  std::string sample_id;
  std::size_t gold_rank = 0;  // 1-based
};

struct RankReport {
  std::vector<RankRecord> records;
  double hit_at_1 = 0.0;
  double mrr = 0.0;
};

/// 1-based position of `gold` in `ranking`. Throws Error when absent.
std::size_t rank_of_gold(std::span<const std::size_t> ranking, std::size_t gold);

/// Fraction of records ranked first. Throws Error on an empty list.
double hit_at_1(std::span<const RankRecord> records);
/// Mean reciprocal gold rank. Throws Error on an empty list.
double mrr(std::span<const RankRecord> records);

RankReport make_report(std::vector<RankRecord> records);

/// Share of target lemmas by sense count. Lemmas missing from the inventory
/// are kept out of the three polysemy buckets and counted separately.
struct PolysemyStats {
  std::size_t total = 0;
  std::size_t one = 0;
  std::size_t two = 0;
  std::size_t three_or_more = 0;
  std::size_t not_in_inventory = 0;

  double percent(std::size_t count) const {
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(count) / static_cast<double>(total);
  }
};

PolysemyStats polysemy_stats(std::span<const std::string> target_words, const SenseInventory& inventory);

}  // namespace vwsd
