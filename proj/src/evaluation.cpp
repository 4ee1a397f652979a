#include "vwsd/evaluation.hpp"

#include <algorithm>

#include "vwsd/errors.hpp"

namespace vwsd {

std::size_t rank_of_gold(std::span<const std::size_t> ranking, std::size_t gold) {
  const auto it = std::find(ranking.begin(), ranking.end(), gold);
  if (it == ranking.end()) throw Error("gold index " + std::to_string(gold) + " not in ranking");
  return static_cast<std::size_t>(it - ranking.begin()) + 1;
}

double hit_at_1(std::span<const RankRecord> records) {
  if (records.empty()) throw Error("HIT@1 of an empty record set");
  std::size_t hits = 0;
  for (const auto& r : records) hits += r.gold_rank == 1 ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double mrr(std::span<const RankRecord> records) {
  if (records.empty()) throw Error("MRR of an empty record set");
  double total = 0.0;
  for (const auto& r : records) {
    if (r.gold_rank == 0) throw Error("gold rank must be 1-based");
    total += 1.0 / static_cast<double>(r.gold_rank);
  }
  return total / static_cast<double>(records.size());
}

RankReport make_report(std::vector<RankRecord> records) {
  RankReport report;
  if (!records.empty()) {
    report.hit_at_1 = hit_at_1(records);
    report.mrr = mrr(records);
  }
  report.records = std::move(records);
  return report;
}

PolysemyStats polysemy_stats(std::span<const std::string> target_words, const SenseInventory& inventory) {
  PolysemyStats stats;
  for (const auto& w : target_words) {
    ++stats.total;
    switch (inventory.sense_count(w)) {
      case 0: ++stats.not_in_inventory; break;
      case 1: ++stats.one; break;
      case 2: ++stats.two; break;
      default: ++stats.three_or_more; break;
    }
  }
  return stats;
}

}  // namespace vwsd
