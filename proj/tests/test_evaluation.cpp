#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "vwsd/errors.hpp"
#include "vwsd/evaluation.hpp"

using namespace vwsd;

namespace {

std::vector<RankRecord> records(std::initializer_list<std::size_t> ranks) {
  std::vector<RankRecord> out;
  for (auto r : ranks) out.push_back({"s" + std::to_string(out.size()), r});
  return out;
}

SenseInventory inventory_with_counts(const std::vector<std::pair<std::string, int>>& lemmas) {
  SenseInventory inv;
  for (const auto& [lemma, n] : lemmas) {
    for (int i = 0; i < n; ++i) inv.add(lemma, {lemma + ".n.0" + std::to_string(i + 1), "gloss " + std::to_string(i), {}});
  }
  return inv;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("metric examples") {
    CHECK(hit_at_1(records({1, 1})) == 1.0);
    CHECK(mrr(records({1, 1})) == 1.0);
    CHECK(mrr(records({2})) == 0.5);
    CHECK(hit_at_1(records({2})) == 0.0);
    CHECK(std::abs(hit_at_1(records({1, 2, 4})) - 1.0 / 3.0) < 1e-9);
    CHECK(std::abs(mrr(records({1, 2, 4})) - 7.0 / 12.0) < 1e-9);
    CHECK(mrr(records({1, 2, 4})) == doctest::Approx(0.583333).epsilon(1e-6));
    CHECK_THROWS_AS(hit_at_1(records({})), Error);
    CHECK_THROWS_AS(mrr(records({})), Error);
  }

  TEST_CASE("rank of gold") {
    const std::vector<std::size_t> ranking{3, 0, 2, 1};
    CHECK(rank_of_gold(ranking, 3) == 1);
    CHECK(rank_of_gold(ranking, 1) == 4);
    CHECK_THROWS_AS(rank_of_gold(ranking, 7), Error);
  }

  TEST_CASE("metric properties on random rank lists") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<RankRecord> recs;
      const std::size_t n = 1 + rng() % 40;
      for (std::size_t i = 0; i < n; ++i) recs.push_back({"", 1 + rng() % 10});
      const double h = hit_at_1(recs);
      const double m = mrr(recs);
      CHECK(h <= m);
      CHECK(m > 0.0);
      CHECK(m <= 1.0);
      const bool all_first = std::all_of(recs.begin(), recs.end(), [](const auto& r) { return r.gold_rank == 1; });
      CHECK((h == 1.0) == all_first);
      CHECK((m == 1.0) == all_first);
      std::shuffle(recs.begin(), recs.end(), rng);
      CHECK(hit_at_1(recs) == doctest::Approx(h).epsilon(1e-15));
      CHECK(mrr(recs) == doctest::Approx(m).epsilon(1e-12));
    }
  }

  TEST_CASE("report bundles metrics") {
    const auto r = make_report(records({1, 3}));
    CHECK(r.records.size() == 2);
    CHECK(r.hit_at_1 == 0.5);
    CHECK(r.mrr == doctest::Approx(2.0 / 3.0));
  }

  TEST_CASE("polysemy buckets") {
    const auto inv = inventory_with_counts({{"a", 1}, {"b", 1}, {"c", 2}, {"d", 3}, {"e", 5}});
    const std::vector<std::string> words{"a", "b", "c", "d", "e"};
    const auto s = polysemy_stats(words, inv);
    CHECK(s.total == 5);
    CHECK(s.percent(s.one) == doctest::Approx(40.0));
    CHECK(s.percent(s.two) == doctest::Approx(20.0));
    CHECK(s.percent(s.three_or_more) == doctest::Approx(40.0));
    CHECK(s.not_in_inventory == 0);

    const std::vector<std::string> mono{"a", "b", "A"};
    CHECK(polysemy_stats(mono, inv).percent(polysemy_stats(mono, inv).one) == doctest::Approx(100.0));

    const std::vector<std::string> with_missing{"a", "zzz", "c", "yyy"};
    const auto m = polysemy_stats(with_missing, inv);
    CHECK(m.not_in_inventory == 2);
    CHECK(m.one == 1);
    CHECK(m.two == 1);
  }

  TEST_CASE("bucket percentages sum to one hundred") {
    const auto inv = inventory_with_counts({{"a", 1}, {"b", 2}, {"c", 3}, {"d", 4}});
    const std::vector<std::string> pool{"a", "b", "c", "d", "x"};
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<std::string> words(1 + rng() % 50);
      for (auto& w : words) w = pool[rng() % pool.size()];
      const auto s = polysemy_stats(words, inv);
      const double sum = s.percent(s.one) + s.percent(s.two) + s.percent(s.three_or_more) + s.percent(s.not_in_inventory);
      CHECK(std::abs(sum - 100.0) < 1e-9);
    }
  }
}
