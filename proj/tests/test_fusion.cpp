#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "support/fusion_oracle.hpp"
#include "support/synthetic.hpp"
#include "vwsd/errors.hpp"
#include "vwsd/fusion.hpp"

using namespace vwsd;

namespace {

FusionInput random_input(std::mt19937_64& rng, std::size_t dim, std::size_t candidates = 10) {
  FusionInput in;
  in.context = testing::random_vector(rng, dim);
  for (auto& r : in.retrieved) r = testing::random_vector(rng, dim);
  for (std::size_t c = 0; c < candidates; ++c) in.candidates.push_back(testing::random_vector(rng, dim));
  return in;
}

FuserConfig small(FuserKind kind, std::size_t dim = 8) {
  FuserConfig c;
  c.kind = kind;
  c.dim = dim;
  if (kind == FuserKind::mlp) c.hidden = 2 * dim;
  if (kind == FuserKind::transformer) {
    c.heads = 2;
    c.layers = 1;
  }
  return c;
}

double total(const std::vector<double>& p) { return std::accumulate(p.begin(), p.end(), 0.0); }

}  // namespace

TEST_SUITE("fusion") {
  TEST_CASE("average fuser hand example") {
    FusionInput in;
    in.context = {1, 0};
    in.retrieved = {Embedding{1, 0}, Embedding{1, 0}, Embedding{1, 0}};
    in.candidates = {{1, 0}, {0, 1}};
    const auto s = average_fuse(in, 1.0);
    CHECK(s.probabilities[0] == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(s.probabilities[1] == doctest::Approx(0.2689).epsilon(1e-4));
    CHECK_FALSE(s.fused.has_value());
    CHECK(rank_candidates(s) == std::vector<std::size_t>{0, 1});
  }

  TEST_CASE("average of identical sources is the single-source softmax exactly") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 200; ++i) {
      auto in = random_input(rng, 16);
      in.retrieved = {in.context, in.context, in.context};
      CHECK(average_fuse(in).probabilities == score_candidates(in.context, in, kDefaultScale));
      CHECK(context_only_fuse(in).probabilities == average_fuse(in).probabilities);
    }
  }

  TEST_CASE("average fuser is candidate-equivariant and source-scale invariant") {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 100; ++i) {
      const auto in = random_input(rng, 8);
      const auto base = average_fuse(in, 10.0).probabilities;
      std::vector<std::size_t> perm(in.candidates.size());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      auto shuffled = in;
      for (std::size_t c = 0; c < perm.size(); ++c) shuffled.candidates[c] = in.candidates[perm[c]];
      const auto p = average_fuse(shuffled, 10.0).probabilities;
      for (std::size_t c = 0; c < perm.size(); ++c) CHECK(p[c] == doctest::Approx(base[perm[c]]).epsilon(1e-12));

      auto scaled = in;
      for (auto& x : scaled.retrieved[1]) x *= 4.5f;
      const auto q = average_fuse(scaled, 10.0).probabilities;
      for (std::size_t c = 0; c < q.size(); ++c) CHECK(std::abs(q[c] - base[c]) < 1e-6);
    }
  }

  TEST_CASE("padding of retrieved images") {
    const Embedding ctx{1, 0};
    const std::vector<Embedding> cands{{1, 0}, {0, 1}};
    const auto none = make_fusion_input(ctx, std::vector<Embedding>{}, cands);
    for (const auto& r : none.retrieved) CHECK(r == ctx);
    const auto two = make_fusion_input(ctx, std::vector<Embedding>{{0, 1}, {1, 1}}, cands);
    CHECK(two.retrieved[1] == Embedding{1, 1});
    CHECK(two.retrieved[2] == Embedding{1, 1});
    const auto many = make_fusion_input(ctx, std::vector<Embedding>{{0, 1}, {1, 1}, {2, 1}, {3, 1}}, cands);
    CHECK(many.retrieved[2] == Embedding{2, 1});
  }

  TEST_CASE("input validation") {
    std::mt19937_64 rng(3);
    auto in = random_input(rng, 4);
    in.gold = 10;
    CHECK_THROWS_AS(in.validate(), Error);
    in.gold = 9;
    in.validate();
    in.candidates[3].push_back(1.0f);
    CHECK_THROWS_AS(average_fuse(in), DimensionMismatch);
  }

  TEST_CASE("fuser kind names") {
    CHECK(parse_fuser_kind("clip-aug") == FuserKind::clip_aug);
    CHECK(parse_fuser_kind("transformer") == FuserKind::transformer);
    CHECK(to_string(FuserKind::mlp) == "mlp");
    CHECK_THROWS_AS(parse_fuser_kind("lstm"), ConfigError);
  }

  TEST_CASE("parameter layout and initialization") {
    const auto mlp = init_params<float>(small(FuserKind::mlp), 1);
    CHECK(mlp.get("mlp.w1").rows == 32);
    CHECK(mlp.get("mlp.w1").cols == 16);
    CHECK(mlp.get("mlp.w2").rows == 16);
    CHECK(mlp.get("mlp.b2").cols == 8);
    CHECK(mlp.parameter_count() == 32 * 16 + 16 + 16 * 8 + 8);
    const float bound = 1.0f / std::sqrt(32.0f);
    for (float x : mlp.get("mlp.w1").data) CHECK(std::abs(x) <= bound);

    FuserConfig def;
    def.kind = FuserKind::mlp;
    CHECK(def.mlp_hidden() == 1024);
    def.kind = FuserKind::transformer;
    CHECK(def.ff_inner() == 2048);
    CHECK(def.layers == 2);
    CHECK(def.heads == 8);

    const auto tr = init_params<float>(small(FuserKind::transformer), 1);
    CHECK(tr.tensors.size() == 16);
    CHECK(tr.get("enc.0.ff.w1").cols == 32);
    CHECK(tr.get("enc.0.ln1.gain").data == std::vector<float>(8, 1.0f));
    CHECK(tr.get("enc.0.ln2.bias").data == std::vector<float>(8, 0.0f));

    CHECK(init_params<float>(small(FuserKind::mlp), 5).tensors[0].value == init_params<float>(small(FuserKind::mlp), 5).tensors[0].value);
    CHECK_FALSE(init_params<float>(small(FuserKind::mlp), 5).tensors[0].value == mlp.tensors[0].value);

    FuserConfig bad = small(FuserKind::transformer);
    bad.heads = 3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("mlp forward matches the reference oracle") {
    std::mt19937_64 rng(4);
    for (int seed = 1; seed <= 10; ++seed) {
      const auto params = init_params<float>(small(FuserKind::mlp), seed);
      const auto in = random_input(rng, 8);
      const auto got = mlp_fuse(in, params);
      const auto fused = testing::oracle_mlp_fused(params, in);
      for (std::size_t i = 0; i < fused.size(); ++i) CHECK(std::abs((*got.fused)[i] - fused[i]) < 1e-6);
      const auto p = testing::oracle_probabilities(fused, in, params.config.scale);
      for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(got.probabilities[i] - p[i]) < 1e-4);
    }
  }

  TEST_CASE("mlp with zero weights is degenerate") {
    auto params = init_params<float>(small(FuserKind::mlp), 1);
    for (auto& t : params.tensors) std::fill(t.value.data.begin(), t.value.data.end(), 0.0f);
    std::mt19937_64 rng(5);
    CHECK_THROWS_WITH_AS(mlp_fuse(random_input(rng, 8), params), doctest::Contains("degenerate fused embedding"),
                         DegenerateEmbedding);
  }

  TEST_CASE("identity-like mlp reduces to context-only scoring") {
    auto params = init_params<float>(small(FuserKind::mlp), 1);
    for (auto& t : params.tensors) std::fill(t.value.data.begin(), t.value.data.end(), 0.0f);
    for (std::size_t i = 0; i < 8; ++i) {
      params.get("mlp.w1")(i, i) = 1.0f;
      params.get("mlp.w2")(i, i) = 1.0f;
    }
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 50; ++trial) {
      auto in = random_input(rng, 8);
      for (auto& x : in.context) x = std::abs(x);
      const auto got = mlp_fuse(in, params).probabilities;
      const auto want = context_only_fuse(in, params.config.scale).probabilities;
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-5);
    }
  }

  TEST_CASE("transformer forward matches the reference oracle") {
    std::mt19937_64 rng(7);
    for (int seed = 1; seed <= 10; ++seed) {
      const auto params = init_params<float>(small(FuserKind::transformer), seed);
      const auto in = random_input(rng, 8);
      const auto got = transformer_fuse(in, params);
      const auto fused = testing::oracle_transformer_fused(params, in);
      for (std::size_t i = 0; i < fused.size(); ++i) CHECK(std::abs((*got.fused)[i] - fused[i]) < 1e-5);
    }
  }

  TEST_CASE("encoder is permutation-equivariant") {
    const auto params = init_params<double>(small(FuserKind::transformer), 3);
    std::mt19937_64 rng(8);
    Matrix<double> rows(4, 8);
    for (auto& x : rows.data) x = std::normal_distribution<double>(0, 1)(rng);
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    Matrix<double> permuted(4, 8);
    for (std::size_t r = 0; r < 4; ++r) std::copy(rows.row(perm[r]).begin(), rows.row(perm[r]).end(), permuted.row(r).begin());

    auto encode = [&](const Matrix<double>& x) {
      Tape<double> tape;
      std::vector<Tape<double>::Var> w;
      for (const auto& t : params.tensors) w.push_back(tape.leaf(t.value, false));
      return tape.value(transformer_encode(tape, params, std::span<const Tape<double>::Var>(w), tape.constant(x)));
    };
    const auto a = encode(rows);
    const auto b = encode(permuted);
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 8; ++c) CHECK(b(r, c) == doctest::Approx(a(perm[r], c)).epsilon(1e-12));
    }
  }

  TEST_CASE("transformer fuser is exactly invariant to source order") {
    FuserConfig cfg;
    cfg.kind = FuserKind::transformer;
    cfg.dim = 64;
    const auto params = init_params<float>(cfg, 11);
    std::mt19937_64 rng(9);
    const auto in = random_input(rng, 64);
    const auto base = transformer_fuse(in, params).probabilities;
    std::array<Embedding, 4> src{in.context, in.retrieved[0], in.retrieved[1], in.retrieved[2]};
    std::array<int, 4> idx{0, 1, 2, 3};
    int count = 0;
    do {
      auto p = in;
      p.context = src[idx[0]];
      p.retrieved = {src[idx[1]], src[idx[2]], src[idx[3]]};
      CHECK(transformer_fuse(p, params).probabilities == base);
      ++count;
    } while (std::next_permutation(idx.begin(), idx.end()));
    CHECK(count == 24);
  }

  TEST_CASE("all fusers produce distributions and valid rankings") {
    std::mt19937_64 rng(10);
    const auto mlp = init_params<float>(small(FuserKind::mlp), 2);
    const auto tr = init_params<float>(small(FuserKind::transformer), 2);
    for (int i = 0; i < 200; ++i) {
      const auto in = random_input(rng, 8, 1 + i % 12);
      for (const auto& s : {average_fuse(in), context_only_fuse(in), mlp_fuse(in, mlp), transformer_fuse(in, tr)}) {
        CHECK(std::abs(total(s.probabilities) - 1.0) < 1e-6);
        auto r = rank_candidates(s);
        std::sort(r.begin(), r.end());
        for (std::size_t c = 0; c < r.size(); ++c) CHECK(r[c] == c);
      }
    }
  }

  TEST_CASE("ranking order and ties") {
    CHECK(rank_candidates(std::vector<double>{0.1, 0.7, 0.2}) == std::vector<std::size_t>{1, 2, 0});
    CHECK(rank_candidates(std::vector<double>(5, 0.2)) == std::vector<std::size_t>{0, 1, 2, 3, 4});
  }

  TEST_CASE("fuse dispatch") {
    std::mt19937_64 rng(12);
    const auto in = random_input(rng, 8);
    CHECK(fuse(FuserKind::average, in, 5.0, nullptr).probabilities == average_fuse(in, 5.0).probabilities);
    CHECK_THROWS_AS(fuse(FuserKind::mlp, in, 5.0, nullptr), ConfigError);
    const auto tr = init_params<float>(small(FuserKind::transformer), 2);
    CHECK_THROWS_AS(fuse(FuserKind::mlp, in, 5.0, &tr), ConfigError);
    auto broken = init_params<float>(small(FuserKind::mlp), 2);
    broken.get("mlp.b1").data[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(mlp_fuse(in, broken), Error);
  }
}
