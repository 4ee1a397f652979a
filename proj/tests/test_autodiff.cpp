#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "vwsd/autodiff.hpp"
#include "vwsd/errors.hpp"

using namespace vwsd;

namespace {

using T = Tape<double>;
using M = Matrix<double>;
using Builder = std::function<T::Var(T&, const std::vector<T::Var>&)>;

M random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  M m(r, c);
  for (auto& x : m.data) x = u(rng);
  return m;
}

double evaluate(const Builder& f, const std::vector<M>& inputs) {
  T tape;
  std::vector<T::Var> vars;
  for (const auto& m : inputs) vars.push_back(tape.input(m));
  return tape.value(f(tape, vars)).data[0];
}

// Max relative error between backward() and central differences.
double gradient_error(const Builder& f, std::vector<M> inputs, double eps = 1e-5) {
  T tape;
  std::vector<T::Var> vars;
  for (const auto& m : inputs) vars.push_back(tape.input(m));
  tape.backward(f(tape, vars));
  double worst = 0.0;
  for (std::size_t v = 0; v < inputs.size(); ++v) {
    const M g = tape.grad(vars[v]);
    for (std::size_t i = 0; i < inputs[v].data.size(); ++i) {
      const double saved = inputs[v].data[i];
      inputs[v].data[i] = saved + eps;
      const double up = evaluate(f, inputs);
      inputs[v].data[i] = saved - eps;
      const double down = evaluate(f, inputs);
      inputs[v].data[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double diff = std::abs(numeric - g.data[i]);
      const double err = std::abs(g.data[i]) < 1e-8 ? diff : diff / std::max(std::abs(g.data[i]), std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// Weighted sum so that every output entry gets a distinct upstream gradient.
T::Var weighted_sum(T& t, T::Var x) {
  const M& v = t.value(x);
  M w(v.rows, v.cols);
  for (std::size_t i = 0; i < w.data.size(); ++i) w.data[i] = 0.3 + 0.17 * double(i % 7) - 0.05 * double(i % 3);
  return t.sum(t.mul(x, t.constant(w)));
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("sum of squares") {
    T t;
    auto x = t.input(M::row_vector(std::vector<double>{1, 2, 3}));
    t.backward(t.sum(t.mul(x, x)));
    CHECK(t.grad(x).data == std::vector<double>{2, 4, 6});
  }

  TEST_CASE("sum of a matrix-vector product has the outer-product gradient") {
    // f(W) = sum(W x), W 2x2, x = [5, 7] as a column: df/dW_ij = x_j.
    T t;
    M w(2, 2);
    w.data = {1, 2, 3, 4};
    M x(2, 1);
    x.data = {5, 7};
    auto wv = t.input(w);
    auto xv = t.input(x);
    auto y = t.matmul(wv, xv);
    CHECK(t.value(y).data == std::vector<double>{19, 43});
    t.backward(t.sum(y));
    CHECK(t.grad(wv).data == std::vector<double>{5, 7, 5, 7});
    CHECK(t.grad(xv).data == std::vector<double>{4, 6});
  }

  TEST_CASE("gradients accumulate over every consumer") {
    T t;
    auto x = t.input(M::row_vector(std::vector<double>{2}));
    auto y = t.add(t.mul(x, x), t.scale(x, 3.0));  // x^2 + 3x
    t.backward(t.sum(y));
    CHECK(t.grad(x).data[0] == doctest::Approx(7.0));
  }

  TEST_CASE("unreachable leaves get zero gradient and constants none") {
    T t;
    auto a = t.input(M::row_vector(std::vector<double>{1, 2}));
    auto b = t.input(M::row_vector(std::vector<double>{3, 4}));
    auto c = t.constant(M::row_vector(std::vector<double>{1, 1}));
    t.backward(t.sum(t.mul(a, c)));
    CHECK(t.grad(b).data == std::vector<double>{0, 0});
    CHECK(t.grad(a).data == std::vector<double>{1, 1});
    CHECK_FALSE(t.requires_grad(c));
  }

  TEST_CASE("backward needs a scalar") {
    T t;
    auto a = t.input(M(2, 2, 1.0));
    CHECK_THROWS_AS(t.backward(a), Error);
  }

  TEST_CASE("shape errors") {
    T t;
    auto a = t.input(M(2, 3, 1.0));
    auto b = t.input(M(2, 3, 1.0));
    CHECK_THROWS_AS(t.matmul(a, b), DimensionMismatch);
    CHECK_THROWS_AS(t.add(a, t.input(M(3, 2))), DimensionMismatch);
    CHECK_THROWS_AS(t.add_bias(a, t.input(M(1, 2))), DimensionMismatch);
    CHECK_THROWS_AS(t.slice_cols(a, 2, 2), DimensionMismatch);
  }

  TEST_CASE("zero rows cannot be normalized") {
    T t;
    auto a = t.input(M(1, 3, 0.0));
    CHECK_THROWS_WITH_AS(t.l2_normalize_rows(a), doctest::Contains("degenerate fused embedding"), DegenerateEmbedding);
  }

  TEST_CASE("forward values of composite primitives") {
    T t;
    M x(2, 3);
    x.data = {1, 2, 3, -1, 0, 1};
    auto xv = t.input(x);
    const auto& sm = t.value(t.softmax_rows(xv));
    for (std::size_t r = 0; r < 2; ++r) {
      double total = 0;
      for (double p : sm.row(r)) total += p;
      CHECK(total == doctest::Approx(1.0));
    }
    const auto& ln = t.value(t.layer_norm_rows(xv, t.input(M(1, 3, 1.0)), t.input(M(1, 3, 0.0)), 0.0));
    CHECK(ln(0, 0) == doctest::Approx(-std::sqrt(1.5)));
    CHECK(ln(0, 1) == doctest::Approx(0.0));
    CHECK(t.value(t.sum_rows(xv)).data == std::vector<double>{0, 2, 4});
    const auto& n = t.value(t.l2_normalize_rows(xv));
    CHECK(n(1, 0) == doctest::Approx(-1 / std::sqrt(2.0)));
    auto logits = t.input(M::row_vector(std::vector<double>{1, 0}));
    CHECK(t.value(t.cross_entropy(logits, 0)).data[0] == doctest::Approx(0.3133).epsilon(1e-4));
  }

  TEST_CASE("every primitive matches central differences") {
    std::mt19937_64 rng(17);
    struct Case {
      const char* name;
      std::vector<M> inputs;
      Builder f;
    };
    auto R = [&](std::size_t r, std::size_t c) { return random_matrix(rng, r, c); };
    std::vector<Case> cases;
    cases.push_back({"matmul", {R(3, 4), R(4, 2)}, [](T& t, auto& v) { return weighted_sum(t, t.matmul(v[0], v[1])); }});
    cases.push_back({"matmul_nt", {R(3, 4), R(5, 4)}, [](T& t, auto& v) { return weighted_sum(t, t.matmul_nt(v[0], v[1])); }});
    cases.push_back({"add", {R(2, 3), R(2, 3)}, [](T& t, auto& v) { return weighted_sum(t, t.add(v[0], v[1])); }});
    cases.push_back({"add_bias", {R(4, 3), R(1, 3)}, [](T& t, auto& v) { return weighted_sum(t, t.add_bias(v[0], v[1])); }});
    cases.push_back({"mul", {R(2, 3), R(2, 3)}, [](T& t, auto& v) { return weighted_sum(t, t.mul(v[0], v[1])); }});
    cases.push_back({"scale", {R(2, 3)}, [](T& t, auto& v) { return weighted_sum(t, t.scale(v[0], -2.5)); }});
    cases.push_back({"relu", {R(3, 5)}, [](T& t, auto& v) { return weighted_sum(t, t.relu(v[0])); }});
    cases.push_back({"concat_cols", {R(2, 3), R(2, 2), R(2, 1)}, [](T& t, auto& v) {
                       return weighted_sum(t, t.concat_cols(std::span<const T::Var>(v.data(), v.size())));
                     }});
    cases.push_back({"stack_rows", {R(1, 3), R(2, 3), R(1, 3)}, [](T& t, auto& v) {
                       return weighted_sum(t, t.stack_rows(std::span<const T::Var>(v.data(), v.size())));
                     }});
    cases.push_back({"slice_cols", {R(3, 6)}, [](T& t, auto& v) { return weighted_sum(t, t.slice_cols(v[0], 2, 3)); }});
    cases.push_back({"softmax_rows", {R(3, 4)}, [](T& t, auto& v) { return weighted_sum(t, t.softmax_rows(v[0])); }});
    cases.push_back({"layer_norm_rows", {R(3, 5), R(1, 5), R(1, 5)}, [](T& t, auto& v) {
                       return weighted_sum(t, t.layer_norm_rows(v[0], v[1], v[2], 1e-5));
                     }});
    cases.push_back({"sum_rows", {R(4, 3)}, [](T& t, auto& v) { return weighted_sum(t, t.sum_rows(v[0])); }});
    cases.push_back({"l2_normalize_rows", {R(3, 4)}, [](T& t, auto& v) { return weighted_sum(t, t.l2_normalize_rows(v[0])); }});
    cases.push_back({"cross_entropy", {R(1, 6)}, [](T& t, auto& v) { return t.cross_entropy(t.scale(v[0], 4.0), 2); }});
    cases.push_back({"attention block", {R(4, 6), R(6, 6), R(6, 6)}, [](T& t, auto& v) {
                       auto q = t.matmul(v[0], v[1]);
                       auto k = t.matmul(v[0], v[2]);
                       auto a = t.softmax_rows(t.scale(t.matmul_nt(q, k), 0.5));
                       return weighted_sum(t, t.matmul(a, v[0]));
                     }});
    for (auto& c : cases) {
      CAPTURE(c.name);
      CHECK(gradient_error(c.f, c.inputs) < 1e-6);
    }
  }

  TEST_CASE("dropout keeps expectation and routes gradient through kept entries") {
    std::mt19937_64 rng(3);
    T t;
    auto x = t.input(M(1, 10000, 1.0));
    auto y = t.dropout(x, 0.25, rng);
    const auto& v = t.value(y);
    double total = 0;
    std::size_t kept = 0;
    for (double e : v.data) {
      total += e;
      if (e != 0.0) {
        ++kept;
        CHECK(e == doctest::Approx(1.0 / 0.75));
      }
    }
    CHECK(total / 10000 == doctest::Approx(1.0).epsilon(0.03));
    t.backward(t.sum(y));
    const auto g = t.grad(x);
    for (std::size_t i = 0; i < g.data.size(); ++i) CHECK((g.data[i] != 0.0) == (v.data[i] != 0.0));
    CHECK(kept > 0);

    T t0;
    auto x0 = t0.input(M(2, 2, 3.0));
    CHECK(t0.value(t0.dropout(x0, 0.0, rng)).data == std::vector<double>(4, 3.0));
  }

  TEST_CASE("float tape agrees with double tape") {
    std::mt19937_64 rng(9);
    const auto a = random_matrix(rng, 3, 4);
    const auto b = random_matrix(rng, 4, 2);
    Tape<float> tf;
    auto fa = tf.input(Matrix<float>::converted(a));
    auto fb = tf.input(Matrix<float>::converted(b));
    tf.backward(tf.sum(tf.softmax_rows(tf.matmul(fa, fb))));
    T td;
    auto da = td.input(a);
    auto db = td.input(b);
    td.backward(td.sum(td.softmax_rows(td.matmul(da, db))));
    const auto& vf = tf.value(tf.matmul(fa, fb));
    const auto& vd = td.value(td.matmul(da, db));
    for (std::size_t i = 0; i < vf.data.size(); ++i) CHECK(vf.data[i] == doctest::Approx(vd.data[i]).epsilon(1e-6));
  }
}
