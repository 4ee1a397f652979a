#include "vwsd/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vwsd/errors.hpp"

namespace vwsd {

namespace {

void check_dims(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
  }
}

}  // namespace

double dot(std::span<const float> a, std::span<const float> b) {
  check_dims(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

double l2_norm(std::span<const float> v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(acc);
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  check_dims(a, b);
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na <= kMinNorm || nb <= kMinNorm) {
    throw DegenerateEmbedding("cosine similarity of a zero-norm vector");
  }
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Embedding l2_normalize(std::span<const float> v) {
  const double n = l2_norm(v);
  if (!(n > kMinNorm)) throw DegenerateEmbedding("cannot normalize a zero-norm vector");
  Embedding out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(v[i]) / n);
  }
  return out;
}

std::vector<double> softmax(std::span<const double> scores, double scale) {
  if (scores.empty()) throw Error("softmax of an empty score list");
  if (!(scale > 0.0)) throw Error("softmax scale must be positive");
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scale * (scores[i] - top));
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

}  // namespace vwsd
