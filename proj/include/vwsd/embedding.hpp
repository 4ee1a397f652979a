#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace vwsd {

/// Dense embedding in the shared text/image latent space. Stored as 32-bit
/// floats; all reductions over it are carried out in double precision.
using Embedding = std::vector<float>;

inline constexpr std::size_t kDefaultDim = 512;

/// Inverse temperature applied to cosine similarities before softmax.
inline constexpr double kDefaultScale = 100.0;

/// Norms at or below this are treated as zero vectors.
inline constexpr double kMinNorm = 1e-12;

double dot(std::span<const float> a, std::span<const float> b);
double l2_norm(std::span<const float> v);

/// dot(a,b) / (|a| |b|). Throws DimensionMismatch or DegenerateEmbedding.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

/// Unit-length copy of `v`. Throws DegenerateEmbedding for zero vectors.
Embedding l2_normalize(std::span<const float> v);

/// Numerically stable softmax of `scale * scores`.
std::vector<double> softmax(std::span<const double> scores, double scale = kDefaultScale);

}  // namespace vwsd
