#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vwsd/autodiff.hpp"
#include "vwsd/embedding.hpp"
#include "vwsd/tensor.hpp"

namespace vwsd {

/// Retrieved images per context fed to the fusers.
inline constexpr std::size_t kRetrievedPerContext = 3;
/// Context embedding plus the retrieved images.
inline constexpr std::size_t kFusionSources = 1 + kRetrievedPerContext;

struct FusionInput {
  Embedding context;
  std::array<Embedding, kRetrievedPerContext> retrieved;
  std::vector<Embedding> candidates;
  std::optional<std::size_t> gold;

  /// The four source embeddings in order: context, r1, r2, r3.
  std::array<std::span<const float>, kFusionSources> sources() const;
  std::size_t dim() const noexcept { return context.size(); }
  /// Throws DimensionMismatch / Error on inconsistent shapes or gold index.
  void validate() const;
};

/// Pads retrieved images to exactly three: the last one is repeated, and an
/// empty list is replaced by three copies of the context. Extra hits beyond
/// three are dropped.
FusionInput make_fusion_input(Embedding context, std::span<const Embedding> retrieved,
                              std::vector<Embedding> candidates,
                              std::optional<std::size_t> gold = std::nullopt);

enum class FuserKind { average, mlp, transformer, clip_aug };

std::string_view to_string(FuserKind kind);
/// Accepts "average", "mlp", "transformer", "clip-aug". Throws ConfigError.
FuserKind parse_fuser_kind(std::string_view name);

struct FuserConfig {
  FuserKind kind = FuserKind::average;
  std::size_t dim = kDefaultDim;
  std::size_t hidden = 0;    // MLP hidden width; 0 means 2 * dim
  std::size_t layers = 2;    // transformer encoder layers
  std::size_t heads = 8;     // attention heads per layer
  std::size_t ff_width = 0;  // transformer feed-forward width; 0 means 4 * dim
  double scale = kDefaultScale;
  double dropout = 0.0;

  std::size_t mlp_hidden() const noexcept { return hidden ? hidden : 2 * dim; }
  std::size_t ff_inner() const noexcept { return ff_width ? ff_width : 4 * dim; }
  /// Throws ConfigError for impossible shapes (e.g. dim not divisible by heads).
  void validate() const;
};

template <class T>
struct NamedTensor {
  std::string name;
  Matrix<T> value;
};

/// Trainable weights of the MLP or transformer fuser, in a fixed order.
/// Weight matrices map row vectors: y = x W + b.
template <class T>
struct FuserParams {
  FuserConfig config;
  std::vector<NamedTensor<T>> tensors;

  const Matrix<T>& get(std::string_view name) const;
  Matrix<T>& get(std::string_view name);
  std::size_t parameter_count() const;

  template <class U>
  FuserParams<U> converted() const {
    FuserParams<U> out{config, {}};
    for (const auto& t : tensors) out.tensors.push_back({t.name, Matrix<U>::converted(t.value)});
    return out;
  }
};

using MlpParams = FuserParams<float>;
using TransformerParams = FuserParams<float>;

/// Fresh parameters: weights and biases uniform in +-1/sqrt(fan_in),
/// layer-norm gains 1 and biases 0, drawn from a seeded mt19937_64.
template <class T>
FuserParams<T> init_params(const FuserConfig& config, std::uint64_t seed);

/// Checks tensor names, shapes, and that every value is finite.
template <class T>
void validate_params(const FuserParams<T>& params);

/// Training-time extras; absent during inference.
struct ForwardContext {
  std::mt19937_64* rng = nullptr;
  bool training = false;
};

/// Builds the fused, L2-normalized 1 x D embedding on `tape`. `weights`
/// are the tape leaves for `params.tensors`, in the same order.
template <class T>
typename Tape<T>::Var fused_embedding(Tape<T>& tape, const FuserParams<T>& params,
                                      std::span<const typename Tape<T>::Var> weights,
                                      const FusionInput& input, const ForwardContext& ctx = {});

/// Stacks the rows and runs the encoder layers without reordering; output
/// is seq x D. Exposed so tests can check equivariance directly.
template <class T>
typename Tape<T>::Var transformer_encode(Tape<T>& tape, const FuserParams<T>& params,
                                         std::span<const typename Tape<T>::Var> weights,
                                         typename Tape<T>::Var rows, const ForwardContext& ctx = {});

/// scale * cosine(fused, candidate) for every candidate, as a 1 x C node.
template <class T>
typename Tape<T>::Var candidate_logits(Tape<T>& tape, typename Tape<T>::Var fused,
                                       const FusionInput& input, double scale);

struct FusedScore {
  std::vector<double> probabilities;
  std::optional<Embedding> fused;
};

FusedScore average_fuse(const FusionInput& input, double scale = kDefaultScale);
/// Cosine softmax of the context embedding alone (the CLIP-aug baseline).
FusedScore context_only_fuse(const FusionInput& input, double scale = kDefaultScale);
FusedScore mlp_fuse(const FusionInput& input, const MlpParams& params);
FusedScore transformer_fuse(const FusionInput& input, const TransformerParams& params);

/// Dispatches on `kind`; `params` is required for the trainable fusers.
FusedScore fuse(FuserKind kind, const FusionInput& input, double scale,
                const FuserParams<float>* params);

/// Softmax of scale * cosine between a fused embedding and each candidate.
std::vector<double> score_candidates(std::span<const float> fused, const FusionInput& input,
                                     double scale);

/// Candidate indices by descending probability; ties keep ascending index.
std::vector<std::size_t> rank_candidates(std::span<const double> probabilities);
std::vector<std::size_t> rank_candidates(const FusedScore& score);

}  // namespace vwsd
