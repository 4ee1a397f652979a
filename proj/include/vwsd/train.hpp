#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "vwsd/fusion.hpp"

namespace vwsd {

/// -log p[gold] for an explicit probability vector.
double cross_entropy_loss(std::span<const double> probabilities, std::size_t gold);
/// -log softmax(logits)[gold], evaluated with log-sum-exp.
double cross_entropy_from_logits(std::span<const double> logits, std::size_t gold);

/// Cross-entropy of the fuser's scaled-cosine logits against the gold
/// candidate. When `grads` is given it receives d(loss)/d(tensor) for every
/// parameter tensor, in `params.tensors` order.
template <class T>
double fusion_loss(const FuserParams<T>& params, const FusionInput& input,
                   std::vector<Matrix<T>>* grads = nullptr, const ForwardContext& ctx = {});

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <class T>
struct AdamState {
  std::vector<Matrix<T>> first_moment;
  std::vector<Matrix<T>> second_moment;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update. Moments always decay; an entry whose
/// gradient is exactly zero keeps its current value. Throws Error naming
/// the tensor if a gradient is not finite.
template <class T>
void adam_step(FuserParams<T>& params, std::span<const Matrix<T>> grads, AdamState<T>& state,
               double learning_rate, const AdamOptions& options = {});

struct TrainConfig {
  FuserConfig fuser;
  std::size_t epochs = 3;
  double learning_rate = 5e-5;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  /// 3 epochs at 5e-5 for the MLP fuser, 5 epochs at 3e-6 for the
  /// transformer fuser.
  static TrainConfig defaults(FuserKind kind, std::size_t dim = kDefaultDim);
  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double train_hit_at_1 = 0.0;
  double train_mrr = 0.0;
  std::optional<double> val_hit_at_1;
  std::optional<double> val_mrr;
};

struct TrainReport {
  std::vector<EpochStats> history;
  FuserParams<float> params;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch Adam on cross-entropy. Samples are reshuffled every epoch
/// with a generator seeded from `config.seed`; gradients within a batch are
/// summed in batch order. `initial` resumes from existing parameters.
TrainReport train_fuser(const TrainConfig& config, std::span<const FusionInput> train_set,
                        std::span<const FusionInput> val_set,
                        std::optional<FuserParams<float>> initial = std::nullopt,
                        const EpochCallback& on_epoch = {});

/// HIT@1 and MRR of a fuser over inputs that carry gold labels.
std::pair<double, double> evaluate_fuser(const FuserParams<float>& params,
                                         std::span<const FusionInput> inputs);

}  // namespace vwsd
