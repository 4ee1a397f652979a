#include "vwsd/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "vwsd/errors.hpp"
#include "vwsd/evaluation.hpp"

namespace vwsd {

double cross_entropy_loss(std::span<const double> probabilities, std::size_t gold) {
  if (gold >= probabilities.size()) {
    throw Error("gold index " + std::to_string(gold) + " out of range");
  }
  return -std::log(probabilities[gold]);
}

double cross_entropy_from_logits(std::span<const double> logits, std::size_t gold) {
  if (gold >= logits.size()) throw Error("gold index " + std::to_string(gold) + " out of range");
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - top);
  return top + std::log(total) - logits[gold];
}

template <class T>
double fusion_loss(const FuserParams<T>& params, const FusionInput& input,
                   std::vector<Matrix<T>>* grads, const ForwardContext& ctx) {
  if (!input.gold) throw Error("fusion loss needs a gold label");
  using Var = typename Tape<T>::Var;
  Tape<T> tape;
  std::vector<Var> weights;
  weights.reserve(params.tensors.size());
  for (const auto& t : params.tensors) weights.push_back(tape.leaf(t.value, grads != nullptr));
  const Var fused = fused_embedding(tape, params, std::span<const Var>(weights), input, ctx);
  const Var logits = candidate_logits(tape, fused, input, params.config.scale);
  const Var loss = tape.cross_entropy(logits, *input.gold);
  if (grads) {
    tape.backward(loss);
    grads->clear();
    for (Var w : weights) grads->push_back(tape.grad(w));
  }
  return static_cast<double>(tape.value(loss).data[0]);
}

template <class T>
void adam_step(FuserParams<T>& params, std::span<const Matrix<T>> grads, AdamState<T>& state,
               double learning_rate, const AdamOptions& options) {
  if (grads.size() != params.tensors.size()) throw Error("gradient count does not match parameters");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].same_shape(params.tensors[i].value)) {
      throw DimensionMismatch("gradient shape mismatch for '" + params.tensors[i].name + "'");
    }
    if (!grads[i].all_finite()) {
      throw Error("non-finite gradient for '" + params.tensors[i].name + "'");
    }
  }
  if (state.first_moment.empty()) {
    for (const auto& t : params.tensors) {
      state.first_moment.emplace_back(t.value.rows, t.value.cols);
      state.second_moment.emplace_back(t.value.rows, t.value.cols);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(options.beta1, t);
  const double correct2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& value = params.tensors[i].value.data;
    auto& m = state.first_moment[i].data;
    auto& v = state.second_moment[i].data;
    const auto& g = grads[i].data;
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double gj = g[j];
      const double mj = options.beta1 * m[j] + (1.0 - options.beta1) * gj;
      const double vj = options.beta2 * v[j] + (1.0 - options.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      if (gj == 0.0) continue;
      const double update = learning_rate * (mj / correct1) / (std::sqrt(vj / correct2) + options.epsilon);
      value[j] = static_cast<T>(value[j] - update);
    }
  }
}

TrainConfig TrainConfig::defaults(FuserKind kind, std::size_t dim) {
  TrainConfig c;
  c.fuser.kind = kind;
  c.fuser.dim = dim;
  if (kind == FuserKind::transformer) {
    c.epochs = 5;
    c.learning_rate = 3e-6;
  } else {
    c.epochs = 3;
    c.learning_rate = 5e-5;
  }
  return c;
}

void TrainConfig::validate() const {
  fuser.validate();
  if (fuser.kind != FuserKind::mlp && fuser.kind != FuserKind::transformer) {
    throw ConfigError(fuser.kind == FuserKind::average
                          ? "average fuser has no trainable parameters"
                          : std::string(to_string(fuser.kind)) + " fuser has no trainable parameters");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
}

std::pair<double, double> evaluate_fuser(const FuserParams<float>& params,
                                         std::span<const FusionInput> inputs) {
  std::vector<RankRecord> records;
  records.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (!in.gold) throw Error("evaluation input lacks a gold label");
    const auto ranking = rank_candidates(fuse(params.config.kind, in, params.config.scale, &params));
    records.push_back({"", rank_of_gold(ranking, *in.gold)});
  }
  return {hit_at_1(records), mrr(records)};
}

TrainReport train_fuser(const TrainConfig& config, std::span<const FusionInput> train_set,
                        std::span<const FusionInput> val_set, std::optional<FuserParams<float>> initial,
                        const EpochCallback& on_epoch) {
  config.validate();
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    if (!train_set[i].gold) throw Error("training sample " + std::to_string(i) + " has no gold label");
    train_set[i].validate();
  }
  for (std::size_t i = 0; i < val_set.size(); ++i) {
    if (!val_set[i].gold) throw Error("validation sample " + std::to_string(i) + " has no gold label");
  }

  TrainReport report;
  if (initial) {
    if (initial->config.kind != config.fuser.kind || initial->config.dim != config.fuser.dim) {
      throw ConfigError("initial parameters do not match the configured fuser");
    }
    report.params = std::move(*initial);
  } else {
    report.params = init_params<float>(config.fuser, config.seed);
  }
  validate_params(report.params);

  std::mt19937_64 shuffle_rng(config.seed ^ 0x5eed5eed5eed5eedULL);
  std::mt19937_64 dropout_rng(config.seed ^ 0xd0d0d0d0d0d0d0d0ULL);
  const ForwardContext ctx{&dropout_rng, true};
  AdamState<float> adam;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<Matrix<float>> sample_grads;
  std::vector<Matrix<float>> batch_grads;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng() % i]);
    }
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch_grads.clear();
      for (const auto& t : report.params.tensors) batch_grads.emplace_back(t.value.rows, t.value.cols);
      for (std::size_t s = start; s < end; ++s) {
        const double loss = fusion_loss(report.params, train_set[order[s]], &sample_grads, ctx);
        if (!std::isfinite(loss)) {
          throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                      ", batch " + std::to_string(batch_index));
        }
        loss_sum += loss;
        for (std::size_t g = 0; g < batch_grads.size(); ++g) {
          auto& acc = batch_grads[g].data;
          const auto& add = sample_grads[g].data;
          for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += add[j];
        }
      }
      const float inv = 1.0f / static_cast<float>(end - start);
      for (auto& g : batch_grads) {
        for (auto& x : g.data) x *= inv;
      }
      adam_step<float>(report.params, batch_grads, adam, config.learning_rate);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = train_set.empty() ? 0.0 : loss_sum / static_cast<double>(train_set.size());
    if (!train_set.empty()) {
      std::tie(stats.train_hit_at_1, stats.train_mrr) = evaluate_fuser(report.params, train_set);
    }
    if (!val_set.empty()) {
      const auto [hit, rr] = evaluate_fuser(report.params, val_set);
      stats.val_hit_at_1 = hit;
      stats.val_mrr = rr;
    }
    report.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return report;
}

template double fusion_loss<float>(const FuserParams<float>&, const FusionInput&,
                                   std::vector<Matrix<float>>*, const ForwardContext&);
template double fusion_loss<double>(const FuserParams<double>&, const FusionInput&,
                                    std::vector<Matrix<double>>*, const ForwardContext&);
template void adam_step<float>(FuserParams<float>&, std::span<const Matrix<float>>, AdamState<float>&,
                               double, const AdamOptions&);
template void adam_step<double>(FuserParams<double>&, std::span<const Matrix<double>>,
                                AdamState<double>&, double, const AdamOptions&);

}  // namespace vwsd
