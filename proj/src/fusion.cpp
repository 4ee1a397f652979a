#include "vwsd/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "vwsd/errors.hpp"

namespace vwsd {

namespace {

enum class Init { uniform, ones, zeros };

struct TensorSpec {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  Init init;
  std::size_t fan_in;
};

std::vector<TensorSpec> layout(const FuserConfig& c) {
  std::vector<TensorSpec> specs;
  const std::size_t d = c.dim;
  if (c.kind == FuserKind::mlp) {
    const std::size_t in = kFusionSources * d;
    const std::size_t h = c.mlp_hidden();
    specs.push_back({"mlp.w1", in, h, Init::uniform, in});
    specs.push_back({"mlp.b1", 1, h, Init::uniform, in});
    specs.push_back({"mlp.w2", h, d, Init::uniform, h});
    specs.push_back({"mlp.b2", 1, d, Init::uniform, h});
  } else if (c.kind == FuserKind::transformer) {
    const std::size_t ff = c.ff_inner();
    for (std::size_t l = 0; l < c.layers; ++l) {
      const std::string p = "enc." + std::to_string(l) + ".";
      for (const char* proj : {"q", "k", "v", "o"}) {
        specs.push_back({p + "attn.w" + proj, d, d, Init::uniform, d});
        specs.push_back({p + "attn.b" + proj, 1, d, Init::uniform, d});
      }
      specs.push_back({p + "ln1.gain", 1, d, Init::ones, 0});
      specs.push_back({p + "ln1.bias", 1, d, Init::zeros, 0});
      specs.push_back({p + "ff.w1", d, ff, Init::uniform, d});
      specs.push_back({p + "ff.b1", 1, ff, Init::uniform, d});
      specs.push_back({p + "ff.w2", ff, d, Init::uniform, ff});
      specs.push_back({p + "ff.b2", 1, d, Init::uniform, ff});
      specs.push_back({p + "ln2.gain", 1, d, Init::ones, 0});
      specs.push_back({p + "ln2.bias", 1, d, Init::zeros, 0});
    }
  }
  return specs;
}

// Per-layer tensor count in layout() order.
constexpr std::size_t kTensorsPerLayer = 16;
constexpr double kLayerNormEps = 1e-5;

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Matrix<double> candidate_matrix(const FusionInput& input) {
  Matrix<double> m(input.candidates.size(), input.dim());
  for (std::size_t i = 0; i < input.candidates.size(); ++i) {
    const Embedding unit = l2_normalize(input.candidates[i]);
    std::copy(unit.begin(), unit.end(), m.row(i).begin());
  }
  return m;
}

// ((a + b) + (c + d)) / 4, exact when all four agree.
std::vector<double> mean_of_four(const std::array<std::vector<double>, kFusionSources>& p) {
  std::vector<double> out(p[0].size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ((p[0][i] + p[1][i]) + (p[2][i] + p[3][i])) / 4.0;
  }
  return out;
}

template <class T>
FusedScore learned_fuse(const FusionInput& input, const FuserParams<T>& params) {
  input.validate();
  validate_params(params);
  if (input.dim() != params.config.dim) {
    throw DimensionMismatch("fuser expects dimension " + std::to_string(params.config.dim) +
                            ", input has " + std::to_string(input.dim()));
  }
  Tape<T> tape;
  std::vector<typename Tape<T>::Var> weights;
  weights.reserve(params.tensors.size());
  for (const auto& t : params.tensors) weights.push_back(tape.leaf(t.value, false));
  const auto fused = fused_embedding(tape, params, std::span<const typename Tape<T>::Var>(weights), input);
  const auto& fv = tape.value(fused);
  Embedding out(fv.cols);
  for (std::size_t i = 0; i < fv.cols; ++i) out[i] = static_cast<float>(fv.data[i]);
  FusedScore score;
  score.probabilities = score_candidates(out, input, params.config.scale);
  score.fused = std::move(out);
  return score;
}

}  // namespace

std::array<std::span<const float>, kFusionSources> FusionInput::sources() const {
  return {context, retrieved[0], retrieved[1], retrieved[2]};
}

void FusionInput::validate() const {
  if (context.empty()) throw DimensionMismatch("empty context embedding");
  const std::size_t d = context.size();
  for (const auto& r : retrieved) {
    if (r.size() != d) throw DimensionMismatch("retrieved embedding dimension differs from context");
  }
  if (candidates.empty()) throw Error("fusion input has no candidates");
  for (const auto& c : candidates) {
    if (c.size() != d) throw DimensionMismatch("candidate embedding dimension differs from context");
  }
  if (gold && *gold >= candidates.size()) {
    throw Error("gold index " + std::to_string(*gold) + " out of range");
  }
}

FusionInput make_fusion_input(Embedding context, std::span<const Embedding> retrieved,
                              std::vector<Embedding> candidates, std::optional<std::size_t> gold) {
  FusionInput in;
  for (std::size_t i = 0; i < kRetrievedPerContext; ++i) {
    if (retrieved.empty()) {
      in.retrieved[i] = context;
    } else {
      in.retrieved[i] = retrieved[std::min(i, retrieved.size() - 1)];
    }
  }
  in.context = std::move(context);
  in.candidates = std::move(candidates);
  in.gold = gold;
  in.validate();
  return in;
}

std::string_view to_string(FuserKind kind) {
  switch (kind) {
    case FuserKind::average: return "average";
    case FuserKind::mlp: return "mlp";
    case FuserKind::transformer: return "transformer";
    case FuserKind::clip_aug: return "clip-aug";
  }
  return "unknown";
}

FuserKind parse_fuser_kind(std::string_view name) {
  for (auto k : {FuserKind::average, FuserKind::mlp, FuserKind::transformer, FuserKind::clip_aug}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown fuser '" + std::string(name) +
                    "' (expected average, mlp, transformer or clip-aug)");
}

void FuserConfig::validate() const {
  if (dim == 0) throw ConfigError("fuser dimension must be positive");
  if (!(scale > 0.0)) throw ConfigError("softmax scale must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (kind == FuserKind::transformer) {
    if (heads == 0 || dim % heads != 0) {
      throw ConfigError("dimension " + std::to_string(dim) + " is not divisible by " +
                        std::to_string(heads) + " heads");
    }
    if (layers == 0) throw ConfigError("transformer fuser needs at least one layer");
  }
}

template <class T>
const Matrix<T>& FuserParams<T>::get(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw Error("no parameter tensor named '" + std::string(name) + "'");
}

template <class T>
Matrix<T>& FuserParams<T>::get(std::string_view name) {
  return const_cast<Matrix<T>&>(std::as_const(*this).get(name));
}

template <class T>
std::size_t FuserParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.value.size();
  return n;
}

template <class T>
FuserParams<T> init_params(const FuserConfig& config, std::uint64_t seed) {
  config.validate();
  if (config.kind != FuserKind::mlp && config.kind != FuserKind::transformer) {
    throw ConfigError(std::string(to_string(config.kind)) + " fuser has no trainable parameters");
  }
  std::mt19937_64 rng(seed);
  FuserParams<T> params{config, {}};
  for (const auto& spec : layout(config)) {
    Matrix<T> m(spec.rows, spec.cols);
    switch (spec.init) {
      case Init::ones: std::fill(m.data.begin(), m.data.end(), T{1}); break;
      case Init::zeros: break;
      case Init::uniform: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
        for (auto& x : m.data) x = static_cast<T>((2.0 * uniform01(rng) - 1.0) * bound);
        break;
      }
    }
    params.tensors.push_back({spec.name, std::move(m)});
  }
  return params;
}

template <class T>
void validate_params(const FuserParams<T>& params) {
  params.config.validate();
  const auto specs = layout(params.config);
  if (specs.empty()) throw ConfigError("fuser kind has no parameters");
  if (specs.size() != params.tensors.size()) {
    throw Error("expected " + std::to_string(specs.size()) + " parameter tensors, got " +
                std::to_string(params.tensors.size()));
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& t = params.tensors[i];
    if (t.name != specs[i].name || t.value.rows != specs[i].rows || t.value.cols != specs[i].cols) {
      throw DimensionMismatch("parameter '" + t.name + "' does not match expected '" + specs[i].name +
                              "' " + std::to_string(specs[i].rows) + "x" +
                              std::to_string(specs[i].cols));
    }
    if (!t.value.all_finite()) throw Error("non-finite value in parameter '" + t.name + "'");
  }
}

template <class T>
typename Tape<T>::Var transformer_encode(Tape<T>& tape, const FuserParams<T>& params,
                                         std::span<const typename Tape<T>::Var> w,
                                         typename Tape<T>::Var x, const ForwardContext& ctx) {
  using Var = typename Tape<T>::Var;
  const auto& cfg = params.config;
  const std::size_t head_dim = cfg.dim / cfg.heads;
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));
  const double drop = ctx.training && ctx.rng ? cfg.dropout : 0.0;

  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const Var* p = w.data() + l * kTensorsPerLayer;
    const Var q = tape.add_bias(tape.matmul(x, p[0]), p[1]);
    const Var k = tape.add_bias(tape.matmul(x, p[2]), p[3]);
    const Var v = tape.add_bias(tape.matmul(x, p[4]), p[5]);
    std::vector<Var> heads;
    heads.reserve(cfg.heads);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const Var qh = tape.slice_cols(q, h * head_dim, head_dim);
      const Var kh = tape.slice_cols(k, h * head_dim, head_dim);
      const Var vh = tape.slice_cols(v, h * head_dim, head_dim);
      const Var attn = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), inv_sqrt));
      heads.push_back(tape.matmul(attn, vh));
    }
    Var attended = tape.add_bias(tape.matmul(tape.concat_cols(heads), p[6]), p[7]);
    if (drop > 0.0) attended = tape.dropout(attended, drop, *ctx.rng);
    x = tape.layer_norm_rows(tape.add(x, attended), p[8], p[9], static_cast<T>(kLayerNormEps));

    Var ff = tape.add_bias(tape.matmul(tape.relu(tape.add_bias(tape.matmul(x, p[10]), p[11])), p[12]), p[13]);
    if (drop > 0.0) ff = tape.dropout(ff, drop, *ctx.rng);
    x = tape.layer_norm_rows(tape.add(x, ff), p[14], p[15], static_cast<T>(kLayerNormEps));
  }
  return x;
}

template <class T>
typename Tape<T>::Var fused_embedding(Tape<T>& tape, const FuserParams<T>& params,
                                      std::span<const typename Tape<T>::Var> w,
                                      const FusionInput& input, const ForwardContext& ctx) {
  using Var = typename Tape<T>::Var;
  if (w.size() != params.tensors.size()) throw Error("weight leaf count does not match parameters");
  auto sources = input.sources();
  for (auto s : sources) {
    if (s.size() != params.config.dim) {
      throw DimensionMismatch("source embedding dimension " + std::to_string(s.size()) +
                              " != fuser dimension " + std::to_string(params.config.dim));
    }
  }
  auto row_of = [](std::span<const float> s) {
    Matrix<T> m(1, s.size());
    for (std::size_t i = 0; i < s.size(); ++i) m.data[i] = static_cast<T>(s[i]);
    return m;
  };

  if (params.config.kind == FuserKind::mlp) {
    std::array<Var, kFusionSources> parts{};
    for (std::size_t i = 0; i < kFusionSources; ++i) parts[i] = tape.constant(row_of(sources[i]));
    const Var x = tape.concat_cols(parts);
    const Var hidden = tape.relu(tape.add_bias(tape.matmul(x, w[0]), w[1]));
    const Var out = tape.add_bias(tape.matmul(hidden, w[2]), w[3]);
    return tape.l2_normalize_rows(out);
  }
  if (params.config.kind == FuserKind::transformer) {
    // The sources form a set: present them in a canonical (lexicographic)
    // order so the result does not depend on how they were listed.
    std::sort(sources.begin(), sources.end(), [](auto a, auto b) {
      return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
    });
    Matrix<T> stacked(kFusionSources, params.config.dim);
    for (std::size_t i = 0; i < kFusionSources; ++i) {
      for (std::size_t c = 0; c < params.config.dim; ++c) stacked(i, c) = static_cast<T>(sources[i][c]);
    }
    const Var encoded = transformer_encode(tape, params, w, tape.constant(std::move(stacked)), ctx);
    return tape.l2_normalize_rows(tape.sum_rows(encoded));
  }
  throw ConfigError(std::string(to_string(params.config.kind)) + " fuser has no trainable parameters");
}

template <class T>
typename Tape<T>::Var candidate_logits(Tape<T>& tape, typename Tape<T>::Var fused,
                                       const FusionInput& input, double scale) {
  const Matrix<T> candidates = Matrix<T>::converted(candidate_matrix(input));
  return tape.scale(tape.matmul_nt(fused, tape.constant(candidates)), static_cast<T>(scale));
}

std::vector<double> score_candidates(std::span<const float> fused, const FusionInput& input,
                                     double scale) {
  std::vector<double> cos(input.candidates.size());
  for (std::size_t i = 0; i < cos.size(); ++i) cos[i] = cosine_similarity(fused, input.candidates[i]);
  return softmax(cos, scale);
}

FusedScore average_fuse(const FusionInput& input, double scale) {
  input.validate();
  std::array<std::vector<double>, kFusionSources> per_source;
  const auto sources = input.sources();
  for (std::size_t s = 0; s < kFusionSources; ++s) {
    per_source[s] = score_candidates(sources[s], input, scale);
  }
  return FusedScore{mean_of_four(per_source), std::nullopt};
}

FusedScore context_only_fuse(const FusionInput& input, double scale) {
  input.validate();
  return FusedScore{score_candidates(input.context, input, scale), std::nullopt};
}

FusedScore mlp_fuse(const FusionInput& input, const MlpParams& params) {
  if (params.config.kind != FuserKind::mlp) throw ConfigError("mlp_fuse needs MLP parameters");
  return learned_fuse(input, params);
}

FusedScore transformer_fuse(const FusionInput& input, const TransformerParams& params) {
  if (params.config.kind != FuserKind::transformer) {
    throw ConfigError("transformer_fuse needs transformer parameters");
  }
  return learned_fuse(input, params);
}

FusedScore fuse(FuserKind kind, const FusionInput& input, double scale,
                const FuserParams<float>* params) {
  switch (kind) {
    case FuserKind::average: return average_fuse(input, scale);
    case FuserKind::clip_aug: return context_only_fuse(input, scale);
    case FuserKind::mlp:
    case FuserKind::transformer:
      if (!params) throw ConfigError(std::string(to_string(kind)) + " fuser needs parameters");
      if (params->config.kind != kind) throw ConfigError("checkpoint holds a different fuser kind");
      return learned_fuse(input, *params);
  }
  throw ConfigError("unknown fuser");
}

std::vector<std::size_t> rank_candidates(std::span<const double> probabilities) {
  std::vector<std::size_t> order(probabilities.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probabilities[a] > probabilities[b]; });
  return order;
}

std::vector<std::size_t> rank_candidates(const FusedScore& score) {
  return rank_candidates(score.probabilities);
}

#define VWSD_INSTANTIATE(T)                                                                        \
  template struct FuserParams<T>;                                                                  \
  template FuserParams<T> init_params<T>(const FuserConfig&, std::uint64_t);                       \
  template void validate_params<T>(const FuserParams<T>&);                                         \
  template Tape<T>::Var fused_embedding<T>(Tape<T>&, const FuserParams<T>&,                        \
                                           std::span<const Tape<T>::Var>, const FusionInput&,      \
                                           const ForwardContext&);                                 \
  template Tape<T>::Var transformer_encode<T>(Tape<T>&, const FuserParams<T>&,                     \
                                              std::span<const Tape<T>::Var>, Tape<T>::Var,         \
                                              const ForwardContext&);                              \
  template Tape<T>::Var candidate_logits<T>(Tape<T>&, Tape<T>::Var, const FusionInput&, double);

VWSD_INSTANTIATE(float)
VWSD_INSTANTIATE(double)

#undef VWSD_INSTANTIATE

}  // namespace vwsd
