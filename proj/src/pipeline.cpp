#include "vwsd/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <random>

#include "vwsd/checkpoint.hpp"
#include "vwsd/errors.hpp"
#include "vwsd/provider.hpp"

namespace vwsd {

namespace {

EmbeddingStore load_normalized(const std::filesystem::path& path) {
  EmbeddingStore s = load_store(path);
  s.normalize_all();
  return s;
}

[[noreturn]] void stage_error(const Sample& s, const char* stage, const std::string& what) {
  throw DataError("sample " + s.id + ", stage " + stage + ": " + what);
}

std::string source_label(const std::optional<std::filesystem::path>& store,
                         const std::optional<std::string>& provider) {
  if (store) return "store:" + store->filename().string();
  if (provider) return "provider:" + *provider;
  return "none";
}

}  // namespace

struct Pipeline::State {
  std::optional<Dataset> dataset;
  std::optional<SenseInventory> inventory;
  std::optional<std::string> only_sample;
  std::optional<ImageIndex> index;
  std::optional<EmbeddingStore> candidates;
  std::optional<EmbeddingStore> contexts;
  std::optional<EmbeddingStore> glosses;
  std::optional<EmbeddingStore> prompts;
};

Pipeline::Pipeline(PipelineConfig config, std::ostream* log)
    : config_(std::move(config)), log_(log), state_(std::make_unique<State>()) {
  config_.validate();
}

Pipeline::~Pipeline() = default;

const Dataset& Pipeline::dataset() {
  if (!state_->dataset) {
    if (!config_.dataset) throw ConfigError("no dataset configured");
    state_->dataset = load_dataset(*config_.dataset, config_.gold);
    if (log_) {
      for (std::size_t row : state_->dataset->skipped_rows) {
        *log_ << "skipped row " << row << ": unreadable characters\n";
      }
    }
  }
  return *state_->dataset;
}

const SenseInventory& Pipeline::inventory() {
  if (!state_->inventory) {
    if (!config_.inventory) throw ConfigError("no sense inventory configured");
    state_->inventory = load_inventory(*config_.inventory);
  }
  return *state_->inventory;
}

void Pipeline::restrict_to(const std::string& sample_id) {
  const auto& ds = dataset();
  const bool known = std::any_of(ds.samples.begin(), ds.samples.end(),
                                 [&](const Sample& s) { return s.id == sample_id; });
  if (!known) throw ConfigError("no sample with id '" + sample_id + "'");
  state_->only_sample = sample_id;
}

std::vector<const Sample*> Pipeline::samples() {
  std::vector<const Sample*> out;
  for (const auto& s : dataset().samples) {
    if (!state_->only_sample || s.id == *state_->only_sample) out.push_back(&s);
  }
  return out;
}

std::uint32_t Pipeline::dim() {
  if (!state_->index) {
    if (!config_.corpus_embeddings) throw ConfigError("no corpus embeddings configured");
    state_->index.emplace(load_store(*config_.corpus_embeddings));
  }
  return state_->index->dim();
}

std::vector<PreparedSample> Pipeline::disambiguate() {
  const auto& inv = inventory();
  const auto selected = samples();

  if (config_.context_embeddings && !state_->contexts) state_->contexts = load_normalized(*config_.context_embeddings);
  if (config_.gloss_embeddings && !state_->glosses) state_->glosses = load_normalized(*config_.gloss_embeddings);

  // Texts the sense provider must embed: contexts and glosses not in a store.
  std::vector<std::string> pending;
  for (const Sample* s : selected) {
    const auto senses = inv.senses(s->target_word);
    if (senses.empty()) continue;
    if (!state_->contexts && config_.sense_provider) pending.push_back(s->context);
    if (!state_->glosses && config_.sense_provider) {
      for (const auto& e : senses) pending.push_back(e.gloss);
    }
  }
  std::optional<EmbeddingStore> fetched;
  if (!pending.empty()) {
    ProviderOptions opts;
    opts.cache_path = config_.cache_dir / "sense-provider.vwse";
    fetched = EmbeddingProvider(*config_.sense_provider, opts).fetch(pending);
    fetched->normalize_all();
  }

  std::vector<PreparedSample> out;
  out.reserve(selected.size());
  for (const Sample* s : selected) {
    PreparedSample p;
    p.sample = s;
    const auto senses = inv.senses(s->target_word);
    p.sense_count = senses.size();
    if (!senses.empty()) {
      std::span<const float> context;
      if (state_->contexts) {
        auto found = state_->contexts->find(s->id);
        if (!found) stage_error(*s, "gloss-matching", "no context embedding");
        context = *found;
      } else if (fetched) {
        context = fetched->at(text_id(s->context));
      } else {
        stage_error(*s, "gloss-matching", "no context embeddings or sense provider configured");
      }
      std::vector<Embedding> gloss_embs;
      for (const auto& e : senses) {
        std::optional<std::span<const float>> g;
        if (state_->glosses) {
          g = state_->glosses->find(e.synset_id);
        } else if (fetched) {
          g = fetched->find(text_id(e.gloss));
        }
        if (!g) stage_error(*s, "gloss-matching", "no gloss embedding for synset '" + e.synset_id + "'");
        gloss_embs.emplace_back(g->begin(), g->end());
      }
      try {
        p.match = match_gloss(context, gloss_embs, senses);
      } catch (const DimensionMismatch& e) {
        stage_error(*s, "gloss-matching", e.what());
      }
    }
    p.prompt = build_prompt(s->context, s->target_word, p.match);
    out.push_back(std::move(p));
  }
  return out;
}

EmbeddingStore Pipeline::prompt_embeddings(const std::vector<PreparedSample>& prepared) {
  const std::uint32_t d = dim();
  if (config_.prompt_embeddings && !state_->prompts) state_->prompts = load_normalized(*config_.prompt_embeddings);

  std::optional<EmbeddingStore> fetched;
  if (!state_->prompts) {
    if (!config_.text_provider) throw ConfigError("no prompt embeddings or text provider configured");
    std::vector<std::string> texts;
    for (const auto& p : prepared) texts.push_back(p.prompt);
    ProviderOptions opts;
    opts.cache_path = config_.cache_dir / "text-provider.vwse";
    opts.expected_dim = d;
    fetched = EmbeddingProvider(*config_.text_provider, opts).fetch(texts);
    fetched->normalize_all();
  }

  EmbeddingStore out(d);
  for (const auto& p : prepared) {
    std::optional<std::span<const float>> v;
    if (state_->prompts) {
      v = state_->prompts->find(p.sample->id);
      if (!v) v = state_->prompts->find(text_id(p.prompt));
    } else {
      v = fetched->find(text_id(p.prompt));
    }
    if (!v) stage_error(*p.sample, "prompt-embedding", "no embedding for prompt \"" + p.prompt + "\"");
    if (v->size() != d) {
      stage_error(*p.sample, "prompt-embedding",
                  "dimension " + std::to_string(v->size()) + " != corpus dimension " + std::to_string(d));
    }
    out.add(p.sample->id, *v);
  }
  return out;
}

std::map<std::string, RetrievalResult> Pipeline::retrieve(const std::vector<PreparedSample>& prepared,
                                                          const EmbeddingStore& prompts) {
  dim();
  std::vector<std::string> ids;
  for (const auto& p : prepared) ids.push_back(p.sample->id);
  RetrievalCache cache(config_.cache_dir, state_->index->corpus_hash(), config_.k);
  auto results = retrieve_for_samples(*state_->index, prompts, ids, config_.k, &cache);
  if (log_ && cache.hits() > 0) *log_ << "retrieval cache: " << cache.hits() << " hits\n";
  return results;
}

std::vector<FusionInput> Pipeline::fusion_inputs(const std::vector<PreparedSample>& prepared,
                                                 const EmbeddingStore& prompts,
                                                 const std::map<std::string, RetrievalResult>& retrieved) {
  dim();
  const EmbeddingStore& corpus = state_->index->store();
  if (!state_->candidates && config_.candidate_embeddings) {
    state_->candidates = load_normalized(*config_.candidate_embeddings);
    if (state_->candidates->dim() != corpus.dim()) {
      throw DimensionMismatch("candidate embeddings have dimension " +
                              std::to_string(state_->candidates->dim()) + ", corpus has " +
                              std::to_string(corpus.dim()));
    }
  }
  const EmbeddingStore& candidates = state_->candidates ? *state_->candidates : corpus;

  std::vector<FusionInput> out;
  out.reserve(prepared.size());
  for (const auto& p : prepared) {
    const Sample& s = *p.sample;
    std::vector<Embedding> cands;
    for (const auto& id : s.candidate_image_ids) {
      const auto v = candidates.find(id);
      if (!v) stage_error(s, "candidates", "no embedding for image '" + id + "'");
      cands.emplace_back(v->begin(), v->end());
    }
    std::vector<Embedding> hits;
    for (const auto& h : retrieved.at(s.id).hits) {
      const auto v = corpus.at(h.id);
      hits.emplace_back(v.begin(), v.end());
    }
    const auto ctx = prompts.at(s.id);
    out.push_back(make_fusion_input(Embedding(ctx.begin(), ctx.end()), hits, std::move(cands), s.gold_index()));
  }
  return out;
}

EvalResult Pipeline::evaluate() {
  const auto prepared = disambiguate();
  const auto prompts = prompt_embeddings(prepared);
  const auto retrieved = retrieve(prepared, prompts);
  const auto inputs = fusion_inputs(prepared, prompts, retrieved);

  std::optional<FuserParams<float>> params;
  double scale = config_.scale;
  if (config_.fuser == FuserKind::mlp || config_.fuser == FuserKind::transformer) {
    if (!config_.checkpoint) throw ConfigError(std::string(to_string(config_.fuser)) + " fuser needs a checkpoint");
    params = load_checkpoint(*config_.checkpoint);
    if (params->config.kind != config_.fuser) throw ConfigError("checkpoint was trained for a different fuser");
    if (params->config.dim != dim()) throw DimensionMismatch("checkpoint dimension differs from the corpus");
    scale = params->config.scale;
  }

  EvalResult result;
  result.skipped_rows = dataset().skipped_rows.size();
  std::vector<RankRecord> records;
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    const PreparedSample& p = prepared[i];
    const Sample& s = *p.sample;
    const FusionInput& in = inputs[i];

    const FusedScore score = fuse(config_.fuser, in, scale, params ? &*params : nullptr);
    const auto ranking = rank_candidates(score);

    StageTrace t;
    t.sample_id = s.id;
    t.target_word = s.target_word;
    t.context = s.context;
    t.matched = p.match.matched();
    if (p.match.matched()) {
      t.synset_id = p.match.entry->synset_id;
      t.gloss = p.match.entry->gloss;
      t.similarity = p.match.similarity;
    }
    t.sense_count = p.sense_count;
    t.context_source = p.sense_count == 0 ? "none" : source_label(config_.context_embeddings, config_.sense_provider);
    t.prompt = p.prompt;
    t.retrieved = retrieved.at(s.id).hits;
    t.fuser = std::string(to_string(config_.fuser));
    t.probabilities = score.probabilities;
    if (config_.fuser == FuserKind::average) {
      for (auto src : in.sources()) t.source_probabilities.push_back(score_candidates(src, in, scale));
    }
    for (std::size_t r : ranking) t.ranking.push_back(s.candidate_image_ids[r]);
    t.gold_image_id = s.gold_image_id;
    if (in.gold) {
      t.gold_rank = rank_of_gold(ranking, *in.gold);
      records.push_back({s.id, *t.gold_rank});
    }
    result.top1.push_back(t.ranking.front());
    result.traces.push_back(std::move(t));
  }
  result.report = make_report(std::move(records));
  return result;
}

TrainReport Pipeline::train(const EpochCallback& on_epoch) {
  if (config_.fuser != FuserKind::mlp && config_.fuser != FuserKind::transformer) {
    throw ConfigError(std::string(to_string(config_.fuser)) + " fuser has no trainable parameters");
  }
  if (!config_.gold) throw ConfigError("training needs gold labels");
  if (!config_.checkpoint) throw ConfigError("training needs a checkpoint path to write");

  const auto prepared = disambiguate();
  const auto prompts = prompt_embeddings(prepared);
  const auto retrieved = retrieve(prepared, prompts);
  const auto inputs = fusion_inputs(prepared, prompts, retrieved);

  if (config_.holdout >= inputs.size()) {
    throw ConfigError("holdout of " + std::to_string(config_.holdout) + " leaves no training samples out of " +
                      std::to_string(inputs.size()));
  }
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config_.seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  std::vector<bool> held(inputs.size(), false);
  for (std::size_t i = 0; i < config_.holdout; ++i) held[order[i]] = true;

  std::vector<FusionInput> train_set;
  std::vector<FusionInput> val_set;
  for (std::size_t i = 0; i < inputs.size(); ++i) (held[i] ? val_set : train_set).push_back(inputs[i]);

  std::optional<FuserParams<float>> initial;
  if (config_.init_checkpoint) initial = load_checkpoint(*config_.init_checkpoint);

  TrainReport report = train_fuser(config_.train_config(dim()), train_set, val_set, std::move(initial), on_epoch);
  save_checkpoint(report.params, *config_.checkpoint);
  return report;
}

nlohmann::ordered_json to_json(const StageTrace& t) {
  nlohmann::ordered_json j;
  j["sample"] = t.sample_id;
  j["target"] = t.target_word;
  j["context"] = t.context;
  auto& g = j["gloss"];
  g["matched"] = t.matched;
  g["senses"] = t.sense_count;
  if (t.matched) {
    g["synset_id"] = *t.synset_id;
    g["gloss"] = *t.gloss;
    g["similarity"] = *t.similarity;
  }
  g["source"] = t.context_source;
  j["prompt"] = t.prompt;
  auto& r = j["retrieval"] = nlohmann::ordered_json::array();
  for (const auto& h : t.retrieved) {
    nlohmann::ordered_json hit;
    hit["id"] = h.id;
    hit["score"] = h.score;
    r.push_back(std::move(hit));
  }
  auto& f = j["fusion"];
  f["fuser"] = t.fuser;
  f["probabilities"] = t.probabilities;
  if (!t.source_probabilities.empty()) f["source_probabilities"] = t.source_probabilities;
  j["ranking"] = t.ranking;
  j["gold"] = t.gold_image_id ? nlohmann::ordered_json(*t.gold_image_id) : nlohmann::ordered_json(nullptr);
  j["gold_rank"] = t.gold_rank ? nlohmann::ordered_json(*t.gold_rank) : nlohmann::ordered_json(nullptr);
  return j;
}

void write_report(const EvalResult& result, std::ostream& out) {
  for (std::size_t i = 0; i < result.traces.size(); ++i) {
    const auto& t = result.traces[i];
    nlohmann::ordered_json rec;
    rec["sample"] = t.sample_id;
    rec["gold_rank"] = t.gold_rank ? nlohmann::ordered_json(*t.gold_rank) : nlohmann::ordered_json(nullptr);
    rec["top1"] = result.top1[i];
    out << rec.dump() << '\n';
  }
  nlohmann::ordered_json summary;
  summary["n"] = result.report.records.size();
  summary["hit_at_1"] = result.report.hit_at_1;
  summary["mrr"] = result.report.mrr;
  out << summary.dump() << '\n';
}

void write_traces(const EvalResult& result, std::ostream& out) {
  for (const auto& t : result.traces) out << to_json(t).dump() << '\n';
}

void write_history(const TrainReport& report, std::ostream& out) {
  for (const auto& e : report.history) {
    nlohmann::ordered_json rec;
    rec["epoch"] = e.epoch;
    rec["mean_loss"] = e.mean_loss;
    rec["train_hit_at_1"] = e.train_hit_at_1;
    rec["train_mrr"] = e.train_mrr;
    rec["val_hit_at_1"] = e.val_hit_at_1 ? nlohmann::ordered_json(*e.val_hit_at_1) : nlohmann::ordered_json(nullptr);
    rec["val_mrr"] = e.val_mrr ? nlohmann::ordered_json(*e.val_mrr) : nlohmann::ordered_json(nullptr);
    out << rec.dump() << '\n';
  }
}

}  // namespace vwsd
