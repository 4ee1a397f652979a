#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vwsd/config.hpp"
#include "vwsd/dataset.hpp"
#include "vwsd/disambiguation.hpp"
#include "vwsd/evaluation.hpp"
#include "vwsd/fusion.hpp"
#include "vwsd/retrieval.hpp"
#include "vwsd/store.hpp"
#include "vwsd/train.hpp"

namespace vwsd {

/// What each stage produced for one sample, in pipeline order. Used to
/// audit how an early mistake (a wrong gloss, off-topic retrieved images)
/// carries through to the final ranking.
struct StageTrace {
  std::string sample_id;
  std::string target_word;
  std::string context;

  bool matched = false;
  std::optional<std::string> synset_id;
  std::optional<std::string> gloss;
  std::optional<double> similarity;
  std::size_t sense_count = 0;
  std::string context_source;

  std::string prompt;
  std::vector<RetrievalHit> retrieved;

  std::string fuser;
  std::vector<double> probabilities;
  std::vector<std::vector<double>> source_probabilities;  // average fuser only
  std::vector<std::string> ranking;                       // candidate ids, best first

  std::optional<std::string> gold_image_id;
  std::optional<std::size_t> gold_rank;
};

nlohmann::ordered_json to_json(const StageTrace& trace);

struct PreparedSample {
  const Sample* sample = nullptr;
  GlossMatch match;
  std::size_t sense_count = 0;
  std::string prompt;
};

struct EvalResult {
  RankReport report;  // samples that carry a gold label
  std::vector<StageTrace> traces;
  std::vector<std::string> top1;  // aligned with the evaluated samples
  std::size_t skipped_rows = 0;
};

/// Runs the disambiguate-and-discriminate chain over a dataset:
/// gloss match -> prompt -> prompt embedding -> top-k retrieval -> fusion
/// -> candidate ranking. Inputs are loaded on first use.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config, std::ostream* log = nullptr);
  ~Pipeline();

  const PipelineConfig& config() const noexcept { return config_; }
  const Dataset& dataset();
  const SenseInventory& inventory();

  /// Limits later stages to a single sample (for trace dumps).
  void restrict_to(const std::string& sample_id);
  std::vector<const Sample*> samples();

  std::vector<PreparedSample> disambiguate();
  /// Unit-length prompt embeddings keyed by sample id.
  EmbeddingStore prompt_embeddings(const std::vector<PreparedSample>& prepared);
  std::map<std::string, RetrievalResult> retrieve(const std::vector<PreparedSample>& prepared,
                                                  const EmbeddingStore& prompts);
  std::vector<FusionInput> fusion_inputs(const std::vector<PreparedSample>& prepared,
                                         const EmbeddingStore& prompts,
                                         const std::map<std::string, RetrievalResult>& retrieved);

  EvalResult evaluate();
  TrainReport train(const EpochCallback& on_epoch = {});

  std::uint32_t dim();

 private:
  struct State;
  PipelineConfig config_;
  std::ostream* log_;
  std::unique_ptr<State> state_;
};

void write_report(const EvalResult& result, std::ostream& out);
void write_traces(const EvalResult& result, std::ostream& out);
void write_history(const TrainReport& report, std::ostream& out);

}  // namespace vwsd
