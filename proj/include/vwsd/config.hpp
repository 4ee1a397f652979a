#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "vwsd/fusion.hpp"
#include "vwsd/train.hpp"

namespace vwsd {

inline constexpr std::size_t kDefaultHoldout = 869;

/// Everything a pipeline run needs. Relative paths in a config file are
/// resolved against the directory holding that file.
struct PipelineConfig {
  std::optional<std::filesystem::path> dataset;
  std::optional<std::filesystem::path> gold;
  std::optional<std::filesystem::path> inventory;

  // Embedding stores, one per kind of input.
  std::optional<std::filesystem::path> context_embeddings;    // keyed by sample id
  std::optional<std::filesystem::path> gloss_embeddings;      // keyed by synset id
  std::optional<std::filesystem::path> prompt_embeddings;     // keyed by sample id or prompt hash
  std::optional<std::filesystem::path> corpus_embeddings;     // retrieval corpus, keyed by image id
  std::optional<std::filesystem::path> candidate_embeddings;  // keyed by image id; defaults to corpus

  // HTTP providers used when a store is not configured.
  std::optional<std::string> text_provider;   // prompt (image-text) space
  std::optional<std::string> sense_provider;  // context/gloss space

  std::filesystem::path cache_dir = "cache";
  FuserKind fuser = FuserKind::average;
  double scale = kDefaultScale;
  std::size_t k = 3;
  std::uint64_t seed = 0;

  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> init_checkpoint;
  std::optional<std::filesystem::path> report;
  std::optional<std::filesystem::path> trace_file;
  std::optional<std::filesystem::path> history;
  bool trace = false;

  // Architecture and training; unset epochs / learning rate fall back to
  // the per-fuser defaults.
  std::size_t hidden = 0;
  std::size_t layers = 2;
  std::size_t heads = 8;
  std::size_t ff_width = 0;
  double dropout = 0.0;
  std::optional<std::size_t> epochs;
  std::optional<double> learning_rate;
  std::size_t batch_size = 32;
  std::size_t holdout = kDefaultHoldout;

  /// Fuser architecture for an embedding width of `dim`.
  FuserConfig fuser_config(std::size_t dim) const;
  TrainConfig train_config(std::size_t dim) const;
  void validate() const;
};

/// Parses `key = value` lines; '#' starts a comment. Unknown keys and
/// unparsable values raise ConfigError with the line number.
PipelineConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// Applies one key/value pair, as from a config line or a command-line flag.
void set_config_value(PipelineConfig& config, const std::string& key, const std::string& value,
                      const std::filesystem::path& base_dir = {});

}  // namespace vwsd
