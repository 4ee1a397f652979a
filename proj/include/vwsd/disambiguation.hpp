#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vwsd/embedding.hpp"

namespace vwsd {

/// One sense of a lemma: a synset with its definition and the other lemma
/// names that share it (underscores kept as in the inventory).
struct SenseEntry {
  std::string synset_id;
  std::string gloss;
  std::vector<std::string> synonyms;

  friend bool operator==(const SenseEntry&, const SenseEntry&) = default;
};

/// Lowercases ASCII letters and turns spaces into underscores, the way
/// lemma names are spelled in WordNet.
std::string normalize_lemma(std::string_view word);

class SenseInventory {
 public:
  /// Appends a sense under `lemma`. Throws DataError if the synset is
  /// already listed for that lemma or the gloss is empty.
  void add(std::string_view lemma, SenseEntry entry);

  /// Senses in file order, or an empty span when the lemma is unknown.
  std::span<const SenseEntry> senses(std::string_view lemma) const;
  std::size_t sense_count(std::string_view lemma) const { return senses(lemma).size(); }

  std::size_t lemma_count() const noexcept { return lemmas_.size(); }
  bool empty() const noexcept { return lemmas_.empty(); }

  /// Every distinct sense across all lemmas, first occurrence order.
  std::vector<const SenseEntry*> all_senses() const;

 private:
  std::map<std::string, std::vector<SenseEntry>, std::less<>> lemmas_;
  std::vector<std::pair<std::string, std::size_t>> order_;
};

/// Parses one JSON object per line: {"lemma", "synset_id", "gloss",
/// "synonyms": [...]}. Blank lines and lines starting with '#' are skipped.
/// Errors carry the 1-based line number.
SenseInventory load_inventory(std::istream& in);
SenseInventory load_inventory(const std::filesystem::path& path);

struct GlossMatch {
  std::optional<SenseEntry> entry;
  std::optional<double> similarity;
  std::size_t index = 0;

  bool matched() const noexcept { return entry.has_value(); }
};

/// Cosine 1-NN of the context over gloss embeddings. Ties go to the lowest
/// index; an empty candidate list yields an unmatched result.
GlossMatch match_gloss(std::span<const float> context_emb, std::span<const Embedding> gloss_embs,
                       std::span<const SenseEntry> entries);

/// Synonyms with the target word itself removed.
std::vector<std::string> prompt_synonyms(const SenseEntry& entry, std::string_view target);

/// "This is a picture of {context}, also known as {synonyms}, where
/// {target} refers to {gloss}." or the bare "This is a picture of {context}"
/// when nothing was matched.
std::string build_prompt(std::string_view context, std::string_view target, const GlossMatch& match);

}  // namespace vwsd
