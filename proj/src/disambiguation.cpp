#include "vwsd/disambiguation.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>

#include "vwsd/errors.hpp"

namespace vwsd {

std::string normalize_lemma(std::string_view word) {
  std::string out(word);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (c == ' ') c = '_';
  }
  return out;
}

void SenseInventory::add(std::string_view lemma, SenseEntry entry) {
  if (entry.gloss.empty()) throw DataError("empty gloss for synset '" + entry.synset_id + "'");
  if (entry.synset_id.empty()) throw DataError("empty synset id");
  auto key = normalize_lemma(lemma);
  auto& list = lemmas_[key];
  for (const auto& existing : list) {
    if (existing.synset_id == entry.synset_id) {
      throw DataError("duplicate synset '" + entry.synset_id + "' for lemma '" + key + "'");
    }
  }
  order_.emplace_back(key, list.size());
  list.push_back(std::move(entry));
}

std::span<const SenseEntry> SenseInventory::senses(std::string_view lemma) const {
  auto it = lemmas_.find(normalize_lemma(lemma));
  if (it == lemmas_.end()) return {};
  return it->second;
}

std::vector<const SenseEntry*> SenseInventory::all_senses() const {
  std::vector<const SenseEntry*> out;
  std::vector<std::string_view> seen;
  for (const auto& [lemma, pos] : order_) {
    const SenseEntry& e = lemmas_.find(lemma)->second[pos];
    if (std::find(seen.begin(), seen.end(), e.synset_id) != seen.end()) continue;
    seen.push_back(e.synset_id);
    out.push_back(&e);
  }
  return out;
}

SenseInventory load_inventory(std::istream& in) {
  SenseInventory inv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto where = "inventory line " + std::to_string(line_no) + ": ";
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + "not a JSON object (" + e.what() + ")");
    }
    if (!record.is_object()) throw DataError(where + "not a JSON object");
    for (const char* field : {"lemma", "synset_id", "gloss"}) {
      if (!record.contains(field) || !record[field].is_string()) {
        throw DataError(where + "missing string field '" + field + "'");
      }
    }
    SenseEntry entry;
    entry.synset_id = record["synset_id"].get<std::string>();
    entry.gloss = record["gloss"].get<std::string>();
    if (record.contains("synonyms")) {
      const auto& syn = record["synonyms"];
      if (!syn.is_array()) throw DataError(where + "'synonyms' must be an array of strings");
      for (const auto& s : syn) {
        if (!s.is_string()) throw DataError(where + "'synonyms' must be an array of strings");
        entry.synonyms.push_back(s.get<std::string>());
      }
    }
    try {
      inv.add(record["lemma"].get<std::string>(), std::move(entry));
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  return inv;
}

SenseInventory load_inventory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open inventory " + path.string());
  return load_inventory(in);
}

GlossMatch match_gloss(std::span<const float> context_emb, std::span<const Embedding> gloss_embs,
                       std::span<const SenseEntry> entries) {
  if (gloss_embs.size() != entries.size()) {
    throw DimensionMismatch("gloss embedding count " + std::to_string(gloss_embs.size()) +
                            " != sense count " + std::to_string(entries.size()));
  }
  GlossMatch best;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double sim = cosine_similarity(context_emb, gloss_embs[i]);
    if (!best.similarity || sim > *best.similarity) {
      best.similarity = sim;
      best.index = i;
    }
  }
  if (best.similarity) best.entry = entries[best.index];
  return best;
}

std::vector<std::string> prompt_synonyms(const SenseEntry& entry, std::string_view target) {
  std::string underscored(target);
  std::replace(underscored.begin(), underscored.end(), ' ', '_');
  std::vector<std::string> out;
  for (const auto& s : entry.synonyms) {
    // Case-sensitive: "Biro" survives for target "biro".
    if (s == target || s == underscored) continue;
    out.push_back(s);
  }
  return out;
}

std::string build_prompt(std::string_view context, std::string_view target, const GlossMatch& match) {
  std::string prompt = "This is a picture of ";
  prompt += context;
  if (!match.matched()) return prompt;

  const auto synonyms = prompt_synonyms(*match.entry, target);
  if (!synonyms.empty()) {
    prompt += ", also known as ";
    for (std::size_t i = 0; i < synonyms.size(); ++i) {
      if (i > 0) prompt += ", ";
      prompt += synonyms[i];
    }
  }
  prompt += ", where ";
  prompt += target;
  prompt += " refers to ";
  prompt += match.entry->gloss;
  prompt += '.';
  return prompt;
}

}  // namespace vwsd
