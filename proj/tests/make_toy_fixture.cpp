// Writes the 20-sample toy fixture: dataset, gold labels, sense inventory,
// and context / gloss / prompt / corpus embedding stores (D = 8).
//
// Every sense owns a latent direction. Glosses and corpus images sit near
// their sense direction; a context sits near its true sense, and the prompt
// embedding follows whichever sense the context is nearest to, so a wrong
// gloss match carries into retrieval.
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vwsd/store.hpp"

namespace {

constexpr std::size_t kDim = 8;
constexpr std::size_t kImages = 200;

using Vec = std::vector<float>;

std::mt19937_64 rng(20240517);

Vec gaussian() {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec v(kDim);
  for (auto& x : v) x = static_cast<float>(n(rng));
  return v;
}

Vec unit(Vec v) {
  double s = 0;
  for (float x : v) s += double(x) * x;
  for (auto& x : v) x = static_cast<float>(x / std::sqrt(s));
  return v;
}

Vec near(const Vec& base, double noise) {
  const Vec g = unit(gaussian());
  Vec v(kDim);
  for (std::size_t i = 0; i < kDim; ++i) v[i] = static_cast<float>(base[i] + noise * g[i]);
  return v;
}

double cosine(const Vec& a, const Vec& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < kDim; ++i) {
    d += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  return d / std::sqrt(na * nb);
}

struct Sense {
  std::string lemma;
  std::string synset;
  std::string gloss;
  std::vector<std::string> synonyms;
};

struct Row {
  std::string target;
  std::string context;
  std::string true_synset;  // concept of the gold image
  double context_noise;
  std::string context_leans_to = {};  // misleading context embedding
};

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_toy_fixture <output-dir>\n";
    return 1;
  }
  const std::filesystem::path out = argv[1];
  std::filesystem::create_directories(out);

  const std::vector<Sense> senses{
      {"biro", "ballpoint.n.01", "a pen that has a small metal ball as the point of transfer of ink to paper",
       {"ballpoint", "ballpoint_pen", "ballpen", "Biro"}},
      {"oak", "oak.n.02", "the hard durable wood of any oak", {}},
      {"crane", "crane.n.04", "large long-necked wading bird of marshes and plains", {}},
      {"crane", "crane.n.05", "lifts and moves heavy objects", {"derrick"}},
      {"bass", "bass.n.07", "the lean flesh of a saltwater fish", {"sea_bass"}},
      {"bass", "bass.n.06", "the lowest adult male singing voice", {"basso"}},
      {"bass", "bass.n.03", "the member with the lowest range of a family of instruments", {"bass_guitar"}},
      {"bank", "bank.n.01", "sloping land beside a body of water", {}},
      {"bank", "bank.n.02", "a financial institution that accepts deposits", {"depository_financial_institution", "banking_company"}},
      {"bank", "bank.n.03", "a long ridge or pile", {}},
      {"bank", "bank.n.05", "a supply or stock held in reserve", {"reserve"}},
      {"bank", "bank.n.07", "a slope in the turn of a road or track", {"cant", "camber"}},
  };
  // Targets outside the inventory get their own concept for the gold image.
  const std::vector<std::string> orphan_concepts{"andromeda.x", "quokka.x"};

  const std::vector<Row> rows{
      {"biro", "biro pen", "ballpoint.n.01", 0.3},
      {"biro", "blue biro", "ballpoint.n.01", 0.3},
      {"biro", "biro ink", "ballpoint.n.01", 0.6},
      {"biro", "broken biro", "ballpoint.n.01", 0.9},
      {"oak", "oak tree", "oak.n.02", 0.3},
      {"oak", "oak table", "oak.n.02", 0.3},
      {"oak", "old oak", "oak.n.02", 0.8},
      {"oak", "oak leaf", "oak.n.02", 0.5},
      {"crane", "crane bird", "crane.n.04", 0.3},
      {"crane", "construction crane", "crane.n.05", 0.3},
      {"crane", "crane flying", "crane.n.04", 1.4},
      {"bass", "bass fish", "bass.n.07", 0.3},
      {"bass", "bass singer", "bass.n.06", 0.4},
      {"bass", "bass guitar", "bass.n.03", 0.4, "bass.n.07"},
      {"bank", "river bank", "bank.n.01", 0.3},
      {"bank", "bank account", "bank.n.02", 0.4},
      {"bank", "blood bank", "bank.n.05", 0.4, "bank.n.02"},
      {"andromeda", "andromeda tree", "andromeda.x", 0.3},
      {"andromeda", "andromeda shrub", "andromeda.x", 0.5},
      {"quokka", "quokka smiling", "quokka.x", 0.3},
  };

  std::map<std::string, Vec> direction;
  for (const auto& s : senses) direction[s.synset] = unit(gaussian());
  for (const auto& c : orphan_concepts) direction[c] = unit(gaussian());

  // Inventory and gloss embeddings.
  {
    std::ofstream inv(out / "inventory.jsonl");
    inv << "# toy sense inventory: lemma, synset, gloss, synonyms\n";
    vwsd::EmbeddingStore glosses(kDim);
    for (const auto& s : senses) {
      nlohmann::ordered_json j;
      j["lemma"] = s.lemma;
      j["synset_id"] = s.synset;
      j["gloss"] = s.gloss;
      j["synonyms"] = s.synonyms;
      inv << j.dump() << '\n';
      glosses.add(s.synset, near(direction[s.synset], 0.2));
    }
    vwsd::save_store(glosses, out / "glosses.vwse");
  }

  // Corpus: images spread over all concepts, listed round-robin.
  std::vector<std::string> concept_names;
  for (const auto& [name, v] : direction) concept_names.push_back(name);
  std::map<std::string, std::vector<std::string>> images_of;
  vwsd::EmbeddingStore corpus(kDim);
  for (std::size_t i = 0; i < kImages; ++i) {
    const auto& c = concept_names[i % concept_names.size()];
    const std::string id = "image." + std::to_string(i) + ".jpg";
    corpus.add(id, near(direction[c], 0.9));
    images_of[c].push_back(id);
  }
  vwsd::save_store(corpus, out / "corpus.vwse");

  vwsd::EmbeddingStore contexts(kDim);
  vwsd::EmbeddingStore prompts(kDim);
  std::ofstream data(out / "data.tsv");
  std::ofstream gold(out / "gold.txt");
  std::map<std::string, std::size_t> used;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Row& row = rows[r];
    const std::string id = std::to_string(r + 1);
    const Vec ctx = near(direction[row.context_leans_to.empty() ? row.true_synset : row.context_leans_to],
                         row.context_noise);
    contexts.add(id, ctx);

    // The prompt follows the sense the context is closest to.
    std::string followed = row.true_synset;
    double best = -2.0;
    for (const auto& s : senses) {
      if (s.lemma != row.target) continue;
      const double c = cosine(ctx, direction[s.synset]);
      if (c > best) {
        best = c;
        followed = s.synset;
      }
    }
    prompts.add(id, near(direction[followed], 0.3));

    std::vector<std::string> candidates;
    const auto& pool = images_of[row.true_synset];
    candidates.push_back(pool[used[row.true_synset]++ % pool.size()]);
    // One distractor shows another sense of the same lemma when there is one.
    for (const auto& s : senses) {
      if (s.lemma == row.target && s.synset != row.true_synset) {
        const auto& sib = images_of[s.synset];
        candidates.push_back(sib[rng() % sib.size()]);
        break;
      }
    }
    while (candidates.size() < 10) {
      const auto& c = concept_names[rng() % concept_names.size()];
      if (c == row.true_synset) continue;
      const auto& img = images_of[c][rng() % images_of[c].size()];
      if (std::find(candidates.begin(), candidates.end(), img) == candidates.end()) candidates.push_back(img);
    }
    const std::string gold_id = candidates.front();
    std::shuffle(candidates.begin(), candidates.end(), rng);

    data << row.target << '\t' << row.context;
    for (const auto& c : candidates) data << '\t' << c;
    data << '\n';
    gold << gold_id << '\n';
  }
  vwsd::save_store(contexts, out / "contexts.vwse");
  vwsd::save_store(prompts, out / "prompts.vwse");

  std::ofstream conf(out / "toy.conf");
  conf << "# 20-sample toy run, D = 8\n"
          "dataset = data.tsv\n"
          "gold = gold.txt\n"
          "inventory = inventory.jsonl\n"
          "context_embeddings = contexts.vwse\n"
          "gloss_embeddings = glosses.vwse\n"
          "prompt_embeddings = prompts.vwse\n"
          "corpus_embeddings = corpus.vwse\n"
          "fuser = average\n"
          "k = 3\n"
          "scale = 100\n";
  return 0;
}
