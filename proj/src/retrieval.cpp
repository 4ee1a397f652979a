#include "vwsd/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <nlohmann/json.hpp>
#include <thread>

#include "vwsd/embedding.hpp"
#include "vwsd/errors.hpp"

namespace vwsd {

namespace {

struct Scored {
  double score;
  std::size_t index;
};

// Strict "ranks ahead of": higher score first, then earlier insertion.
bool ahead(const Scored& a, const Scored& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.index < b.index;
}

void scan_partition(const EmbeddingStore& store, std::span<const float> query, std::size_t begin,
                    std::size_t end, std::size_t k, std::vector<Scored>& heap) {
  // Max-heap under `ahead` keeps the worst kept element at the front.
  heap.clear();
  for (std::size_t i = begin; i < end; ++i) {
    const Scored s{dot(query, store.vector(i)), i};
    if (heap.size() < k) {
      heap.push_back(s);
      std::push_heap(heap.begin(), heap.end(), ahead);
    } else if (ahead(s, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), ahead);
      heap.back() = s;
      std::push_heap(heap.begin(), heap.end(), ahead);
    }
  }
}

}  // namespace

ImageIndex::ImageIndex(EmbeddingStore store, std::size_t partition_size, unsigned threads)
    : store_(std::move(store)),
      partition_size_(std::max<std::size_t>(partition_size, 1)),
      threads_(threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads) {
  if (store_.empty()) throw DataError("cannot build an image index over an empty corpus");
  store_.normalize_all();
  corpus_hash_ = store_.content_hash();
}

RetrievalResult ImageIndex::top_k(std::span<const float> query, std::size_t k) const {
  if (query.size() != store_.dim()) {
    throw DimensionMismatch("query dimension " + std::to_string(query.size()) +
                            " != index dimension " + std::to_string(store_.dim()));
  }
  if (k == 0) throw Error("k must be at least 1");
  const Embedding q = l2_normalize(query);
  const std::size_t n = store_.size();
  k = std::min(k, n);

  const std::size_t parts = (n + partition_size_ - 1) / partition_size_;
  std::vector<std::vector<Scored>> partial(parts);
  auto run = [&](std::size_t p) {
    const std::size_t begin = p * partition_size_;
    scan_partition(store_, q, begin, std::min(n, begin + partition_size_), k, partial[p]);
  };
  const std::size_t workers = std::min<std::size_t>(threads_, parts);
  if (workers <= 1) {
    for (std::size_t p = 0; p < parts; ++p) run(p);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t p = w; p < parts; p += workers) run(p);
      });
    }
  }

  std::vector<Scored> merged;
  merged.reserve(parts * k);
  for (const auto& part : partial) merged.insert(merged.end(), part.begin(), part.end());
  std::partial_sort(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(k), merged.end(), ahead);

  RetrievalResult result;
  result.hits.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    result.hits.push_back({store_.id(merged[i].index), std::clamp(merged[i].score, -1.0, 1.0)});
  }
  return result;
}

ImageIndex build_index(const EmbeddingStore& store) { return ImageIndex(store); }

std::uint64_t query_digest(std::span<const float> query) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (float x : query) {
    const auto bits = std::bit_cast<std::uint32_t>(x);
    for (int i = 0; i < 4; ++i) {
      h ^= (bits >> (8 * i)) & 0xFFu;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

RetrievalCache::RetrievalCache(std::filesystem::path dir, std::uint64_t corpus_hash, std::size_t k)
    : dir_(std::move(dir)), corpus_hash_(corpus_hash), k_(k) {
  std::ifstream in(manifest_path());
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      Entry e;
      e.query_hash = std::stoull(rec.at("query").get<std::string>(), nullptr, 16);
      for (const auto& h : rec.at("hits")) {
        e.result.hits.push_back({h.at("id").get<std::string>(), h.at("score").get<double>()});
      }
      entries_[rec.at("prompt").get<std::string>()] = std::move(e);
    } catch (const std::exception& ex) {
      throw DataError(manifest_path().string() + ":" + std::to_string(line_no) +
                      ": bad cache record (" + ex.what() + ")");
    }
  }
}

std::filesystem::path RetrievalCache::manifest_path() const {
  return dir_ / ("retrieval-" + hex64(corpus_hash_) + "-k" + std::to_string(k_) + ".manifest");
}

std::filesystem::path RetrievalCache::store_path() const {
  return dir_ / ("retrieval-" + hex64(corpus_hash_) + "-k" + std::to_string(k_) + ".vwse");
}

std::optional<RetrievalResult> RetrievalCache::lookup(const std::string& prompt_id,
                                                      std::span<const float> query) const {
  auto it = entries_.find(prompt_id);
  if (it == entries_.end() || it->second.query_hash != query_digest(query)) return std::nullopt;
  ++cache_hits_;
  return it->second.result;
}

void RetrievalCache::insert(const std::string& prompt_id, std::span<const float> query,
                            RetrievalResult result) {
  entries_[prompt_id] = Entry{query_digest(query), std::move(result)};
  dirty_ = true;
}

void RetrievalCache::flush(const EmbeddingStore& corpus) const {
  if (!dirty_ && std::filesystem::exists(manifest_path())) return;
  std::filesystem::create_directories(dir_);
  EmbeddingStore images(corpus.dim());
  {
    auto tmp = manifest_path();
    tmp += ".tmp";
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw DataError("cannot write retrieval cache " + tmp.string());
    for (const auto& [prompt, entry] : entries_) {
      nlohmann::json rec;
      rec["prompt"] = prompt;
      rec["query"] = hex64(entry.query_hash);
      auto& hits = rec["hits"] = nlohmann::json::array();
      for (const auto& h : entry.result.hits) {
        hits.push_back({{"id", h.id}, {"score", h.score}});
        if (!images.contains(h.id)) images.add(h.id, corpus.at(h.id));
      }
      out << rec.dump() << '\n';
    }
    out.close();
    std::filesystem::rename(tmp, manifest_path());
  }
  save_store(images, store_path());
}

std::map<std::string, RetrievalResult> retrieve_for_samples(const ImageIndex& index,
                                                            const EmbeddingStore& prompts,
                                                            std::span<const std::string> sample_ids,
                                                            std::size_t k, RetrievalCache* cache) {
  std::vector<std::string> missing;
  for (const auto& id : sample_ids) {
    if (!prompts.contains(id)) missing.push_back(id);
  }
  if (!missing.empty()) {
    std::string msg = "missing prompt embeddings for:";
    for (const auto& id : missing) msg += " " + id;
    throw DataError(msg);
  }

  std::map<std::string, RetrievalResult> out;
  for (const auto& id : sample_ids) {
    const auto query = prompts.at(id);
    if (cache) {
      if (auto hit = cache->lookup(id, query)) {
        out[id] = std::move(*hit);
        continue;
      }
    }
    auto result = index.top_k(query, k);
    if (cache) cache->insert(id, query, result);
    out[id] = std::move(result);
  }
  if (cache) cache->flush(index.store());
  return out;
}

}  // namespace vwsd
