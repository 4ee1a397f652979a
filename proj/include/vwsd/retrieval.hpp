#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vwsd/store.hpp"

namespace vwsd {

inline constexpr std::size_t kDefaultRetrievalK = 3;

struct RetrievalHit {
  std::string id;
  double score = 0.0;

  friend bool operator==(const RetrievalHit&, const RetrievalHit&) = default;
};

/// Hits in descending score order, ties by corpus insertion order.
struct RetrievalResult {
  std::vector<RetrievalHit> hits;

  friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

/// Exact cosine KNN over an image corpus. Vectors are normalized once at
/// construction; queries are scanned in fixed-size partitions whose local
/// top-k lists are merged at the end.
class ImageIndex {
 public:
  static constexpr std::size_t kDefaultPartition = 4096;

  /// Throws DataError for an empty store and DegenerateEmbedding naming
  /// the id of any zero vector.
  explicit ImageIndex(EmbeddingStore store, std::size_t partition_size = kDefaultPartition,
                      unsigned threads = 0);

  std::size_t size() const noexcept { return store_.size(); }
  std::uint32_t dim() const noexcept { return store_.dim(); }
  const EmbeddingStore& store() const noexcept { return store_; }
  std::uint64_t corpus_hash() const noexcept { return corpus_hash_; }

  /// The min(k, size()) highest-cosine entries.
  RetrievalResult top_k(std::span<const float> query, std::size_t k = kDefaultRetrievalK) const;

 private:
  EmbeddingStore store_;
  std::size_t partition_size_;
  unsigned threads_;
  std::uint64_t corpus_hash_;
};

ImageIndex build_index(const EmbeddingStore& store);

/// Disk cache of retrieval results for one (corpus, k) pair. Entries are
/// keyed by prompt id and remember a digest of the query vector, so a
/// changed prompt embedding is treated as a miss.
///
/// Files: <dir>/retrieval-<corpus hash>-k<k>.manifest (one JSON record per
/// prompt) and a sidecar .vwse store holding the retrieved image vectors.
class RetrievalCache {
 public:
  RetrievalCache(std::filesystem::path dir, std::uint64_t corpus_hash, std::size_t k);

  std::optional<RetrievalResult> lookup(const std::string& prompt_id,
                                        std::span<const float> query) const;
  void insert(const std::string& prompt_id, std::span<const float> query, RetrievalResult result);
  void flush(const EmbeddingStore& corpus) const;

  std::filesystem::path manifest_path() const;
  std::filesystem::path store_path() const;
  std::size_t hits() const noexcept { return cache_hits_; }

 private:
  struct Entry {
    std::uint64_t query_hash;
    RetrievalResult result;
  };
  std::filesystem::path dir_;
  std::uint64_t corpus_hash_;
  std::size_t k_;
  std::map<std::string, Entry> entries_;
  mutable std::size_t cache_hits_ = 0;
  bool dirty_ = false;
};

std::uint64_t query_digest(std::span<const float> query);

/// Runs top_k for every id in `sample_ids`, whose prompt embeddings are
/// looked up in `prompts`. Missing prompts are reported all at once.
std::map<std::string, RetrievalResult> retrieve_for_samples(
    const ImageIndex& index, const EmbeddingStore& prompts, std::span<const std::string> sample_ids,
    std::size_t k, RetrievalCache* cache = nullptr);

}  // namespace vwsd
