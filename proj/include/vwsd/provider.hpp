#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "vwsd/store.hpp"

namespace vwsd {

/// Content-addressed id for a text: "t" followed by its FNV-1a digest.
std::string text_id(std::string_view text);

struct ProviderOptions {
  int max_retries = 3;
  std::chrono::milliseconds backoff{200};  // doubled after each failed attempt
  std::chrono::seconds timeout{30};
  std::optional<std::size_t> expected_dim;
  /// Store file of previously fetched vectors; texts found here are not sent.
  std::optional<std::filesystem::path> cache_path;
};

/// Client for an embedding service speaking
///   POST <endpoint>/embed  {"texts": [...]}  ->  {"dim": D, "embeddings": [[...], ...]}
class EmbeddingProvider {
 public:
  explicit EmbeddingProvider(std::string endpoint, ProviderOptions options = {});

  /// One entry per distinct text, keyed by text_id(), in first-seen order.
  /// Throws ProviderError after exhausting retries or on a malformed reply.
  EmbeddingStore fetch(std::span<const std::string> texts);

  const std::string& endpoint() const noexcept { return endpoint_; }
  std::size_t network_calls() const noexcept { return network_calls_; }

 private:
  std::vector<std::vector<float>> request(std::span<const std::string> texts, std::size_t& dim);

  std::string endpoint_;
  std::string host_;
  std::string path_prefix_;
  ProviderOptions options_;
  std::size_t network_calls_ = 0;
};

EmbeddingStore fetch_embeddings(const std::string& endpoint, std::span<const std::string> texts,
                                const ProviderOptions& options = {});

}  // namespace vwsd
