#include "vwsd/provider.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>
#include <thread>
#include <unordered_set>

#include "vwsd/errors.hpp"

namespace vwsd {

std::string text_id(std::string_view text) { return "t" + hex64(fnv1a64(text)); }

EmbeddingProvider::EmbeddingProvider(std::string endpoint, ProviderOptions options)
    : endpoint_(std::move(endpoint)), options_(std::move(options)) {
  const auto scheme = endpoint_.find("://");
  const auto host_start = scheme == std::string::npos ? 0 : scheme + 3;
  const auto slash = endpoint_.find('/', host_start);
  host_ = endpoint_.substr(0, slash);
  if (slash != std::string::npos) path_prefix_ = endpoint_.substr(slash);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  if (host_.empty()) throw ConfigError("empty provider endpoint");
}

std::vector<std::vector<float>> EmbeddingProvider::request(std::span<const std::string> texts,
                                                           std::size_t& dim) {
  nlohmann::json body;
  body["texts"] = texts;
  const std::string payload = body.dump();

  httplib::Client client(host_);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  client.set_write_timeout(options_.timeout);

  auto delay = options_.backoff;
  std::string last_error;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    ++network_calls_;
    const auto res = client.Post(path_prefix_ + "/embed", payload, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) {
      nlohmann::json reply;
      try {
        reply = nlohmann::json::parse(res->body);
        dim = reply.at("dim").get<std::size_t>();
        auto vectors = reply.at("embeddings").get<std::vector<std::vector<float>>>();
        if (vectors.size() != texts.size()) {
          throw ProviderError("provider returned " + std::to_string(vectors.size()) +
                                  " embeddings for " + std::to_string(texts.size()) + " texts",
                              false);
        }
        for (const auto& v : vectors) {
          if (v.size() != dim) throw ProviderError("dimension mismatch in provider reply", false);
        }
        return vectors;
      } catch (const nlohmann::json::exception& e) {
        throw ProviderError(std::string("malformed provider reply: ") + e.what(), false);
      }
    }
    last_error = "HTTP status " + std::to_string(res->status);
    if (res->status < 500 && res->status != 429) break;  // client errors are not retried
  }
  throw ProviderError("embedding provider " + endpoint_ + " failed: " + last_error, true);
}

EmbeddingStore EmbeddingProvider::fetch(std::span<const std::string> texts) {
  std::optional<EmbeddingStore> cache;
  if (options_.cache_path && std::filesystem::exists(*options_.cache_path)) {
    cache = load_store(*options_.cache_path);
  }

  std::vector<std::string> ordered_ids;
  std::vector<std::string> to_send;
  std::unordered_set<std::string> seen;
  for (const auto& t : texts) {
    auto id = text_id(t);
    if (!seen.insert(id).second) continue;
    if (!cache || !cache->contains(id)) to_send.push_back(t);
    ordered_ids.push_back(std::move(id));
  }

  if (!to_send.empty()) {
    std::size_t dim = 0;
    const auto vectors = request(to_send, dim);
    if (dim == 0) throw ProviderError("provider declared dimension 0", false);
    if (cache && cache->dim() != dim) {
      throw ProviderError("dimension mismatch: provider returned " + std::to_string(dim) +
                              ", cache holds " + std::to_string(cache->dim()),
                          false);
    }
    if (!cache) cache.emplace(static_cast<std::uint32_t>(dim));
    for (std::size_t i = 0; i < to_send.size(); ++i) cache->add(text_id(to_send[i]), vectors[i]);
    if (options_.cache_path) {
      std::filesystem::create_directories(options_.cache_path->parent_path().empty()
                                              ? std::filesystem::path(".")
                                              : options_.cache_path->parent_path());
      save_store(*cache, *options_.cache_path);
    }
  }

  const std::uint32_t dim = cache ? cache->dim() : static_cast<std::uint32_t>(options_.expected_dim.value_or(1));
  if (options_.expected_dim && dim != *options_.expected_dim) {
    throw ProviderError("dimension mismatch: expected " + std::to_string(*options_.expected_dim) +
                            ", provider gives " + std::to_string(dim),
                        false);
  }
  EmbeddingStore out(dim);
  for (const auto& id : ordered_ids) out.add(id, cache->at(id));
  return out;
}

EmbeddingStore fetch_embeddings(const std::string& endpoint, std::span<const std::string> texts,
                                const ProviderOptions& options) {
  return EmbeddingProvider(endpoint, options).fetch(texts);
}

}  // namespace vwsd
