#include <doctest.h>

#include "support/fake_provider.hpp"
#include "support/paths.hpp"
#include "vwsd/errors.hpp"
#include "vwsd/provider.hpp"

using namespace vwsd;

namespace {

ProviderOptions fast(std::optional<std::filesystem::path> cache = std::nullopt) {
  ProviderOptions o;
  o.backoff = std::chrono::milliseconds(1);
  o.timeout = std::chrono::seconds(5);
  o.cache_path = std::move(cache);
  return o;
}

}  // namespace

TEST_SUITE("provider") {
  TEST_CASE("content ids") {
    CHECK(text_id("a") == "taf63dc4c8601ec8c");
    CHECK(text_id("a") != text_id("b"));
  }

  TEST_CASE("two texts give two entries keyed by content hash") {
    testing::FakeProvider server(4);
    EmbeddingProvider p(server.endpoint(), fast());
    const std::vector<std::string> texts{"biro pen", "river bank"};
    const auto store = p.fetch(texts);
    CHECK(store.size() == 2);
    CHECK(store.dim() == 4);
    CHECK(store.ids() == std::vector<std::string>{text_id("biro pen"), text_id("river bank")});
    const auto expected = testing::FakeProvider::embed("river bank", 4);
    CHECK(std::vector<float>(store.at(text_id("river bank")).begin(), store.at(text_id("river bank")).end()) == expected);
    CHECK(p.network_calls() == 1);
  }

  TEST_CASE("repeated texts are served from the cache file") {
    const auto dir = testing::scratch_dir("provider-cache");
    testing::FakeProvider server(4);
    const std::vector<std::string> texts{"a", "b", "a"};
    {
      EmbeddingProvider p(server.endpoint(), fast(dir / "cache.vwse"));
      CHECK(p.fetch(texts).size() == 2);
      CHECK(server.texts_seen() == 2);
    }
    EmbeddingProvider again(server.endpoint(), fast(dir / "cache.vwse"));
    const auto store = again.fetch(texts);
    CHECK(store.size() == 2);
    CHECK(again.network_calls() == 0);
    const std::vector<std::string> more{"b", "c"};
    again.fetch(more);
    CHECK(again.network_calls() == 1);
    CHECK(server.texts_seen() == 3);
  }

  TEST_CASE("transient failures are retried") {
    testing::FakeProvider server(4);
    server.fail_next(2, 503);
    EmbeddingProvider p(server.endpoint(), fast());
    const std::vector<std::string> texts{"x"};
    CHECK(p.fetch(texts).size() == 1);
    CHECK(p.network_calls() == 3);
  }

  TEST_CASE("retries give up after three") {
    testing::FakeProvider server(4);
    server.fail_next(10, 500);
    EmbeddingProvider p(server.endpoint(), fast());
    const std::vector<std::string> texts{"x"};
    try {
      p.fetch(texts);
      FAIL("expected a provider error");
    } catch (const ProviderError& e) {
      CHECK(e.retryable());
    }
    CHECK(server.requests() == 4);
  }

  TEST_CASE("client errors are not retried") {
    testing::FakeProvider server(4);
    server.fail_next(10, 400);
    EmbeddingProvider p(server.endpoint(), fast());
    const std::vector<std::string> texts{"x"};
    CHECK_THROWS_AS(p.fetch(texts), ProviderError);
    CHECK(server.requests() == 1);
  }

  TEST_CASE("wrong-length vectors and dimension disagreement") {
    testing::FakeProvider server(4);
    server.send_short_vectors(true);
    const std::vector<std::string> texts{"x"};
    CHECK_THROWS_WITH_AS(EmbeddingProvider(server.endpoint(), fast()).fetch(texts), doctest::Contains("dimension mismatch"),
                         ProviderError);
    server.send_short_vectors(false);
    auto opts = fast();
    opts.expected_dim = 8;
    CHECK_THROWS_WITH_AS(EmbeddingProvider(server.endpoint(), opts).fetch(texts), doctest::Contains("dimension mismatch"),
                         ProviderError);
  }

  TEST_CASE("unreachable endpoint") {
    auto opts = fast();
    opts.max_retries = 1;
    opts.timeout = std::chrono::seconds(1);
    const std::vector<std::string> texts{"x"};
    CHECK_THROWS_AS(fetch_embeddings("http://127.0.0.1:1", texts, opts), ProviderError);
  }
}
