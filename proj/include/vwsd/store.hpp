#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vwsd {

/// Insertion-ordered map from string id to a fixed-dimension float vector.
///
/// On disk (little-endian, no padding):
///   "VWSE" | version u16 = 1 | dim u32 | count u64 |
///   count x ( id_len u16 | id bytes | dim x f32 )
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::uint32_t dim);

  std::uint32_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  /// Appends an entry. Throws StoreError(duplicate_id) or DimensionMismatch.
  void add(std::string id, std::span<const float> values);

  bool contains(std::string_view id) const;
  std::optional<std::span<const float>> find(std::string_view id) const;
  /// Throws DataError when `id` is absent.
  std::span<const float> at(std::string_view id) const;

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::string& id(std::size_t i) const { return ids_.at(i); }
  std::span<const float> vector(std::size_t i) const;

  /// Replaces every vector by its unit-length version. Throws
  /// DegenerateEmbedding naming the first zero vector.
  void normalize_all();

  /// Stable 64-bit FNV-1a digest over dim, ids and float bits.
  std::uint64_t content_hash() const;

  /// Bitwise equality of dim, ids (in order) and float bits.
  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b);

 private:
  std::uint32_t dim_;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr std::uint16_t kStoreVersion = 1;

void write_store(const EmbeddingStore& store, std::ostream& out);
EmbeddingStore read_store(std::istream& in);

void save_store(const EmbeddingStore& store, const std::filesystem::path& path);
EmbeddingStore load_store(const std::filesystem::path& path);

/// FNV-1a over raw bytes; used for content-addressed ids and cache keys.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

}  // namespace vwsd
