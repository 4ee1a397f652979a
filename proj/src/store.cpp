#include "vwsd/store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "vwsd/embedding.hpp"
#include "vwsd/errors.hpp"

namespace vwsd {

namespace {

constexpr std::array<char, 4> kMagic = {'V', 'W', 'S', 'E'};
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

template <class U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
  }
  out.write(bytes.data(), bytes.size());
}

template <class U>
U get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw StoreError(StoreError::Kind::truncated, std::string("truncated store: ") + what);
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(static_cast<U>(bytes[i]) << (8 * i));
  }
  return value;
}

std::uint64_t fnv_mix(std::uint64_t h, std::uint64_t value, int bytes) {
  for (int i = 0; i < bytes; ++i) {
    h ^= (value >> (8 * i)) & 0xFFu;
    h *= kFnvPrime;
  }
  return h;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[value & 0xFu];
    value >>= 4;
  }
  return out;
}

EmbeddingStore::EmbeddingStore(std::uint32_t dim) : dim_(dim) {
  if (dim == 0) throw StoreError(StoreError::Kind::bad_header, "embedding dimension must be positive");
}

void EmbeddingStore::add(std::string id, std::span<const float> values) {
  if (values.size() != dim_) {
    throw DimensionMismatch("entry '" + id + "' has dimension " + std::to_string(values.size()) +
                            ", store expects " + std::to_string(dim_));
  }
  if (id.size() > 0xFFFFu) throw DataError("id longer than 65535 bytes");
  if (index_.contains(id)) {
    throw StoreError(StoreError::Kind::duplicate_id, "duplicate id '" + id + "'");
  }
  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  data_.insert(data_.end(), values.begin(), values.end());
}

bool EmbeddingStore::contains(std::string_view id) const {
  return index_.contains(std::string(id));
}

std::optional<std::span<const float>> EmbeddingStore::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return vector(it->second);
}

std::span<const float> EmbeddingStore::at(std::string_view id) const {
  auto found = find(id);
  if (!found) throw DataError("no embedding for id '" + std::string(id) + "'");
  return *found;
}

std::span<const float> EmbeddingStore::vector(std::size_t i) const {
  if (i >= ids_.size()) throw std::out_of_range("store index out of range");
  return {data_.data() + i * dim_, dim_};
}

void EmbeddingStore::normalize_all() {
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    std::span<float> row(data_.data() + i * dim_, dim_);
    const double n = l2_norm(row);
    if (!(n > kMinNorm)) throw DegenerateEmbedding("zero vector for id '" + ids_[i] + "'");
    for (float& x : row) x = static_cast<float>(static_cast<double>(x) / n);
  }
}

std::uint64_t EmbeddingStore::content_hash() const {
  std::uint64_t h = fnv_mix(0xcbf29ce484222325ULL, dim_, 4);
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    h = fnv_mix(h, ids_[i].size(), 2);
    h = fnv1a64(ids_[i], h);
    for (float x : vector(i)) h = fnv_mix(h, std::bit_cast<std::uint32_t>(x), 4);
  }
  return h;
}

bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
  return a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.data_.size() == b.data_.size() &&
         std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0;
}

void write_store(const EmbeddingStore& store, std::ostream& out) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint16_t>(out, kStoreVersion);
  put_le<std::uint32_t>(out, store.dim());
  put_le<std::uint64_t>(out, store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string& id = store.id(i);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (float x : store.vector(i)) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(x));
  }
  if (!out) throw StoreError(StoreError::Kind::io, "failed writing embedding store");
}

EmbeddingStore read_store(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size())) {
    throw StoreError(StoreError::Kind::truncated, "truncated store: magic");
  }
  if (magic != kMagic) throw StoreError(StoreError::Kind::bad_magic, "bad magic");
  const auto version = get_le<std::uint16_t>(in, "version");
  if (version != kStoreVersion) {
    throw StoreError(StoreError::Kind::unsupported_version,
                     "unsupported store version " + std::to_string(version));
  }
  const auto dim = get_le<std::uint32_t>(in, "dim");
  const auto count = get_le<std::uint64_t>(in, "count");
  if (dim == 0) throw StoreError(StoreError::Kind::bad_header, "store declares dimension 0");

  EmbeddingStore store(dim);
  std::vector<float> values(dim);
  std::string id;
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto id_len = get_le<std::uint16_t>(in, "id length");
    id.resize(id_len);
    in.read(id.data(), id_len);
    if (in.gcount() != id_len) throw StoreError(StoreError::Kind::truncated, "truncated store: id");
    for (auto& x : values) x = std::bit_cast<float>(get_le<std::uint32_t>(in, "vector"));
    store.add(id, values);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw StoreError(StoreError::Kind::trailing_bytes, "trailing bytes after last record");
  }
  return store;
}

void save_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  // Write-then-rename so readers never observe a partial file.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError(StoreError::Kind::io, "cannot open " + tmp.string() + " for writing");
    write_store(store, out);
  }
  std::filesystem::rename(tmp, path);
}

EmbeddingStore load_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError(StoreError::Kind::io, "cannot open store " + path.string());
  return read_store(in);
}

}  // namespace vwsd
