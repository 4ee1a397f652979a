#include "vwsd/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "vwsd/errors.hpp"
#include "vwsd/store.hpp"

namespace vwsd {

namespace {

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t parse_size(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError("checkpoint manifest lacks '" + key + "'");
  return static_cast<std::size_t>(std::stoull(it->second));
}

}  // namespace

std::filesystem::path checkpoint_manifest_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".manifest";
  return p;
}

std::string describe_architecture(const FuserConfig& c) {
  std::ostringstream out;
  out << "fuser=" << to_string(c.kind) << " dim=" << c.dim << " hidden=" << c.mlp_hidden()
      << " layers=" << c.layers << " heads=" << c.heads << " ff=" << c.ff_inner()
      << " scale=" << format_real(c.scale) << " dropout=" << format_real(c.dropout);
  return out.str();
}

void save_checkpoint(const FuserParams<float>& params, const std::filesystem::path& path) {
  validate_params(params);
  std::size_t width = 0;
  for (const auto& t : params.tensors) width = std::gcd(width, t.value.size());
  EmbeddingStore store(static_cast<std::uint32_t>(width));
  for (const auto& t : params.tensors) {
    const std::size_t chunks = t.value.size() / width;
    for (std::size_t i = 0; i < chunks; ++i) {
      store.add(t.name + "#" + std::to_string(i),
                std::span<const float>(t.value.data.data() + i * width, width));
    }
  }
  save_store(store, path);
  std::ofstream manifest(checkpoint_manifest_path(path), std::ios::trunc);
  if (!manifest) throw DataError("cannot write checkpoint manifest for " + path.string());
  manifest << describe_architecture(params.config) << '\n';
}

FuserParams<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream manifest(checkpoint_manifest_path(path));
  if (!manifest) throw DataError("missing checkpoint manifest " + checkpoint_manifest_path(path).string());
  std::string line;
  std::getline(manifest, line);
  std::map<std::string, std::string> kv;
  std::istringstream fields(line);
  for (std::string field; fields >> field;) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw DataError("bad checkpoint manifest field '" + field + "'");
    kv[field.substr(0, eq)] = field.substr(eq + 1);
  }

  FuserConfig config;
  try {
    if (!kv.contains("fuser")) throw DataError("checkpoint manifest lacks 'fuser'");
    config.kind = parse_fuser_kind(kv["fuser"]);
    config.dim = parse_size(kv, "dim");
    config.hidden = parse_size(kv, "hidden");
    config.layers = parse_size(kv, "layers");
    config.heads = parse_size(kv, "heads");
    config.ff_width = parse_size(kv, "ff");
    config.scale = std::stod(kv.at("scale"));
    config.dropout = kv.contains("dropout") ? std::stod(kv.at("dropout")) : 0.0;
  } catch (const std::logic_error& e) {
    throw DataError("bad checkpoint manifest: " + std::string(e.what()));
  }

  // Allocate the expected shapes, then fill them chunk by chunk.
  FuserParams<float> params = init_params<float>(config, 0);
  const EmbeddingStore store = load_store(path);
  const std::size_t width = store.dim();
  std::size_t consumed = 0;
  for (auto& t : params.tensors) {
    if (t.value.size() % width != 0) throw DataError("checkpoint record width does not divide '" + t.name + "'");
    const std::size_t chunks = t.value.size() / width;
    for (std::size_t i = 0; i < chunks; ++i) {
      const auto rec = store.find(t.name + "#" + std::to_string(i));
      if (!rec) throw DataError("checkpoint lacks record " + t.name + "#" + std::to_string(i));
      std::copy(rec->begin(), rec->end(), t.value.data.begin() + static_cast<std::ptrdiff_t>(i * width));
    }
    consumed += chunks;
  }
  if (consumed != store.size()) throw DataError("checkpoint holds unexpected extra records");
  validate_params(params);
  return params;
}

}  // namespace vwsd
