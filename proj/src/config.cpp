#include "vwsd/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>

#include "vwsd/errors.hpp"

namespace vwsd {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::logic_error&) {
    throw ConfigError("'" + key + "' expects a real number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& v) {
  std::filesystem::path p(v);
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

void set_config_value(PipelineConfig& c, const std::string& key, const std::string& value,
                      const std::filesystem::path& base) {
  using Setter = std::function<void(const std::string&)>;
  auto path_into = [&](std::optional<std::filesystem::path>& slot) -> Setter {
    return [&slot, &base](const std::string& v) {
      if (v.empty()) {
        slot.reset();
      } else {
        slot = resolve(base, v);
      }
    };
  };
  const std::map<std::string, Setter> setters = {
      {"dataset", path_into(c.dataset)},
      {"gold", path_into(c.gold)},
      {"inventory", path_into(c.inventory)},
      {"context_embeddings", path_into(c.context_embeddings)},
      {"gloss_embeddings", path_into(c.gloss_embeddings)},
      {"prompt_embeddings", path_into(c.prompt_embeddings)},
      {"corpus_embeddings", path_into(c.corpus_embeddings)},
      {"candidate_embeddings", path_into(c.candidate_embeddings)},
      {"checkpoint", path_into(c.checkpoint)},
      {"init_checkpoint", path_into(c.init_checkpoint)},
      {"report", path_into(c.report)},
      {"trace_file", path_into(c.trace_file)},
      {"history", path_into(c.history)},
      {"cache_dir", [&](const std::string& v) { c.cache_dir = resolve(base, v); }},
      {"provider", [&](const std::string& v) { c.text_provider = c.sense_provider = v; }},
      {"text_provider", [&](const std::string& v) { c.text_provider = v; }},
      {"sense_provider", [&](const std::string& v) { c.sense_provider = v; }},
      {"fuser", [&](const std::string& v) { c.fuser = parse_fuser_kind(v); }},
      {"scale", [&](const std::string& v) { c.scale = parse_real(key, v); }},
      {"k", [&](const std::string& v) { c.k = parse_uint(key, v); }},
      {"seed", [&](const std::string& v) { c.seed = parse_uint(key, v); }},
      {"trace", [&](const std::string& v) { c.trace = parse_bool(key, v); }},
      {"hidden", [&](const std::string& v) { c.hidden = parse_uint(key, v); }},
      {"layers", [&](const std::string& v) { c.layers = parse_uint(key, v); }},
      {"heads", [&](const std::string& v) { c.heads = parse_uint(key, v); }},
      {"ff_width", [&](const std::string& v) { c.ff_width = parse_uint(key, v); }},
      {"dropout", [&](const std::string& v) { c.dropout = parse_real(key, v); }},
      {"epochs", [&](const std::string& v) { c.epochs = parse_uint(key, v); }},
      {"learning_rate", [&](const std::string& v) { c.learning_rate = parse_real(key, v); }},
      {"batch_size", [&](const std::string& v) { c.batch_size = parse_uint(key, v); }},
      {"holdout", [&](const std::string& v) { c.holdout = parse_uint(key, v); }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(value);
}

PipelineConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
  PipelineConfig c;
  c.cache_dir = resolve(base_dir, "cache");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    try {
      set_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), base_dir);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in, path.parent_path());
}

FuserConfig PipelineConfig::fuser_config(std::size_t dim) const {
  FuserConfig f;
  f.kind = fuser;
  f.dim = dim;
  f.hidden = hidden;
  f.layers = layers;
  f.heads = heads;
  f.ff_width = ff_width;
  f.scale = scale;
  f.dropout = dropout;
  return f;
}

TrainConfig PipelineConfig::train_config(std::size_t dim) const {
  TrainConfig t = TrainConfig::defaults(fuser, dim);
  t.fuser = fuser_config(dim);
  if (epochs) t.epochs = *epochs;
  if (learning_rate) t.learning_rate = *learning_rate;
  t.batch_size = batch_size;
  t.seed = seed;
  return t;
}

void PipelineConfig::validate() const {
  if (k == 0) throw ConfigError("k must be at least 1");
  if (!(scale > 0.0)) throw ConfigError("scale must be positive");
  for (const auto* p : {&dataset, &gold, &inventory, &context_embeddings, &gloss_embeddings,
                        &prompt_embeddings, &corpus_embeddings, &candidate_embeddings, &init_checkpoint}) {
    if (*p && !std::filesystem::exists(**p)) throw ConfigError("file not found: " + (*p)->string());
  }
}

}  // namespace vwsd
