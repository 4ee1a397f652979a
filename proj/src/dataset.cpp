#include "vwsd/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include "vwsd/disambiguation.hpp"
#include "vwsd/errors.hpp"

namespace vwsd {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

bool has_control_chars(std::string_view row) {
  return std::any_of(row.begin(), row.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return (u < 0x20 && c != '\t') || u == 0x7F;
  });
}

bool context_mentions(const std::string& context, const std::string& target) {
  const std::string ctx = normalize_lemma(context);
  const std::string tgt = normalize_lemma(target);
  if (tgt.empty()) return false;
  std::size_t pos = 0;
  while ((pos = ctx.find(tgt, pos)) != std::string::npos) {
    const bool left_ok = pos == 0 || ctx[pos - 1] == '_';
    const bool right_ok = pos + tgt.size() == ctx.size() || ctx[pos + tgt.size()] == '_';
    if (left_ok && right_ok) return true;
    ++pos;
  }
  return false;
}

std::string row_prefix(std::size_t row) { return "row " + std::to_string(row) + ": "; }

}  // namespace

std::optional<std::size_t> Sample::gold_index() const {
  if (!gold_image_id) return std::nullopt;
  const auto it = std::find(candidate_image_ids.begin(), candidate_image_ids.end(), *gold_image_id);
  if (it == candidate_image_ids.end()) return std::nullopt;
  return static_cast<std::size_t>(it - candidate_image_ids.begin());
}

bool is_valid_utf8(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t extra = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= text.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlong forms, surrogates and out-of-range code points.
    static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += extra + 1;
  }
  return true;
}

Dataset load_dataset(std::istream& data, std::istream* gold) {
  Dataset ds;
  std::vector<std::string> gold_lines;
  if (gold) {
    std::string g;
    while (std::getline(*gold, g)) {
      if (!g.empty() && g.back() == '\r') g.pop_back();
      gold_lines.push_back(g);
    }
    while (!gold_lines.empty() && gold_lines.back().empty()) gold_lines.pop_back();
  }

  std::string line;
  std::size_t row = 0;
  while (std::getline(data, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    if (!is_valid_utf8(line) || has_control_chars(line)) {
      ds.skipped_rows.push_back(row);
      continue;
    }
    auto cols = split_tabs(line);
    if (cols.size() != kDatasetColumns) {
      throw DataError(row_prefix(row) + "expected " + std::to_string(kDatasetColumns) +
                      " columns, got " + std::to_string(cols.size()));
    }
    Sample s;
    s.id = std::to_string(row);
    s.target_word = std::move(cols[0]);
    s.context = std::move(cols[1]);
    if (s.target_word.empty() || s.context.empty()) throw DataError(row_prefix(row) + "empty target or context");
    if (!context_mentions(s.context, s.target_word)) {
      throw DataError(row_prefix(row) + "context '" + s.context + "' does not contain target '" +
                      s.target_word + "'");
    }
    s.candidate_image_ids.assign(std::make_move_iterator(cols.begin() + 2), std::make_move_iterator(cols.end()));
    std::set<std::string_view> distinct;
    for (const auto& c : s.candidate_image_ids) {
      if (c.empty()) throw DataError(row_prefix(row) + "empty candidate image id");
      if (!distinct.insert(c).second) throw DataError(row_prefix(row) + "duplicate candidate '" + c + "'");
    }
    if (gold) {
      if (row > gold_lines.size()) throw DataError(row_prefix(row) + "no gold label (gold file too short)");
      s.gold_image_id = gold_lines[row - 1];
      if (!s.gold_index()) {
        throw DataError(row_prefix(row) + "gold image '" + *s.gold_image_id + "' is not among the candidates");
      }
    }
    ds.samples.push_back(std::move(s));
  }
  ds.total_rows = row;
  if (gold && gold_lines.size() != row) {
    throw DataError("gold file has " + std::to_string(gold_lines.size()) + " labels for " +
                    std::to_string(row) + " data rows");
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& data_path,
                     const std::optional<std::filesystem::path>& gold_path) {
  std::ifstream data(data_path, std::ios::binary);
  if (!data) throw DataError("cannot open dataset " + data_path.string());
  if (!gold_path) return load_dataset(data);
  std::ifstream gold(*gold_path, std::ios::binary);
  if (!gold) throw DataError("cannot open gold file " + gold_path->string());
  return load_dataset(data, &gold);
}

}  // namespace vwsd
