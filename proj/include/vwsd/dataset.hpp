#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vwsd {

inline constexpr std::size_t kCandidatesPerSample = 10;
inline constexpr std::size_t kDatasetColumns = 2 + kCandidatesPerSample;

/// One task instance: a target word in a two-to-three word context and ten
/// candidate images, one of which may be marked as gold.
struct Sample {
  std::string id;  // 1-based data row number
  std::string target_word;
  std::string context;
  std::vector<std::string> candidate_image_ids;
  std::optional<std::string> gold_image_id;

  std::optional<std::size_t> gold_index() const;
};

struct Dataset {
  std::vector<Sample> samples;
  /// 1-based row numbers skipped for unreadable characters.
  std::vector<std::size_t> skipped_rows;
  std::size_t total_rows = 0;
};

bool is_valid_utf8(std::string_view text);

/// Reads tab-separated rows [target, context, image1 .. image10] and an
/// optional gold file with one image id per data row. Rows holding invalid
/// UTF-8 or control characters are skipped and counted; any other
/// malformation is a DataError naming the row.
Dataset load_dataset(std::istream& data, std::istream* gold = nullptr);
Dataset load_dataset(const std::filesystem::path& data_path,
                     const std::optional<std::filesystem::path>& gold_path = std::nullopt);

}  // namespace vwsd
