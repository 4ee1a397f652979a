#pragma once

#include <filesystem>
#include <string>

#include "vwsd/fusion.hpp"

namespace vwsd {

/// Writes fuser parameters as an embedding store plus a one-line sidecar
/// manifest (`<path>.manifest`) holding the architecture as key=value pairs.
///
/// Each tensor is flattened row-major and cut into records whose width is
/// the gcd of all tensor sizes (the model width for standard shapes); record
/// ids are "<tensor>#<chunk>", e.g. "mlp.w1#0", "enc.0.attn.wq#7".
void save_checkpoint(const FuserParams<float>& params, const std::filesystem::path& path);
FuserParams<float> load_checkpoint(const std::filesystem::path& path);

std::filesystem::path checkpoint_manifest_path(const std::filesystem::path& path);
std::string describe_architecture(const FuserConfig& config);

}  // namespace vwsd
