#pragma once

#include <filesystem>

#include "fcl/model.hpp"

namespace fcl {

/// Flat binary checkpoint: "FCL1", u32 version, u32 layer count, (u32 out, u32 in)
/// per layer, then little-endian f64 values layer by layer, weights before bias.
/// Layers are stored encoder first, then projection, then classifier.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);

/// Reads a checkpoint and splits its layers using the architecture's encoder
/// depth: the next two layers are the projection head, and one layer after
/// that (or one layer in place of the head) is the classifier. Throws
/// ValidationError when the stored widths disagree with `arch`.
ModelParams load_checkpoint(const std::filesystem::path& path, const Architecture& arch);

}  // namespace fcl
