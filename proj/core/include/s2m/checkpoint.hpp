#pragma once

#include "s2m/masl.hpp"
#include "s2m/model.hpp"

#include <optional>
#include <string>

namespace s2m {

/// Text manifest (format tag, config JSON, seed, RNG state, one line per
/// tensor with name, kind, dtype, shape, byte offset and byte count) followed
/// by one contiguous little-endian blob. f32 models store 32-bit floats.
void save_checkpoint(const std::string& path, const Model& model, const MaslWeights* weights = nullptr);

struct LoadedCheckpoint {
    Model model;
    std::optional<MaslWeights> weights;
};

/// Rebuilds the model from the stored config and overwrites every tensor and
/// the RNG state. Throws DataError on a malformed or truncated file and
/// ConfigError when the tensor layout does not match the config.
LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace s2m
