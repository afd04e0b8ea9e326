#pragma once

#include "s2m/gradcheck.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace s2m {

/// Fixed-size 64-bit gradient checks of the library's composite modules.
/// Every module is probed through a random-weighted sum of its output, with
/// randomized parameters, against both its input and its trainable tensors.
struct ModuleCheck {
    std::string module;
    GradCheckReport report;
    double seconds = 0.0;
};

/// "sstm" (1x4x8x8), "decoder" (two stages ending at 8x8, train-mode
/// normalization), "masl" (16x16 pair, prediction and weights), "model"
/// (channels {2,2,2,2,2}, 32x32, eval mode, He-initialized convolutions,
/// parameters checked at a stride of 3).
const std::vector<std::string>& gradcheck_modules();

/// Throws ConfigError for an unknown module name.
ModuleCheck run_module_gradcheck(std::string_view module, std::uint64_t seed = 0);

} // namespace s2m
